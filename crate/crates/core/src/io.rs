//! Plain-text outputs: per-front-node CSV, mass history CSV, nodal density
//! CSV (readable back as MWLS samples) and legacy-VTK unstructured grids.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::adaptation::MassRecord;
use crate::error::{Error, Result};
use crate::fe::Discretization;
use crate::fracture::FractureReport;
use crate::material::MaterialParams;
use crate::mechanics::qp_state;
use crate::mesh::Mesh;

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

/// One row per crack-front node.
pub fn front_csv(report: &FractureReport) -> String {
    let mut s = String::from(
        "node,x,y,z,gx,gy,gz,g_eshelby_x,g_eshelby_y,g_eshelby_z,g_inh_x,g_inh_y,g_inh_z,\
         ax,ay,az,tributary_length,density,g,modulus,k_i,k_i_plane_strain,phi,margin_linear,margin_sqrt\n",
    );
    for n in &report.nodes {
        let f = &n.force;
        let _ = writeln!(
            s,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},\
             {:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{:.12e},{:.12e},{:.12e}",
            n.node,
            n.x[0],
            n.x[1],
            n.x[2],
            f.total[0],
            f.total[1],
            f.total[2],
            f.eshelby[0],
            f.eshelby[1],
            f.eshelby[2],
            f.inhomogeneity[0],
            f.inhomogeneity[1],
            f.inhomogeneity[2],
            n.direction[0],
            n.direction[1],
            n.direction[2],
            n.tributary_length,
            f.density,
            n.g,
            n.modulus,
            opt(n.k_i),
            opt(n.k_i_plane_strain),
            n.griffith.phi,
            n.griffith.margin_linear,
            n.griffith.margin_sqrt,
        );
    }
    s
}

/// One row per connected front with length-averaged quantities.
pub fn front_summary_csv(report: &FractureReport) -> String {
    let mut s = String::from("front,nodes,length,g,modulus,k_i,k_i_plane_strain,phi,margin_linear,margin_sqrt\n");
    for (i, f) in report.fronts.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{:.12e},{:.12e},{:.12e},{},{},{:.12e},{:.12e},{:.12e}",
            f.nodes.len(),
            f.length,
            f.g,
            f.modulus,
            opt(f.k_i),
            opt(f.k_i_plane_strain),
            f.griffith.phi,
            f.griffith.margin_linear,
            f.griffith.margin_sqrt
        );
    }
    s
}

pub fn mass_history_csv(history: &[MassRecord]) -> String {
    let mut s = String::from("t,mass,dt,newton_its\n");
    for r in history {
        let _ = writeln!(s, "{:.12e},{:.12e},{:.12e},{}", r.t, r.mass, r.dt, r.newton_its);
    }
    s
}

/// `x,y,z,value` per mesh node; the format accepted by the MWLS sample reader.
pub fn nodal_csv(mesh: &Mesh, values: &[f64]) -> String {
    let mut s = String::from("x,y,z,value\n");
    for (p, v) in mesh.nodes.iter().zip(values) {
        let _ = writeln!(s, "{:.15e},{:.15e},{:.15e},{:.15e}", p.x, p.y, p.z, v);
    }
    s
}

/// Point field for VTK output.
pub enum PointField<'a> {
    Scalar(&'a str, Vec<f64>),
    Vector(&'a str, Vec<[f64; 3]>),
}

/// Legacy ASCII unstructured grid of linear tetrahedra with point data.
pub fn vtk(mesh: &Mesh, title: &str, fields: &[PointField]) -> Result<String> {
    let n = mesh.nodes.len();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID", title.replace('\n', " "));
    let _ = writeln!(s, "POINTS {n} double");
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:.15e} {:.15e} {:.15e}", p.x, p.y, p.z);
    }
    let nt = mesh.tets.len();
    let _ = writeln!(s, "CELLS {nt} {}", 5 * nt);
    for t in &mesh.tets {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("10\n");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {n}");
    }
    for f in fields {
        match f {
            PointField::Scalar(name, v) => {
                check_len(name, v.len(), n)?;
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for x in v {
                    let _ = writeln!(s, "{x:.12e}");
                }
            }
            PointField::Vector(name, v) => {
                check_len(name, v.len(), n)?;
                let _ = writeln!(s, "VECTORS {name} double");
                for x in v {
                    let _ = writeln!(s, "{:.12e} {:.12e} {:.12e}", x[0], x[1], x[2]);
                }
            }
        }
    }
    Ok(s)
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("field {name}: {got} values for {want} points")))
    }
}

/// Nodal displacements (vertex coefficients of the hierarchical field).
pub fn nodal_displacements(mesh: &Mesh, u: &[f64]) -> Vec<[f64; 3]> {
    (0..mesh.nodes.len()).map(|a| [u[3 * a], u[3 * a + 1], u[3 * a + 2]]).collect()
}

/// Volume-weighted nodal average of the element-mean free-energy density.
///
/// `rho(t, q)` is the density at quadrature point `q` of element `t`.
pub fn nodal_energy_density(
    disc: &Discretization,
    u: &[f64],
    params: &MaterialParams,
    rho: impl Fn(usize, usize) -> f64,
) -> Result<Vec<f64>> {
    let mesh = disc.mesh;
    let mut sum = vec![0.0; mesh.nodes.len()];
    let mut weight = vec![0.0; mesh.nodes.len()];
    for t in 0..mesh.tets.len() {
        let el = disc.element(t)?;
        let (mut e, mut v) = (0.0, 0.0);
        for (q, qp) in el.qps.iter().enumerate() {
            e += qp.w * qp_state(&el, qp, u, rho(t, q), params)?.state.psi;
            v += qp.w;
        }
        for &a in &mesh.tets[t] {
            sum[a] += e;
            weight[a] += v;
        }
    }
    Ok(sum.iter().zip(&weight).map(|(s, w)| if *w > 0.0 { s / w } else { 0.0 }).collect())
}

/// Euclidean norms of nodal vectors, handy for scalar colouring.
pub fn magnitudes(v: &[[f64; 3]]) -> Vec<f64> {
    v.iter().map(|x| Vector3::from(*x).norm()).collect()
}
