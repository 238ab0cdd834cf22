//! Deterministic structured generators for test and benchmark meshes.
//!
//! Every generator triangulates a planar section, extrudes it along z and
//! splits each prism into three tets using the global-index rule, so
//! neighbouring prisms agree on their quad diagonals.

use std::collections::BTreeMap;

use super::{
    extract_crack_front, insert_crack, Group, GroupKind, Mesh, Point, Topology, CRACK_SURFACE,
    TIP_SET,
};
use crate::error::Result;

/// Extrudes a planar triangulation through the given z levels.
pub fn extrude(
    nodes2d: &[[f64; 2]],
    tris: &[[usize; 3]],
    levels: &[f64],
) -> (Vec<Point>, Vec<[usize; 4]>) {
    let n2 = nodes2d.len();
    let mut nodes = Vec::with_capacity(n2 * levels.len());
    for &z in levels {
        nodes.extend(nodes2d.iter().map(|&[x, y]| Point::new(x, y, z)));
    }
    let mut tets = Vec::with_capacity(3 * tris.len() * (levels.len() - 1));
    for l in 0..levels.len() - 1 {
        for tri in tris {
            let mut s = *tri;
            s.sort_unstable();
            let [a, b, c] = s;
            let lo = |v: usize| v + l * n2;
            let hi = |v: usize| v + (l + 1) * n2;
            for mut tet in [
                [lo(a), lo(b), lo(c), hi(c)],
                [lo(a), lo(b), hi(b), hi(c)],
                [lo(a), hi(a), hi(b), hi(c)],
            ] {
                let p = tet.map(|v| nodes[v]);
                if super::tet_signed_volume([&p[0], &p[1], &p[2], &p[3]]) < 0.0 {
                    tet.swap(0, 1);
                }
                tets.push(tet);
            }
        }
    }
    (nodes, tets)
}

/// Mesh under construction: groups are added against a provisional topology.
pub struct Draft {
    pub nodes: Vec<Point>,
    pub tets: Vec<[usize; 4]>,
    pub facets: Vec<[usize; 3]>,
    pub groups: BTreeMap<String, Group>,
    topo: Topology,
}

impl Draft {
    pub fn new(nodes: Vec<Point>, tets: Vec<[usize; 4]>) -> Self {
        let topo = Topology::build(nodes.len(), &tets);
        Draft {
            nodes,
            tets,
            facets: Vec::new(),
            groups: BTreeMap::new(),
            topo,
        }
    }

    pub fn from_mesh(mesh: Mesh) -> Self {
        Draft {
            nodes: mesh.nodes,
            tets: mesh.tets,
            facets: mesh.facets,
            groups: mesh.groups,
            topo: mesh.topo,
        }
    }

    fn next_tag(&self) -> usize {
        self.groups.values().map(|g| g.tag).max().unwrap_or(0) + 1
    }

    /// Boundary faces whose three vertices all satisfy `pred`, oriented outward.
    pub fn facet_group(&mut self, name: &str, pred: impl Fn(&Point) -> bool) -> &mut Self {
        let mut items = Vec::new();
        for f in 0..self.topo.faces.len() {
            if !self.topo.is_boundary_face(f) {
                continue;
            }
            let face = self.topo.faces[f];
            if face.iter().all(|&v| pred(&self.nodes[v])) {
                let t = self.topo.face_tets[f][0];
                let other = self.tets[t]
                    .iter()
                    .copied()
                    .find(|v| !face.contains(v))
                    .unwrap();
                let [a, b, c] = face;
                let n = (self.nodes[b] - self.nodes[a]).cross(&(self.nodes[c] - self.nodes[a]));
                let oriented = if n.dot(&(self.nodes[other] - self.nodes[a])) > 0.0 {
                    [a, c, b]
                } else {
                    face
                };
                items.push(self.facets.len());
                self.facets.push(oriented);
            }
        }
        let tag = self.next_tag();
        self.groups.insert(
            name.into(),
            Group {
                name: name.into(),
                tag,
                kind: GroupKind::Facets,
                items,
            },
        );
        self
    }

    pub fn node_group(&mut self, name: &str, mut nodes: Vec<usize>) -> &mut Self {
        nodes.sort_unstable();
        nodes.dedup();
        let tag = self.next_tag();
        self.groups.insert(
            name.into(),
            Group {
                name: name.into(),
                tag,
                kind: GroupKind::Vertices,
                items: nodes,
            },
        );
        self
    }

    /// The node closest to `p`.
    pub fn nearest_node(&self, p: Point) -> usize {
        (0..self.nodes.len())
            .min_by(|&a, &b| {
                (self.nodes[a] - p)
                    .norm()
                    .total_cmp(&(self.nodes[b] - p).norm())
            })
            .unwrap()
    }

    /// Interior faces whose vertices all satisfy `pred`.
    pub fn interior_faces(&self, pred: impl Fn(&Point) -> bool) -> Vec<[usize; 3]> {
        (0..self.topo.faces.len())
            .filter(|&f| self.topo.face_tets[f].len() == 2)
            .map(|f| self.topo.faces[f])
            .filter(|face| face.iter().all(|&v| pred(&self.nodes[v])))
            .collect()
    }

    pub fn build(self) -> Result<Mesh> {
        Mesh::new(self.nodes, self.tets, self.facets, self.groups)
    }
}

/// Points on `[from, to]` with `n` intervals whose lengths grow geometrically by
/// `ratio` away from `from` (or away from `to` when `toward_end`).
pub fn graded(from: f64, to: f64, n: usize, ratio: f64, toward_end: bool) -> Vec<f64> {
    let mut widths: Vec<f64> = (0..n).map(|i| ratio.powi(i as i32)).collect();
    if toward_end {
        widths.reverse();
    }
    let total: f64 = widths.iter().sum();
    let mut pts = vec![from];
    let mut acc = 0.0;
    for w in &widths[..n - 1] {
        acc += w / total;
        pts.push(from + (to - from) * acc);
    }
    pts.push(to);
    pts
}

fn concat(parts: &[Vec<f64>]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for p in parts {
        let skip = usize::from(!out.is_empty());
        out.extend_from_slice(&p[skip..]);
    }
    out
}

/// Triangulated rectangle grid; each cell is split along alternating diagonals
/// mirrored about the grid centre lines.
pub fn grid2d(xs: &[f64], ys: &[f64]) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let nx = xs.len();
    let mut nodes = Vec::with_capacity(nx * ys.len());
    for &y in ys {
        for &x in xs {
            nodes.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut tris = Vec::new();
    let (cx, cy) = ((xs.len() - 1) as f64 / 2.0, (ys.len() - 1) as f64 / 2.0);
    for j in 0..ys.len() - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            // Diagonal pointing away from the centre keeps the pattern symmetric.
            let right = (i as f64 + 0.5) >= cx;
            let up = (j as f64 + 0.5) >= cy;
            if right == up {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    (nodes, tris)
}

/// Axis-aligned box with facet groups `XMIN`, `XMAX`, `YMIN`, `YMAX`, `ZMIN`, `ZMAX`.
pub fn box_mesh(lo: [f64; 3], hi: [f64; 3], n: [usize; 3]) -> Mesh {
    let lin = |a: f64, b: f64, k: usize| {
        (0..=k)
            .map(|i| a + (b - a) * i as f64 / k as f64)
            .collect::<Vec<_>>()
    };
    let (n2, tris) = grid2d(&lin(lo[0], hi[0], n[0]), &lin(lo[1], hi[1], n[1]));
    let (nodes, tets) = extrude(&n2, &tris, &lin(lo[2], hi[2], n[2]));
    let mut d = Draft::new(nodes, tets);
    let eps = 1e-12 * (0..3).map(|k| hi[k] - lo[k]).fold(1.0, f64::max);
    for (k, axis) in ["X", "Y", "Z"].iter().enumerate() {
        d.facet_group(&format!("{axis}MIN"), |p| (p[k] - lo[k]).abs() < eps);
        d.facet_group(&format!("{axis}MAX"), |p| (p[k] - hi[k]).abs() < eps);
    }
    d.build().expect("structured box is valid")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlateSpec {
    pub height: f64,
    pub thickness: f64,
    pub half_width: f64,
    pub half_crack: f64,
    /// Cells on each of the four x segments (`-b..-a..0..a..b`).
    pub cells_x: usize,
    /// Cells on each half of the height.
    pub cells_y: usize,
    pub layers: usize,
    /// Geometric growth of cell widths away from the crack tips and crack plane.
    pub grading: f64,
}

impl PlateSpec {
    /// Plate of height 10, thickness 1, half-width 2.5 with a through crack of
    /// half-length 1, about 1400 tets.
    pub fn benchmark() -> Self {
        PlateSpec {
            height: 10.0,
            thickness: 1.0,
            half_width: 2.5,
            half_crack: 1.0,
            cells_x: 3,
            cells_y: 5,
            layers: 2,
            grading: 1.8,
        }
    }

    pub fn coarse() -> Self {
        PlateSpec {
            cells_x: 2,
            cells_y: 3,
            layers: 2,
            ..Self::benchmark()
        }
    }
}

/// Centre-cracked plate in the x-y plane, extruded through the thickness in z.
///
/// Groups: `TRACTION_TOP`, `TRACTION_BOTTOM` (y = ±h/2), rigid-body supports
/// `DIRICHLET_XYZ`, `DIRICHLET_YZ`, `DIRICHLET_Y` (single vertices on the lower
/// edge), `CRACK_SURFACE` and `TIP_SET`.
pub fn plate(spec: &PlateSpec) -> Result<Mesh> {
    let (b, a, hh) = (spec.half_width, spec.half_crack, spec.height / 2.0);
    let r = spec.grading;
    let nx = spec.cells_x;
    let xs = concat(&[
        graded(-b, -a, nx, r, true),
        graded(-a, 0.0, nx, r, false),
        graded(0.0, a, nx, r, true),
        graded(a, b, nx, r, false),
    ]);
    let ys = concat(&[
        graded(-hh, 0.0, spec.cells_y, r, true),
        graded(0.0, hh, spec.cells_y, r, false),
    ]);
    let zs: Vec<f64> = (0..=spec.layers)
        .map(|k| spec.thickness * k as f64 / spec.layers as f64)
        .collect();
    let (n2, tris) = grid2d(&xs, &ys);
    let (nodes, tets) = extrude(&n2, &tris, &zs);
    let mut d = Draft::new(nodes, tets);
    let eps = 1e-12 * spec.height;
    d.facet_group("TRACTION_TOP", |p| (p.y - hh).abs() < eps);
    d.facet_group("TRACTION_BOTTOM", |p| (p.y + hh).abs() < eps);
    let na = d.nearest_node(Point::new(-b, -hh, 0.0));
    let nb = d.nearest_node(Point::new(b, -hh, 0.0));
    let nc = d.nearest_node(Point::new(-b, -hh, spec.thickness));
    d.node_group("DIRICHLET_XYZ", vec![na]);
    d.node_group("DIRICHLET_YZ", vec![nb]);
    d.node_group("DIRICHLET_Y", vec![nc]);
    let faces = d.interior_faces(|p| p.y.abs() < eps && p.x.abs() <= a + eps);
    let cracked = insert_crack(&d.build()?, &faces)?;
    with_tip_set(cracked)
}

fn with_tip_set(mesh: Mesh) -> Result<Mesh> {
    let front = extract_crack_front(&mesh, CRACK_SURFACE)?;
    let mut d = Draft::from_mesh(mesh);
    d.node_group(TIP_SET, front.nodes);
    d.build()
}

/// Moves every front node of the crack tip nearest to `tip_x` by `dx` along x.
pub fn shift_tip(mesh: &Mesh, tip_x: f64, dx: f64) -> Result<Mesh> {
    let front = extract_crack_front(mesh, CRACK_SURFACE)?;
    let mut m = mesh.clone();
    for &n in &front.nodes {
        if (mesh.nodes[n].x - tip_x).abs() < 1e-9 {
            m.nodes[n].x += dx;
        }
    }
    Mesh::new(m.nodes, m.tets, m.facets, m.groups)
}

/// Mirror image through the plane x = 0; node ids are preserved.
pub fn mirror_x(mesh: &Mesh) -> Result<Mesh> {
    let nodes = mesh
        .nodes
        .iter()
        .map(|p| Point::new(-p.x, p.y, p.z))
        .collect();
    let tets = mesh.tets.iter().map(|&[a, b, c, d]| [b, a, c, d]).collect();
    let facets = mesh.facets.iter().map(|&[a, b, c]| [b, a, c]).collect();
    Mesh::new(nodes, tets, facets, mesh.groups.clone())
}

/// Polar triangulation of an annulus (or disk when `radii[0] == 0`).
pub fn polar2d(radii: &[f64], sectors: usize) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut nodes = Vec::new();
    let disk = radii[0] == 0.0;
    if disk {
        nodes.push([0.0, 0.0]);
    }
    let ring_start = usize::from(disk);
    let angle = |k: usize| 2.0 * std::f64::consts::PI * k as f64 / sectors as f64;
    for &r in &radii[ring_start..] {
        for k in 0..sectors {
            nodes.push([r * angle(k).cos(), r * angle(k).sin()]);
        }
    }
    let ring = |i: usize, k: usize| ring_start + i * sectors + (k % sectors);
    let mut tris = Vec::new();
    if disk {
        for k in 0..sectors {
            tris.push([0, ring(0, k), ring(0, k + 1)]);
        }
    }
    let nrings = radii.len() - ring_start;
    for i in 0..nrings - 1 {
        for k in 0..sectors {
            let (a, b, c, d) = (
                ring(i, k),
                ring(i, k + 1),
                ring(i + 1, k + 1),
                ring(i + 1, k),
            );
            if k % 2 == 0 {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    (nodes, tris)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PennySpec {
    pub crack_radius: f64,
    pub outer_radius: f64,
    pub half_height: f64,
    pub sectors: usize,
}

impl Default for PennySpec {
    fn default() -> Self {
        PennySpec {
            crack_radius: 1.0,
            outer_radius: 3.0,
            half_height: 2.0,
            sectors: 24,
        }
    }
}

/// Cylinder with an embedded circular (polygonal) crack in the plane z = 0.
pub fn penny(spec: &PennySpec) -> Result<Mesh> {
    let rc = spec.crack_radius;
    let radii = [
        0.0,
        0.5 * rc,
        rc,
        0.5 * (rc + spec.outer_radius),
        spec.outer_radius,
    ];
    let (n2, tris) = polar2d(&radii, spec.sectors);
    let h = spec.half_height;
    let levels = [-h, -0.25 * h, 0.0, 0.25 * h, h];
    let (nodes, tets) = extrude(&n2, &tris, &levels);
    let mut d = Draft::new(nodes, tets);
    let eps = 1e-12 * h;
    d.facet_group("TRACTION_TOP", |p| (p.z - h).abs() < eps);
    d.facet_group("TRACTION_BOTTOM", |p| (p.z + h).abs() < eps);
    let ro = spec.outer_radius;
    let na = d.nearest_node(Point::new(ro, 0.0, -h));
    let nb = d.nearest_node(Point::new(-ro, 0.0, -h));
    let nc = d.nearest_node(Point::new(0.0, ro, -h));
    d.node_group("DIRICHLET_XYZ", vec![na]);
    d.node_group("DIRICHLET_YZ", vec![nb]);
    d.node_group("DIRICHLET_Z", vec![nc]);
    let faces = d.interior_faces(|p| p.z.abs() < eps && p.x.hypot(p.y) <= rc * (1.0 + 1e-9));
    with_tip_set(insert_crack(&d.build()?, &faces)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TubeSpec {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub length: f64,
    pub sectors: usize,
    pub wall_cells: usize,
    pub length_cells: usize,
    /// Half-angle (radians) of a transverse crack at mid-length; `None` for no crack.
    pub crack_half_angle: Option<f64>,
}

impl Default for TubeSpec {
    fn default() -> Self {
        TubeSpec {
            inner_radius: 0.6,
            outer_radius: 1.2,
            length: 8.0,
            sectors: 16,
            wall_cells: 2,
            length_cells: 8,
            crack_half_angle: None,
        }
    }
}

/// Hollow cylinder resembling a long-bone shaft, axis along z.
///
/// Groups: `DIRICHLET_FIXED` (z = 0), `TRACTION_END` (z = L), and when a crack
/// is requested `CRACK_SURFACE` and `TIP_SET`.
pub fn tube(spec: &TubeSpec) -> Result<Mesh> {
    let radii: Vec<f64> = (0..=spec.wall_cells)
        .map(|i| {
            spec.inner_radius
                + (spec.outer_radius - spec.inner_radius) * i as f64 / spec.wall_cells as f64
        })
        .collect();
    let (n2, tris) = polar2d(&radii, spec.sectors);
    let levels: Vec<f64> = (0..=spec.length_cells)
        .map(|k| spec.length * k as f64 / spec.length_cells as f64)
        .collect();
    let (nodes, tets) = extrude(&n2, &tris, &levels);
    let mut d = Draft::new(nodes, tets);
    let eps = 1e-12 * spec.length;
    let l = spec.length;
    d.facet_group("DIRICHLET_FIXED", |p| p.z.abs() < eps);
    d.facet_group("TRACTION_END", |p| (p.z - l).abs() < eps);
    let Some(half_angle) = spec.crack_half_angle else {
        return d.build();
    };
    let zc = levels[spec.length_cells / 2];
    let faces =
        d.interior_faces(|p| (p.z - zc).abs() < eps && p.y.atan2(p.x).abs() <= half_angle + 1e-9);
    with_tip_set(insert_crack(&d.build()?, &faces)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_plate_size_and_validity() {
        let m = plate(&PlateSpec::benchmark()).unwrap();
        let n = m.tets.len() as f64;
        assert!((n - 1384.0).abs() / 1384.0 <= 0.3, "{n}");
        assert!((m.volume() - 50.0).abs() < 1e-10);
        let diag = m.validate();
        assert!(diag.all_passed(), "{diag}");
        assert_eq!(
            m.group(TIP_SET).unwrap().items.len(),
            2 * (PlateSpec::benchmark().layers + 1)
        );
    }

    #[test]
    fn graded_endpoints() {
        let g = graded(0.0, 1.0, 4, 2.0, false);
        assert_eq!(g.len(), 5);
        assert!((g[1] - 1.0 / 15.0).abs() < 1e-15);
        assert_eq!(g[4], 1.0);
    }

    #[test]
    fn tube_volume() {
        let m = tube(&TubeSpec::default()).unwrap();
        assert!(m.validate().all_passed());
        let cracked = tube(&TubeSpec {
            crack_half_angle: Some(0.8),
            ..Default::default()
        })
        .unwrap();
        let front = extract_crack_front(&cracked, CRACK_SURFACE).unwrap();
        assert_eq!(front.polylines.len(), 2);
        assert!((cracked.volume() - m.volume()).abs() < 1e-12);
    }

    #[test]
    fn mirrored_plate_is_valid() {
        let m = plate(&PlateSpec::coarse()).unwrap();
        let mm = mirror_x(&m).unwrap();
        assert!((mm.volume() - m.volume()).abs() < 1e-12);
    }
}
