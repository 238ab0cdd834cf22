//! Static equilibrium of a cracked body and crack-front quantities derived from
//! nodal configurational forces: orientation, energy release rate, K_I and the
//! Griffith criterion.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fe::{DirichletBc, Discretization, Density, ElementData, QuadratureSettings, TractionBc};
use crate::material::MaterialParams;
use crate::mechanics::{assemble_mechanics, par_map, qp_state};
use crate::mesh::{assign_orders, extract_crack_front, CrackFront, Mesh, OrderMap, Point, CRACK_SURFACE, TIP_SET};
use crate::solver::{newton, DofMap, NewtonOptions, NewtonReport, NonlinearSystem, Triplets};

/// A cracked body under fixed load.
#[derive(Clone, Debug)]
pub struct FractureProblem<'m> {
    pub mesh: &'m Mesh,
    pub front: CrackFront,
    pub density: Density,
    pub material: MaterialParams,
    pub dirichlet: Vec<DirichletBc>,
    pub tractions: Vec<TractionBc>,
    /// Scale applied to all tractions.
    pub load_factor: f64,
    /// Global polynomial order.
    pub pg: usize,
    /// Additional order on elements touching the tip set.
    pub pl: usize,
    pub singular: bool,
    pub quadrature: QuadratureSettings,
    pub newton: NewtonOptions,
}

impl<'m> FractureProblem<'m> {
    /// Problem on `mesh` with its `CRACK_SURFACE` front, Dirichlet groups taken
    /// from the group names and no tractions.
    pub fn new(mesh: &'m Mesh, material: MaterialParams) -> Result<Self> {
        Ok(FractureProblem {
            mesh,
            front: extract_crack_front(mesh, CRACK_SURFACE)?,
            density: Density::Uniform(material.rho0),
            dirichlet: DirichletBc::from_groups(mesh),
            material,
            tractions: Vec::new(),
            load_factor: 1.0,
            pg: 1,
            pl: 0,
            singular: false,
            quadrature: QuadratureSettings::default(),
            newton: NewtonOptions::default(),
        })
    }

    /// Nodes receiving the local order: the `TIP_SET` group if present,
    /// otherwise the front nodes.
    pub fn tip_nodes(&self) -> Vec<usize> {
        self.mesh
            .group_nodes(TIP_SET)
            .unwrap_or_else(|_| self.front.nodes.clone())
    }

    pub fn orders(&self) -> Result<OrderMap> {
        assign_orders(self.mesh, self.pg, self.pl, &self.tip_nodes())
    }

    pub fn discretization(&self) -> Result<Discretization<'m>> {
        Discretization::new(self.mesh, &self.orders()?, self.singular, self.quadrature)
    }
}

/// Density and its gradient at every quadrature point, per element.
type DensityCache = Vec<Vec<(f64, Vector3<f64>)>>;

fn density_cache(disc: &Discretization, density: &Density) -> Result<DensityCache> {
    par_map(disc.mesh.tets.len(), |t| {
        let el = disc.element(t)?;
        el.qps.iter().map(|qp| density.eval(disc, &el, qp)).collect()
    })
    .into_iter()
    .collect()
}

/// Converged displacement field of a [`FractureProblem`].
pub struct FractureSolution<'m> {
    pub disc: Discretization<'m>,
    /// Displacement coefficients, `3 * scalar dof + component`.
    pub u: Vec<f64>,
    pub newton: NewtonReport,
    /// Stored strain energy.
    pub strain_energy: f64,
    /// Work of the (scaled) external tractions.
    pub external_work: f64,
    density: DensityCache,
}

impl FractureSolution<'_> {
    /// Total potential energy `Π = ∫Ψ dV − f·u`.
    pub fn potential(&self) -> f64 {
        self.strain_energy - self.external_work
    }

    pub fn density_at(&self, t: usize, q: usize) -> (f64, Vector3<f64>) {
        self.density[t][q]
    }
}

struct Statics<'a, 'm> {
    disc: &'a Discretization<'m>,
    params: &'a MaterialParams,
    density: &'a DensityCache,
    f_ext: &'a [f64],
}

impl Statics<'_, '_> {
    fn rho_of(&self) -> impl Fn(&ElementData) -> Result<Vec<f64>> + Sync + '_ {
        move |el: &ElementData| Ok(self.density[el.t].iter().map(|d| d.0).collect())
    }
}

impl NonlinearSystem for Statics<'_, '_> {
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let g = assemble_mechanics(self.disc, x, self.params, false, &self.rho_of())?;
        Ok(g.res.iter().zip(self.f_ext).map(|(r, f)| r - f).collect())
    }

    fn jacobian(&mut self, x: &[f64]) -> Result<Triplets> {
        let g = assemble_mechanics(self.disc, x, self.params, true, &self.rho_of())?;
        Ok(g.k.expect("tangent requested"))
    }
}

/// Solves the static equilibrium `r(u) = f_int(u) − τ f_ext = 0`.
pub fn solve_equilibrium<'m>(problem: &FractureProblem<'m>) -> Result<FractureSolution<'m>> {
    if !(problem.load_factor > 0.0) {
        return Err(Error::InvalidInput(format!(
            "load factor must be positive, got {}",
            problem.load_factor
        )));
    }
    problem.material.validate()?;
    let disc = problem.discretization()?;
    let density = density_cache(&disc, &problem.density)?;
    let f_ext = disc.traction_vector(&problem.tractions, problem.load_factor)?;
    let fixed = disc.dirichlet_dofs(&problem.dirichlet)?;
    let n = disc.n_disp();
    let dofs = DofMap::new(vec![0..n], &fixed.iter().map(|p| p.0).collect::<Vec<_>>());
    let mut x0 = vec![0.0; n];
    for &(d, v) in &fixed {
        x0[d] = v;
    }
    let mut system = Statics {
        disc: &disc,
        params: &problem.material,
        density: &density,
        f_ext: &f_ext,
    };
    let (u, report) = newton(&mut system, x0, &dofs, &problem.newton)?;
    log::debug!(
        "equilibrium: {} dofs, {} Newton iterations, residuals {:?}",
        dofs.n_free(),
        report.iterations,
        report.residuals
    );
    let g = assemble_mechanics(&disc, &u, &problem.material, false, &system.rho_of())?;
    let external_work = u.iter().zip(&f_ext).map(|(a, b)| a * b).sum();
    Ok(FractureSolution {
        disc,
        u,
        newton: report,
        strain_energy: g.energy,
        external_work,
        density,
    })
}

/// Configurational force at one front node, split into its two contributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NodalForce {
    pub node: usize,
    /// Eshelby-stress contribution.
    pub eshelby: [f64; 3],
    /// Contribution of the density gradient.
    pub inhomogeneity: [f64; 3],
    pub total: [f64; 3],
    /// Density averaged with the node's geometric shape function.
    pub density: f64,
}

/// Nodal configurational forces at the front nodes.
///
/// The returned vector is the driving force `−∂Π/∂X_A` at fixed spatial
/// configuration, so that a positive projection on the growth direction means
/// the crack releases energy when node `A` advances.
pub fn configurational_forces(
    sol: &FractureSolution,
    front: &CrackFront,
    params: &MaterialParams,
) -> Result<Vec<NodalForce>> {
    let disc = &sol.disc;
    let tets = front.tets();
    let parts = par_map(tets.len(), |k| -> Result<Vec<(usize, Vector3<f64>, Vector3<f64>, f64, f64)>> {
        let t = tets[k];
        let el = disc.element(t)?;
        let locals: Vec<(usize, usize)> = el
            .geom
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| front.contains(**n))
            .map(|(a, &n)| (a, n))
            .collect();
        let mut out: Vec<_> = locals.iter().map(|&(_, n)| (n, Vector3::zeros(), Vector3::zeros(), 0.0, 0.0)).collect();
        for qp in &el.qps {
            let (rho, grad_rho) = sol.density[t][qp.index];
            let st = qp_state(&el, qp, &sol.u, rho, params)?;
            let sigma = st.state.psi * nalgebra::Matrix3::identity() - st.kin.f.transpose() * st.state.p;
            let f_inh = grad_rho * st.state.dpsi_drho;
            for (slot, &(a, _)) in locals.iter().enumerate() {
                let (phi, dphi) = el.geom.mapping.node_shape(a, qp.xi);
                let grad = qp.jinv_t * dphi;
                out[slot].1 -= sigma * grad * qp.w;
                out[slot].2 -= f_inh * (phi * qp.w);
                out[slot].3 += phi * rho * qp.w;
                out[slot].4 += phi * qp.w;
            }
        }
        Ok(out)
    });
    let mut acc: BTreeMap<usize, (Vector3<f64>, Vector3<f64>, f64, f64)> = front
        .nodes
        .iter()
        .map(|&n| (n, (Vector3::zeros(), Vector3::zeros(), 0.0, 0.0)))
        .collect();
    for part in parts {
        for (n, e, i, rw, w) in part? {
            let a = acc.get_mut(&n).expect("front node");
            a.0 += e;
            a.1 += i;
            a.2 += rw;
            a.3 += w;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(node, (e, i, rw, w))| NodalForce {
            node,
            eshelby: e.into(),
            inhomogeneity: i.into(),
            total: (e + i).into(),
            density: rw / w,
        })
        .collect())
}

/// Gradient of the area of triangle `(a, b, c)` with respect to vertex `a`.
pub fn area_gradient(a: &Point, b: &Point, c: &Point) -> Result<Vector3<f64>> {
    let n = (b - a).cross(&(c - a));
    let norm = n.norm();
    let scale = (b - a).norm().max((c - a).norm()).max((c - b).norm());
    if norm <= 1e-14 * scale * scale {
        return Err(Error::DegenerateFront(format!(
            "zero-area crack facet at ({:.4}, {:.4}, {:.4})",
            a.x, a.y, a.z
        )));
    }
    Ok(0.5 * (b - c).cross(&(n / norm)))
}

/// Unit growth direction at each front node: the crack-area gradient assembled
/// over the adjacent crack facets, with any component along the front removed.
pub fn crack_front_orientation(mesh: &Mesh, front: &CrackFront) -> Result<BTreeMap<usize, Vector3<f64>>> {
    let mut out = BTreeMap::new();
    for (&node, facets) in &front.node_facets {
        let mut grad = Vector3::zeros();
        for f in facets {
            let k = f.iter().position(|&v| v == node).expect("facet contains node");
            let (a, b, c) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            grad += area_gradient(&mesh.nodes[a], &mesh.nodes[b], &mesh.nodes[c])?;
        }
        if let Some(t) = front_tangent(mesh, front, node) {
            grad -= t * t.dot(&grad);
        }
        let norm = grad.norm();
        if !(norm > 0.0) {
            return Err(Error::DegenerateFront(format!("no growth direction at node {node}")));
        }
        out.insert(node, grad / norm);
    }
    Ok(out)
}

/// Unit tangent of the front polyline at `node` (sum of adjacent edge directions).
fn front_tangent(mesh: &Mesh, front: &CrackFront, node: usize) -> Option<Vector3<f64>> {
    let line = front.polylines.iter().find(|l| l.nodes.contains(&node))?;
    let n = line.nodes.len();
    let i = line.nodes.iter().position(|&v| v == node)?;
    let p = |k: usize| mesh.nodes[line.nodes[k]];
    let mut t = Vector3::zeros();
    if i + 1 < n {
        t += (p(i + 1) - p(i)).normalize();
    } else if line.closed {
        t += (p(0) - p(i)).normalize();
    }
    if i > 0 {
        t += (p(i) - p(i - 1)).normalize();
    } else if line.closed {
        t += (p(i) - p(n - 1)).normalize();
    }
    let norm = t.norm();
    (norm > 1e-12).then(|| t / norm)
}

/// Energy release rate per unit front length: `G = (G̃·Â)/ℓ`.
pub fn energy_release_rate(force: &Vector3<f64>, direction: &Vector3<f64>, tributary: f64) -> Result<f64> {
    if !(tributary > 0.0) {
        return Err(Error::DegenerateFront(format!("tributary length {tributary}")));
    }
    Ok(force.dot(direction) / tributary)
}

/// `K_I = √(G E)`.
pub fn stress_intensity(g: f64, young: f64) -> Result<f64> {
    if g < 0.0 {
        return Err(Error::InvalidInput(format!(
            "negative energy release rate {g:e} has no stress intensity"
        )));
    }
    Ok((g * young).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Griffith {
    /// `(G − g_c)/2`: zero at onset, positive when the crack would grow.
    pub phi: f64,
    /// `g_c/G`, the ratio conventionally quoted as a load margin.
    pub margin_linear: f64,
    /// `√(g_c/G)`, the load multiplier to onset when `G ∝ load²`.
    pub margin_sqrt: f64,
}

pub fn griffith_assess(g: f64, gc: f64) -> Griffith {
    let ratio = if g > 0.0 { gc / g } else { f64::INFINITY };
    Griffith {
        phi: 0.5 * (g - gc),
        margin_linear: ratio,
        margin_sqrt: ratio.sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontNodeReport {
    pub node: usize,
    pub x: [f64; 3],
    pub force: NodalForce,
    pub direction: [f64; 3],
    pub tributary_length: f64,
    /// `G̃·Â ≥ 0`: the driving force does not oppose growth.
    pub dissipative: bool,
    pub g: f64,
    /// Effective modulus `E (ρ/ρ₀)^n` at the node.
    pub modulus: f64,
    /// `√(G E)`; `None` when `G < 0`.
    pub k_i: Option<f64>,
    /// `√(G E / (1 − ν²))`.
    pub k_i_plane_strain: Option<f64>,
    pub griffith: Griffith,
}

/// Front-averaged quantities of one connected front.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontSummary {
    pub nodes: Vec<usize>,
    pub length: f64,
    /// `Σ G̃·Â / Σ ℓ`.
    pub g: f64,
    pub modulus: f64,
    pub k_i: Option<f64>,
    pub k_i_plane_strain: Option<f64>,
    pub griffith: Griffith,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FractureReport {
    pub nodes: Vec<FrontNodeReport>,
    pub fronts: Vec<FrontSummary>,
    pub g_max: f64,
    pub griffith: Griffith,
    pub potential: f64,
    pub newton_iterations: usize,
    pub dofs: usize,
}

impl FractureReport {
    /// Mean K_I over the fronts (the plate benchmark has two symmetric tips).
    pub fn mean_k_i(&self) -> Option<f64> {
        let ks: Option<Vec<f64>> = self.fronts.iter().map(|f| f.k_i).collect();
        ks.filter(|k| !k.is_empty()).map(|k| k.iter().sum::<f64>() / k.len() as f64)
    }
}

/// Builds the report from a converged solution.
pub fn report(problem: &FractureProblem, sol: &FractureSolution) -> Result<FractureReport> {
    let front = &problem.front;
    let params = &problem.material;
    let forces = configurational_forces(sol, front, params)?;
    let dirs = crack_front_orientation(problem.mesh, front)?;
    let nu_factor = 1.0 / (1.0 - params.poisson * params.poisson);
    let gc = params.gc;
    let mut nodes = Vec::with_capacity(forces.len());
    for f in &forces {
        let dir = dirs[&f.node];
        let ell = front.tributary_length[&f.node];
        let total = Vector3::from(f.total);
        let g = energy_release_rate(&total, &dir, ell)?;
        let modulus = params.young * params.scaling(f.density);
        nodes.push(FrontNodeReport {
            node: f.node,
            x: problem.mesh.nodes[f.node].into(),
            force: *f,
            direction: dir.into(),
            tributary_length: ell,
            dissipative: total.dot(&dir) >= 0.0,
            g,
            modulus,
            k_i: stress_intensity(g, modulus).ok(),
            k_i_plane_strain: stress_intensity(g, modulus * nu_factor).ok(),
            griffith: griffith_assess(g, gc),
        });
    }
    let by_node: BTreeMap<usize, &FrontNodeReport> = nodes.iter().map(|n| (n.node, n)).collect();
    let fronts = front
        .polylines
        .iter()
        .map(|line| {
            let (mut work, mut length, mut e) = (0.0, 0.0, 0.0);
            for n in &line.nodes {
                let r = by_node[n];
                work += r.g * r.tributary_length;
                length += r.tributary_length;
                e += r.modulus * r.tributary_length;
            }
            let g = work / length;
            let modulus = e / length;
            FrontSummary {
                nodes: line.nodes.clone(),
                length,
                g,
                modulus,
                k_i: stress_intensity(g, modulus).ok(),
                k_i_plane_strain: stress_intensity(g, modulus * nu_factor).ok(),
                griffith: griffith_assess(g, gc),
            }
        })
        .collect();
    let g_max = nodes.iter().map(|n| n.g).fold(f64::NEG_INFINITY, f64::max);
    Ok(FractureReport {
        nodes,
        fronts,
        g_max,
        griffith: griffith_assess(g_max, gc),
        potential: sol.potential(),
        newton_iterations: sol.newton.iterations,
        dofs: sol.disc.n_disp(),
    })
}

/// Solves and reports in one call.
pub fn assess<'m>(problem: &FractureProblem<'m>) -> Result<(FractureSolution<'m>, FractureReport)> {
    let sol = solve_equilibrium(problem)?;
    let rep = report(problem, &sol)?;
    Ok((sol, rep))
}
