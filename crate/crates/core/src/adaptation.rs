//! Coupled density–displacement adaptation: residuals, tangent blocks, implicit
//! Euler steps and the time loop to biological equilibrium.

use nalgebra::{DMatrix, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fe::{DirichletBc, Discretization, ElementData, QuadratureSettings, TractionBc};
use crate::material::{mass_source, MaterialParams};
use crate::mechanics::{mechanics_element, par_map, qp_state};
use crate::mesh::{Mesh, OrderMap};
use crate::solver::{
    adaptive_stepper, newton, norm, DofMap, NewtonOptions, NewtonReport, NonlinearSystem,
    StepControl, StepperOptions, Triplets,
};

/// Densities below this fraction of `ρ₀*` are clipped during Newton updates.
pub const MIN_DENSITY_FRACTION: f64 = 1e-6;

/// Density and displacement coefficients at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationState {
    pub t: f64,
    /// Density coefficients (vertex values first, then hierarchical modes).
    pub rho: Vec<f64>,
    /// Displacement coefficients, `3 * scalar dof + component`.
    pub u: Vec<f64>,
}

/// Element-local residual and tangent blocks. The local dof order is the
/// element's density dofs followed by its interleaved displacement dofs.
struct LocalBlocks {
    r_rho: Vec<f64>,
    r_x: Vec<f64>,
    mass: Option<DMatrix<f64>>,
    k_rr: Option<DMatrix<f64>>,
    k_rx: Option<DMatrix<f64>>,
    k_xr: Option<DMatrix<f64>>,
    k_xx: Option<DMatrix<f64>>,
}

/// The assembled system matrices, block by block.
#[derive(Clone, Debug)]
pub struct TangentBlocks {
    /// `∫ Φ_a Φ_b dV` (the transient block is this divided by Δt).
    pub mass: Triplets,
    /// Conductivity and mass-source derivative part of the density block.
    pub k_rho_rho: Triplets,
    pub k_rho_x: Triplets,
    pub k_x_rho: Triplets,
    pub k_x_x: Triplets,
}

/// Discretized adaptation problem with fixed loads.
pub struct AdaptationModel<'m> {
    pub disc: Discretization<'m>,
    pub params: MaterialParams,
    /// Constant external mass supply `q`.
    pub influx: f64,
    f_ext: Vec<f64>,
    fixed: Vec<(usize, f64)>,
    dofs: DofMap,
}

impl<'m> AdaptationModel<'m> {
    pub fn new(
        mesh: &'m Mesh,
        orders: &OrderMap,
        params: MaterialParams,
        dirichlet: &[DirichletBc],
        tractions: &[TractionBc],
        influx: f64,
        quadrature: QuadratureSettings,
    ) -> Result<Self> {
        for w in params.validate()? {
            log::warn!("{w}");
        }
        let disc = Discretization::new(mesh, orders, false, quadrature)?;
        let n_rho = disc.dens.n;
        let f_ext = disc.traction_vector(tractions, 1.0)?;
        let fixed: Vec<(usize, f64)> = disc
            .dirichlet_dofs(dirichlet)?
            .into_iter()
            .map(|(d, v)| (n_rho + d, v))
            .collect();
        let total = n_rho + disc.n_disp();
        let dofs = DofMap::new(
            vec![0..n_rho, n_rho..total],
            &fixed.iter().map(|p| p.0).collect::<Vec<_>>(),
        );
        Ok(AdaptationModel {
            disc,
            params,
            influx,
            f_ext,
            fixed,
            dofs,
        })
    }

    pub fn n_rho(&self) -> usize {
        self.disc.dens.n
    }

    pub fn n_total(&self) -> usize {
        self.dofs.total
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.dofs
    }

    /// Uniform density `ρ₀*`, zero displacement apart from prescribed values.
    pub fn initial_state(&self) -> AdaptationState {
        let rho0 = self.params.rho0;
        let mut u = vec![0.0; self.disc.n_disp()];
        for &(d, v) in &self.fixed {
            u[d - self.n_rho()] = v;
        }
        AdaptationState {
            t: 0.0,
            rho: self.disc.nodal_density(|_| rho0),
            u,
        }
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.n_rho())
    }

    pub fn join(&self, state: &AdaptationState) -> Vec<f64> {
        let mut x = state.rho.clone();
        x.extend_from_slice(&state.u);
        x
    }

    fn element_blocks(
        &self,
        el: &ElementData,
        x: &[f64],
        rho_prev: &[f64],
        dt: f64,
        with_tangent: bool,
    ) -> Result<LocalBlocks> {
        let (rho, u) = self.split(x);
        let p = &self.params;
        let nr = el.rdofs.len();
        let nu = el.udofs.len();
        let field = |c: &[f64], qp| self.disc.density_at(el, qp, c);
        let rho_q: Vec<(f64, Vector3<f64>)> = el.qps.iter().map(|qp| field(rho, qp)).collect();
        let mech = mechanics_element(
            el,
            u,
            &rho_q.iter().map(|r| r.0).collect::<Vec<_>>(),
            p,
            with_tangent,
        )?;
        let mut r_rho = vec![0.0; nr];
        let zeros = || with_tangent.then(|| DMatrix::zeros(nr, nr));
        let (mut mass, mut k_rr) = (zeros(), zeros());
        let mut k_rx = with_tangent.then(|| DMatrix::zeros(nr, 3 * nu));
        let mut k_xr = with_tangent.then(|| DMatrix::zeros(3 * nu, nr));
        for (q, qp) in el.qps.iter().enumerate() {
            let (r, grad_r) = rho_q[q];
            let (r_prev, _) = field(rho_prev, qp);
            let st = qp_state(el, qp, u, r, p)?;
            let ms = mass_source(r, st.state.psi, p)?;
            let phi = el.dens_values(qp);
            let dphi = el.dens_grads(qp);
            let w = qp.w;
            for a in 0..nr {
                r_rho[a] += w
                    * (phi[a] * ((r - r_prev) / dt - ms.r0 - self.influx)
                        + p.conductivity * dphi[a].dot(&grad_r));
            }
            if !with_tangent {
                continue;
            }
            let (mass, k_rr, k_rx, k_xr) = (
                mass.as_mut().unwrap(),
                k_rr.as_mut().unwrap(),
                k_rx.as_mut().unwrap(),
                k_xr.as_mut().unwrap(),
            );
            let dr0_drho = ms.d_rho + ms.d_psi * st.state.dpsi_drho;
            let dr0_df = st.state.p * ms.d_psi;
            let dp_drho = st.state.p * (p.n / r);
            for a in 0..nr {
                for b in 0..nr {
                    mass[(a, b)] += w * phi[a] * phi[b];
                    k_rr[(a, b)] += w
                        * (p.conductivity * dphi[a].dot(&dphi[b]) - phi[a] * dr0_drho * phi[b]);
                }
            }
            for (bb, g) in st.grads.iter().enumerate() {
                let v = dr0_df * g;
                let t = dp_drho * g;
                for a in 0..nr {
                    for k in 0..3 {
                        k_rx[(a, 3 * bb + k)] -= w * phi[a] * v[k];
                        k_xr[(3 * bb + k, a)] += w * t[k] * phi[a];
                    }
                }
            }
        }
        Ok(LocalBlocks {
            r_rho,
            r_x: mech.res,
            mass,
            k_rr,
            k_rx,
            k_xr,
            k_xx: mech.k,
        })
    }

    fn local_blocks(
        &self,
        x: &[f64],
        rho_prev: &[f64],
        dt: f64,
        with_tangent: bool,
    ) -> Result<Vec<(Vec<usize>, Vec<usize>, LocalBlocks)>> {
        par_map(self.disc.mesh.tets.len(), |t| {
            let el = self.disc.element(t)?;
            let b = self.element_blocks(&el, x, rho_prev, dt, with_tangent)?;
            let xd: Vec<usize> = el
                .udofs
                .iter()
                .flat_map(|&d| [3 * d, 3 * d + 1, 3 * d + 2])
                .map(|d| d + self.n_rho())
                .collect();
            Ok((el.rdofs.clone(), xd, b))
        })
        .into_iter()
        .collect()
    }

    /// Residual `[r^ρ; r^x]` for the step from `rho_prev` over `dt`.
    pub fn residual(&self, x: &[f64], rho_prev: &[f64], dt: f64) -> Result<Vec<f64>> {
        let mut r = vec![0.0; self.n_total()];
        for (rd, xd, b) in self.local_blocks(x, rho_prev, dt, false)? {
            for (i, &d) in rd.iter().enumerate() {
                r[d] += b.r_rho[i];
            }
            for (i, &d) in xd.iter().enumerate() {
                r[d] += b.r_x[i];
            }
        }
        let n_rho = self.n_rho();
        for (i, f) in self.f_ext.iter().enumerate() {
            r[n_rho + i] -= f;
        }
        Ok(r)
    }

    /// Tangent blocks at `x`.
    pub fn blocks(&self, x: &[f64], rho_prev: &[f64], dt: f64) -> Result<TangentBlocks> {
        let n = self.n_total();
        let mut out = TangentBlocks {
            mass: Triplets::new(n, n),
            k_rho_rho: Triplets::new(n, n),
            k_rho_x: Triplets::new(n, n),
            k_x_rho: Triplets::new(n, n),
            k_x_x: Triplets::new(n, n),
        };
        fn scatter(t: &mut Triplets, rows: &[usize], cols: &[usize], m: &DMatrix<f64>) {
            for (j, &c) in cols.iter().enumerate() {
                for (i, &r) in rows.iter().enumerate() {
                    t.push(r, c, m[(i, j)]);
                }
            }
        }
        for (rd, xd, b) in self.local_blocks(x, rho_prev, dt, true)? {
            scatter(&mut out.mass, &rd, &rd, b.mass.as_ref().unwrap());
            scatter(&mut out.k_rho_rho, &rd, &rd, b.k_rr.as_ref().unwrap());
            scatter(&mut out.k_rho_x, &rd, &xd, b.k_rx.as_ref().unwrap());
            scatter(&mut out.k_x_rho, &xd, &rd, b.k_xr.as_ref().unwrap());
            scatter(&mut out.k_x_x, &xd, &xd, b.k_xx.as_ref().unwrap());
        }
        Ok(out)
    }

    /// Full Jacobian `∂r/∂x` of [`Self::residual`].
    pub fn jacobian(&self, x: &[f64], rho_prev: &[f64], dt: f64) -> Result<Triplets> {
        let b = self.blocks(x, rho_prev, dt)?;
        let n = self.n_total();
        let mut j = Triplets::with_capacity(
            n,
            n,
            b.mass.len() * 2 + b.k_rho_x.len() * 2 + b.k_x_x.len(),
        );
        let mut m = b.mass;
        m.vals.iter_mut().for_each(|v| *v /= dt);
        for t in [m, b.k_rho_rho, b.k_rho_x, b.k_x_rho, b.k_x_x] {
            j.extend(t);
        }
        Ok(j)
    }

    /// `∫ρ^h dV`.
    pub fn total_mass(&self, rho: &[f64]) -> Result<f64> {
        let parts = par_map(self.disc.mesh.tets.len(), |t| -> Result<f64> {
            let el = self.disc.element(t)?;
            Ok(el
                .qps
                .iter()
                .map(|qp| qp.w * self.disc.density_at(&el, qp, rho).0)
                .sum())
        });
        parts.into_iter().sum()
    }

    /// One implicit Euler step of length `dt` from `state`.
    pub fn step(&self, state: &AdaptationState, dt: f64, opts: &NewtonOptions) -> Result<(AdaptationState, NewtonReport)> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let mut sys = StepSystem {
            model: self,
            rho_prev: &state.rho,
            dt,
            floor: MIN_DENSITY_FRACTION * self.params.rho0,
            clipped: 0,
        };
        let (x, report) = newton(&mut sys, self.join(state), &self.dofs, opts)?;
        if sys.clipped > 0 {
            log::warn!(
                "clipped {} density values to {:e} during the step at t = {}",
                sys.clipped,
                sys.floor,
                state.t
            );
        }
        let (rho, u) = self.split(&x);
        Ok((
            AdaptationState {
                t: state.t + dt,
                rho: rho.to_vec(),
                u: u.to_vec(),
            },
            report,
        ))
    }

    /// Integrates to biological equilibrium or the time horizon.
    pub fn run(&self, initial: AdaptationState, settings: &AdaptationSettings) -> Result<AdaptationRun> {
        let mut state = initial;
        let mut history = vec![MassRecord {
            t: state.t,
            mass: self.total_mass(&state.rho)?,
            dt: 0.0,
            newton_its: 0,
        }];
        let mut snapshots = Vec::new();
        let mut pending: Vec<f64> = settings.snapshot_times.clone();
        pending.sort_by(f64::total_cmp);
        pending.reverse();
        let take_snapshots = |state: &AdaptationState, pending: &mut Vec<f64>, out: &mut Vec<Snapshot>| {
            while pending.last().is_some_and(|&ts| ts <= state.t + 1e-12) {
                let requested = pending.pop().unwrap();
                out.push(Snapshot {
                    requested,
                    t: state.t,
                    rho: state.rho.clone(),
                    u: state.u.clone(),
                });
            }
        };
        take_snapshots(&state, &mut pending, &mut snapshots);
        let mut equilibrium = false;
        let t0 = state.t;
        let result = adaptive_stepper(
            |t, dt| {
                debug_assert!((t + t0 - state.t).abs() < 1e-9 * (1.0 + state.t));
                let (next, report) = self.step(&state, dt, &settings.newton)?;
                let change = norm(
                    &next
                        .rho
                        .iter()
                        .zip(&state.rho)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                );
                let rate = change / dt;
                equilibrium = rate <= settings.equilibrium_tol * norm(&next.rho);
                state = next;
                history.push(MassRecord {
                    t: state.t,
                    mass: self.total_mass(&state.rho)?,
                    dt,
                    newton_its: report.iterations,
                });
                take_snapshots(&state, &mut pending, &mut snapshots);
                log::info!(
                    "t = {:.4}, dt = {dt:.4}, mass = {:.6}, density rate = {rate:.3e}",
                    state.t,
                    history.last().unwrap().mass
                );
                Ok(StepControl {
                    iterations: report.iterations,
                    stop: equilibrium,
                })
            },
            &StepperOptions {
                t_end: settings.stepper.t_end - t0,
                ..settings.stepper.clone()
            },
        );
        let outcome = match result {
            Ok(series) if series.stopped && equilibrium => RunOutcome::Equilibrium,
            Ok(series) => {
                if series.steps.len() >= settings.stepper.max_steps {
                    RunOutcome::StepLimit
                } else {
                    RunOutcome::Horizon
                }
            }
            Err(e @ (Error::StepUnderflow { .. } | Error::Io { .. } | Error::InvalidInput(_))) if !matches!(e, Error::StepUnderflow { .. }) => return Err(e),
            Err(e) => RunOutcome::Failed(e.to_string()),
        };
        Ok(AdaptationRun {
            outcome,
            history,
            snapshots,
            state,
        })
    }
}

struct StepSystem<'a, 'm> {
    model: &'a AdaptationModel<'m>,
    rho_prev: &'a [f64],
    dt: f64,
    floor: f64,
    clipped: usize,
}

impl NonlinearSystem for StepSystem<'_, '_> {
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.residual(x, self.rho_prev, self.dt)
    }

    fn jacobian(&mut self, x: &[f64]) -> Result<Triplets> {
        self.model.jacobian(x, self.rho_prev, self.dt)
    }

    fn project(&mut self, x: &mut [f64]) {
        let space = &self.model.disc.dens;
        for (d, v) in x[..space.n].iter_mut().enumerate() {
            if space.is_vertex_dof(d) && *v < self.floor {
                *v = self.floor;
                self.clipped += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationSettings {
    pub stepper: StepperOptions,
    pub newton: NewtonOptions,
    /// Stop when `‖ρⁿ⁺¹ − ρⁿ‖/Δt ≤ tol ‖ρⁿ⁺¹‖`.
    pub equilibrium_tol: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for AdaptationSettings {
    fn default() -> Self {
        AdaptationSettings {
            stepper: StepperOptions {
                t_end: 700.0,
                ..StepperOptions::default()
            },
            newton: NewtonOptions {
                tol: 1e-8,
                ..NewtonOptions::default()
            },
            equilibrium_tol: 1e-8,
            snapshot_times: vec![0.0, 10.0, 40.0, 100.0, 700.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MassRecord {
    pub t: f64,
    pub mass: f64,
    pub dt: f64,
    pub newton_its: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub requested: f64,
    pub t: f64,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RunOutcome {
    /// Density rate fell below the equilibrium tolerance.
    Equilibrium,
    /// The time horizon was reached first.
    Horizon,
    StepLimit,
    /// The stepper gave up; the history up to the failure is kept.
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct AdaptationRun {
    pub outcome: RunOutcome,
    pub history: Vec<MassRecord>,
    pub snapshots: Vec<Snapshot>,
    /// Last accepted state.
    pub state: AdaptationState,
}

/// Block-wise comparison of an analytic Jacobian with finite differences.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockCheck {
    pub block: &'static str,
    /// `max |K − K_fd| / max |K_fd|` over the block.
    pub error: f64,
}

pub const BLOCK_NAMES: [&str; 4] = ["K_rho_rho", "K_rho_x", "K_x_rho", "K_x_x"];

/// Relative errors of the four blocks of `analytic` against `fd`; the first
/// `n_rho` rows/columns belong to density.
pub fn compare_blocks(analytic: &DMatrix<f64>, fd: &DMatrix<f64>, n_rho: usize) -> Vec<BlockCheck> {
    let n = analytic.nrows();
    let ranges = [(0..n_rho, 0..n_rho), (0..n_rho, n_rho..n), (n_rho..n, 0..n_rho), (n_rho..n, n_rho..n)];
    ranges
        .into_iter()
        .zip(BLOCK_NAMES)
        .map(|((rows, cols), block)| {
            let (mut diff, mut scale) = (0.0f64, 0.0f64);
            for i in rows.clone() {
                for j in cols.clone() {
                    diff = diff.max((analytic[(i, j)] - fd[(i, j)]).abs());
                    scale = scale.max(fd[(i, j)].abs()).max(analytic[(i, j)].abs());
                }
            }
            BlockCheck {
                block,
                error: if scale > 0.0 { diff / scale } else { diff },
            }
        })
        .collect()
}

/// Central-difference Jacobian of the residual (dense; small models only).
pub fn fd_jacobian(model: &AdaptationModel, x: &[f64], rho_prev: &[f64], dt: f64, h: f64) -> Result<DMatrix<f64>> {
    let n = model.n_total();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let step = h * (1.0 + x[j].abs());
        xp[j] = x[j] + step;
        let rp = model.residual(&xp, rho_prev, dt)?;
        xp[j] = x[j] - step;
        let rm = model.residual(&xp, rho_prev, dt)?;
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

fn dense(t: &Triplets) -> DMatrix<f64> {
    let d = t.to_dense();
    DMatrix::from_fn(t.nrows, t.ncols, |i, j| d[i][j])
}

/// Analytic against finite-difference Jacobian, per block.
pub fn check_tangent(model: &AdaptationModel, x: &[f64], rho_prev: &[f64], dt: f64) -> Result<Vec<BlockCheck>> {
    let analytic = dense(&model.jacobian(x, rho_prev, dt)?);
    let fd = fd_jacobian(model, x, rho_prev, dt, 1e-6)?;
    Ok(compare_blocks(&analytic, &fd, model.n_rho()))
}

/// Equilibrium density of a uniformly strained bar: the root of
/// `(ρ/ρ₀*)^{−m} Ψ(ρ) = Ψ*` with `Ψ = (ρ/ρ₀*)^n Ψ_neo`.
pub fn strained_bar_density(psi_neo: f64, params: &MaterialParams) -> f64 {
    params.rho0 * (psi_neo / params.psi_star).powf(1.0 / (params.m - params.n))
}

/// Neo-Hookean energy of uniaxial stretch `l1` with traction-free lateral
/// faces, and the lateral stretch.
pub fn uniaxial_energy(l1: f64, params: &MaterialParams) -> Result<(f64, f64)> {
    let (mu, lambda) = params.lame();
    // P22 ∝ μ l2 + (λ ln(l1 l2²) − μ)/l2 = 0, solved by Newton in l2.
    let mut l2: f64 = 1.0;
    for _ in 0..100 {
        let g = mu * l2 * l2 + lambda * (l1 * l2 * l2).ln() - mu;
        let dg = 2.0 * mu * l2 + 2.0 * lambda / l2;
        let d = g / dg;
        l2 -= d;
        if d.abs() < 1e-16 {
            break;
        }
    }
    let f = nalgebra::Matrix3::from_diagonal(&Vector3::new(l1, l2, l2));
    let psi = crate::material::neo_hookean_energy(&(f.transpose() * f), mu, lambda)?;
    Ok((psi, l2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::DirichletBc;
    use crate::material::Bell;
    use crate::mesh::{assign_orders, generate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model<'m>(mesh: &'m Mesh, p: usize, params: MaterialParams, tractions: &[TractionBc]) -> AdaptationModel<'m> {
        let orders = assign_orders(mesh, p, 0, &[]).unwrap();
        let bcs = [
            DirichletBc::fixed("XMIN", &[0]),
            DirichletBc::fixed("YMIN", &[1]),
            DirichletBc::fixed("ZMIN", &[2]),
        ];
        AdaptationModel::new(mesh, &orders, params, &bcs, tractions, 0.0, QuadratureSettings::default()).unwrap()
    }

    fn single_tet() -> Mesh {
        let nodes = vec![
            crate::mesh::Point::new(0.0, 0.0, 0.0),
            crate::mesh::Point::new(1.0, 0.0, 0.0),
            crate::mesh::Point::new(0.0, 1.0, 0.0),
            crate::mesh::Point::new(0.0, 0.0, 1.0),
        ];
        Mesh::new(nodes, vec![[0, 1, 2, 3]], vec![], Default::default()).unwrap()
    }

    #[test]
    fn total_mass_oracles() {
        let tet = single_tet();
        let orders = assign_orders(&tet, 1, 0, &[]).unwrap();
        let m = AdaptationModel::new(&tet, &orders, MaterialParams::default(), &[], &[], 0.0, QuadratureSettings::default()).unwrap();
        assert!((m.total_mass(&[1.0; 4]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let cube = generate::box_mesh([0.0; 3], [1.0; 3], [1, 1, 1]);
        let m = model(&cube, 2, MaterialParams::default(), &[]);
        assert!((m.total_mass(&m.disc.nodal_density(|_| 2.0)).unwrap() - 2.0).abs() < 1e-14);
        assert!((m.total_mass(&m.disc.nodal_density(|x| x.y)).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_tet_source_and_mass_matrix() {
        let tet = single_tet();
        let orders = assign_orders(&tet, 1, 0, &[]).unwrap();
        // Ψ* = 1 with c = 1 and no strain gives R₀ = −1.
        let params = MaterialParams { psi_star: 1.0, ..Default::default() };
        let m = AdaptationModel::new(&tet, &orders, params, &[], &[], 0.0, QuadratureSettings::default()).unwrap();
        let s = m.initial_state();
        let x = m.join(&s);
        let r = m.residual(&x, &s.rho, 1.0).unwrap();
        for a in 0..4 {
            assert!((r[a] - 1.0 / 24.0).abs() < 1e-15);
        }
        let mass = dense(&m.blocks(&x, &s.rho, 1.0).unwrap().mass);
        let vol = 1.0 / 6.0;
        for a in 0..4 {
            for b in 0..4 {
                let expect = vol / 20.0 * if a == b { 2.0 } else { 1.0 };
                assert!((mass[(a, b)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fixed_point_is_preserved() {
        let cube = generate::box_mesh([0.0; 3], [1.0; 3], [2, 1, 1]);
        let params = MaterialParams { psi_star: 0.0, ..Default::default() };
        let m = model(&cube, 2, params, &[]);
        let s = m.initial_state();
        let x = m.join(&s);
        assert!(norm(&m.residual(&x, &s.rho, 1.0).unwrap()) < 1e-14);
        let (next, _) = m.step(&s, 1.0, &NewtonOptions::default()).unwrap();
        let d: f64 = next.rho.iter().zip(&s.rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-10);
        let run = m.run(s, &AdaptationSettings::default()).unwrap();
        assert_eq!(run.outcome, RunOutcome::Equilibrium);
        assert_eq!(run.history.len(), 2);
    }

    #[test]
    fn conductivity_free_and_decoupled_limits() {
        let cube = generate::box_mesh([0.0; 3], [1.0; 3], [1, 1, 1]);
        let params = MaterialParams { n: 0.0, m: 3.0, ..Default::default() };
        let m = model(&cube, 2, params, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = m.join(&m.initial_state());
        for v in x.iter_mut().skip(m.n_rho()) {
            *v = rng.random_range(-0.01..0.01);
        }
        let b = m.blocks(&x, &m.initial_state().rho, 1.0).unwrap();
        assert!(b.k_x_rho.vals.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tangent_blocks_match_finite_differences() {
        let cube = generate::box_mesh([0.0; 3], [1.0; 3], [1, 1, 1]);
        let bell = Bell { b: 2, rho_min: 0.2, rho_max: 2.0 };
        for (k, params) in [
            MaterialParams { conductivity: 0.3, ..Default::default() },
            MaterialParams { bell: Some(bell), ..Default::default() },
        ]
        .into_iter()
        .enumerate()
        {
            let m = model(&cube, 2, params, &[]);
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let s = m.initial_state();
            let mut x = m.join(&s);
            for (d, v) in x.iter_mut().enumerate() {
                *v += if d < m.n_rho() { rng.random_range(-0.1..0.1) } else { rng.random_range(-0.02..0.02) };
            }
            for c in check_tangent(&m, &x, &s.rho, 0.7).unwrap() {
                assert!(c.error < 1e-6, "{c:?}");
            }
        }
    }

    #[test]
    fn perturbed_block_is_named() {
        let cube = generate::box_mesh([0.0; 3], [1.0; 3], [1, 1, 1]);
        let m = model(&cube, 1, MaterialParams::default(), &[]);
        let s = m.initial_state();
        let mut x = m.join(&s);
        x[m.n_rho() + 5] += 0.01;
        let mut analytic = dense(&m.jacobian(&x, &s.rho, 1.0).unwrap());
        let fd = fd_jacobian(&m, &x, &s.rho, 1.0, 1e-6).unwrap();
        analytic[(m.n_rho() + 1, 2)] += 1.0;
        let failed: Vec<_> = compare_blocks(&analytic, &fd, m.n_rho()).into_iter().filter(|c| c.error > 1e-5).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].block, "K_x_rho");
    }

    #[test]
    fn loaded_bar_gains_density() {
        let bar = generate::box_mesh([0.0; 3], [2.0, 1.0, 1.0], [2, 1, 1]);
        let params = MaterialParams::default();
        let tractions = [TractionBc { group: "XMAX".into(), traction: [40.0, 0.0, 0.0] }];
        let m = model(&bar, 1, params, &tractions);
        let mut s = m.initial_state();
        let mut mass = m.total_mass(&s.rho).unwrap();
        for _ in 0..3 {
            s = m.step(&s, 0.5, &NewtonOptions::default()).unwrap().0;
            let next = m.total_mass(&s.rho).unwrap();
            assert!(next > mass);
            mass = next;
        }
    }

    #[test]
    fn small_steps_change_the_state_proportionally() {
        let bar = generate::box_mesh([0.0; 3], [2.0, 1.0, 1.0], [2, 1, 1]);
        let tractions = [TractionBc { group: "XMAX".into(), traction: [40.0, 0.0, 0.0] }];
        let m = model(&bar, 1, MaterialParams::default(), &tractions);
        // Settle the displacement first so that only the density evolves.
        let s0 = m.step(&m.initial_state(), 1e-6, &NewtonOptions::default()).unwrap().0;
        let change = |dt: f64| {
            let s = m.step(&s0, dt, &NewtonOptions::default()).unwrap().0;
            norm(&s.rho.iter().zip(&s0.rho).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        let ratio = change(2e-3) / change(1e-3);
        assert!((ratio - 2.0).abs() < 1e-2, "{ratio}");
    }

    #[test]
    fn strained_bar_reaches_closed_form_density() {
        let bar = generate::box_mesh([0.0; 3], [2.0, 1.0, 1.0], [2, 1, 1]);
        let params = MaterialParams::default();
        let stretch = 1.006;
        let orders = assign_orders(&bar, 1, 0, &[]).unwrap();
        let mut pull = DirichletBc::fixed("XMAX", &[0]);
        pull.value = [2.0 * (stretch - 1.0), 0.0, 0.0];
        let bcs = [DirichletBc::fixed("XMIN", &[0]), DirichletBc::fixed("YMIN", &[1]), DirichletBc::fixed("ZMIN", &[2]), pull];
        let m = AdaptationModel::new(&bar, &orders, params.clone(), &bcs, &[], 0.0, QuadratureSettings::default()).unwrap();
        let (psi, _) = uniaxial_energy(stretch, &params).unwrap();
        let expect = strained_bar_density(psi, &params);
        assert!(expect > 1.0);
        let settings = AdaptationSettings { equilibrium_tol: 1e-10, stepper: StepperOptions { t_end: 1e5, ..Default::default() }, ..Default::default() };
        let run = m.run(m.initial_state(), &settings).unwrap();
        assert_eq!(run.outcome, RunOutcome::Equilibrium);
        for &r in &run.state.rho[..bar.nodes.len()] {
            assert!((r - expect).abs() <= 1e-6 * expect, "{r} vs {expect}");
        }
        // Mass increases monotonically towards equilibrium.
        assert!(run.history.windows(2).all(|w| w[1].mass >= w[0].mass - 1e-12));
    }
}
