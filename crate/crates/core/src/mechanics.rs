//! Element kernels and global assembly for the displacement field.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::Result;
use crate::fe::{Discretization, ElementData, Qp};
use crate::material::{evaluate_kin, Kinematics, MaterialParams, StressState};
use crate::solver::Triplets;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Local residual (internal forces), optional tangent and strain energy of one element.
pub struct MechLocal {
    /// Interleaved `3a + i`.
    pub res: Vec<f64>,
    pub k: Option<DMatrix<f64>>,
    pub energy: f64,
}

/// Stress state at a quadrature point together with the physical gradients.
pub struct QpState {
    pub grads: Vec<Vector3<f64>>,
    pub kin: Kinematics,
    pub state: StressState,
}

pub fn qp_state(el: &ElementData, qp: &Qp, u: &[f64], rho: f64, params: &MaterialParams) -> Result<QpState> {
    let grads = el.disp_grads(qp);
    let f = el.deformation_gradient(u, &grads);
    let kin = Kinematics::new(f)?;
    if !(rho > 0.0) {
        return Err(crate::Error::Inadmissible(format!("density {rho:e} at ({:.4}, {:.4}, {:.4})", qp.x.x, qp.x.y, qp.x.z)));
    }
    let state = evaluate_kin(&kin, rho, params);
    Ok(QpState { grads, kin, state })
}

/// Internal-force residual and (optionally) tangent stiffness of one element with
/// density `rho[q]` at each quadrature point.
pub fn mechanics_element(
    el: &ElementData,
    u: &[f64],
    rho: &[f64],
    params: &MaterialParams,
    with_tangent: bool,
) -> Result<MechLocal> {
    let n = el.udofs.len();
    let nq = el.qps.len();
    let (mu, lambda) = params.lame();
    let mut res = vec![0.0; 3 * n];
    let mut energy = 0.0;
    // Column-stacked data for the GEMM form of the tangent.
    let (mut g_st, mut w_a, mut w_l, mut v_all) = if with_tangent {
        (DMatrix::zeros(n, 3 * nq), [(); 3].map(|_| DMatrix::zeros(n, nq)), [(); 3].map(|_| DMatrix::zeros(n, nq)), [(); 3].map(|_| DMatrix::zeros(n, nq)))
    } else {
        Default::default()
    };
    for (q, qp) in el.qps.iter().enumerate() {
        let st = qp_state(el, qp, u, rho[q], params)?;
        energy += qp.w * st.state.psi;
        let p = st.state.p * qp.w;
        for (a, g) in st.grads.iter().enumerate() {
            let f = p * g;
            res[3 * a] += f.x;
            res[3 * a + 1] += f.y;
            res[3 * a + 2] += f.z;
        }
        if with_tangent {
            let s = params.scaling(rho[q]);
            let c_mu = (qp.w * s * mu).sqrt();
            let c_a = qp.w * s * (mu - lambda * st.kin.ln_j);
            let c_l = qp.w * s * lambda;
            let finv_t: Matrix3<f64> = st.kin.f_inv.transpose();
            for (a, g) in st.grads.iter().enumerate() {
                let v = finv_t * g;
                for i in 0..3 {
                    g_st[(a, 3 * q + i)] = c_mu * g[i];
                    v_all[i][(a, q)] = v[i];
                    w_a[i][(a, q)] = c_a * v[i];
                    w_l[i][(a, q)] = c_l * v[i];
                }
            }
        }
    }
    let k = if with_tangent {
        let gg = &g_st * g_st.transpose();
        let mut k = DMatrix::zeros(3 * n, 3 * n);
        for i in 0..3 {
            for kk in 0..3 {
                // K_ik[a, b] = δ_ik (G Gᵀ) + c_a v_b,i v_a,k + c_λ v_a,i v_b,k
                let term_a = &w_a[kk] * v_all[i].transpose();
                let term_l = &w_l[i] * v_all[kk].transpose();
                for a in 0..n {
                    for b in 0..n {
                        let mut val = term_a[(a, b)] + term_l[(a, b)];
                        if i == kk {
                            val += gg[(a, b)];
                        }
                        k[(3 * a + i, 3 * b + kk)] = val;
                    }
                }
            }
        }
        Some(k)
    } else {
        None
    };
    Ok(MechLocal { res, k, energy })
}

/// Global internal-force vector, tangent and strain energy.
pub struct MechGlobal {
    pub res: Vec<f64>,
    pub k: Option<Triplets>,
    pub energy: f64,
}

/// Assembles all elements; `rho_of(el)` supplies the density at each element qp.
pub fn assemble_mechanics(
    disc: &Discretization,
    u: &[f64],
    params: &MaterialParams,
    with_tangent: bool,
    rho_of: &(dyn Fn(&ElementData) -> Result<Vec<f64>> + Sync),
) -> Result<MechGlobal> {
    let ndof = disc.n_disp();
    let locals = par_map(disc.mesh.tets.len(), |t| -> Result<(Vec<usize>, MechLocal)> {
        let el = disc.element(t)?;
        let rho = rho_of(&el)?;
        let local = mechanics_element(&el, u, &rho, params, with_tangent)?;
        let dofs: Vec<usize> = el.udofs.iter().flat_map(|&d| [3 * d, 3 * d + 1, 3 * d + 2]).collect();
        Ok((dofs, local))
    });
    let mut res = vec![0.0; ndof];
    let mut energy = 0.0;
    let cap: usize = if with_tangent { locals.iter().map(|l| l.as_ref().map_or(0, |(d, _)| d.len() * d.len())).sum() } else { 0 };
    let mut k = with_tangent.then(|| Triplets::with_capacity(ndof, ndof, cap));
    for l in locals {
        let (dofs, local) = l?;
        energy += local.energy;
        for (i, &d) in dofs.iter().enumerate() {
            res[d] += local.res[i];
        }
        if let (Some(k), Some(lk)) = (k.as_mut(), local.k.as_ref()) {
            for (j, &dj) in dofs.iter().enumerate() {
                for (i, &di) in dofs.iter().enumerate() {
                    k.push(di, dj, lk[(i, j)]);
                }
            }
        }
    }
    Ok(MechGlobal { res, k, energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::QuadratureSettings;
    use crate::mesh::{assign_orders, generate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn element_tangent_matches_finite_differences() {
        let m = generate::box_mesh([0.0; 3], [1.0, 1.0, 1.0], [1, 1, 1]);
        let orders = assign_orders(&m, 3, 0, &[]).unwrap();
        let d = Discretization::new(&m, &orders, false, QuadratureSettings::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut u: Vec<f64> = (0..d.n_disp()).map(|_| rng.random_range(-0.05..0.05)).collect();
        let el = d.element(0).unwrap();
        let params = MaterialParams::default();
        let rho = vec![1.3; el.qps.len()];
        let base = mechanics_element(&el, &u, &rho, &params, true).unwrap();
        let k = base.k.unwrap();
        let h = 1e-6;
        for (col, &sd) in el.udofs.iter().enumerate().take(6) {
            for c in 0..3 {
                let gd = 3 * sd + c;
                let orig = u[gd];
                u[gd] = orig + h;
                let rp = mechanics_element(&el, &u, &rho, &params, false).unwrap().res;
                u[gd] = orig - h;
                let rm = mechanics_element(&el, &u, &rho, &params, false).unwrap().res;
                u[gd] = orig;
                for r in 0..rp.len() {
                    let fd = (rp[r] - rm[r]) / (2.0 * h);
                    let an = k[(r, 3 * col + c)];
                    assert!((fd - an).abs() <= 1e-5 * k.abs().max(), "({r}, {col}/{c}): {fd} vs {an}");
                }
                // Residual is the energy derivative.
                u[gd] = orig + h;
                let ep = mechanics_element(&el, &u, &rho, &params, false).unwrap().energy;
                u[gd] = orig - h;
                let em = mechanics_element(&el, &u, &rho, &params, false).unwrap().energy;
                u[gd] = orig;
                assert!(((ep - em) / (2.0 * h) - base.res[3 * col + c]).abs() < 1e-6 * base.res.iter().fold(1.0f64, |m, v| m.max(v.abs())));
            }
        }
    }
}
