//! Density-scaled compressible Neo-Hookean material, Eshelby stress,
//! inhomogeneity force and the adaptive mass source with its tangents.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounds for the bell-shaped rate coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bell {
    pub b: u32,
    pub rho_min: f64,
    pub rho_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    pub young: f64,
    pub poisson: f64,
    /// Reference density `ρ₀*`.
    pub rho0: f64,
    /// Target energy density `Ψ*`.
    pub psi_star: f64,
    /// Rate coefficient `c₀` (time per squared length).
    pub c0: f64,
    /// Algorithmic exponent of the mass source.
    pub m: f64,
    /// Porosity exponent of the free energy.
    pub n: f64,
    pub bell: Option<Bell>,
    /// Mass conductivity of the Fickean flux.
    pub conductivity: f64,
    /// Griffith energy per unit crack area.
    pub gc: f64,
}

impl Default for MaterialParams {
    /// Cortical-bone parameters: E = 4700, ν = 0.3, ρ₀* = 1, Ψ* = 0.0275,
    /// c = 1, m = 3.25, n = 2.25.
    fn default() -> Self {
        MaterialParams {
            young: 4700.0,
            poisson: 0.3,
            rho0: 1.0,
            psi_star: 0.0275,
            c0: 1.0,
            m: 3.25,
            n: 2.25,
            bell: None,
            conductivity: 0.0,
            gc: 1.0,
        }
    }
}

impl MaterialParams {
    /// Lamé parameters `(μ, λ)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.young, self.poisson);
        (
            e / (2.0 * (1.0 + nu)),
            e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        )
    }

    /// Checks hard constraints and returns warnings for soft ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: &str| Err(Error::InvalidMaterial(msg.to_string()));
        if !(self.young > 0.0) {
            return bad("Young's modulus must be positive");
        }
        if !(self.poisson > 0.0 && self.poisson < 0.5) {
            return bad("Poisson ratio must lie in (0, 0.5)");
        }
        if !(self.rho0 > 0.0) {
            return bad("reference density must be positive");
        }
        if !(self.psi_star >= 0.0) {
            return bad("target energy must be non-negative");
        }
        if !(self.conductivity >= 0.0) || !(self.gc >= 0.0) || !self.c0.is_finite() {
            return bad("conductivity, Griffith energy and rate coefficient must be finite and non-negative");
        }
        if let Some(bell) = self.bell {
            if bell.b == 0 || !(bell.rho_min < bell.rho_max) {
                return bad("bell bounds need b >= 1 and rho_min < rho_max");
            }
        }
        let mut warnings = Vec::new();
        if self.m <= self.n {
            warnings.push(format!(
                "m = {} does not exceed n = {}; equilibrium may be unstable",
                self.m, self.n
            ));
        }
        if !(1.0..=3.5).contains(&self.n) {
            warnings.push(format!(
                "porosity exponent n = {} outside the usual band [1, 3.5]",
                self.n
            ));
        }
        Ok(warnings)
    }

    /// Density scaling `(ρ/ρ₀*)ⁿ`.
    pub fn scaling(&self, rho: f64) -> f64 {
        (rho / self.rho0).powf(self.n)
    }
}

/// `μ/2 (tr C − 3) − μ ln J + λ/2 ln² J`.
pub fn neo_hookean_energy(c: &Matrix3<f64>, mu: f64, lambda: f64) -> Result<f64> {
    if (c - c.transpose()).norm() > 1e-12 * c.norm() {
        return Err(Error::Inadmissible(
            "right Cauchy-Green tensor is not symmetric".into(),
        ));
    }
    let chol = c.cholesky().ok_or_else(|| {
        Error::Inadmissible("right Cauchy-Green tensor is not positive definite".into())
    })?;
    let ln_j = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>();
    Ok(0.5 * mu * (c.trace() - 3.0) - mu * ln_j + 0.5 * lambda * ln_j * ln_j)
}

/// Kinematic quantities shared by energy, stress and tangent evaluation.
#[derive(Clone, Copy, Debug)]
pub struct Kinematics {
    pub f: Matrix3<f64>,
    pub f_inv: Matrix3<f64>,
    pub ln_j: f64,
}

impl Kinematics {
    pub fn new(f: Matrix3<f64>) -> Result<Self> {
        let j = f.determinant();
        if !(j > 0.0) || !j.is_finite() {
            return Err(Error::Inadmissible(format!(
                "deformation gradient has det F = {j:e}"
            )));
        }
        let f_inv = f
            .try_inverse()
            .ok_or_else(|| Error::Inadmissible("singular deformation gradient".into()))?;
        Ok(Kinematics {
            f,
            f_inv,
            ln_j: j.ln(),
        })
    }
}

/// Stress quantities at one material point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StressState {
    pub f: Matrix3<f64>,
    pub rho: f64,
    /// Neo-Hookean energy of the fully dense material.
    pub psi_neo: f64,
    /// Free energy `(ρ/ρ₀*)ⁿ Ψ^neo`.
    pub psi: f64,
    /// First Piola-Kirchhoff stress.
    pub p: Matrix3<f64>,
    /// Eshelby stress `Ψ I − Fᵀ P`.
    pub sigma: Matrix3<f64>,
    /// `∂Ψ/∂ρ` at fixed `F`.
    pub dpsi_drho: f64,
}

fn check_density(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::Inadmissible(format!(
            "density {rho:e} is not positive"
        )))
    }
}

/// Evaluates energy, Piola and Eshelby stresses.
pub fn evaluate(f: &Matrix3<f64>, rho: f64, params: &MaterialParams) -> Result<StressState> {
    check_density(rho)?;
    let k = Kinematics::new(*f)?;
    Ok(evaluate_kin(&k, rho, params))
}

pub(crate) fn evaluate_kin(k: &Kinematics, rho: f64, params: &MaterialParams) -> StressState {
    let (mu, lambda) = params.lame();
    let f = k.f;
    let psi_neo = 0.5 * mu * ((f.transpose() * f).trace() - 3.0) - mu * k.ln_j
        + 0.5 * lambda * k.ln_j * k.ln_j;
    let s = params.scaling(rho);
    let f_inv_t = k.f_inv.transpose();
    let p = (f * mu + f_inv_t * (lambda * k.ln_j - mu)) * s;
    let psi = s * psi_neo;
    let sigma = Matrix3::identity() * psi - f.transpose() * p;
    StressState {
        f,
        rho,
        psi_neo,
        psi,
        p,
        sigma,
        dpsi_drho: params.n / rho * psi,
    }
}

pub fn free_energy(f: &Matrix3<f64>, rho: f64, params: &MaterialParams) -> Result<f64> {
    Ok(evaluate(f, rho, params)?.psi)
}

pub fn first_piola(f: &Matrix3<f64>, rho: f64, params: &MaterialParams) -> Result<Matrix3<f64>> {
    Ok(evaluate(f, rho, params)?.p)
}

pub fn eshelby_stress(f: &Matrix3<f64>, rho: f64, params: &MaterialParams) -> Result<Matrix3<f64>> {
    Ok(evaluate(f, rho, params)?.sigma)
}

/// `(∂Ψ/∂ρ)|_F ∇ρ`.
pub fn inhomogeneity_force(
    f: &Matrix3<f64>,
    rho: f64,
    grad_rho: &Vector3<f64>,
    params: &MaterialParams,
) -> Result<Vector3<f64>> {
    Ok(grad_rho * evaluate(f, rho, params)?.dpsi_drho)
}

/// Bell coefficient and its density derivative.
///
/// Values are floored at `f64::MIN_POSITIVE` so that the coefficient stays in
/// `(0, 1]` even when the power overflows far outside the bounds.
pub fn bell_coefficient(rho: f64, bell: &Bell) -> Result<(f64, f64)> {
    if bell.b == 0 || !(bell.rho_min < bell.rho_max) {
        return Err(Error::InvalidMaterial(
            "bell bounds need b >= 1 and rho_min < rho_max".into(),
        ));
    }
    let mid = 0.5 * (bell.rho_max + bell.rho_min);
    let half = bell.rho_max - mid;
    let x = (rho - mid) / half;
    if x == 0.0 {
        return Ok((1.0, 0.0));
    }
    let two_b = 2.0 * f64::from(bell.b);
    let log_t = two_b * x.abs().ln();
    if log_t > 700.0 {
        return Ok((f64::MIN_POSITIVE, 0.0));
    }
    let t = log_t.exp();
    let c = (1.0 / (1.0 + t)).max(f64::MIN_POSITIVE);
    let dc = -two_b / (x * half) * t / ((1.0 + t) * (1.0 + t));
    Ok((c, dc))
}

/// Mass source and its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassSource {
    pub r0: f64,
    /// `∂R₀/∂ρ` holding `Ψ` fixed.
    pub d_rho: f64,
    /// `∂R₀/∂Ψ`.
    pub d_psi: f64,
}

/// Rate coefficient `c(ρ)` and its derivative.
pub fn rate_coefficient(rho: f64, params: &MaterialParams) -> Result<(f64, f64)> {
    match &params.bell {
        None => Ok((params.c0, 0.0)),
        Some(bell) => {
            let (c, dc) = bell_coefficient(rho, bell)?;
            Ok((params.c0 * c, params.c0 * dc))
        }
    }
}

/// `R₀ = c(ρ) [(ρ/ρ₀*)^{−m} Ψ − Ψ*]`.
pub fn mass_source(rho: f64, psi: f64, params: &MaterialParams) -> Result<MassSource> {
    check_density(rho)?;
    let (c, dc) = rate_coefficient(rho, params)?;
    let scale = (rho / params.rho0).powf(-params.m);
    let drive = scale * psi - params.psi_star;
    Ok(MassSource {
        r0: c * drive,
        d_rho: dc * drive - c * params.m / rho * scale * psi,
        d_psi: c * scale,
    })
}

/// Analytic tangents at fixed material point.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangents {
    /// `∂P_{iJ}/∂F_{kL}` with row `3i + J`, column `3k + L`.
    pub dp_df: SMatrix<f64, 9, 9>,
    pub dp_drho: Matrix3<f64>,
    /// `dR₀/dρ` at fixed `F` (including the density dependence of `Ψ`).
    pub dr0_drho: f64,
    pub dr0_df: Matrix3<f64>,
}

pub fn tangents(f: &Matrix3<f64>, rho: f64, params: &MaterialParams) -> Result<Tangents> {
    check_density(rho)?;
    let k = Kinematics::new(*f)?;
    let st = evaluate_kin(&k, rho, params);
    let (mu, lambda) = params.lame();
    let s = params.scaling(rho);
    let fi = k.f_inv;
    let a = mu - lambda * k.ln_j;
    let mut dp_df = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..3 {
        for jj in 0..3 {
            for kk in 0..3 {
                for l in 0..3 {
                    let delta = if i == kk && jj == l { mu } else { 0.0 };
                    dp_df[(3 * i + jj, 3 * kk + l)] = s
                        * (delta
                            + a * fi[(l, i)] * fi[(jj, kk)]
                            + lambda * fi[(jj, i)] * fi[(l, kk)]);
                }
            }
        }
    }
    let ms = mass_source(rho, st.psi, params)?;
    Ok(Tangents {
        dp_df,
        dp_drho: st.p * (params.n / rho),
        dr0_drho: ms.d_rho + ms.d_psi * st.dpsi_drho,
        dr0_df: st.p * ms.d_psi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> MaterialParams {
        MaterialParams {
            young: 2.5,
            poisson: 0.25,
            ..Default::default()
        }
    }

    #[test]
    fn lame_unit() {
        let (mu, lambda) = unit().lame();
        assert!((mu - 1.0).abs() < 1e-15 && (lambda - 1.0).abs() < 1e-15);
    }

    #[test]
    fn neo_hookean_values() {
        assert_eq!(
            neo_hookean_energy(&Matrix3::identity(), 1.0, 1.0).unwrap(),
            0.0
        );
        let f = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0));
        let psi = neo_hookean_energy(&(f.transpose() * f), 1.0, 1.0).unwrap();
        let l2 = 2f64.ln();
        assert!((psi - (1.5 - l2 + 0.5 * l2 * l2)).abs() < 1e-14);
        assert!((psi - 1.04708).abs() < 1e-5);
        let mut prev = 0.0;
        for k in 1..8 {
            let d = 10f64.powi(-k);
            let c = Matrix3::from_diagonal(&Vector3::new(d, 1.0, 1.0));
            let v = neo_hookean_energy(&c, 1.0, 1.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(neo_hookean_energy(
            &Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0)),
            1.0,
            1.0
        )
        .is_err());
    }

    #[test]
    fn density_scaling() {
        let p = MaterialParams::default();
        let f = Matrix3::new(1.1, 0.05, 0.0, 0.0, 0.95, 0.02, 0.01, 0.0, 1.03);
        let base = free_energy(&f, 1.0, &p).unwrap();
        let twice = free_energy(&f, 2.0, &p).unwrap();
        assert!((twice - 2f64.powf(2.25) * base).abs() < 1e-12 * twice);
        assert_eq!(free_energy(&Matrix3::identity(), 1.7, &p).unwrap(), 0.0);
        assert_eq!(
            first_piola(&Matrix3::identity(), 1.7, &p).unwrap(),
            Matrix3::zeros()
        );
        assert!(free_energy(&f, 0.0, &p).is_err());
        assert!(free_energy(&(-f), 1.0, &p).is_err());
    }

    #[test]
    fn eshelby_identity_and_uniaxial() {
        let p = unit();
        let f = Matrix3::from_diagonal(&Vector3::new(1.2, 1.0, 1.0));
        let st = evaluate(&f, 1.0, &p).unwrap();
        let id = st.sigma + f.transpose() * st.p - Matrix3::identity() * st.psi;
        assert!(id.norm() < 1e-14);
        // Component-wise: Σ11 = Ψ − F11 P11, P11 = μ(λ1 − 1/λ1) + λ ln λ1 / λ1.
        let l1: f64 = 1.2;
        let p11 = (l1 - 1.0 / l1) + l1.ln() / l1;
        assert!((st.p[(0, 0)] - p11).abs() < 1e-14);
        assert!((st.sigma[(0, 0)] - (st.psi - l1 * p11)).abs() < 1e-14);
        assert!((st.sigma[(1, 1)] - (st.psi - l1.ln())).abs() < 1e-14);
    }

    #[test]
    fn inhomogeneity_force_cases() {
        let p = MaterialParams::default();
        let f = Matrix3::new(1.1, 0.05, 0.0, 0.0, 0.95, 0.02, 0.01, 0.0, 1.03);
        assert_eq!(
            inhomogeneity_force(&f, 1.3, &Vector3::zeros(), &p).unwrap(),
            Vector3::zeros()
        );
        let g = Vector3::new(0.3, -1.0, 2.0);
        assert_eq!(
            inhomogeneity_force(&Matrix3::identity(), 1.3, &g, &p).unwrap(),
            Vector3::zeros()
        );
        let h = 1e-6;
        let fd = (free_energy(&f, 1.3 + h, &p).unwrap() - free_energy(&f, 1.3 - h, &p).unwrap())
            / (2.0 * h);
        let fi = inhomogeneity_force(&f, 1.3, &g, &p).unwrap();
        assert!((fi - g * fd).norm() <= 1e-6 * fi.norm());
    }

    #[test]
    fn bell_values() {
        let b = Bell {
            b: 1000,
            rho_min: 0.3,
            rho_max: 2.5,
        };
        assert_eq!(bell_coefficient(1.4, &b).unwrap().0, 1.0);
        assert!((bell_coefficient(2.5, &b).unwrap().0 - 0.5).abs() < 1e-12);
        let far = bell_coefficient(5.0, &b).unwrap().0;
        assert!(far > 0.0 && far <= 1e-6);
        let b30 = Bell {
            b: 30,
            rho_min: 1.0,
            rho_max: 1.8,
        };
        assert!((bell_coefficient(1.8, &b30).unwrap().0 - 0.5).abs() < 1e-12);
        assert!(bell_coefficient(3.0, &b30).unwrap().0 <= 1e-6);
        let (lo, hi) = (
            bell_coefficient(1.2, &b30).unwrap().0,
            bell_coefficient(1.6, &b30).unwrap().0,
        );
        assert!((lo - hi).abs() < 1e-14);
        assert!(bell_coefficient(
            1.0,
            &Bell {
                b: 1,
                rho_min: 2.0,
                rho_max: 1.0
            }
        )
        .is_err());
        let h = 1e-7;
        let rho = 1.75;
        let fd = (bell_coefficient(rho + h, &b30).unwrap().0
            - bell_coefficient(rho - h, &b30).unwrap().0)
            / (2.0 * h);
        let d = bell_coefficient(rho, &b30).unwrap().1;
        assert!((fd - d).abs() <= 1e-6 * d.abs());
    }

    #[test]
    fn mass_source_values() {
        let p = MaterialParams::default();
        assert_eq!(mass_source(1.0, p.psi_star, &p).unwrap().r0, 0.0);
        assert!((mass_source(1.0, 2.0 * p.psi_star, &p).unwrap().r0 - p.psi_star).abs() < 1e-15);
        let r = mass_source(2.0, p.psi_star, &p).unwrap().r0;
        assert!((r - p.psi_star * (2f64.powf(-3.25) - 1.0)).abs() < 1e-15);
        assert!(r < 0.0);
        let fixed = mass_source(1.0, p.psi_star, &p).unwrap();
        assert!((fixed.d_rho + p.m * p.psi_star / p.rho0).abs() < 1e-15);
    }

    fn random_f(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        loop {
            let f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.random_range(-0.3..0.3));
            let j = f.determinant();
            if (0.5..=2.0).contains(&j) {
                return f;
            }
        }
    }

    #[test]
    fn tangents_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = MaterialParams::default();
        p.bell = Some(Bell {
            b: 2,
            rho_min: 0.5,
            rho_max: 2.0,
        });
        let h = 1e-6;
        for _ in 0..100 {
            let f = random_f(&mut rng);
            let rho = rng.random_range(0.5..2.0);
            let t = tangents(&f, rho, &p).unwrap();
            let st = evaluate(&f, rho, &p).unwrap();
            let r0 = |f: &Matrix3<f64>, rho: f64| {
                mass_source(rho, free_energy(f, rho, &p).unwrap(), &p)
                    .unwrap()
                    .r0
            };
            let mut dp_fd = SMatrix::<f64, 9, 9>::zeros();
            let mut dr_fd = Matrix3::zeros();
            let mut ppk_fd = Matrix3::zeros();
            for k in 0..3 {
                for l in 0..3 {
                    let (mut fp, mut fm) = (f, f);
                    fp[(k, l)] += h;
                    fm[(k, l)] -= h;
                    let dp = (first_piola(&fp, rho, &p).unwrap()
                        - first_piola(&fm, rho, &p).unwrap())
                        / (2.0 * h);
                    for i in 0..3 {
                        for j in 0..3 {
                            dp_fd[(3 * i + j, 3 * k + l)] = dp[(i, j)];
                        }
                    }
                    dr_fd[(k, l)] = (r0(&fp, rho) - r0(&fm, rho)) / (2.0 * h);
                    ppk_fd[(k, l)] = (free_energy(&fp, rho, &p).unwrap()
                        - free_energy(&fm, rho, &p).unwrap())
                        / (2.0 * h);
                }
            }
            assert!((st.p - ppk_fd).norm() <= 1e-6 * st.p.norm());
            assert!((t.dp_df - dp_fd).norm() <= 1e-5 * t.dp_df.norm());
            assert!((t.dr0_df - dr_fd).norm() <= 1e-5 * t.dr0_df.norm().max(1e-12));
            let dpr = (first_piola(&f, rho + h, &p).unwrap()
                - first_piola(&f, rho - h, &p).unwrap())
                / (2.0 * h);
            assert!((t.dp_drho - dpr).norm() <= 1e-5 * t.dp_drho.norm());
            let drr = (r0(&f, rho + h) - r0(&f, rho - h)) / (2.0 * h);
            assert!((t.dr0_drho - drr).abs() <= 1e-5 * t.dr0_drho.abs().max(1e-8));
        }
    }

    #[test]
    fn identity_tangent_is_scaled_elasticity() {
        let p = MaterialParams::default();
        let (mu, lambda) = p.lame();
        let rho = 1.4;
        let t = tangents(&Matrix3::identity(), rho, &p).unwrap();
        let s = p.scaling(rho);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                        let c = lambda * d(i, j) * d(k, l)
                            + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                        assert!((t.dp_df[(3 * i + j, 3 * k + l)] - s * c).abs() < 1e-9 * s * mu);
                    }
                }
            }
        }
    }

    #[test]
    fn validation() {
        assert!(MaterialParams::default().validate().unwrap().is_empty());
        assert!(MaterialParams {
            poisson: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!(
            MaterialParams {
                m: 2.0,
                ..Default::default()
            }
            .validate()
            .unwrap()
            .len(),
            1
        );
    }
}
