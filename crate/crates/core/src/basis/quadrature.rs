use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Highest polynomial degree for which rules are generated.
pub const MAX_QUADRATURE_DEGREE: usize = 40;

/// Quadrature on the reference tet `{ξ, η, ζ ≥ 0, ξ + η + ζ ≤ 1}`; weights sum to 1/6.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The same rule with barycentric coordinates permuted: the new barycentric
    /// coordinate `k` takes the value of the old coordinate `perm[k]`.
    pub fn permuted(&self, perm: [usize; 4]) -> QuadratureRule {
        let points = self
            .points
            .iter()
            .map(|&[x, y, z]| {
                let l = [1.0 - x - y - z, x, y, z];
                [l[perm[1]], l[perm[2]], l[perm[3]]]
            })
            .collect();
        QuadratureRule {
            points,
            weights: self.weights.clone(),
            degree: self.degree,
        }
    }
}

/// Gauss–Jacobi nodes and weights on `[-1, 1]` for weight `(1-t)^α (1+t)^β`
/// (Golub–Welsch).
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let ab = alpha + beta;
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let a = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        t[(k, k)] = a;
        if k + 1 < n {
            let j = kf + 1.0;
            let b = 4.0 * j * (j + alpha) * (j + beta) * (j + ab)
                / ((2.0 * j + ab).powi(2) * (2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0));
            t[(k, k + 1)] = b.sqrt();
            t[(k + 1, k)] = b.sqrt();
        }
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma_int(alpha) * gamma_int(beta) / gamma_int(ab + 1.0);
    let eig = SymmetricEigen::new(t);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `Γ(x + 1)` for non-negative integer `x`.
fn gamma_int(x: f64) -> f64 {
    (1..=x.round() as u64).map(|k| k as f64).product()
}

fn unit_interval(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_jacobi(n, alpha, 0.0);
    let scale = 0.5f64.powf(alpha + 1.0);
    (
        t.iter().map(|t| 0.5 * (1.0 + t)).collect(),
        w.iter().map(|w| w * scale).collect(),
    )
}

/// Rule exact for polynomials of total degree `degree` on the reference tet.
///
/// Degrees 1 and 2 use the classical 1- and 4-point rules; higher degrees use a
/// collapsed conical product of Gauss–Jacobi rules whose collapse vertex is
/// barycentric coordinate 1 and collapse edge joins coordinates 1 and 2.
pub fn quadrature(degree: usize) -> Result<QuadratureRule> {
    match degree {
        0 => Err(Error::UnsupportedDegree(0)),
        1 => Ok(QuadratureRule {
            points: vec![[0.25; 3]],
            weights: vec![1.0 / 6.0],
            degree,
        }),
        2 => {
            let a = 0.585_410_196_624_968_5;
            let b = 0.138_196_601_125_010_5;
            Ok(QuadratureRule {
                points: vec![[b, b, b], [a, b, b], [b, a, b], [b, b, a]],
                weights: vec![1.0 / 24.0; 4],
                degree,
            })
        }
        d if d > MAX_QUADRATURE_DEGREE => Err(Error::UnsupportedDegree(d)),
        d => {
            let n = d / 2 + 1;
            let (u, wu) = unit_interval(n, 2.0);
            let (v, wv) = unit_interval(n, 1.0);
            let (w, ww) = unit_interval(n, 0.0);
            let mut points = Vec::with_capacity(n * n * n);
            let mut weights = Vec::with_capacity(n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let x = u[i];
                        let y = (1.0 - u[i]) * v[j];
                        let z = (1.0 - u[i]) * (1.0 - v[j]) * w[k];
                        points.push([x, y, z]);
                        weights.push(wu[i] * wv[j] * ww[k]);
                    }
                }
            }
            Ok(QuadratureRule {
                points,
                weights,
                degree: d,
            })
        }
    }
}

/// Rule on the reference triangle `{s, t ≥ 0, s + t ≤ 1}`; weights sum to 1/2.
pub fn triangle_quadrature(degree: usize) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    if degree == 0 || degree > MAX_QUADRATURE_DEGREE {
        return Err(Error::UnsupportedDegree(degree));
    }
    let n = degree / 2 + 1;
    let (u, wu) = unit_interval(n, 1.0);
    let (v, wv) = unit_interval(n, 0.0);
    let mut pts = Vec::with_capacity(n * n);
    let mut wts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pts.push([u[i], (1.0 - u[i]) * v[j]]);
            wts.push(wu[i] * wv[j]);
        }
    }
    Ok((pts, wts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// ∫ x^a y^b z^c over the reference tet.
    fn monomial_integral(a: u32, b: u32, c: u32) -> f64 {
        factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    }

    #[test]
    fn low_order_rules() {
        let q1 = quadrature(1).unwrap();
        assert_eq!(q1.len(), 1);
        assert!((q1.weights[0] - 1.0 / 6.0).abs() < 1e-16);
        let q2 = quadrature(2).unwrap();
        let ix2: f64 = q2
            .points
            .iter()
            .zip(&q2.weights)
            .map(|(p, w)| w * p[0] * p[0])
            .sum();
        assert!((ix2 - 1.0 / 60.0).abs() < 1e-15);
        assert!(matches!(quadrature(0), Err(Error::UnsupportedDegree(0))));
        assert!(quadrature(MAX_QUADRATURE_DEGREE + 1).is_err());
    }

    #[test]
    fn monomials_integrated_exactly() {
        for d in 1..=20 {
            let q = quadrature(d).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-14);
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    for c in 0..=(d as u32 - a - b) {
                        let exact = monomial_integral(a, b, c);
                        let got: f64 = q
                            .points
                            .iter()
                            .zip(&q.weights)
                            .map(|(p, w)| {
                                w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                            })
                            .sum();
                        assert!(
                            (got - exact).abs() <= 1e-13 * exact,
                            "deg {d} ({a},{b},{c}): {got} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn permuted_rule_keeps_exactness() {
        let q = quadrature(6).unwrap().permuted([2, 0, 3, 1]);
        let got: f64 = q
            .points
            .iter()
            .zip(&q.weights)
            .map(|(p, w)| w * p[0].powi(3) * p[2].powi(2))
            .sum();
        let exact = monomial_integral(3, 0, 2);
        assert!((got - exact).abs() < 1e-13 * exact);
    }

    #[test]
    fn triangle_rule() {
        let (p, w) = triangle_quadrature(5).unwrap();
        let got: f64 = p
            .iter()
            .zip(&w)
            .map(|(p, w)| w * p[0].powi(2) * p[1].powi(3))
            .sum();
        // 2! 3! / 7!
        assert!((got - 12.0 / 5040.0).abs() < 1e-15);
    }
}
