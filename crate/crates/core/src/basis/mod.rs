//! Hierarchical H1 basis on tetrahedra, quadrature and element mappings.
//!
//! Functions are built from barycentric coordinates `λ0 = 1 − ξ − η − ζ`,
//! `λ1 = ξ`, `λ2 = η`, `λ3 = ζ`. Edge functions use integrated-Legendre
//! (Lobatto) kernels, face and volume bubbles Legendre polynomials. Local vertex
//! numbering is assumed to be in ascending global order, which makes edge and
//! face functions conforming without orientation data.

mod mapping;
mod quadrature;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::{ElementOrders, LOCAL_EDGES, LOCAL_FACES, ORDER_CAP};

pub use mapping::{geometric_map, singular_map, MapEval, Mapping, TipMapping};
pub use quadrature::{
    gauss_jacobi, quadrature, triangle_quadrature, QuadratureRule, MAX_QUADRATURE_DEGREE,
};

/// Gradients of the barycentric coordinates with respect to `(ξ, η, ζ)`.
const GRAD_LAMBDA: [[f64; 3]; 4] = [
    [-1.0, -1.0, -1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
];

/// Tolerance for accepting points marginally outside the reference tet.
const REFERENCE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entity {
    Vertex(usize),
    Edge(usize),
    Face(usize),
    Volume,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    /// Gradients with respect to the reference coordinates.
    pub grads: Vec<Vector3<f64>>,
}

impl BasisEval {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_orders(orders: &ElementOrders) -> Result<()> {
    for &p in orders
        .edges
        .iter()
        .chain(&orders.faces)
        .chain(std::iter::once(&orders.volume))
    {
        if p == 0 || p > ORDER_CAP {
            return Err(Error::UnsupportedDegree(p));
        }
    }
    Ok(())
}

/// Number of edge, face and volume functions for the given orders.
pub fn edge_count(p: usize) -> usize {
    p.saturating_sub(1)
}

pub fn face_count(p: usize) -> usize {
    if p < 3 {
        0
    } else {
        (p - 1) * (p - 2) / 2
    }
}

pub fn volume_count(p: usize) -> usize {
    if p < 4 {
        0
    } else {
        (p - 1) * (p - 2) * (p - 3) / 6
    }
}

pub fn basis_size(orders: &ElementOrders) -> usize {
    4 + orders.edges.iter().map(|&p| edge_count(p)).sum::<usize>()
        + orders.faces.iter().map(|&p| face_count(p)).sum::<usize>()
        + volume_count(orders.volume)
}

/// Owning entity of each function, in evaluation order.
pub fn entities(orders: &ElementOrders) -> Vec<Entity> {
    let mut out: Vec<Entity> = (0..4).map(Entity::Vertex).collect();
    for (e, &p) in orders.edges.iter().enumerate() {
        out.extend(std::iter::repeat_n(Entity::Edge(e), edge_count(p)));
    }
    for (f, &p) in orders.faces.iter().enumerate() {
        out.extend(std::iter::repeat_n(Entity::Face(f), face_count(p)));
    }
    out.extend(std::iter::repeat_n(
        Entity::Volume,
        volume_count(orders.volume),
    ));
    out
}

/// Legendre polynomials with first and second derivatives up to degree `n`.
fn legendre(n: usize, s: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n + 1];
    let mut dp = vec![0.0; n + 1];
    let mut ddp = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = s;
        dp[1] = 1.0;
    }
    for k in 1..n {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * s * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
        ddp[k + 1] = ddp[k - 1] + (2.0 * kf + 1.0) * dp[k];
    }
    (p, dp, ddp)
}

/// Value and gradient (in λ-space) of a product of factors.
#[derive(Clone, Copy)]
struct Factor {
    v: f64,
    g: Vector3<f64>,
}

impl std::ops::Mul for Factor {
    type Output = Factor;
    fn mul(self, o: Factor) -> Factor {
        Factor {
            v: self.v * o.v,
            g: self.g * o.v + o.g * self.v,
        }
    }
}

/// Evaluates all basis functions of an element at reference point `xi`.
pub fn eval_basis(orders: &ElementOrders, xi: [f64; 3]) -> Result<BasisEval> {
    check_orders(orders)?;
    let lam = [1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]];
    if lam
        .iter()
        .any(|&l| !(-REFERENCE_TOL..=1.0 + REFERENCE_TOL).contains(&l))
    {
        return Err(Error::OutsideReference(xi));
    }
    let gl: [Vector3<f64>; 4] = GRAD_LAMBDA.map(Vector3::from);
    let l = |i: usize| Factor {
        v: lam[i],
        g: gl[i],
    };
    let n = basis_size(orders);
    let mut values = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    let mut push = |f: Factor| {
        values.push(f.v);
        grads.push(f.g);
    };
    for i in 0..4 {
        push(l(i));
    }
    for (e, &[a, b]) in LOCAL_EDGES.iter().enumerate() {
        let p = orders.edges[e];
        if p < 2 {
            continue;
        }
        let s = lam[b] - lam[a];
        let gs = gl[b] - gl[a];
        let (_, dp, ddp) = legendre(p - 1, s);
        let base = l(a) * l(b);
        for k in 2..=p {
            let kf = k as f64;
            let c = -2.0 * (2.0 * (2.0 * kf - 1.0)).sqrt() / (kf * (kf - 1.0));
            let kernel = Factor {
                v: c * dp[k - 1],
                g: gs * (c * ddp[k - 1]),
            };
            push(base * kernel);
        }
    }
    for (f, &[i, j, k]) in LOCAL_FACES.iter().enumerate() {
        let p = orders.faces[f];
        if p < 3 {
            continue;
        }
        let s = lam[j] - lam[i];
        let t = 2.0 * lam[k] - 1.0;
        let (ps, dps, _) = legendre(p - 3, s);
        let (pt, dpt, _) = legendre(p - 3, t);
        let base = l(i) * l(j) * l(k);
        for total in 0..=p - 3 {
            for n1 in 0..=total {
                let n2 = total - n1;
                let fs = Factor {
                    v: ps[n1],
                    g: (gl[j] - gl[i]) * dps[n1],
                };
                let ft = Factor {
                    v: pt[n2],
                    g: gl[k] * (2.0 * dpt[n2]),
                };
                push(base * fs * ft);
            }
        }
    }
    let p = orders.volume;
    if p >= 4 {
        let s = lam[1] - lam[0];
        let (ps, dps, _) = legendre(p - 4, s);
        let (pt, dpt, _) = legendre(p - 4, 2.0 * lam[2] - 1.0);
        let (pu, dpu, _) = legendre(p - 4, 2.0 * lam[3] - 1.0);
        let base = l(0) * l(1) * l(2) * l(3);
        for total in 0..=p - 4 {
            for n1 in 0..=total {
                for n2 in 0..=total - n1 {
                    let n3 = total - n1 - n2;
                    let fs = Factor {
                        v: ps[n1],
                        g: (gl[1] - gl[0]) * dps[n1],
                    };
                    let ft = Factor {
                        v: pt[n2],
                        g: gl[2] * (2.0 * dpt[n2]),
                    };
                    let fu = Factor {
                        v: pu[n3],
                        g: gl[3] * (2.0 * dpu[n3]),
                    };
                    push(base * fs * ft * fu);
                }
            }
        }
    }
    debug_assert_eq!(values.len(), n);
    Ok(BasisEval { values, grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
        loop {
            let p = [
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            ];
            if p.iter().sum::<f64>() < 1.0 {
                return p;
            }
        }
    }

    #[test]
    fn order_one_centroid() {
        let b = eval_basis(&ElementOrders::uniform(1), [0.25; 3]).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.values.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn sizes_match_full_polynomial_space() {
        for p in 1..=ORDER_CAP {
            let n = basis_size(&ElementOrders::uniform(p));
            assert_eq!(n, (p + 1) * (p + 2) * (p + 3) / 6);
            assert_eq!(entities(&ElementOrders::uniform(p)).len(), n);
        }
    }

    #[test]
    fn hierarchy_functions_vanish_at_vertices() {
        let o = ElementOrders::uniform(5);
        let verts = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (vi, v) in verts.iter().enumerate() {
            let b = eval_basis(&o, *v).unwrap();
            for (i, val) in b.values.iter().enumerate() {
                let expected = if i == vi { 1.0 } else { 0.0 };
                assert!(
                    (val - expected).abs() < 1e-14,
                    "fn {i} at vertex {vi}: {val}"
                );
            }
        }
        let mid = eval_basis(&ElementOrders::uniform(2), [0.5, 0.0, 0.0]).unwrap();
        assert!(mid.values[4].abs() > 0.1);
    }

    #[test]
    fn partition_of_unity_and_fd_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let orders = ElementOrders {
            edges: [2, 3, 4, 5, 6, 7],
            faces: [3, 4, 5, 7],
            volume: 6,
        };
        let h = 1e-6;
        for _ in 0..50 {
            let x = random_point(&mut rng);
            let b = eval_basis(&orders, x).unwrap();
            assert!((b.values[..4].iter().sum::<f64>() - 1.0).abs() < 1e-13);
            for d in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let (Ok(bp), Ok(bm)) = (eval_basis(&orders, xp), eval_basis(&orders, xm)) else {
                    continue;
                };
                for i in 0..b.len() {
                    let fd = (bp.values[i] - bm.values[i]) / (2.0 * h);
                    let scale = b.grads[i].norm().max(1.0);
                    assert!((fd - b.grads[i][d]).abs() <= 1e-6 * scale, "fn {i} dir {d}");
                }
            }
        }
    }

    #[test]
    fn outside_point_rejected() {
        let err = eval_basis(&ElementOrders::uniform(2), [0.7, 0.7, 0.0]).unwrap_err();
        assert!(matches!(err, Error::OutsideReference(_)));
        assert!(eval_basis(&ElementOrders::uniform(ORDER_CAP + 1), [0.1; 3]).is_err());
    }

    /// Least-squares fit of a degree-p polynomial reproduces it exactly.
    #[test]
    fn polynomials_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 1..=5 {
            let o = ElementOrders::uniform(p);
            let n = basis_size(&o);
            let pts: Vec<[f64; 3]> = (0..3 * n).map(|_| random_point(&mut rng)).collect();
            let f = |x: &[f64; 3]| {
                (x[0] + 2.0 * x[1] - x[2] + 0.3).powi(p as i32) + x[1].powi(p as i32)
            };
            let a = DMatrix::from_fn(pts.len(), n, |r, c| {
                eval_basis(&o, pts[r]).unwrap().values[c]
            });
            let rhs = DMatrix::from_fn(pts.len(), 1, |r, _| f(&pts[r]));
            let coef = a.clone().svd(true, true).solve(&rhs, 1e-14).unwrap();
            let resid = (&a * &coef - &rhs).norm() / rhs.norm();
            assert!(resid < 1e-10, "order {p}: {resid}");
        }
    }
}
