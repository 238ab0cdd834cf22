use nalgebra::{Matrix3, Vector3};

use super::GRAD_LAMBDA;
use crate::error::{Error, Result};
use crate::mesh::{Point, LOCAL_EDGES};

/// Point, Jacobian `∂X/∂ξ` (columns are reference directions) and its determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapEval {
    pub x: Point,
    pub jac: Matrix3<f64>,
    pub det: f64,
}

/// Crack-tip designation for the quarter-point mapping of one element.
#[derive(Clone, Debug, PartialEq)]
pub struct TipMapping {
    /// Local vertices lying on the crack front (one, or two forming a front edge).
    pub tip_vertices: Vec<usize>,
    pub kappa: f64,
}

impl TipMapping {
    pub fn new(tip_vertices: Vec<usize>) -> Self {
        TipMapping {
            tip_vertices,
            kappa: -1.0,
        }
    }

    /// Local edges `(tip, other)` that receive the quadratic correction.
    pub fn tip_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &[a, b] in &LOCAL_EDGES {
            let (ta, tb) = (
                self.tip_vertices.contains(&a),
                self.tip_vertices.contains(&b),
            );
            if ta && !tb {
                out.push((a, b));
            } else if tb && !ta {
                out.push((b, a));
            }
        }
        out
    }

    /// Lengths of the tip-adjacent edges.
    pub fn lengths(&self, nodes: &[Point; 4]) -> Vec<f64> {
        self.tip_edges()
            .iter()
            .map(|&(a, b)| (nodes[b] - nodes[a]).norm())
            .collect()
    }
}

/// Element geometry: the affine map plus an optional quadratic correction
/// `κ λ_t λ_o (X_o − X_t)` on each edge from a tip vertex `t` to a non-tip vertex `o`.
///
/// With `κ = −1` the point at edge parameter `s` (measured from the tip) sits at
/// distance `s² l`, giving the `1/√r` strain term of quarter-point elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Mapping {
    nodes: [Point; 4],
    corrections: Vec<(usize, usize, Vector3<f64>)>,
    kappa: f64,
    /// Expected sign of the Jacobian determinant.
    orientation: f64,
}

impl Mapping {
    pub fn affine(nodes: [Point; 4]) -> Self {
        Mapping {
            nodes,
            corrections: Vec::new(),
            kappa: 0.0,
            orientation: 1.0,
        }
    }

    pub fn singular(nodes: [Point; 4], tip: &TipMapping) -> Result<Self> {
        if tip.tip_vertices.is_empty()
            || tip.tip_vertices.len() > 2
            || tip.tip_vertices.iter().any(|&v| v > 3)
        {
            return Err(Error::InvalidInput(format!(
                "singular mapping needs one tip vertex or one tip edge, got {:?}",
                tip.tip_vertices
            )));
        }
        let corrections = tip
            .tip_edges()
            .into_iter()
            .map(|(t, o)| (t, o, (nodes[o] - nodes[t]) * tip.kappa))
            .collect();
        Ok(Mapping {
            nodes,
            corrections,
            kappa: tip.kappa,
            orientation: 1.0,
        })
    }

    /// Accepts elements whose local numbering is negatively oriented.
    pub fn with_orientation(mut self, sign: f64) -> Self {
        self.orientation = sign.signum();
        self
    }

    pub fn is_affine(&self) -> bool {
        self.corrections.is_empty()
    }

    pub fn nodes(&self) -> &[Point; 4] {
        &self.nodes
    }

    /// Value and reference gradient of the geometric shape function of local
    /// vertex `a`, i.e. `∂X(ξ)/∂X_a` (a scalar multiple of the identity).
    pub fn node_shape(&self, a: usize, xi: [f64; 3]) -> (f64, Vector3<f64>) {
        let lam = [1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]];
        let mut v = lam[a];
        let mut g = Vector3::from(GRAD_LAMBDA[a]);
        for &(t, o, _) in &self.corrections {
            let sign = if o == a {
                self.kappa
            } else if t == a {
                -self.kappa
            } else {
                continue;
            };
            v += sign * lam[t] * lam[o];
            g += (Vector3::from(GRAD_LAMBDA[t]) * lam[o] + Vector3::from(GRAD_LAMBDA[o]) * lam[t])
                * sign;
        }
        (v, g)
    }

    /// Point and Jacobian without the orientation check.
    pub fn eval_unchecked(&self, xi: [f64; 3]) -> MapEval {
        let lam = [1.0 - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]];
        let mut x = Point::zeros();
        let mut jac = Matrix3::zeros();
        for i in 0..4 {
            x += self.nodes[i] * lam[i];
            jac += self.nodes[i] * Vector3::from(GRAD_LAMBDA[i]).transpose();
        }
        for &(t, o, d) in &self.corrections {
            x += d * (lam[t] * lam[o]);
            let g = Vector3::from(GRAD_LAMBDA[t]) * lam[o] + Vector3::from(GRAD_LAMBDA[o]) * lam[t];
            jac += d * g.transpose();
        }
        MapEval {
            x,
            jac,
            det: jac.determinant(),
        }
    }

    pub fn eval(&self, xi: [f64; 3]) -> Result<MapEval> {
        let m = self.eval_unchecked(xi);
        if m.det * self.orientation <= 0.0 {
            return Err(Error::NegativeJacobian {
                element: usize::MAX,
                det: m.det,
            });
        }
        Ok(m)
    }
}

/// Affine map of the reference tet onto `nodes`.
pub fn geometric_map(nodes: &[Point; 4], xi: [f64; 3]) -> Result<MapEval> {
    Mapping::affine(*nodes).eval(xi)
}

/// Quarter-point map of the reference tet onto `nodes` (see [`Mapping`]).
pub fn singular_map(tip: &TipMapping, nodes: &[Point; 4], xi: [f64; 3]) -> Result<MapEval> {
    Mapping::singular(*nodes, tip)?.eval(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> [Point; 4] {
        [Point::zeros(), Point::x(), Point::y(), Point::z()]
    }

    #[test]
    fn reference_maps_to_itself() {
        let m = geometric_map(&reference(), [0.2, 0.3, 0.1]).unwrap();
        assert_eq!(m.jac, Matrix3::identity());
        assert_eq!(m.det, 1.0);
        let scaled = reference().map(|p| p * 2.0);
        assert!((geometric_map(&scaled, [0.1; 3]).unwrap().det - 8.0).abs() < 1e-14);
    }

    #[test]
    fn vertices_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nodes =
            reference().map(|p| p + Point::new(rng.random(), rng.random(), rng.random()) * 0.2);
        let verts = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (v, xi) in verts.iter().enumerate() {
            assert_eq!(geometric_map(&nodes, *xi).unwrap().x, nodes[v]);
        }
    }

    #[test]
    fn inverted_element_rejected() {
        let n = [Point::zeros(), Point::y(), Point::x(), Point::z()];
        assert!(matches!(
            geometric_map(&n, [0.1; 3]),
            Err(Error::NegativeJacobian { .. })
        ));
        assert!(Mapping::affine(n)
            .with_orientation(-1.0)
            .eval([0.1; 3])
            .is_ok());
    }

    #[test]
    fn quarter_point_radius() {
        let tip = TipMapping::new(vec![0]);
        for (s, r) in [(1.0, 1.0), (0.5, 0.25), (0.3, 0.09)] {
            let m = singular_map(&tip, &reference(), [s, 0.0, 0.0]).unwrap();
            assert!((m.x.norm() - r).abs() < 1e-15);
        }
        assert_eq!(tip.lengths(&reference()), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn kappa_zero_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nodes = reference()
            .map(|p| p * 1.5 + Point::new(rng.random(), rng.random(), rng.random()) * 0.1);
        let tip = TipMapping {
            tip_vertices: vec![1, 2],
            kappa: 0.0,
        };
        let xi = [0.2, 0.25, 0.3];
        assert_eq!(
            singular_map(&tip, &nodes, xi).unwrap(),
            geometric_map(&nodes, xi).unwrap()
        );
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let tip = TipMapping::new(vec![0, 3]);
        let map = Mapping::singular(reference(), &tip).unwrap();
        let xi = [0.2, 0.3, 0.25];
        let m = map.eval(xi).unwrap();
        for d in 0..3 {
            let (mut p, mut q) = (xi, xi);
            p[d] += 1e-6;
            q[d] -= 1e-6;
            let fd = (map.eval(p).unwrap().x - map.eval(q).unwrap().x) / 2e-6;
            assert!((fd - m.jac.column(d)).norm() < 1e-8);
        }
    }

    #[test]
    fn node_shapes_reproduce_map() {
        let tip = TipMapping::new(vec![1]);
        let nodes = [
            Point::zeros(),
            Point::new(1.2, 0.1, 0.0),
            Point::new(0.1, 0.9, 0.2),
            Point::new(0.0, 0.2, 1.1),
        ];
        let map = Mapping::singular(nodes, &tip).unwrap();
        let xi = [0.3, 0.2, 0.1];
        let m = map.eval(xi).unwrap();
        let mut x = Point::zeros();
        let mut jac = Matrix3::zeros();
        for a in 0..4 {
            let (v, g) = map.node_shape(a, xi);
            x += nodes[a] * v;
            jac += nodes[a] * g.transpose();
        }
        assert!((x - m.x).norm() < 1e-14);
        assert!((jac - m.jac).norm() < 1e-14);
    }

    #[test]
    fn three_tip_vertices_rejected() {
        assert!(Mapping::singular(reference(), &TipMapping::new(vec![0, 1, 2])).is_err());
    }
}
