//! Moving weighted least squares smoothing of scattered density samples,
//! sample/voxel readers and grey-value calibration.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::mesh::Point;

/// Radius growth factor and attempts when a moment matrix is singular at build.
const RADIUS_GROWTH: f64 = 1.3;
const RADIUS_ATTEMPTS: usize = 5;
/// Smallest accepted eigenvalue ratio of a moment matrix.
const MOMENT_CONDITION: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensitySamples {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
}

impl DensitySamples {
    pub fn new(points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} sample points but {} values",
                points.len(),
                values.len()
            )));
        }
        Ok(DensitySamples { points, values })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Typical sample spacing: the bounding-box measure per sample, taking the
    /// root matching the number of non-degenerate axes. Zero for a single point.
    pub fn spacing(&self) -> f64 {
        let Some(first) = self.points.first() else {
            return 0.0;
        };
        let (mut lo, mut hi) = (*first, *first);
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extents: Vec<f64> = (hi - lo).iter().copied().filter(|e| *e > 1e-12 * (hi - lo).amax()).collect();
        if extents.is_empty() {
            return 0.0;
        }
        let measure: f64 = extents.iter().product();
        (measure / self.points.len() as f64).powf(1.0 / extents.len() as f64)
    }

    /// Samples `f` on a regular grid spanning `lo..=hi` with `n` points per axis.
    pub fn grid(lo: Point, hi: Point, n: [usize; 3], f: impl Fn(&Point) -> f64) -> Self {
        let mut points = Vec::with_capacity(n[0] * n[1] * n[2]);
        let coord = |k: usize, i: usize| {
            if n[k] == 1 {
                lo[k]
            } else {
                lo[k] + (hi[k] - lo[k]) * i as f64 / (n[k] - 1) as f64
            }
        };
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    points.push(Point::new(coord(0, i), coord(1, j), coord(2, k)));
                }
            }
        }
        let values = points.iter().map(&f).collect();
        DensitySamples { points, values }
    }

    /// Reads a CSV file with header `x,y,z,value`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_samples_csv(&text)
    }

    /// Reads a voxel file: `nx ny nz`, `origin ox oy oz`, `spacing sx sy sz`,
    /// then `nx·ny·nz` values with x varying fastest. Samples sit at voxel centres
    /// `origin + (i + ½) spacing`.
    pub fn read_voxels(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_voxels(&text)
    }

    /// Applies a calibration curve to every value.
    pub fn calibrated(mut self, curve: &CalibrationCurve) -> Self {
        for v in &mut self.values {
            *v = curve.apply(*v);
        }
        self
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a number, found {tok:?}"),
    })
}

pub fn parse_samples_csv(text: &str) -> Result<DensitySamples> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty sample file".into(),
    })?;
    let cols: Vec<String> = header
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    if cols != ["x", "y", "z", "value"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header x,y,z,value, found {header:?}"),
        });
    }
    let mut samples = DensitySamples::default();
    for (i, line) in lines {
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 4 columns, found {}", toks.len()),
            });
        }
        let v: Vec<f64> = toks
            .iter()
            .map(|t| parse_f64(t, i + 1))
            .collect::<Result<_>>()?;
        samples.points.push(Point::new(v[0], v[1], v[2]));
        samples.values.push(v[3]);
    }
    Ok(samples)
}

pub fn parse_voxels(text: &str) -> Result<DensitySamples> {
    let mut toks = text
        .lines()
        .enumerate()
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)));
    let mut next = |what: &str| {
        toks.next().ok_or(Error::Parse {
            line: 0,
            msg: format!("voxel file ended before {what}"),
        })
    };
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let (line, t) = next("dimensions")?;
        *d = t.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad dimension {t:?}"),
        })?;
    }
    let mut header = |key: &str| -> Result<Point> {
        let (line, t) = next(key)?;
        if t != key {
            return Err(Error::Parse {
                line,
                msg: format!("expected {key:?}, found {t:?}"),
            });
        }
        let mut p = Point::zeros();
        for k in 0..3 {
            let (line, t) = next(key)?;
            p[k] = parse_f64(t, line)?;
        }
        Ok(p)
    };
    let origin = header("origin")?;
    let spacing = header("spacing")?;
    let total = dims[0] * dims[1] * dims[2];
    let mut samples = DensitySamples::default();
    for idx in 0..total {
        let (line, t) = next("all voxel values")?;
        let (i, j, k) = (
            idx % dims[0],
            (idx / dims[0]) % dims[1],
            idx / (dims[0] * dims[1]),
        );
        let offset =
            Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5).component_mul(&spacing);
        samples.points.push(origin + offset);
        samples.values.push(parse_f64(t, line)?);
    }
    if let Some((line, _)) = toks.next() {
        return Err(Error::Parse {
            line,
            msg: format!("more than {total} voxel values"),
        });
    }
    Ok(samples)
}

/// Piecewise-linear grey-value → density map with clamped ends.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationCurve {
    points: Vec<(f64, f64)>,
}

impl CalibrationCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(
                "calibration needs at least two control points".into(),
            ));
        }
        if points
            .windows(2)
            .any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1))
        {
            return Err(Error::InvalidInput(
                "calibration points must increase in grey value and density".into(),
            ));
        }
        Ok(CalibrationCurve { points })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.to_ascii_lowercase().starts_with("grey")) {
                continue;
            }
            let toks: Vec<&str> = line.split(',').collect();
            if toks.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected grey,density".into(),
                });
            }
            pts.push((parse_f64(toks[0], i + 1)?, parse_f64(toks[1], i + 1)?));
        }
        Self::new(pts)
    }

    pub fn apply(&self, grey: f64) -> f64 {
        let pts = &self.points;
        if grey <= pts[0].0 {
            return pts[0].1;
        }
        if grey >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let k = pts.partition_point(|p| p.0 <= grey);
        let (a, b) = (pts[k - 1], pts[k]);
        a.1 + (b.1 - a.1) * (grey - a.0) / (b.0 - a.0)
    }
}

/// Applies `curve` to each grey value.
pub fn calibrate(grey: &[f64], curve: &CalibrationCurve) -> Vec<f64> {
    grey.iter().map(|&g| curve.apply(g)).collect()
}

/// C² quartic spline `1 − 6s² + 8s³ − 3s⁴` and its derivative in `s`.
fn kernel(s: f64) -> (f64, f64) {
    if s >= 1.0 {
        (0.0, 0.0)
    } else {
        let t = 1.0 - s;
        (
            1.0 - 6.0 * s * s + 8.0 * s * s * s - 3.0 * s.powi(4),
            -12.0 * s * t * t,
        )
    }
}

/// Local polynomial basis `p(d)` in scaled offsets and its gradient at `d = 0`.
fn poly(order: usize, d: &Vector3<f64>) -> Vec<f64> {
    let mut p = vec![1.0, d.x, d.y, d.z];
    if order == 2 {
        p.extend([
            d.x * d.x,
            d.y * d.y,
            d.z * d.z,
            d.x * d.y,
            d.y * d.z,
            d.z * d.x,
        ]);
    }
    p
}

fn basis_dim(order: usize) -> usize {
    if order == 2 {
        10
    } else {
        4
    }
}

/// MWLS shape functions at one point: neighbour ids, values and gradients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShapeFunctions {
    pub neighbours: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<Vector3<f64>>,
}

#[derive(Clone, Debug)]
pub struct DensityField {
    samples: DensitySamples,
    radius: f64,
    order: usize,
    grid: HashMap<[i64; 3], Vec<usize>>,
    /// Smallest and largest neighbour counts seen at the sample points.
    pub neighbour_range: (usize, usize),
}

impl DensityField {
    /// Builds the field, growing the support radius when a moment matrix at a
    /// sample point is singular.
    pub fn build(samples: DensitySamples, radius: f64, order: usize) -> Result<Self> {
        if !(order == 1 || order == 2) {
            return Err(Error::InvalidInput(format!(
                "MWLS basis order must be 1 or 2, got {order}"
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("MWLS radius must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("no density samples".into()));
        }
        let mut field = DensityField {
            samples,
            radius,
            order,
            grid: HashMap::new(),
            neighbour_range: (0, 0),
        };
        let mut last_err = None;
        for attempt in 0..=RADIUS_ATTEMPTS {
            if attempt > 0 {
                field.radius *= RADIUS_GROWTH;
                log::warn!(
                    "MWLS moment matrix singular; growing radius to {}",
                    field.radius
                );
            }
            field.rebuild_grid();
            match field.check_support() {
                Ok(range) => {
                    field.neighbour_range = range;
                    return Ok(field);
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(match last_err {
            Some(Error::SingularMoment(msg)) => {
                Error::SingularMoment(format!("{msg} after {RADIUS_ATTEMPTS} radius increases"))
            }
            Some(e) => e,
            None => unreachable!(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn samples(&self) -> &DensitySamples {
        &self.samples
    }

    fn cell(&self, p: &Point) -> [i64; 3] {
        [0, 1, 2].map(|k| (p[k] / self.radius).floor() as i64)
    }

    fn rebuild_grid(&mut self) {
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in self.samples.points.iter().enumerate() {
            grid.entry(self.cell(p)).or_default().push(i);
        }
        self.grid = grid;
    }

    fn check_support(&self) -> Result<(usize, usize)> {
        let mut range = (usize::MAX, 0);
        for p in &self.samples.points {
            let sf = self.shape_functions(p)?;
            range.0 = range.0.min(sf.neighbours.len());
            range.1 = range.1.max(sf.neighbours.len());
        }
        Ok(range)
    }

    fn neighbours(&self, x: &Point) -> Vec<(usize, f64, Vector3<f64>)> {
        let c = self.cell(x);
        let mut out = Vec::new();
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(ids) = self.grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &i in ids {
                        let d = x - self.samples.points[i];
                        let dist = d.norm();
                        let (w, dw) = kernel(dist / self.radius);
                        if w > 0.0 {
                            let grad = if dist > 0.0 {
                                d * (dw / (dist * self.radius))
                            } else {
                                Vector3::zeros()
                            };
                            out.push((i, w, grad));
                        }
                    }
                }
            }
        }
        out.sort_unstable_by_key(|n| n.0);
        out
    }

    /// Shape functions `Φ_i(X)` and their full gradients.
    pub fn shape_functions(&self, x: &Point) -> Result<ShapeFunctions> {
        let nb = self.neighbours(x);
        let m = basis_dim(self.order);
        if nb.len() < m {
            return Err(Error::InsufficientSupport {
                point: [x.x, x.y, x.z],
                neighbours: nb.len(),
            });
        }
        let ps: Vec<DVector<f64>> = nb
            .iter()
            .map(|&(i, _, _)| {
                DVector::from_vec(poly(
                    self.order,
                    &((self.samples.points[i] - x) / self.radius),
                ))
            })
            .collect();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut da = [a.clone(), a.clone(), a.clone()];
        for (k, &(_, w, dw)) in nb.iter().enumerate() {
            let outer = &ps[k] * ps[k].transpose();
            a += &outer * w;
            for d in 0..3 {
                da[d] += &outer * dw[d];
            }
        }
        let eig = SymmetricEigen::new(a.clone());
        let (lo, hi) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, 0f64), |(lo, hi), &e| {
                (lo.min(e), hi.max(e.abs()))
            });
        if !(lo > MOMENT_CONDITION * hi) {
            return Err(Error::SingularMoment(format!(
                "moment matrix at ({:.4}, {:.4}, {:.4}) has eigenvalue ratio {:.2e}",
                x.x,
                x.y,
                x.z,
                lo / hi
            )));
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::SingularMoment("moment matrix not positive definite".into()))?;
        let mut p0 = DVector::zeros(m);
        p0[0] = 1.0;
        let gamma = chol.solve(&p0);
        let dgamma: Vec<DVector<f64>> = (0..3)
            .map(|d| {
                let mut dp = DVector::zeros(m);
                dp[1 + d] = 1.0 / self.radius;
                chol.solve(&(dp - &da[d] * &gamma))
            })
            .collect();
        let mut sf = ShapeFunctions::default();
        for (k, &(i, w, dw)) in nb.iter().enumerate() {
            let gp = gamma.dot(&ps[k]);
            sf.neighbours.push(i);
            sf.values.push(gp * w);
            sf.grads.push(Vector3::new(
                dgamma[0].dot(&ps[k]) * w + gp * dw[0],
                dgamma[1].dot(&ps[k]) * w + gp * dw[1],
                dgamma[2].dot(&ps[k]) * w + gp * dw[2],
            ));
        }
        Ok(sf)
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        Ok(self.eval_grad(x)?.0)
    }

    /// Value and full gradient at `x`.
    pub fn eval_grad(&self, x: &Point) -> Result<(f64, Vector3<f64>)> {
        let sf = self.shape_functions(x)?;
        let mut v = 0.0;
        let mut g = Vector3::zeros();
        for (k, &i) in sf.neighbours.iter().enumerate() {
            v += sf.values[k] * self.samples.values[i];
            g += sf.grads[k] * self.samples.values[i];
        }
        Ok((v, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        let s = DensitySamples::grid(Point::zeros(), Point::new(1.0, 1.0, 0.0), [11, 11, 1], |_| 1.0);
        assert!((s.spacing() - 1.0 / 11.0).abs() < 1e-12);
        let s = DensitySamples::grid(Point::zeros(), Point::new(2.0, 2.0, 2.0), [3, 3, 3], |_| 1.0);
        assert!((s.spacing() - 2.0 / 3.0).abs() < 1e-12);
    }
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_field() -> DensityField {
        let s = DensitySamples::grid(Point::zeros(), Point::new(2.0, 8.0, 1.0), [5, 17, 3], |p| {
            0.125 * p.y + 1.0
        });
        DensityField::build(s, 1.2, 1).unwrap()
    }

    #[test]
    fn unit_cube_constant() {
        let s = DensitySamples::grid(Point::zeros(), Point::new(1.0, 1.0, 1.0), [2, 2, 2], |_| {
            1.0
        });
        let f = DensityField::build(s, 2.0, 1).unwrap();
        let (v, g) = f.eval_grad(&Point::new(0.3, 0.6, 0.2)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert!(g.norm() < 1e-13);
    }

    #[test]
    fn linear_reproduction() {
        let f = linear_field();
        let (v, g) = f.eval_grad(&Point::new(1.0, 4.0, 0.5)).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
        assert!((g - Vector3::new(0.0, 0.125, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn partition_of_unity_and_gradient_consistency() {
        let f = linear_field();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = Point::new(
                rng.random_range(0.0..2.0),
                rng.random_range(0.0..8.0),
                rng.random_range(0.0..1.0),
            );
            let sf = f.shape_functions(&x).unwrap();
            assert!((sf.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(sf.grads.iter().sum::<Vector3<f64>>().norm() < 1e-10);
        }
    }

    #[test]
    fn quadratic_reproduction_and_fd_gradient() {
        let q = |p: &Point| 1.0 + 0.3 * p.x * p.x - 0.2 * p.x * p.y + 0.1 * p.z;
        let s = DensitySamples::grid(Point::zeros(), Point::new(2.0, 2.0, 2.0), [9, 9, 9], q);
        let f = DensityField::build(s, 0.8, 2).unwrap();
        let x = Point::new(0.77, 1.13, 0.91);
        assert!((f.eval(&x).unwrap() - q(&x)).abs() < 1e-10);
        let lin = DensitySamples::grid(Point::zeros(), Point::new(2.0, 2.0, 2.0), [9, 9, 9], |p| {
            (p.x + p.y * p.z).sin() + 2.0
        });
        let f = DensityField::build(lin, 0.7, 1).unwrap();
        let (_, g) = f.eval_grad(&x).unwrap();
        let h = 1e-6;
        for d in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += h;
            xm[d] -= h;
            let fd = (f.eval(&xp).unwrap() - f.eval(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[d]).abs() <= 1e-6 * g.norm());
        }
    }

    #[test]
    fn coplanar_points_singular() {
        let s = DensitySamples::new(
            vec![
                Point::zeros(),
                Point::new(1.0, 0.0, 0.0),
                Point::new(0.0, 1.0, 0.0),
                Point::new(1.0, 1.0, 0.0),
            ],
            vec![1.0; 4],
        )
        .unwrap();
        assert!(matches!(
            DensityField::build(s, 2.0, 1),
            Err(Error::SingularMoment(_))
        ));
    }

    #[test]
    fn far_point_lacks_support() {
        let f = linear_field();
        assert!(matches!(
            f.eval(&Point::new(10.0, 4.0, 0.5)),
            Err(Error::InsufficientSupport { .. })
        ));
    }

    #[test]
    fn calibration() {
        let c = CalibrationCurve::new(vec![(0.0, 0.1), (100.0, 1.1), (200.0, 2.1)]).unwrap();
        assert_eq!(c.apply(100.0), 1.1);
        assert!((c.apply(50.0) - 0.6).abs() < 1e-15);
        assert_eq!(c.apply(-5.0), 0.1);
        assert_eq!(c.apply(500.0), 2.1);
        assert!(CalibrationCurve::new(vec![(0.0, 1.0), (1.0, 0.5)]).is_err());
        assert_eq!(calibrate(&[0.0, 200.0], &c), vec![0.1, 2.1]);
    }

    #[test]
    fn readers() {
        let s = parse_samples_csv("x,y,z,value\n0,0,0,1.5\n1,0,0,2\n").unwrap();
        assert_eq!(s.values, vec![1.5, 2.0]);
        assert!(parse_samples_csv("a,b\n").is_err());
        let v = parse_voxels("2 1 1\norigin 0 0 0\nspacing 0.5 1 1\n3 4\n").unwrap();
        assert_eq!(v.points[1], Point::new(0.75, 0.5, 0.5));
        assert_eq!(v.values, vec![3.0, 4.0]);
        assert!(parse_voxels("2 1 1\norigin 0 0 0\nspacing 1 1 1\n3\n").is_err());
    }
}
