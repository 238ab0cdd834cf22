//! Sparse linear solves, Newton iteration, adaptive time stepping and
//! Dirichlet-aware degree-of-freedom bookkeeping.

mod sparse;

use std::ops::Range;

use crate::error::{Error, Result};

pub use sparse::{solve_linear, Triplets};

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Free/constrained partition of a global dof vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub total: usize,
    /// Field blocks (e.g. density then position), contiguous and in order.
    pub fields: Vec<Range<usize>>,
    fixed: Vec<bool>,
    free_index: Vec<Option<usize>>,
    free: Vec<usize>,
}

impl DofMap {
    pub fn new(fields: Vec<Range<usize>>, fixed_dofs: &[usize]) -> Self {
        let total = fields.last().map_or(0, |r| r.end);
        let mut fixed = vec![false; total];
        for &d in fixed_dofs {
            fixed[d] = true;
        }
        let mut free_index = vec![None; total];
        let mut free = Vec::new();
        for d in 0..total {
            if !fixed[d] {
                free_index[d] = Some(free.len());
                free.push(d);
            }
        }
        DofMap {
            total,
            fields,
            fixed,
            free_index,
            free,
        }
    }

    pub fn is_fixed(&self, d: usize) -> bool {
        self.fixed[d]
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn restrict_matrix(&self, a: &Triplets) -> Triplets {
        a.restrict(&self.free_index, self.free.len())
    }

    pub fn restrict_vector(&self, v: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| v[d]).collect()
    }

    /// Adds a reduced increment to the free entries of `x`.
    pub fn add_free(&self, x: &mut [f64], dx: &[f64], scale: f64) {
        for (k, &d) in self.free.iter().enumerate() {
            x[d] += scale * dx[k];
        }
    }

    /// Residual norm per field counting only free dofs.
    pub fn field_norms(&self, r: &[f64]) -> Vec<f64> {
        self.fields
            .iter()
            .map(|f| {
                f.clone()
                    .filter(|&d| !self.fixed[d])
                    .map(|d| r[d] * r[d])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Nonlinear system for [`newton`]: residual and Jacobian over the full dof vector.
pub trait NonlinearSystem {
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&mut self, x: &[f64]) -> Result<Triplets>;
    /// Maps a trial iterate back into the admissible set (e.g. clips densities).
    fn project(&mut self, _x: &mut [f64]) {}
}

/// Adapter turning a pair of closures into a [`NonlinearSystem`].
pub struct FnSystem<R, J> {
    pub residual: R,
    pub jacobian: J,
}

impl<R, J> NonlinearSystem for FnSystem<R, J>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<Triplets>,
{
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        (self.residual)(x)
    }
    fn jacobian(&mut self, x: &[f64]) -> Result<Triplets> {
        (self.jacobian)(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Halve the step (up to `max_halvings` times) while the residual grows.
    pub backtracking: bool,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-9,
            max_iter: 25,
            backtracking: true,
            max_halvings: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Total residual norm before each iteration and after the last.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Step length used in each iteration.
    pub step_lengths: Vec<f64>,
}

impl NewtonReport {
    /// Estimated convergence order from the last three residuals.
    pub fn observed_order(&self) -> Option<f64> {
        let r = &self.residuals;
        let n = r.len();
        if n < 3 {
            return None;
        }
        let (a, b, c) = (r[n - 3], r[n - 2], r[n - 1]);
        Some((c / b).ln() / (b / a).ln())
    }
}

fn converged(norms: &[f64], initial: &[f64], tol: f64) -> bool {
    norms
        .iter()
        .zip(initial)
        .all(|(n, n0)| *n <= tol * (n0 + 1.0))
}

/// Newton–Raphson on the free dofs of `dofs`; every field block must satisfy
/// `‖r_f(x)‖ ≤ tol (‖r_f(x₀)‖ + 1)`.
pub fn newton(
    system: &mut impl NonlinearSystem,
    x0: Vec<f64>,
    dofs: &DofMap,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, NewtonReport)> {
    let mut x = x0;
    let mut r = system.residual(&x)?;
    let initial = dofs.field_norms(&r);
    let mut report = NewtonReport::default();
    let mut current = norm(&dofs.restrict_vector(&r));
    report.residuals.push(current);
    let mut increases = 0;
    loop {
        if !current.is_finite() {
            return Err(Error::Divergence {
                iterations: report.iterations,
                residual: current,
            });
        }
        if converged(&dofs.field_norms(&r), &initial, opts.tol) {
            report.converged = true;
            return Ok((x, report));
        }
        if report.iterations >= opts.max_iter {
            return Err(Error::MaxIterations {
                iterations: report.iterations,
                residual: current,
            });
        }
        let k = dofs.restrict_matrix(&system.jacobian(&x)?);
        let rhs: Vec<f64> = dofs.restrict_vector(&r).iter().map(|v| -v).collect();
        let dx = solve_linear(&k, &rhs)?;
        let mut step = 1.0;
        let mut trial = x.clone();
        dofs.add_free(&mut trial, &dx, step);
        system.project(&mut trial);
        let mut r_trial = system.residual(&trial);
        if opts.backtracking {
            let mut halvings = 0;
            loop {
                let ok = matches!(&r_trial, Ok(rt) if norm(&dofs.restrict_vector(rt)) < current);
                if ok || halvings >= opts.max_halvings {
                    break;
                }
                halvings += 1;
                step *= 0.5;
                trial.clone_from(&x);
                dofs.add_free(&mut trial, &dx, step);
                system.project(&mut trial);
                r_trial = system.residual(&trial);
            }
        }
        x = trial;
        r = r_trial?;
        let next = norm(&dofs.restrict_vector(&r));
        report.iterations += 1;
        report.step_lengths.push(step);
        report.residuals.push(next);
        increases = if next > current { increases + 1 } else { 0 };
        current = next;
        if increases >= 3 {
            return Err(Error::Divergence {
                iterations: report.iterations,
                residual: current,
            });
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperOptions {
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub grow: f64,
    /// Steps converging in at most this many iterations grow the next step.
    pub fast_iterations: usize,
    pub t_end: f64,
    pub max_steps: usize,
}

impl Default for StepperOptions {
    fn default() -> Self {
        StepperOptions {
            dt0: 0.5,
            dt_min: 0.05,
            dt_max: 50.0,
            grow: 1.5,
            fast_iterations: 4,
            t_end: f64::INFINITY,
            max_steps: 10_000,
        }
    }
}

/// Outcome of one accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepControl {
    pub iterations: usize,
    /// Stop after this step (e.g. equilibrium reached).
    pub stop: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    /// `(t, dt, iterations)` of each accepted step, `t` at the end of the step.
    pub steps: Vec<(f64, f64, usize)>,
    pub rejected: usize,
    pub stopped: bool,
}

/// Integrates with adaptive steps. `step(t, dt)` attempts the step from `t` and
/// either accepts it or fails; failures halve `dt` and retry.
pub fn adaptive_stepper(
    mut step: impl FnMut(f64, f64) -> Result<StepControl>,
    opts: &StepperOptions,
) -> Result<TimeSeries> {
    if !(opts.dt_min > 0.0 && opts.dt_min <= opts.dt0 && opts.dt0 <= opts.dt_max) {
        return Err(Error::InvalidInput(format!(
            "time steps must satisfy 0 < dt_min <= dt0 <= dt_max (got {}, {}, {})",
            opts.dt_min, opts.dt0, opts.dt_max
        )));
    }
    let mut t = 0.0;
    let mut dt = opts.dt0;
    let mut series = TimeSeries::default();
    while t < opts.t_end && series.steps.len() < opts.max_steps {
        let this_dt = dt.min(opts.t_end - t);
        match step(t, this_dt) {
            Ok(ctl) => {
                t += this_dt;
                series.steps.push((t, this_dt, ctl.iterations));
                if ctl.iterations <= opts.fast_iterations {
                    dt = (dt * opts.grow).min(opts.dt_max);
                }
                if ctl.stop {
                    series.stopped = true;
                    break;
                }
            }
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => {
                series.rejected += 1;
                dt *= 0.5;
                log::debug!("step at t = {t} failed ({e}); retrying with dt = {dt}");
                if dt < opts.dt_min {
                    return Err(Error::StepUnderflow {
                        t,
                        dt,
                        dt_min: opts.dt_min,
                    });
                }
            }
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(
        r: impl Fn(f64) -> f64 + Copy,
        dr: impl Fn(f64) -> f64 + Copy,
    ) -> FnSystem<impl FnMut(&[f64]) -> Result<Vec<f64>>, impl FnMut(&[f64]) -> Result<Triplets>>
    {
        FnSystem {
            residual: move |x: &[f64]| Ok(vec![r(x[0])]),
            jacobian: move |x: &[f64]| {
                let mut t = Triplets::new(1, 1);
                t.push(0, 0, dr(x[0]));
                Ok(t)
            },
        }
    }

    #[test]
    fn linear_converges_in_one_iteration() {
        let mut s = scalar(|x| 3.0 * x - 6.0, |_| 3.0);
        let (x, rep) = newton(
            &mut s,
            vec![0.0],
            &DofMap::new(vec![0..1], &[]),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn square_root_quadratic() {
        let mut s = scalar(|x| x * x - 4.0, |x| 2.0 * x);
        let opts = NewtonOptions {
            tol: 1e-15,
            ..Default::default()
        };
        let (x, rep) = newton(&mut s, vec![3.0], &DofMap::new(vec![0..1], &[]), &opts).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15);
        let r = &rep.residuals;
        // Residuals 5, 0.694, 0.0186, 1.5e-5: check order on the tail.
        let order = ((r[3] / r[2]).ln()) / ((r[2] / r[1]).ln());
        assert!(order >= 1.8, "{order} {r:?}");
    }

    #[test]
    fn atan_diverges_without_damping() {
        let mut s = scalar(f64::atan, |x| 1.0 / (1.0 + x * x));
        let opts = NewtonOptions {
            backtracking: false,
            ..Default::default()
        };
        let err = newton(&mut s, vec![10.0], &DofMap::new(vec![0..1], &[]), &opts).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
        let mut s = scalar(f64::atan, |x| 1.0 / (1.0 + x * x));
        let (x, _) = newton(
            &mut s,
            vec![10.0],
            &DofMap::new(vec![0..1], &[]),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(x[0].abs() < 1e-9);
    }

    #[test]
    fn constrained_dofs_untouched() {
        // r = A x - b with x1 prescribed.
        let mut s = FnSystem {
            residual: |x: &[f64]| Ok(vec![2.0 * x[0] - x[1] - 1.0, -x[0] + 2.0 * x[1]]),
            jacobian: |_: &[f64]| {
                let mut t = Triplets::new(2, 2);
                t.push(0, 0, 2.0);
                t.push(0, 1, -1.0);
                t.push(1, 0, -1.0);
                t.push(1, 1, 2.0);
                Ok(t)
            },
        };
        let dofs = DofMap::new(vec![0..2], &[1]);
        let (x, _) = newton(&mut s, vec![0.0, 3.0], &dofs, &NewtonOptions::default()).unwrap();
        assert_eq!(x[1], 3.0);
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stepper_grows_to_max() {
        let opts = StepperOptions {
            t_end: 2000.0,
            ..Default::default()
        };
        let ts = adaptive_stepper(
            |_, _| {
                Ok(StepControl {
                    iterations: 2,
                    stop: false,
                })
            },
            &opts,
        )
        .unwrap();
        let dts: Vec<f64> = ts.steps.iter().map(|s| s.1).collect();
        assert!(dts.windows(2).all(|w| w[1] >= w[0] || w[1] < opts.dt_max));
        assert!(dts.iter().any(|&d| d == 50.0));
        assert!((ts.steps.last().unwrap().0 - 2000.0).abs() < 1e-9);
        assert_eq!(opts.dt0, 0.5);
        assert_eq!(opts.dt_max, 50.0);
        assert_eq!(opts.dt_min, 0.05);
    }

    #[test]
    fn stepper_aborts_on_persistent_failure() {
        let err = adaptive_stepper(
            |_, _| {
                Err(Error::Divergence {
                    iterations: 3,
                    residual: 1.0,
                })
            },
            &StepperOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::StepUnderflow { dt, dt_min, .. } => assert!(dt < dt_min),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn stepper_stops_on_request() {
        let mut n = 0;
        let ts = adaptive_stepper(
            |_, _| {
                n += 1;
                Ok(StepControl {
                    iterations: 5,
                    stop: n == 3,
                })
            },
            &StepperOptions::default(),
        )
        .unwrap();
        assert!(ts.stopped);
        assert_eq!(ts.steps.len(), 3);
        assert!(ts.steps.iter().all(|s| s.1 == 0.5));
    }
}
