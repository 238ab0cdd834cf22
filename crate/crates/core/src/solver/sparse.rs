use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Coordinate-format accumulator; duplicate entries are summed on conversion.
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            ..Default::default()
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.rows.push(r);
        self.cols.push(c);
        self.vals.push(v);
    }

    pub fn extend(&mut self, other: Triplets) {
        self.rows.extend(other.rows);
        self.cols.extend(other.cols);
        self.vals.extend(other.vals);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Triplets::with_capacity(n, n, n);
        for i in 0..n {
            t.push(i, i, 1.0);
        }
        t
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for k in 0..self.vals.len() {
            y[self.rows[k]] += self.vals[k] * x[self.cols[k]];
        }
        y
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for k in 0..self.vals.len() {
            d[self.rows[k]][self.cols[k]] += self.vals[k];
        }
        d
    }

    /// Keeps only rows and columns with `map[i] = Some(j)`, renumbered to `j`.
    pub fn restrict(&self, map: &[Option<usize>], n: usize) -> Triplets {
        let mut out = Triplets::with_capacity(n, n, self.len());
        for k in 0..self.vals.len() {
            if let (Some(r), Some(c)) = (map[self.rows[k]], map[self.cols[k]]) {
                out.push(r, c, self.vals[k]);
            }
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = b` by sparse LU and checks the residual.
pub fn solve_linear(a: &Triplets, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows != a.ncols || a.nrows != b.len() {
        return Err(Error::InvalidInput(format!(
            "system is {}x{} with a right-hand side of length {}",
            a.nrows,
            a.ncols,
            b.len()
        )));
    }
    let n = a.nrows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let entries: Vec<Triplet<usize, usize, f64>> = (0..a.len())
        .map(|k| Triplet::new(a.rows[k], a.cols[k], a.vals[k]))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &entries)
        .map_err(|e| Error::InvalidInput(format!("sparse matrix construction failed: {e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("LU factorisation failed: {e:?}")))?;
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let sol = lu.solve(&rhs);
    let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(
            "solution contains non-finite values (zero pivot)".into(),
        ));
    }
    let ax = a.matvec(&x);
    let resid = norm(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
    if resid > 1e-10 * (norm(b) + 1.0) {
        let scale = a.vals.iter().fold(0f64, |m, v| m.max(v.abs()));
        return Err(Error::SingularSystem(format!(
            "residual {resid:.3e} exceeds tolerance; matrix is singular or ill-conditioned (max entry {scale:.3e})"
        )));
    }
    Ok(x)
}
