//! Small linear-algebra helpers: a CSR sparse matrix for the banded
//! transition matrices, a sparse/dense reference wrapper, and the weighted
//! vector norms used by the confidence-bound analysis and its property tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse row matrix, square, f64 entries.
///
/// Transition matrices built from 5-point stencils have at most 5 nonzeros
/// per row; storing them densely would make the covariance propagation
/// `A Σ Aᵀ` the dominant cost at production grid sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::structural(format!(
                    "triplet ({r},{c}) out of bounds for dim {dim}"
                )));
            }
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            dim,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let triplets: Vec<_> = (0..dim).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(dim, &triplets).expect("identity triplets are in bounds")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim, "CsrMatrix::mul_vec dimension mismatch");
        let mut out = DVector::zeros(self.dim);
        for r in 0..self.dim {
            let mut acc = 0.0;
            for (c, a) in self.row(r) {
                acc += a * v[c];
            }
            out[r] = acc;
        }
        out
    }

    /// Dense product `self * m`.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.dim, "CsrMatrix::mul_dense dimension mismatch");
        let ncols = m.ncols();
        let mut out = DMatrix::zeros(self.dim, ncols);
        for r in 0..self.dim {
            for (c, a) in self.row(r) {
                // out[r, :] += a * m[c, :]
                for j in 0..ncols {
                    out[(r, j)] += a * m[(c, j)];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, a) in self.row(r) {
                out[(r, c)] += a;
            }
        }
        out
    }
}

/// Borrowed view of a square matrix that is either sparse or dense.
///
/// The Kalman recursion is agnostic to the storage of the transition matrix:
/// production scenarios use banded CSR matrices, tests pass arbitrary dense
/// ones.
#[derive(Debug, Clone, Copy)]
pub enum MatRef<'a> {
    Sparse(&'a CsrMatrix),
    Dense(&'a DMatrix<f64>),
}

impl<'a> MatRef<'a> {
    pub fn dim(&self) -> usize {
        match self {
            MatRef::Sparse(m) => m.dim(),
            MatRef::Dense(m) => m.nrows(),
        }
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            MatRef::Sparse(m) => m.mul_vec(v),
            MatRef::Dense(m) => *m * v,
        }
    }

    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            MatRef::Sparse(a) => a.mul_dense(m),
            MatRef::Dense(a) => *a * m,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            MatRef::Sparse(m) => m.to_dense(),
            MatRef::Dense(m) => (*m).clone(),
        }
    }

    /// `A M Aᵀ` for symmetric `M`.
    pub fn sandwich(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        // A (A Mᵀ)ᵀ = A M Aᵀ when M = Mᵀ.
        let am = self.mul_dense(m);
        self.mul_dense(&am.transpose())
    }
}

/// Force exact symmetry: `(M + Mᵀ) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `‖x‖_M = sqrt(xᵀ M x)` for positive definite `M`.
pub fn norm_weighted(x: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (x.dot(&(m * x))).max(0.0).sqrt()
}

/// `‖x‖_{D,∞} = max_i d_i |x_i|` with `d` the diagonal weights.
pub fn norm_diag_inf(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    x.iter()
        .zip(d.iter())
        .map(|(xi, di)| di * xi.abs())
        .fold(0.0, f64::max)
}

/// `‖x‖_{D,1} = Σ_i d_i |x_i|`.
pub fn norm_diag_one(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    x.iter().zip(d.iter()).map(|(xi, di)| di * xi.abs()).sum()
}

/// `‖x‖_{D²} = sqrt(Σ_i d_i² x_i²)`, the weighted norm with matrix `D²`.
pub fn norm_diag_sq(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    x.iter()
        .zip(d.iter())
        .map(|(xi, di)| (di * xi).powi(2))
        .sum::<f64>()
        .sqrt()
}
