//! Collective belief maintenance: the information-form Kalman recursion
//!
//! ```text
//! Σ_{k+1} = A_{k+1} (Σ_k⁻¹ + Y_k)⁻¹ A_{k+1}ᵀ
//! φ̂_{k+1} = A_{k+1} (φ̂_k + (Σ_k⁻¹ + Y_k)⁻¹ (y_k − Y_k φ̂_k))  [+ b_{k+1}]
//! ```
//!
//! `Y_k` is diagonal with small support (the union of the step's sensing
//! footprints), so `(Σ⁻¹ + Y)⁻¹` is evaluated through the matrix-inversion
//! lemma with one small SPD solve per step; no explicit inverse of an N×N
//! matrix is ever formed. The measurement-history closed form is shipped as
//! an independent oracle for tests and diagnostics; it is O(N³) per call and
//! needs the full history, so it is not a production path.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::consensus::InfoPair;
use crate::environment::Grid;
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, MatRef};

/// Gaussian belief `(φ̂, Σ)` over the field at one timestep; `Σ` symmetric
/// positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub step: u64,
}

impl Belief {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Check the belief invariants: symmetry within 1e-12, positive
    /// diagonal, and a successful Cholesky factorization. Test/diagnostic
    /// use; the per-step update only performs the cheap diagonal check.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            if self.cov[(i, i)] <= 0.0 {
                return Err(Error::numerical(
                    "belief validation",
                    format!("covariance diagonal entry {i} is {}", self.cov[(i, i)]),
                ));
            }
            for j in (i + 1)..n {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > 1e-12 {
                    return Err(Error::numerical(
                        "belief validation",
                        format!("covariance asymmetric at ({i},{j})"),
                    ));
                }
            }
        }
        Cholesky::new(self.cov.clone()).ok_or_else(|| {
            Error::numerical("belief validation", "covariance is not positive definite")
        })?;
        Ok(())
    }
}

/// Uniform prior `Σ_0 = σ_0 I` with mean `φ̂_0` (all zeros by default).
pub fn init_belief(grid: &Grid, sigma0: f64, phi0_hat: Option<DVector<f64>>) -> Result<Belief> {
    if !(sigma0.is_finite() && sigma0 > 0.0) {
        return Err(Error::config("filter.sigma0", "must be finite and positive"));
    }
    let n = grid.cell_count();
    let mean = phi0_hat.unwrap_or_else(|| DVector::zeros(n));
    if mean.len() != n {
        return Err(Error::structural(format!(
            "prior mean has {} entries for {} cells",
            mean.len(),
            n
        )));
    }
    Ok(Belief {
        mean,
        cov: DMatrix::identity(n, n) * sigma0,
        step: 0,
    })
}

/// One filter step: measurement update with the fused `(Y, y)` followed by
/// propagation through `A_next` (plus `b_next` when the filter is told about
/// the source term).
pub fn kalman_update(
    belief: &Belief,
    a_next: MatRef<'_>,
    b_next: Option<&DVector<f64>>,
    info: &InfoPair,
) -> Result<Belief> {
    let n = belief.dim();
    if a_next.dim() != n || info.dim() != n {
        return Err(Error::structural(format!(
            "kalman update dimension mismatch: belief {n}, A {}, info {}",
            a_next.dim(),
            info.dim()
        )));
    }

    let support = info.support();
    let (mid_mean, mid_cov) = if support.is_empty() {
        (belief.mean.clone(), belief.cov.clone())
    } else {
        measurement_update(belief, info, &support)?
    };

    let mut cov = a_next.sandwich(&mid_cov);
    symmetrize(&mut cov);
    let mut mean = a_next.mul_vec(&mid_mean);
    if let Some(b) = b_next {
        mean += b;
    }
    for i in 0..n {
        if !cov[(i, i)].is_finite() || cov[(i, i)] <= 0.0 {
            return Err(Error::numerical(
                "covariance propagation",
                format!(
                    "diagonal entry {i} became {} at step {}",
                    cov[(i, i)],
                    belief.step + 1
                ),
            ));
        }
        if !mean[i].is_finite() {
            return Err(Error::numerical(
                "mean propagation",
                format!("mean entry {i} became {} at step {}", mean[i], belief.step + 1),
            ));
        }
    }
    Ok(Belief {
        mean,
        cov,
        step: belief.step + 1,
    })
}

/// `(Σ⁻¹ + Y)⁻¹` applied through the inversion lemma. With `Y = E W Eᵀ`
/// (E selecting the support, W the positive diagonal weights):
///
/// ```text
/// (Σ⁻¹ + E W Eᵀ)⁻¹ = Σ − G S⁻¹ Gᵀ,   G = Σ E,   S = W⁻¹ + EᵀΣE
/// ```
fn measurement_update(
    belief: &Belief,
    info: &InfoPair,
    support: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = belief.dim();
    let c = support.len();

    let mut g = DMatrix::zeros(n, c);
    for (j, &cell) in support.iter().enumerate() {
        g.column_mut(j).copy_from(&belief.cov.column(cell));
    }
    let mut s = DMatrix::zeros(c, c);
    for (i, &ci) in support.iter().enumerate() {
        for (j, &cj) in support.iter().enumerate() {
            s[(i, j)] = belief.cov[(ci, cj)];
        }
        s[(i, i)] += 1.0 / info.y_diag[ci];
    }
    let sigma_cc = {
        let mut m = s.clone();
        for (i, &ci) in support.iter().enumerate() {
            m[(i, i)] -= 1.0 / info.y_diag[ci];
        }
        m
    };

    let chol = Cholesky::new(s.clone()).ok_or_else(|| {
        let diag_min = (0..c).map(|i| s[(i, i)]).fold(f64::MAX, f64::min);
        let diag_max = (0..c).map(|i| s[(i, i)]).fold(f64::MIN, f64::max);
        Error::numerical(
            "innovation solve (Σ⁻¹ + Y)",
            format!(
                "Cholesky failed on the {c}x{c} innovation matrix at step {}; \
                 diagonal range [{diag_min:.3e}, {diag_max:.3e}]",
                belief.step
            ),
        )
    })?;

    // Σ⁺ = Σ − G S⁻¹ Gᵀ
    let x = chol.solve(&g.transpose());
    let mid_cov = &belief.cov - &g * &x;

    // φ̂⁺ = φ̂ + (Σ⁻¹+Y)⁻¹(y − Yφ̂); the residual is supported on C and
    // (Σ − G S⁻¹ Gᵀ) E r = G (r − S⁻¹ Σ_CC r).
    let r = DVector::from_iterator(
        c,
        support
            .iter()
            .map(|&cell| info.y_vec[cell] - info.y_diag[cell] * belief.mean[cell]),
    );
    let t = chol.solve(&(&sigma_cc * &r));
    let mid_mean = &belief.mean + &g * (r - t);

    Ok((mid_mean, mid_cov))
}

/// Running accumulator for the measurement-history closed form:
///
/// ```text
/// Υ_k = Σ_0⁻¹ + Σ_{t<k} A[t:1]ᵀ Y_t A[t:1]
/// d_k = Σ_0⁻¹ φ̂_0 + Σ_{t<k} A[t:1]ᵀ y_t
/// Σ_k = P Υ_k⁻¹ Pᵀ,  φ̂_k = P Υ_k⁻¹ d_k,  P = A[k:1]
/// ```
#[derive(Debug, Clone)]
pub struct ClosedFormAccumulator {
    upsilon: DMatrix<f64>,
    data: DVector<f64>,
    /// `A[k:1]`, the propagation product over the steps pushed so far.
    prop: DMatrix<f64>,
    step: u64,
}

impl ClosedFormAccumulator {
    pub fn new(prior: &Belief) -> Result<Self> {
        let n = prior.dim();
        let prior_chol = Cholesky::new(prior.cov.clone())
            .ok_or_else(|| Error::numerical("closed form init", "prior covariance not SPD"))?;
        let sigma0_inv = prior_chol.solve(&DMatrix::identity(n, n));
        let data = &sigma0_inv * &prior.mean;
        Ok(ClosedFormAccumulator {
            upsilon: sigma0_inv,
            data,
            prop: DMatrix::identity(n, n),
            step: 0,
        })
    }

    /// Record the information observed at the current step, then fold the
    /// transition into the propagation product.
    pub fn push_step(&mut self, info: &InfoPair, a_next: MatRef<'_>) {
        let pt = self.prop.transpose();
        // Pᵀ Y P with diagonal Y touches only the support columns.
        for cell in info.support() {
            let w = info.y_diag[cell];
            let col = pt.column(cell);
            for i in 0..self.upsilon.nrows() {
                for j in 0..self.upsilon.ncols() {
                    self.upsilon[(i, j)] += w * col[i] * col[j];
                }
            }
            self.data.axpy(info.y_vec[cell], &col.clone_owned(), 1.0);
        }
        self.prop = a_next.mul_dense(&self.prop);
        self.step += 1;
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Evaluate the closed form into a belief at the accumulator's step.
pub fn closed_form_belief(acc: &ClosedFormAccumulator) -> Result<Belief> {
    let chol = Cholesky::new(acc.upsilon.clone())
        .ok_or_else(|| Error::numerical("closed form solve", "Υ is not positive definite"))?;
    let inner = chol.solve(&acc.prop.transpose());
    let mut cov = &acc.prop * inner;
    symmetrize(&mut cov);
    let mean = &acc.prop * chol.solve(&acc.data);
    Ok(Belief {
        mean,
        cov,
        step: acc.step,
    })
}
