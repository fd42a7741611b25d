//! The dummy upper confidence bound: per-cell bounds
//! `μ = φ̂ + β_k(δ) · sqrt(diag Σ)` and the confidence schedule
//!
//! ```text
//! β_k(δ) = scale · [ N^{3/2} C₁ + N² C₂ √( log( (σ̄/σ̲ + ᾱσ̄k/v̲²) / δ^{2/N} ) ) ]
//! ```
//!
//! taken at equality, the smallest compliant value. Bounds are marginal
//! (coordinate-wise), which is what lets the multi-agent argmax decompose
//! into a plain top-I selection. The `scale` knob exists because the N²
//! factor is astronomically conservative at production grid sizes; bound
//! validity holds at `scale = 1` and tracking experiments document the scale
//! they use.

use nalgebra::DVector;

use crate::environment::FieldState;
use crate::error::{Error, Result};
use crate::estimation::Belief;

/// Parameters of the β_k(δ) schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSchedule {
    /// Confidence level, in (0, 1).
    pub delta: f64,
    /// `‖φ̂_0 − φ_0‖ / √σ̲`, supplied as a configured prior error bound
    /// since the true initial error is unknown at run time.
    pub c1: f64,
    /// `v̄² √max{2, 2/v̲}`.
    pub c2: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub alpha_hi: f64,
    pub v_lo: f64,
    pub dim: usize,
    /// Practical tuning multiplier, 1 for the exact schedule.
    pub scale: f64,
}

impl BetaSchedule {
    /// Derive the constants from scenario-level bounds.
    ///
    /// `prior_error_bound` is an upper bound on `‖φ̂_0 − φ_0‖`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_bounds(
        delta: f64,
        prior_error_bound: f64,
        sigma_lo: f64,
        sigma_hi: f64,
        alpha_hi: f64,
        v_lo: f64,
        v_hi: f64,
        dim: usize,
        scale: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("ducb.delta", "must lie strictly in (0, 1)"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::config("ducb.beta_scale", "must be finite and positive"));
        }
        if !(sigma_lo > 0.0 && sigma_hi >= sigma_lo) {
            return Err(Error::config("filter.sigma0", "prior bounds must be positive"));
        }
        if !(v_lo > 0.0 && v_hi >= v_lo) {
            return Err(Error::config(
                "agents.noise_variance",
                "noise variance bounds must be positive",
            ));
        }
        if alpha_hi.is_nan() || alpha_hi <= 0.0 {
            return Err(Error::structural("alpha_hi must be positive"));
        }
        if prior_error_bound.is_nan() || prior_error_bound < 0.0 {
            return Err(Error::config(
                "ducb.prior_error_bound",
                "must be non-negative",
            ));
        }
        Ok(BetaSchedule {
            delta,
            c1: prior_error_bound / sigma_lo.sqrt(),
            c2: v_hi * v_hi * f64::max(2.0, 2.0 / v_lo).sqrt(),
            sigma_lo,
            sigma_hi,
            alpha_hi,
            v_lo,
            dim,
            scale,
        })
    }

    /// β_k(δ). Defined for every k ≥ 0; the log argument is at least 1
    /// because σ̄/σ̲ ≥ 1 and δ < 1.
    pub fn value(&self, k: u64) -> f64 {
        let n = self.dim as f64;
        let ratio = self.sigma_hi / self.sigma_lo
            + self.alpha_hi * self.sigma_hi * (k as f64) / (self.v_lo * self.v_lo);
        let delta_pow = (2.0 / n * self.delta.ln()).exp();
        let log_arg = ratio / delta_pow;
        let log_term = log_arg.ln().max(0.0);
        self.scale * (n.powf(1.5) * self.c1 + n * n * self.c2 * log_term.sqrt())
    }
}

/// The D-UCB vector at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DucbVector {
    pub mu: DVector<f64>,
    pub beta_used: f64,
    pub step: u64,
}

/// `μ = φ̂ + β · sqrt(diag Σ)` elementwise.
pub fn ducb(belief: &Belief, beta_k: f64) -> Result<DucbVector> {
    if beta_k.is_nan() || beta_k < 0.0 {
        return Err(Error::structural("beta must be non-negative"));
    }
    let n = belief.dim();
    let mut mu = belief.mean.clone();
    for i in 0..n {
        let var = belief.cov[(i, i)];
        if var < 0.0 {
            return Err(Error::numerical(
                "ducb",
                format!("covariance diagonal entry {i} is negative ({var})"),
            ));
        }
        mu[i] += beta_k * var.sqrt();
    }
    Ok(DucbVector {
        mu,
        beta_used: beta_k,
        step: belief.step,
    })
}

/// Does the true field lie inside the elementwise confidence box
/// `|φ̂ − φ| ⪯ β · sqrt(diag Σ)`? Equivalently, membership of the error in
/// the `‖·‖_{D^{-1/2}_Σ,∞} ≤ β` polytope.
pub fn coverage_check(belief: &Belief, truth: &FieldState, beta_k: f64) -> bool {
    debug_assert_eq!(belief.dim(), truth.len());
    belief
        .mean
        .iter()
        .zip(truth.values.iter())
        .enumerate()
        .all(|(i, (m, t))| (m - t).abs() <= beta_k * belief.cov[(i, i)].max(0.0).sqrt())
}
