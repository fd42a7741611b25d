//! Lattice environment: the grid, the ground-truth linear time-varying field
//! dynamics, and the convection-diffusion scenario generator.
//!
//! The field lives on a `D × D` lattice flattened row-major into a length
//! `N = D²` vector of non-negative levels. Dynamics are
//! `φ_{k+1} = A_{k+1} φ_k + b_{k+1}` with invertible transition matrices; the
//! bundled generator discretizes a convection-diffusion equation with an
//! explicit-Euler 5-point stencil (central differences for diffusion, upwind
//! fluxes for convection, zero-flux boundary) so that total mass is conserved
//! and non-negativity is preserved under the CFL constraint.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, MatRef};

/// Square lattice of `side × side` cells, indexed row-major from 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    side: usize,
}

impl Grid {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::config("grid.size", "must be at least 1"));
        }
        Ok(Grid { side })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cell_count(&self) -> usize {
        self.side * self.side
    }

    /// (row, col) of a flat cell index.
    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        debug_assert!(cell < self.cell_count());
        (cell / self.side, cell % self.side)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.side && col < self.side);
        row * self.side + col
    }

    /// Cell-center position in cell units, x along columns, y along rows.
    pub fn position(&self, cell: usize) -> (f64, f64) {
        let (r, c) = self.row_col(cell);
        (c as f64, r as f64)
    }

    pub fn contains(&self, cell: usize) -> bool {
        cell < self.cell_count()
    }
}

/// Field levels over the grid at one timestep. All entries non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub values: DVector<f64>,
    pub step: u64,
}

impl FieldState {
    pub fn new(values: DVector<f64>, step: u64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::structural(
                "field state entries must be finite and non-negative",
            ));
        }
        Ok(FieldState { values, step })
    }

    pub fn zeros(grid: &Grid) -> Self {
        FieldState {
            values: DVector::zeros(grid.cell_count()),
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// One injection site of the scenario generator. `rate` is the already
/// scaled source strength `Q/(cρ)` in field units per time unit; the affine
/// term carries `rate · dt` while the source is active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceTerm {
    pub cell: usize,
    pub rate: f64,
    /// Source feeds the transitions into steps `1..=until_step` of a run;
    /// 0 means the source is only active during scenario warm-up.
    pub until_step: u64,
}

#[derive(Debug, Clone)]
enum Dynamics {
    /// One matrix for every step.
    TimeInvariant(CsrMatrix),
    /// Explicit per-step matrices; `seq[k-1]` is `A_k`. Test scenarios only.
    Sequence(Vec<DMatrix<f64>>),
}

/// The sequence of transition matrices `A_k`, the affine source term `b_k`,
/// and the declared propagation bounds `(α_lo, α_hi)` such that every checked
/// product `A[k:t]ᵀ A[k:t]` has eigenvalues in `[α_lo, α_hi]`.
///
/// Source rates stored here are per-step injected amounts (already scaled by
/// `dt` when coming from the scenario generator).
#[derive(Debug, Clone)]
pub struct TransitionModel {
    dynamics: Dynamics,
    sources: Vec<SourceTerm>,
    alpha_lo: f64,
    alpha_hi: f64,
}

impl TransitionModel {
    pub fn time_invariant(matrix: CsrMatrix, sources: Vec<SourceTerm>, bounds: (f64, f64)) -> Self {
        TransitionModel {
            dynamics: Dynamics::TimeInvariant(matrix),
            sources,
            alpha_lo: bounds.0,
            alpha_hi: bounds.1,
        }
    }

    /// Model from an explicit matrix sequence; `matrices[k-1]` is used for
    /// the transition into step `k`.
    pub fn from_sequence(matrices: Vec<DMatrix<f64>>, bounds: (f64, f64)) -> Self {
        assert!(!matrices.is_empty(), "sequence model needs at least one matrix");
        TransitionModel {
            dynamics: Dynamics::Sequence(matrices),
            sources: Vec::new(),
            alpha_lo: bounds.0,
            alpha_hi: bounds.1,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::time_invariant(CsrMatrix::identity(dim), Vec::new(), (1.0, 1.0))
    }

    pub fn dim(&self) -> usize {
        match &self.dynamics {
            Dynamics::TimeInvariant(a) => a.dim(),
            Dynamics::Sequence(seq) => seq[0].nrows(),
        }
    }

    /// `A_k` for `k ≥ 1`.
    pub fn matrix_at(&self, k: u64) -> MatRef<'_> {
        assert!(k >= 1, "transition matrices are indexed from 1");
        match &self.dynamics {
            Dynamics::TimeInvariant(a) => MatRef::Sparse(a),
            Dynamics::Sequence(seq) => {
                let idx = usize::try_from(k - 1).expect("step index fits in usize");
                MatRef::Dense(
                    seq.get(idx)
                        .unwrap_or_else(|| panic!("sequence model has no matrix for step {k}")),
                )
            }
        }
    }

    /// `b_k`, the source injection carried by the transition into step `k`.
    /// Returns `None` when every source is inactive (the homogeneous case).
    pub fn affine_at(&self, k: u64) -> Option<DVector<f64>> {
        assert!(k >= 1, "affine terms are indexed from 1");
        if self.sources.iter().all(|s| k > s.until_step) {
            return None;
        }
        Some(self.injection(k))
    }

    /// Source vector with every site active regardless of `until_step`;
    /// used for scenario warm-up.
    pub fn warmup_injection(&self) -> Option<DVector<f64>> {
        if self.sources.is_empty() {
            None
        } else {
            Some(self.injection(0))
        }
    }

    fn injection(&self, k: u64) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim());
        for s in &self.sources {
            if k == 0 || k <= s.until_step {
                b[s.cell] += s.rate;
            }
        }
        b
    }

    pub fn sources(&self) -> &[SourceTerm] {
        &self.sources
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.alpha_lo, self.alpha_hi)
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self.dynamics, Dynamics::TimeInvariant(_))
    }
}

/// Parameters of the convection-diffusion generator.
///
/// `diffusivity` is the combined coefficient `λ/(cρ)`; velocities are in
/// cells per time unit, x along columns and y along rows (positive y moves
/// toward higher row indices).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvectionDiffusionParams {
    pub diffusivity: f64,
    pub velocity_x: f64,
    pub velocity_y: f64,
    pub dt: f64,
    pub dx: f64,
    pub sources: Vec<SourceTerm>,
}

impl ConvectionDiffusionParams {
    /// Left-hand side of the CFL stability bound
    /// `dt (4 ν / dx² + (|u_x| + |u_y|) / dx) < 1`.
    pub fn cfl_number(&self) -> f64 {
        self.dt
            * (4.0 * self.diffusivity / (self.dx * self.dx)
                + (self.velocity_x.abs() + self.velocity_y.abs()) / self.dx)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        if !(finite(self.dt) && self.dt > 0.0) {
            return Err(Error::config("dynamics.dt", "must be finite and positive"));
        }
        if !(finite(self.dx) && self.dx > 0.0) {
            return Err(Error::config("dynamics.dx", "must be finite and positive"));
        }
        if !(finite(self.diffusivity) && self.diffusivity >= 0.0) {
            return Err(Error::config(
                "dynamics.diffusivity",
                "must be finite and non-negative",
            ));
        }
        if !finite(self.velocity_x) || !finite(self.velocity_y) {
            return Err(Error::config(
                "dynamics.velocity_x/velocity_y",
                "must be finite",
            ));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !grid.contains(s.cell) {
                return Err(Error::config(
                    format!("dynamics.sources[{i}].cell"),
                    format!("cell {} outside grid of {} cells", s.cell, grid.cell_count()),
                ));
            }
            if !finite(s.rate) || s.rate < 0.0 {
                return Err(Error::config(
                    format!("dynamics.sources[{i}].rate"),
                    "must be finite and non-negative",
                ));
            }
        }
        let cfl = self.cfl_number();
        if cfl.is_nan() || cfl >= 1.0 {
            return Err(Error::config(
                "dynamics",
                format!(
                    "CFL stability violated: dt*(4*diffusivity/dx^2 + (|u_x|+|u_y|)/dx) = {cfl:.6} must be < 1"
                ),
            ));
        }
        Ok(())
    }
}

/// Advance the field one step: `φ_{k+1} = A_{k+1} φ_k + b_{k+1}`.
///
/// Negative entries (possible only for hand-supplied matrices, never for the
/// bundled generator under CFL) are clamped to zero and logged as a
/// model-fidelity warning.
pub fn step_state(model: &TransitionModel, state: &FieldState) -> Result<FieldState> {
    if state.len() != model.dim() {
        return Err(Error::structural(format!(
            "field has {} cells but the transition model expects {}",
            state.len(),
            model.dim()
        )));
    }
    let next_step = state.step + 1;
    let mut values = model.matrix_at(next_step).mul_vec(&state.values);
    if let Some(b) = model.affine_at(next_step) {
        values += b;
    }
    let mut clamped = 0usize;
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            clamped += 1;
        }
    }
    if clamped > 0 {
        log::warn!(
            "step {next_step}: clamped {clamped} negative field entr{} to zero; \
             the dynamics model assumes positivity is preserved",
            if clamped == 1 { "y" } else { "ies" }
        );
    }
    Ok(FieldState {
        values,
        step: next_step,
    })
}

/// Build the time-invariant transition matrix of the convection-diffusion
/// scenario in conservative (finite-volume) form.
///
/// Diffusive exchange `ν (φ_nbr − φ_cell)` uses the central 5-point stencil;
/// convection moves mass between adjacent cells following the upwind
/// direction. All boundary fluxes are zero, so every column of `A` sums to 1
/// and total mass is conserved for any velocity.
pub fn build_convection_diffusion(
    params: &ConvectionDiffusionParams,
    grid: &Grid,
) -> Result<TransitionModel> {
    params.validate(grid)?;
    let d = grid.side();
    let n = grid.cell_count();
    let nu = params.diffusivity * params.dt / (params.dx * params.dx);
    let cx = params.velocity_x * params.dt / params.dx;
    let cy = params.velocity_y * params.dt / params.dx;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(5 * n);
    for i in 0..n {
        triplets.push((i, i, 1.0));
    }
    let mut transfer = |from: usize, to: usize, rate: f64| {
        if rate == 0.0 {
            return;
        }
        triplets.push((from, from, -rate));
        triplets.push((to, from, rate));
    };

    for r in 0..d {
        for c in 0..d {
            let i = grid.index(r, c);
            if nu > 0.0 {
                if c + 1 < d {
                    let j = grid.index(r, c + 1);
                    transfer(i, j, nu);
                    transfer(j, i, nu);
                }
                if r + 1 < d {
                    let j = grid.index(r + 1, c);
                    transfer(i, j, nu);
                    transfer(j, i, nu);
                }
            }
            // Upwind convection: positive velocity moves mass toward higher
            // indices along that axis; the domain boundary is a wall.
            if cx > 0.0 && c + 1 < d {
                transfer(i, grid.index(r, c + 1), cx);
            }
            if cx < 0.0 && c > 0 {
                transfer(i, grid.index(r, c - 1), -cx);
            }
            if cy > 0.0 && r + 1 < d {
                transfer(i, grid.index(r + 1, c), cy);
            }
            if cy < 0.0 && r > 0 {
                transfer(i, grid.index(r - 1, c), -cy);
            }
        }
    }

    let matrix = CsrMatrix::from_triplets(n, &triplets)?;
    let bounds = conservative_bounds(&matrix, n);
    // b_k carries rate·dt per active source.
    let sources = params
        .sources
        .iter()
        .map(|s| SourceTerm {
            cell: s.cell,
            rate: s.rate * params.dt,
            until_step: s.until_step,
        })
        .collect();
    Ok(TransitionModel::time_invariant(matrix, sources, bounds))
}

/// Declared Assumption-1 bounds for a conservative stencil matrix.
///
/// Entries of `A` (and of any product of such matrices) lie in `[0, 1]` with
/// unit column sums, so `‖A[k:t]‖₁ = 1` and `‖A[k:t]‖_∞ ≤ N`, giving
/// `λ_max(A[k:t]ᵀA[k:t]) ≤ N` for every horizon. The lower bound is a weak
/// non-singularity claim: `σ_min(A)` is measured exactly for small grids and
/// the declared floor only asserts that products stay invertible.
fn conservative_bounds(matrix: &CsrMatrix, n: usize) -> (f64, f64) {
    let alpha_hi = n as f64;
    let alpha_lo = if n <= 400 {
        let svd = matrix.to_dense().svd(false, false);
        let sigma_min = svd.singular_values.iter().copied().fold(f64::MAX, f64::min);
        if sigma_min <= 0.0 {
            f64::MIN_POSITIVE
        } else {
            // Valid for any horizon up to ~8000 steps before underflow.
            (sigma_min.min(1.0)).powi(2 * 4096).max(f64::MIN_POSITIVE)
        }
    } else {
        f64::MIN_POSITIVE
    };
    (alpha_lo, alpha_hi)
}

/// Result of sweeping the propagation products `A[k:t]ᵀ A[k:t]` over a
/// horizon: extreme eigenvalues, singularity detection, and whether the
/// model's declared bounds were violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsBoundsReport {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub singular: bool,
    pub declared_violated: bool,
}

impl DynamicsBoundsReport {
    pub fn passes(&self) -> bool {
        !self.singular && !self.declared_violated && self.alpha_min > 0.0
    }
}

/// Compute the extreme eigenvalues of `A[k:t]ᵀ A[k:t]` over all
/// `1 ≤ t ≤ k ≤ horizon`.
///
/// Singular products are reported, not treated as fatal: the caller decides
/// whether a violated assumption aborts the scenario. Time-invariant models
/// need only `horizon` products; time-varying sequences cost O(horizon²).
pub fn validate_dynamics_bounds(model: &TransitionModel, horizon: u64) -> Result<DynamicsBoundsReport> {
    if horizon < 1 {
        return Err(Error::structural("bounds validation needs horizon >= 1"));
    }
    let n = model.dim();
    let mut alpha_min = f64::MAX;
    let mut alpha_max = f64::MIN;
    let mut scan = |product: &DMatrix<f64>| {
        let gram = product.transpose() * product;
        let eigs = gram.symmetric_eigenvalues();
        for e in eigs.iter() {
            alpha_min = alpha_min.min(*e);
            alpha_max = alpha_max.max(*e);
        }
    };

    if model.is_time_invariant() {
        let a = model.matrix_at(1);
        let mut product = a.to_dense();
        for len in 1..=horizon {
            scan(&product);
            if len < horizon {
                product = a.mul_dense(&product);
            }
        }
    } else {
        for t in 1..=horizon {
            let mut product = DMatrix::identity(n, n);
            for k in t..=horizon {
                product = model.matrix_at(k).mul_dense(&product);
                scan(&product);
            }
        }
    }

    let singular = alpha_min <= 1e-12 * alpha_max.max(1.0);
    let (lo, hi) = model.bounds();
    let tol = 1e-9;
    let declared_violated = alpha_min < lo * (1.0 - tol) || alpha_max > hi * (1.0 + tol);
    if singular {
        log::warn!(
            "dynamics bounds sweep found a near-singular propagation product \
             (min eigenvalue {alpha_min:.3e})"
        );
    }
    Ok(DynamicsBoundsReport {
        alpha_min,
        alpha_max,
        singular,
        declared_violated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(values: &[f64]) -> FieldState {
        FieldState::new(DVector::from_vec(values.to_vec()), 0).unwrap()
    }

    #[test]
    fn identity_step_is_a_fixed_point() {
        let model = TransitionModel::identity(3);
        let next = step_state(&model, &state(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(next.values.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn scalar_scaling_step() {
        let two_i = DMatrix::identity(3, 3) * 2.0;
        let model = TransitionModel::from_sequence(vec![two_i], (4.0, 4.0));
        let next = step_state(&model, &state(&[1.0, 0.0, 4.0])).unwrap();
        assert_eq!(next.values.as_slice(), &[2.0, 0.0, 8.0]);
    }

    #[test]
    fn step_rejects_dimension_mismatch() {
        let model = TransitionModel::identity(4);
        let err = step_state(&model, &state(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn pure_diffusion_spreads_center_mass_to_neighbors() {
        // dt·ν/dx² = 0.1: the center of a 3x3 grid loses 0.4 of its mass,
        // 0.1 to each of its 4 neighbors.
        let grid = Grid::new(3).unwrap();
        let params = ConvectionDiffusionParams {
            diffusivity: 0.1,
            velocity_x: 0.0,
            velocity_y: 0.0,
            dt: 1.0,
            dx: 1.0,
            sources: vec![],
        };
        let model = build_convection_diffusion(&params, &grid).unwrap();
        let mut phi = DVector::zeros(9);
        phi[4] = 1.0;
        let next = step_state(&model, &FieldState::new(phi, 0).unwrap()).unwrap();
        assert_relative_eq!(next.values[4], 0.6, epsilon = 1e-12);
        for nbr in [1, 3, 5, 7] {
            assert_relative_eq!(next.values[nbr], 0.1, epsilon = 1e-12);
        }
        for corner in [0, 2, 6, 8] {
            assert_eq!(next.values[corner], 0.0);
        }
    }

    #[test]
    fn zero_transport_gives_identity() {
        let grid = Grid::new(4).unwrap();
        let params = ConvectionDiffusionParams {
            diffusivity: 0.0,
            velocity_x: 0.0,
            velocity_y: 0.0,
            dt: 1.0,
            dx: 1.0,
            sources: vec![],
        };
        let model = build_convection_diffusion(&params, &grid).unwrap();
        let a = model.matrix_at(1).to_dense();
        assert_relative_eq!(a, DMatrix::identity(16, 16), epsilon = 1e-15);
    }

    #[test]
    fn pure_diffusion_rows_sum_to_one() {
        let grid = Grid::new(5).unwrap();
        let params = ConvectionDiffusionParams {
            diffusivity: 0.2,
            velocity_x: 0.0,
            velocity_y: 0.0,
            dt: 1.0,
            dx: 1.0,
            sources: vec![],
        };
        let model = build_convection_diffusion(&params, &grid).unwrap();
        let a = model.matrix_at(1).to_dense();
        for r in 0..25 {
            assert_relative_eq!(a.row(r).sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cfl_violation_is_a_config_error() {
        let grid = Grid::new(3).unwrap();
        let params = ConvectionDiffusionParams {
            diffusivity: 0.3,
            velocity_x: 0.0,
            velocity_y: 0.0,
            dt: 1.0,
            dx: 1.0,
            sources: vec![],
        };
        // dt·4ν/dx² = 1.2 ≥ 1.
        let err = build_convection_diffusion(&params, &grid).unwrap_err();
        match err {
            Error::Config { key, message } => {
                assert_eq!(key, "dynamics");
                assert!(message.contains("CFL"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn mass_is_conserved_without_velocity_and_sources() {
        let grid = Grid::new(6).unwrap();
        let params = ConvectionDiffusionParams {
            diffusivity: 0.15,
            velocity_x: 0.0,
            velocity_y: 0.0,
            dt: 1.0,
            dx: 1.0,
            sources: vec![],
        };
        let model = build_convection_diffusion(&params, &grid).unwrap();
        let mut phi = DVector::zeros(36);
        phi[7] = 3.0;
        phi[20] = 1.5;
        let mut st = FieldState::new(phi, 0).unwrap();
        let mass0: f64 = st.values.sum();
        for _ in 0..50 {
            st = step_state(&model, &st).unwrap();
            let mass: f64 = st.values.sum();
            assert_relative_eq!(mass, mass0, max_relative = 1e-9);
        }
    }

    #[test]
    fn mass_is_conserved_with_convection_too() {
        // The finite-volume upwind form keeps column sums at 1 even with
        // velocity, so the zero-flux walls hold all mass in.
        let grid = Grid::new(5).unwrap();
        let params = ConvectionDiffusionParams {
            diffusivity: 0.05,
            velocity_x: 0.3,
            velocity_y: -0.2,
            dt: 1.0,
            dx: 1.0,
            sources: vec![],
        };
        let model = build_convection_diffusion(&params, &grid).unwrap();
        let mut st = FieldState::new(DVector::from_element(25, 0.5), 0).unwrap();
        let mass0: f64 = st.values.sum();
        for _ in 0..100 {
            st = step_state(&model, &st).unwrap();
        }
        assert_relative_eq!(st.values.sum(), mass0, max_relative = 1e-9);
        assert!(st.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn repeated_steps_match_propagation_product() {
        // k applications of step_state with b = 0 equal A[k:1]·φ_0.
        let mats: Vec<DMatrix<f64>> = (0..6)
            .map(|i| {
                DMatrix::from_fn(4, 4, |r, c| {
                    if r == c {
                        1.0 + 0.05 * (i as f64 + 1.0)
                    } else {
                        0.02 * ((r + 2 * c + i) % 3) as f64
                    }
                })
            })
            .collect();
        let model = TransitionModel::from_sequence(mats.clone(), (0.1, 10.0));
        let phi0 = DVector::from_vec(vec![1.0, 0.5, 2.0, 0.25]);
        let mut st = FieldState::new(phi0.clone(), 0).unwrap();
        let mut product = DMatrix::identity(4, 4);
        for a in &mats {
            st = step_state(&model, &st).unwrap();
            product = a * &product;
            let expected = &product * &phi0;
            for i in 0..4 {
                assert_relative_eq!(st.values[i], expected[i], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn generated_matrix_is_invertible_under_cfl() {
        let grid = Grid::new(7).unwrap();
        for (nu, ux, uy) in [(0.2, 0.0, 0.0), (0.1, 0.25, -0.15), (0.0, 0.4, 0.4)] {
            let params = ConvectionDiffusionParams {
                diffusivity: nu,
                velocity_x: ux,
                velocity_y: uy,
                dt: 1.0,
                dx: 1.0,
                sources: vec![],
            };
            let model = build_convection_diffusion(&params, &grid).unwrap();
            let a = model.matrix_at(1).to_dense();
            let rhs = DVector::from_fn(49, |i, _| (i as f64 * 0.37).sin() + 2.0);
            let lu = a.clone().lu();
            let solved = lu.solve(&rhs).expect("CFL-stable stencil must be invertible");
            assert_relative_eq!(&a * &solved, rhs, max_relative = 1e-8);
        }
    }

    #[test]
    fn bounds_sweep_identity() {
        let model = TransitionModel::identity(4);
        let report = validate_dynamics_bounds(&model, 10).unwrap();
        assert_relative_eq!(report.alpha_min, 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.alpha_max, 1.0, epsilon = 1e-12);
        assert!(report.passes());
    }

    #[test]
    fn bounds_sweep_doubling_matrix() {
        // A_k = 2I, horizon 2: products 2I and 4I give eigenvalues 4 and 16.
        let seq = vec![DMatrix::identity(3, 3) * 2.0, DMatrix::identity(3, 3) * 2.0];
        let model = TransitionModel::from_sequence(seq, (4.0, 16.0));
        let report = validate_dynamics_bounds(&model, 2).unwrap();
        assert_relative_eq!(report.alpha_min, 4.0, epsilon = 1e-10);
        assert_relative_eq!(report.alpha_max, 16.0, epsilon = 1e-10);
        assert!(!report.declared_violated);
    }

    #[test]
    fn bounds_sweep_permutation_is_orthogonal() {
        // A fixed permutation matrix: all products are permutations, so
        // AᵀA = I and the sweep reports (1, 1).
        let mut p = DMatrix::zeros(4, 4);
        p[(0, 2)] = 1.0;
        p[(1, 0)] = 1.0;
        p[(2, 3)] = 1.0;
        p[(3, 1)] = 1.0;
        let seq = vec![p.clone(), p.clone(), p.clone(), p];
        let model = TransitionModel::from_sequence(seq, (1.0, 1.0));
        let report = validate_dynamics_bounds(&model, 4).unwrap();
        assert_relative_eq!(report.alpha_min, 1.0, epsilon = 1e-10);
        assert_relative_eq!(report.alpha_max, 1.0, epsilon = 1e-10);
        assert!(report.passes());
    }

    #[test]
    fn bounds_sweep_flags_singular_products() {
        let mut a = DMatrix::identity(2, 2);
        a[(1, 1)] = 0.0;
        let model = TransitionModel::from_sequence(vec![a], (1.0, 1.0));
        let report = validate_dynamics_bounds(&model, 1).unwrap();
        assert!(report.singular);
        assert!(!report.passes());
    }

    #[test]
    fn negative_entries_are_clamped() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 1.0]);
        let model = TransitionModel::from_sequence(vec![a], (0.1, 10.0));
        let next = step_state(&model, &state(&[1.0, 1.0])).unwrap();
        assert_eq!(next.values[0], 0.0);
        assert_eq!(next.values[1], 1.0);
    }

    #[test]
    fn sources_follow_schedule() {
        let grid = Grid::new(2).unwrap();
        let params = ConvectionDiffusionParams {
            diffusivity: 0.0,
            velocity_x: 0.0,
            velocity_y: 0.0,
            dt: 0.5,
            dx: 1.0,
            sources: vec![SourceTerm {
                cell: 1,
                rate: 2.0,
                until_step: 2,
            }],
        };
        let model = build_convection_diffusion(&params, &grid).unwrap();
        // b carries rate·dt while the source is active.
        let b1 = model.affine_at(1).unwrap();
        assert_eq!(b1[1], 2.0 * 0.5);
        assert!(model.affine_at(2).is_some());
        assert!(model.affine_at(3).is_none());
        assert!(model.warmup_injection().is_some());
    }
}
