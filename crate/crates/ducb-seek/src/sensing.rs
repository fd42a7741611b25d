//! Position-dependent measurement matrices and noisy measurement draws.
//!
//! A sensor at cell `p` observes `z = H φ + n` where every row of `H` is a
//! unit vector selecting one covered cell and `n ~ N(0, v·I)`. Measurement
//! matrices are stored as sorted cell-index lists rather than dense matrices:
//! every downstream product with `H` reduces to a gather or scatter.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::environment::{FieldState, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorKind {
    /// Measures only the cell the agent occupies.
    Pointwise,
    /// Measures every cell within Euclidean distance `radius` of the agent.
    Circular,
}

/// Per-agent sensor description. `noise_variance` must be positive for a
/// valid scenario (Assumption-2 bounds are checked at scenario level); zero
/// is tolerated by the sampler as the degenerate noiseless case used in
/// tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub kind: SensorKind,
    pub radius: f64,
    pub noise_variance: f64,
}

impl SensorSpec {
    pub fn pointwise(noise_variance: f64) -> Self {
        SensorSpec {
            kind: SensorKind::Pointwise,
            radius: 0.0,
            noise_variance,
        }
    }

    pub fn circular(radius: f64, noise_variance: f64) -> Self {
        SensorSpec {
            kind: SensorKind::Circular,
            radius,
            noise_variance,
        }
    }
}

/// The sensing footprint `C` at a position: a sorted list of distinct cell
/// indices. The implied measurement matrix has one row `e_lᵀ` per entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementMatrix {
    cells: Vec<usize>,
}

impl MeasurementMatrix {
    /// Build directly from a footprint; indices must be strictly ascending.
    pub fn from_cells(cells: Vec<usize>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::structural("a measurement matrix needs at least one row"));
        }
        if !cells.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::structural(
                "footprint cells must be sorted and distinct",
            ));
        }
        Ok(MeasurementMatrix { cells })
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Number of rows `m`.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `H φ`: gather the selected entries in cell order.
    pub fn select(&self, values: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.cells.len(), self.cells.iter().map(|&c| values[c]))
    }
}

/// One noisy observation: `values[j]` measures `cells[j]` of the generating
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub values: DVector<f64>,
    pub agent: usize,
    pub step: u64,
}

/// Build the measurement matrix for a sensor at `position`.
///
/// Circular footprints include cells at exactly the radius; distances are
/// Euclidean between cell centers and the footprint is clipped to the grid.
pub fn measurement_matrix(
    position: usize,
    spec: &SensorSpec,
    grid: &Grid,
) -> Result<MeasurementMatrix> {
    if !grid.contains(position) {
        return Err(Error::structural(format!(
            "sensor position {position} outside grid of {} cells",
            grid.cell_count()
        )));
    }
    let cells = match spec.kind {
        SensorKind::Pointwise => vec![position],
        SensorKind::Circular => {
            let d = grid.side() as isize;
            let (row, col) = grid.row_col(position);
            let (row, col) = (row as isize, col as isize);
            let r = spec.radius.max(0.0);
            let reach = r.floor() as isize;
            let r_sq = r * r;
            let mut cells = Vec::new();
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let (nr, nc) = (row + dr, col + dc);
                    if nr < 0 || nc < 0 || nr >= d || nc >= d {
                        continue;
                    }
                    let dist_sq = (dr * dr + dc * dc) as f64;
                    if dist_sq <= r_sq {
                        cells.push(grid.index(nr as usize, nc as usize));
                    }
                }
            }
            cells.sort_unstable();
            cells
        }
    };
    debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
    Ok(MeasurementMatrix { cells })
}

/// Draw `z = H φ + n` with `n ~ N(0, v·I)` from the supplied stream.
///
/// Deterministic given the stream state; a zero-variance spec short-circuits
/// the noise draw entirely.
pub fn sample_measurement<R: Rng + ?Sized>(
    h: &MeasurementMatrix,
    state: &FieldState,
    spec: &SensorSpec,
    agent: usize,
    rng: &mut R,
) -> Measurement {
    let mut values = h.select(&state.values);
    if spec.noise_variance > 0.0 {
        let normal = Normal::new(0.0, spec.noise_variance.sqrt())
            .expect("positive finite variance yields a valid normal");
        for v in values.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    Measurement {
        values,
        agent,
        step: state.step,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn field(n: usize) -> FieldState {
        FieldState::new(DVector::from_fn(n, |i, _| i as f64), 3).unwrap()
    }

    #[test]
    fn pointwise_selects_single_cell() {
        let grid = Grid::new(4).unwrap();
        let h = measurement_matrix(7, &SensorSpec::pointwise(1.0), &grid).unwrap();
        assert_eq!(h.cells(), &[7]);
    }

    #[test]
    fn circular_radius_zero_degenerates_to_pointwise() {
        let grid = Grid::new(4).unwrap();
        let h = measurement_matrix(7, &SensorSpec::circular(0.0, 1.0), &grid).unwrap();
        assert_eq!(h.cells(), &[7]);
    }

    #[test]
    fn circular_radius_three_far_from_boundary_covers_29_cells() {
        // Lattice offsets with dx² + dy² ≤ 9: 29 of them.
        let grid = Grid::new(50).unwrap();
        let center = grid.index(25, 25);
        let h = measurement_matrix(center, &SensorSpec::circular(3.0, 1.0), &grid).unwrap();
        assert_eq!(h.len(), 29);
        assert!(h.cells().contains(&grid.index(22, 25)));
        assert!(!h.cells().contains(&grid.index(22, 24)));
    }

    #[test]
    fn circular_footprint_clips_at_grid_edges() {
        let grid = Grid::new(5).unwrap();
        let h = measurement_matrix(0, &SensorSpec::circular(1.0, 1.0), &grid).unwrap();
        assert_eq!(h.cells(), &[0, 1, 5]);
    }

    #[test]
    fn invalid_position_is_structural_error() {
        let grid = Grid::new(3).unwrap();
        assert!(measurement_matrix(9, &SensorSpec::pointwise(1.0), &grid).is_err());
    }

    #[test]
    fn zero_noise_returns_exact_field_values() {
        let grid = Grid::new(3).unwrap();
        let st = field(9);
        let h = measurement_matrix(3, &SensorSpec::pointwise(0.0), &grid).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let z = sample_measurement(&h, &st, &SensorSpec::pointwise(0.0), 0, &mut rng);
        assert_eq!(z.values.as_slice(), &[3.0]);
        assert_eq!(z.agent, 0);
        assert_eq!(z.step, 3);
    }

    #[test]
    fn fixed_seed_gives_identical_measurements() {
        let grid = Grid::new(4).unwrap();
        let st = field(16);
        let spec = SensorSpec::circular(2.0, 1.5);
        let h = measurement_matrix(5, &spec, &grid).unwrap();
        let draw = || {
            let mut rng = ChaCha12Rng::seed_from_u64(42);
            sample_measurement(&h, &st, &spec, 1, &mut rng)
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn selection_matches_direct_indexing() {
        let grid = Grid::new(5).unwrap();
        let st = field(25);
        let spec = SensorSpec::circular(2.0, 1.0);
        let h = measurement_matrix(12, &spec, &grid).unwrap();
        let selected = h.select(&st.values);
        for (j, &c) in h.cells().iter().enumerate() {
            assert_eq!(selected[j], st.values[c]);
        }
    }

    #[test]
    fn noise_statistics_match_spec() {
        // Empirical mean within the 4σ/√n CLT bound and variance within 5%.
        let grid = Grid::new(2).unwrap();
        let st = FieldState::new(DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), 0).unwrap();
        let v = 0.7;
        let spec = SensorSpec::pointwise(v);
        let h = measurement_matrix(2, &spec, &grid).unwrap();
        let n = 100_000usize;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = sample_measurement(&h, &st, &spec, 0, &mut rng);
            let noise = z.values[0] - 3.0;
            sum += noise;
            sum_sq += noise * noise;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() <= 4.0 * (v / n as f64).sqrt(), "mean {mean}");
        assert!((var - v).abs() <= 0.05 * v, "variance {var}");
    }
}
