//! Per-step assignment problems: D-UCB maximization, the mean-greedy
//! baseline, the repeating sweep baseline, and the clairvoyant optimum.
//!
//! The objective sums all *distinct* field values under the agents'
//! positions, so occupying a cell twice wastes an agent. Because the D-UCB
//! takes its bounds marginally, maximizing over the assignment set reduces
//! to picking the I cells with the largest scores; ties break toward the
//! lowest cell index everywhere so runs are reproducible.

use nalgebra::DVector;

use crate::ducb::DucbVector;
use crate::environment::{FieldState, Grid};
use crate::error::{Error, Result};
use crate::estimation::Belief;

/// Target positions for the I agents; `positions[i]` is agent i's cell.
/// Positions are always pairwise distinct. The top-cell planners hand out
/// the selected cells in ascending index order (agents are interchangeable
/// there); the sweep binds each agent to its own track.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    positions: Vec<usize>,
}

impl Assignment {
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn agent_count(&self) -> usize {
        self.positions.len()
    }

    /// 0/1 occupancy vector over the grid.
    pub fn indicator(&self, dim: usize) -> DVector<f64> {
        let mut a = DVector::zeros(dim);
        for &p in &self.positions {
            a[p] = 1.0;
        }
        a
    }
}

/// Sum of `values` over the distinct cells in `positions`, accumulated in
/// ascending cell order.
pub fn distinct_sum(values: &DVector<f64>, positions: &[usize]) -> f64 {
    let mut cells: Vec<usize> = positions.to_vec();
    cells.sort_unstable();
    cells.dedup();
    cells.into_iter().map(|c| values[c]).sum()
}

/// Indices of the `count` largest entries, ties broken toward lower index,
/// returned in ascending index order.
fn top_cells(values: &DVector<f64>, count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        values[b]
            .total_cmp(&values[a])
            .then_with(|| a.cmp(&b))
    });
    let mut picked: Vec<usize> = order.into_iter().take(count).collect();
    picked.sort_unstable();
    picked
}

fn check_agent_count(agents: usize, dim: usize) -> Result<()> {
    if agents == 0 {
        return Err(Error::config("agents", "need at least one agent"));
    }
    if agents > dim {
        return Err(Error::config(
            "agents",
            format!("{agents} agents cannot occupy distinct cells of a {dim}-cell grid"),
        ));
    }
    Ok(())
}

/// Maximize `⟨a, μ⟩` over distinct assignments: the I cells with the largest
/// D-UCB values.
pub fn plan_ducb(mu: &DucbVector, agents: usize) -> Result<Assignment> {
    check_agent_count(agents, mu.mu.len())?;
    Ok(Assignment {
        positions: top_cells(&mu.mu, agents),
    })
}

/// The mean-greedy baseline: same selection applied to φ̂ alone.
pub fn plan_mean_greedy(belief: &Belief, agents: usize) -> Result<Assignment> {
    check_agent_count(agents, belief.dim())?;
    Ok(Assignment {
        positions: top_cells(&belief.mean, agents),
    })
}

/// Deterministic boustrophedon sweep: the grid's cells in snake order are
/// split into I contiguous tracks and agent i cycles through its own track.
pub fn plan_naive_sweep(grid: &Grid, step: u64, agents: usize) -> Result<Assignment> {
    let n = grid.cell_count();
    check_agent_count(agents, n)?;
    let snake = snake_order(grid);
    let base = n / agents;
    let extra = n % agents;
    let mut positions = Vec::with_capacity(agents);
    let mut offset = 0usize;
    for i in 0..agents {
        let len = base + usize::from(i < extra);
        let phase = (step % len as u64) as usize;
        positions.push(snake[offset + phase]);
        offset += len;
    }
    Ok(Assignment { positions })
}

/// Row-major rows, alternating direction: 0..D-1 left-to-right, next row
/// right-to-left, and so on.
pub fn snake_order(grid: &Grid) -> Vec<usize> {
    let d = grid.side();
    let mut order = Vec::with_capacity(grid.cell_count());
    for r in 0..d {
        if r % 2 == 0 {
            for c in 0..d {
                order.push(grid.index(r, c));
            }
        } else {
            for c in (0..d).rev() {
                order.push(grid.index(r, c));
            }
        }
    }
    order
}

/// Clairvoyant optimum on the true field: the top-I distinct cells and their
/// sum `F★`.
pub fn oracle_optimum(truth: &FieldState, agents: usize) -> Result<(Assignment, f64)> {
    check_agent_count(agents, truth.len())?;
    let positions = top_cells(&truth.values, agents);
    let value = distinct_sum(&truth.values, &positions);
    Ok((Assignment { positions }, value))
}

/// Exhaustive reference for the planner: maximize `⟨a, φ⟩` over every
/// distinct assignment with `φ` at the analytic maximizer of the confidence
/// polytope, `φ★ = φ̂ + β sqrt(diag Σ)`.
///
/// Enumerates all C(N, I) assignments, so it refuses dimensions above 15.
pub fn bilinear_oracle(belief: &Belief, beta_k: f64, agents: usize) -> Result<f64> {
    let n = belief.dim();
    if n > 15 {
        return Err(Error::structural(
            "bilinear oracle is an enumeration check, limited to N <= 15",
        ));
    }
    check_agent_count(agents, n)?;
    let phi_star = crate::ducb::ducb(belief, beta_k)?.mu;

    let mut best = f64::NEG_INFINITY;
    let mut subset: Vec<usize> = Vec::with_capacity(agents);
    enumerate_subsets(n, agents, 0, &mut subset, &mut |cells| {
        let value = distinct_sum(&phi_star, cells);
        if value > best {
            best = value;
        }
    });
    Ok(best)
}

fn enumerate_subsets(
    n: usize,
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if current.len() == k {
        visit(current);
        return;
    }
    let remaining = k - current.len();
    for i in start..=(n - remaining) {
        current.push(i);
        enumerate_subsets(n, k, i + 1, current, visit);
        current.pop();
    }
}

/// Visit every assignment of `k` distinct cells out of `n`: exposed for the
/// brute-force planner checks.
pub fn for_each_assignment(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut subset = Vec::with_capacity(k);
    enumerate_subsets(n, k, 0, &mut subset, &mut visit);
}
