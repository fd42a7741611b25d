//! Validated runtime scenario: everything an episode needs, assembled from a
//! [`ScenarioConfig`](crate::config::ScenarioConfig).
//!
//! Building a scenario performs the cross-module checks that the raw config
//! cannot express on its own (CFL stability, graph connectivity, noise
//! bounds, agent-count fit) and runs the source warm-up that produces the
//! initial field: sources inject for `warmup_steps` pre-roll transitions
//! before step 0, so a run whose sources have `until_step = 0` evolves
//! homogeneously for its entire tracked horizon.

use nalgebra::DVector;

use crate::config::ScenarioConfig;
use crate::consensus::CommGraph;
use crate::ducb::BetaSchedule;
use crate::environment::{
    build_convection_diffusion, ConvectionDiffusionParams, FieldState, Grid, TransitionModel,
};
use crate::error::{Error, Result};
use crate::sensing::SensorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerKind {
    Ducb,
    MeanGreedy,
    NaiveSweep,
}

impl PlannerKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ducb" => Ok(PlannerKind::Ducb),
            "mean_greedy" => Ok(PlannerKind::MeanGreedy),
            "naive_sweep" => Ok(PlannerKind::NaiveSweep),
            other => Err(Error::config(
                "planner",
                format!("unknown planner `{other}`; expected ducb | mean_greedy | naive_sweep"),
            )),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PlannerKind::Ducb => "ducb",
            PlannerKind::MeanGreedy => "mean_greedy",
            PlannerKind::NaiveSweep => "naive_sweep",
        }
    }
}

/// A fully validated experiment scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Grid,
    pub model: TransitionModel,
    /// Ground-truth field at step 0 (after warm-up pre-roll).
    pub initial_field: FieldState,
    pub agents: Vec<SensorSpec>,
    pub graph: CommGraph,
    pub sigma0: f64,
    /// Expose the source term to the filter's propagation (the default
    /// filter models the homogeneous dynamics only).
    pub filter_knows_source: bool,
    pub beta: BetaSchedule,
    pub planner: PlannerKind,
    pub horizon: u64,
    pub trials: u32,
    pub base_seed: u64,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;

        let grid = Grid::new(cfg.grid.size as usize)?;
        let params = ConvectionDiffusionParams {
            diffusivity: cfg.dynamics.diffusivity,
            velocity_x: cfg.dynamics.velocity_x,
            velocity_y: cfg.dynamics.velocity_y,
            dt: cfg.dynamics.dt,
            dx: cfg.dynamics.dx,
            sources: cfg
                .dynamics
                .sources
                .iter()
                .map(|s| crate::environment::SourceTerm {
                    cell: s.cell as usize,
                    rate: s.rate,
                    until_step: s.until_step,
                })
                .collect(),
        };
        let model = build_convection_diffusion(&params, &grid)?;
        let initial_field = warm_up(&model, &grid, cfg.dynamics.warmup_steps);

        let agents: Vec<SensorSpec> = cfg.agents.iter().map(|a| a.to_spec()).collect();
        let (v_lo, v_hi) = noise_bounds(&agents)?;

        let graph = match (&cfg.graph.kind, &cfg.graph.edges) {
            (Some(kind), None) => match kind.as_str() {
                "line" => CommGraph::line(agents.len())?,
                "ring" => CommGraph::ring(agents.len())?,
                "complete" => CommGraph::complete(agents.len())?,
                other => {
                    return Err(Error::config(
                        "graph.kind",
                        format!("unknown kind `{other}`; expected line | ring | complete"),
                    ))
                }
            },
            (None, Some(edges)) => {
                let pairs: Vec<(usize, usize)> = edges
                    .iter()
                    .map(|e| (e[0] as usize, e[1] as usize))
                    .collect();
                CommGraph::from_edges(agents.len(), &pairs)?
            }
            _ => {
                return Err(Error::config(
                    "graph",
                    "exactly one of `kind` or `edges` must be given",
                ))
            }
        };

        let n = grid.cell_count();
        let prior_error_bound = cfg
            .ducb
            .prior_error_bound
            .unwrap_or_else(|| (n as f64).sqrt() * initial_field.max_value());
        let beta = BetaSchedule::from_bounds(
            cfg.ducb.delta,
            prior_error_bound,
            cfg.filter.sigma0,
            cfg.filter.sigma0,
            model.bounds().1,
            v_lo,
            v_hi,
            n,
            cfg.ducb.beta_scale,
        )?;

        // Cheap single-step dynamics probe on grids where a dense check is
        // affordable; a violated assumption is reported, not fatal.
        if n <= 400 {
            let report = crate::environment::validate_dynamics_bounds(&model, 1)?;
            if report.singular {
                log::warn!(
                    "transition matrix is near-singular (min eigenvalue {:.3e})",
                    report.alpha_min
                );
            } else {
                log::info!(
                    "dynamics probe: single-step eigenvalue range [{:.4}, {:.4}]",
                    report.alpha_min,
                    report.alpha_max
                );
            }
        }

        Ok(Scenario {
            grid,
            model,
            initial_field,
            agents,
            graph,
            sigma0: cfg.filter.sigma0,
            filter_knows_source: cfg.filter.filter_knows_source,
            beta,
            planner: PlannerKind::parse(&cfg.planner)?,
            horizon: cfg.horizon,
            trials: cfg.trials,
            base_seed: cfg.base_seed,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn cell_count(&self) -> usize {
        self.grid.cell_count()
    }
}

/// Run the pre-roll: all sources inject for `steps` transitions starting
/// from an empty field. The result is the ground truth at step 0.
fn warm_up(model: &TransitionModel, grid: &Grid, steps: u64) -> FieldState {
    let mut values = DVector::zeros(grid.cell_count());
    if let Some(b) = model.warmup_injection() {
        let a = model.matrix_at(1);
        for _ in 0..steps {
            values = a.mul_vec(&values) + &b;
        }
    }
    FieldState { values, step: 0 }
}

fn noise_bounds(agents: &[SensorSpec]) -> Result<(f64, f64)> {
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for (i, a) in agents.iter().enumerate() {
        if !(a.noise_variance.is_finite() && a.noise_variance > 0.0) {
            return Err(Error::config(
                format!("agents[{i}].noise_variance"),
                "must be finite and positive",
            ));
        }
        lo = lo.min(a.noise_variance);
        hi = hi.max(a.noise_variance);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    #[test]
    fn builds_from_a_minimal_config() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{
                "grid": {"size": 5},
                "dynamics": {"diffusivity": 0.05, "velocity_x": 0.0, "velocity_y": 0.0,
                             "dt": 1.0, "dx": 1.0,
                             "sources": [{"cell": 12, "rate": 0.5, "until_step": 0}],
                             "warmup_steps": 10},
                "agents": [{"sensor": "circular", "radius": 1.0, "noise_variance": 1.0},
                            {"sensor": "pointwise", "noise_variance": 2.0}],
                "graph": {"kind": "line"},
                "filter": {"sigma0": 1.0, "filter_knows_source": false},
                "ducb": {"delta": 0.1, "beta_scale": 1.0},
                "planner": "ducb",
                "horizon": 10,
                "trials": 2,
                "base_seed": 7
            }"#,
        )
        .unwrap();
        let scenario = Scenario::from_config(&cfg).unwrap();
        assert_eq!(scenario.cell_count(), 25);
        assert_eq!(scenario.agent_count(), 2);
        // Warm-up injected mass around the source.
        assert!(scenario.initial_field.values[12] > 0.0);
        assert_eq!(scenario.initial_field.step, 0);
        // Sources with until_step = 0 leave the tracked phase homogeneous.
        assert!(scenario.model.affine_at(1).is_none());
        // Noise bounds feed the β schedule: v̄ = 2 → C2 = 4·√2.
        approx::assert_relative_eq!(scenario.beta.c2, 4.0 * 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn planner_names_parse() {
        assert_eq!(PlannerKind::parse("ducb").unwrap(), PlannerKind::Ducb);
        assert_eq!(
            PlannerKind::parse("mean_greedy").unwrap(),
            PlannerKind::MeanGreedy
        );
        assert_eq!(
            PlannerKind::parse("naive_sweep").unwrap(),
            PlannerKind::NaiveSweep
        );
        assert!(PlannerKind::parse("adasearch").is_err());
    }
}
