//! Episode execution and regret evaluation.
//!
//! One episode runs the seek loop for a fixed horizon: measure at the
//! current assignments, fuse local information, update the shared belief,
//! form the bounds, re-plan, score regret against the clairvoyant optimum on
//! the true field, and advance the field. Everything is deterministic given
//! `(scenario, seed)`; trials of a Monte-Carlo batch differ only in their
//! measurement-noise streams.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::consensus::{aggregate, local_information, InfoPair};
use crate::ducb::{coverage_check, ducb};
use crate::environment::step_state;
use crate::error::Result;
use crate::estimation::{init_belief, kalman_update, Belief};
use crate::planning::{
    distinct_sum, oracle_optimum, plan_ducb, plan_mean_greedy, plan_naive_sweep, Assignment,
};
use crate::scenario::{PlannerKind, Scenario};
use crate::sensing::measurement_matrix;

/// One step of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: u64,
    pub f_star: f64,
    pub f_actual: f64,
    /// `F★ − F_actual ≥ 0`.
    pub regret: f64,
    /// Whether the true field sat inside the step's confidence box.
    pub coverage: bool,
    /// Agent positions occupied (and measured at) during this step.
    pub positions: Vec<usize>,
}

/// A completed trial: per-step records plus cumulative regret prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub cum_regret: Vec<f64>,
}

impl TrialTrace {
    pub fn final_cum_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    pub fn max_regret(&self) -> f64 {
        self.records.iter().map(|r| r.regret).fold(0.0, f64::max)
    }
}

/// Structured report for a trial aborted by numerical degeneracy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub seed: u64,
    pub step: u64,
    pub reason: String,
}

impl std::fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "trial with seed {} aborted at step {}: {}",
            self.seed, self.step, self.reason
        )
    }
}

/// Run one episode of `scenario.horizon` steps.
pub fn run_episode(scenario: &Scenario, seed: u64) -> std::result::Result<TrialTrace, TrialFailure> {
    let agents = scenario.agent_count();
    let n = scenario.cell_count();
    let fail = |step: u64, reason: String| TrialFailure { seed, step, reason };

    // One independent noise stream per agent.
    let mut rngs: Vec<ChaCha12Rng> = (0..agents)
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect();

    let mut truth = scenario.initial_field.clone();
    let mut belief = init_belief(&scenario.grid, scenario.sigma0, None)
        .map_err(|e| fail(0, e.to_string()))?;
    let mut assignment =
        plan(scenario, &belief, 0).map_err(|e: crate::Error| fail(0, e.to_string()))?;

    let horizon = usize::try_from(scenario.horizon).expect("horizon fits in usize");
    let mut records = Vec::with_capacity(horizon);
    let mut cum_regret = Vec::with_capacity(horizon);
    let mut cum = 0.0;

    for k in 0..scenario.horizon {
        // Measure at the current assignments and fuse.
        let mut locals = Vec::with_capacity(agents);
        for (i, spec) in scenario.agents.iter().enumerate() {
            let h = measurement_matrix(assignment.positions()[i], spec, &scenario.grid)
                .map_err(|e| fail(k, e.to_string()))?;
            let z = crate::sensing::sample_measurement(&h, &truth, spec, i, &mut rngs[i]);
            locals.push(local_information(&h, spec, &z, n).map_err(|e| fail(k, e.to_string()))?);
        }
        let info: InfoPair =
            aggregate(&scenario.graph, &locals).map_err(|e| fail(k, e.to_string()))?;

        // Score the step: positions p_k against the current field φ_k.
        let beta_k = scenario.beta.value(k);
        let coverage = coverage_check(&belief, &truth, beta_k);
        let (_, f_star) =
            oracle_optimum(&truth, agents).map_err(|e| fail(k, e.to_string()))?;
        let f_actual = distinct_sum(&truth.values, assignment.positions());
        let regret = (f_star - f_actual).max(0.0);
        cum += regret;
        records.push(StepRecord {
            k,
            f_star,
            f_actual,
            regret,
            coverage,
            positions: assignment.positions().to_vec(),
        });
        cum_regret.push(cum);

        // Filter to step k+1 and re-plan.
        let a_next = scenario.model.matrix_at(k + 1);
        let b_next = if scenario.filter_knows_source {
            scenario.model.affine_at(k + 1)
        } else {
            None
        };
        belief = kalman_update(&belief, a_next, b_next.as_ref(), &info)
            .map_err(|e| fail(k + 1, e.to_string()))?;
        assignment = plan(scenario, &belief, k + 1).map_err(|e| fail(k + 1, e.to_string()))?;

        // Advance the ground truth.
        truth = step_state(&scenario.model, &truth).map_err(|e| fail(k + 1, e.to_string()))?;
    }

    Ok(TrialTrace {
        seed,
        records,
        cum_regret,
    })
}

fn plan(scenario: &Scenario, belief: &Belief, step: u64) -> Result<Assignment> {
    let agents = scenario.agent_count();
    match scenario.planner {
        PlannerKind::Ducb => {
            let mu = ducb(belief, scenario.beta.value(step))?;
            plan_ducb(&mu, agents)
        }
        PlannerKind::MeanGreedy => plan_mean_greedy(belief, agents),
        PlannerKind::NaiveSweep => plan_naive_sweep(&scenario.grid, step, agents),
    }
}

/// Per-step statistics across completed trials. Variances are population
/// variances, so a single trial reports zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub k: u64,
    pub mean_regret: f64,
    pub var_regret: f64,
    pub mean_cum_regret: f64,
    pub var_cum_regret: f64,
    pub coverage_rate: f64,
}

#[derive(Debug, Clone)]
pub struct MonteCarloAggregate {
    pub per_step: Vec<StepStats>,
    pub traces: Vec<TrialTrace>,
    pub failures: Vec<TrialFailure>,
}

impl MonteCarloAggregate {
    pub fn completed(&self) -> usize {
        self.traces.len()
    }

    /// Coverage frequency over all (trial, step) pairs.
    pub fn coverage_rate(&self) -> f64 {
        let total: usize = self.traces.iter().map(|t| t.records.len()).sum();
        if total == 0 {
            return 1.0;
        }
        let covered: usize = self
            .traces
            .iter()
            .map(|t| t.records.iter().filter(|r| r.coverage).count())
            .sum();
        covered as f64 / total as f64
    }

    pub fn mean_final_cum_regret(&self) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        self.traces.iter().map(TrialTrace::final_cum_regret).sum::<f64>()
            / self.traces.len() as f64
    }
}

/// Run `trials` independent trials with seeds `base_seed + t`, optionally on
/// up to `jobs` worker threads. Aborted trials are excluded from aggregates,
/// counted, and reported.
pub fn monte_carlo(
    scenario: &Scenario,
    trials: u32,
    base_seed: u64,
    jobs: usize,
) -> MonteCarloAggregate {
    let seeds: Vec<u64> = (0..trials).map(|t| base_seed + u64::from(t)).collect();
    let mut outcomes: Vec<Option<std::result::Result<TrialTrace, TrialFailure>>> =
        (0..trials as usize).map(|_| None).collect();

    let jobs = jobs.max(1).min(seeds.len().max(1));
    if jobs <= 1 {
        for (slot, &seed) in outcomes.iter_mut().zip(&seeds) {
            *slot = Some(run_episode(scenario, seed));
        }
    } else {
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let results: std::sync::Mutex<Vec<(usize, std::result::Result<TrialTrace, TrialFailure>)>> =
            std::sync::Mutex::new(Vec::with_capacity(seeds.len()));
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let idx = counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if idx >= seeds.len() {
                        break;
                    }
                    let outcome = run_episode(scenario, seeds[idx]);
                    results.lock().unwrap().push((idx, outcome));
                });
            }
        });
        for (idx, outcome) in results.into_inner().unwrap() {
            outcomes[idx] = Some(outcome);
        }
    }

    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(trace) => traces.push(trace),
            Err(failure) => {
                log::warn!("{failure}");
                failures.push(failure);
            }
        }
    }

    let per_step = aggregate_traces(&traces);
    MonteCarloAggregate {
        per_step,
        traces,
        failures,
    }
}

/// Per-step statistics over a set of completed traces.
pub fn aggregate_traces(traces: &[TrialTrace]) -> Vec<StepStats> {
    let steps = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let mut regrets = Vec::new();
        let mut cums = Vec::new();
        let mut covered = 0usize;
        for t in traces {
            if let Some(rec) = t.records.get(k) {
                regrets.push(rec.regret);
                cums.push(t.cum_regret[k]);
                covered += usize::from(rec.coverage);
            }
        }
        let (mean_regret, var_regret) = mean_var(&regrets);
        let (mean_cum_regret, var_cum_regret) = mean_var(&cums);
        out.push(StepStats {
            k: k as u64,
            mean_regret,
            var_regret,
            mean_cum_regret,
            var_cum_regret,
            coverage_rate: if regrets.is_empty() {
                0.0
            } else {
                covered as f64 / regrets.len() as f64
            },
        });
    }
    out
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Least-squares slope of `log(Σr)` against `log k` over the trailing
/// `window` fraction of the trace. Sublinear growth shows as a slope below
/// 1; an all-zero trace reports 0 by convention (perfect tracking).
pub fn fit_growth_exponent(cum_regret: &[f64], window: f64) -> Result<f64> {
    if cum_regret.len() < 100 {
        return Err(crate::Error::structural(
            "growth-exponent fit needs at least 100 steps",
        ));
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(crate::Error::structural(
            "window must be a fraction in (0, 1]",
        ));
    }
    let len = cum_regret.len();
    let start = len - ((len as f64 * window) as usize).clamp(2, len);
    let points: Vec<(f64, f64)> = cum_regret
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, &c)| c > 0.0)
        .map(|(k, &c)| (((k + 1) as f64).ln(), c.ln()))
        .collect();
    if points.len() < 2 {
        return Ok(0.0);
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / sxx)
}

/// Uniform per-step loss bound `γ̄ = 2 √(I ᾱ) ‖φ_0‖²` for homogeneous
/// dynamics; the harness asserts every observed regret stays below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretDiagnostics {
    pub gamma_bar: f64,
}

pub fn loss_bound(scenario: &Scenario) -> RegretDiagnostics {
    let (_, alpha_hi) = scenario.model.bounds();
    let phi0_norm = scenario.initial_field.values.norm();
    RegretDiagnostics {
        gamma_bar: 2.0 * (scenario.agent_count() as f64 * alpha_hi).sqrt() * phi0_norm.powi(2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::environment::TransitionModel;
    use nalgebra::DMatrix;

    fn desk_scenario(planner: &str, horizon: u64) -> Scenario {
        let cfg: ScenarioConfig = serde_json::from_str(&format!(
            r#"{{
                "grid": {{"size": 4}},
                "dynamics": {{"diffusivity": 0.02, "velocity_x": 0.01, "velocity_y": 0.0,
                             "dt": 1.0, "dx": 1.0,
                             "sources": [{{"cell": 5, "rate": 0.4, "until_step": 0}}],
                             "warmup_steps": 15}},
                "agents": [{{"sensor": "circular", "radius": 1.0, "noise_variance": 1.0}},
                           {{"sensor": "pointwise", "noise_variance": 1.0}}],
                "graph": {{"kind": "line"}},
                "filter": {{"sigma0": 1.0, "filter_knows_source": false}},
                "ducb": {{"delta": 0.1, "beta_scale": 1.0}},
                "planner": "{planner}",
                "horizon": {horizon},
                "trials": 2,
                "base_seed": 3
            }}"#
        ))
        .unwrap();
        Scenario::from_config(&cfg).unwrap()
    }

    #[test]
    fn zero_horizon_yields_empty_trace() {
        let scenario = desk_scenario("ducb", 0);
        let trace = run_episode(&scenario, 1).unwrap();
        assert!(trace.records.is_empty());
        assert!(trace.cum_regret.is_empty());
        assert_eq!(trace.final_cum_regret(), 0.0);
    }

    #[test]
    fn identical_seeds_give_bit_identical_traces() {
        let scenario = desk_scenario("ducb", 40);
        let a = run_episode(&scenario, 9).unwrap();
        let b = run_episode(&scenario, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn regret_is_nonnegative_and_cumulative_nondecreasing() {
        for planner in ["ducb", "mean_greedy", "naive_sweep"] {
            let scenario = desk_scenario(planner, 60);
            let trace = run_episode(&scenario, 5).unwrap();
            assert_eq!(trace.records.len(), 60);
            for rec in &trace.records {
                assert!(rec.regret >= 0.0);
                assert!(rec.f_actual <= rec.f_star + 1e-12);
            }
            for w in trace.cum_regret.windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn static_field_single_agent_locks_onto_the_argmax() {
        // Static 2x2 field, one pointwise agent: after the β-forced
        // exploration phase the agent parks on the true argmax and the
        // last-quarter regret is exactly zero.
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{
                "grid": {"size": 2},
                "dynamics": {"diffusivity": 0.0, "velocity_x": 0.0, "velocity_y": 0.0,
                             "dt": 1.0, "dx": 1.0, "sources": [], "warmup_steps": 0},
                "agents": [{"sensor": "pointwise", "noise_variance": 0.01}],
                "graph": {"kind": "complete"},
                "filter": {"sigma0": 1.0, "filter_knows_source": false},
                "ducb": {"delta": 0.1, "beta_scale": 1.0, "prior_error_bound": 4.0},
                "planner": "ducb",
                "horizon": 400,
                "trials": 1,
                "base_seed": 0
            }"#,
        )
        .unwrap();
        let mut scenario = Scenario::from_config(&cfg).unwrap();
        // Hand-crafted static truth with a clear argmax at cell 2.
        scenario.initial_field = crate::environment::FieldState::new(
            nalgebra::DVector::from_vec(vec![1.0, 0.5, 3.0, 2.0]),
            0,
        )
        .unwrap();
        let trace = run_episode(&scenario, 12).unwrap();
        let quarter = &trace.records[300..];
        let mean_tail: f64 =
            quarter.iter().map(|r| r.regret).sum::<f64>() / quarter.len() as f64;
        assert_eq!(mean_tail, 0.0, "tail regret should vanish on a static field");
        // The locked position is the true argmax.
        assert_eq!(trace.records.last().unwrap().positions, vec![2]);
    }

    #[test]
    fn monte_carlo_single_trial_equals_its_trace() {
        let scenario = desk_scenario("ducb", 25);
        let agg = monte_carlo(&scenario, 1, 11, 1);
        assert_eq!(agg.completed(), 1);
        let trace = run_episode(&scenario, 11).unwrap();
        for (k, stats) in agg.per_step.iter().enumerate() {
            assert_eq!(stats.mean_regret, trace.records[k].regret);
            assert_eq!(stats.var_regret, 0.0);
            assert_eq!(stats.mean_cum_regret, trace.cum_regret[k]);
        }
    }

    #[test]
    fn duplicated_traces_have_zero_variance() {
        // Two trials with the same seed (same trace twice) aggregate to
        // zero variance at every step.
        let scenario = desk_scenario("ducb", 15);
        let trace = run_episode(&scenario, 4).unwrap();
        let stats = aggregate_traces(&[trace.clone(), trace]);
        assert!(stats.iter().all(|s| s.var_regret == 0.0 && s.var_cum_regret == 0.0));
    }

    #[test]
    fn monte_carlo_parallel_matches_serial() {
        let scenario = desk_scenario("ducb", 20);
        let serial = monte_carlo(&scenario, 3, 5, 1);
        let parallel = monte_carlo(&scenario, 3, 5, 3);
        assert_eq!(serial.traces, parallel.traces);
    }

    #[test]
    fn aborted_trials_are_reported_not_silently_dropped() {
        let mut scenario = desk_scenario("ducb", 10);
        // A transition sequence that turns non-finite at step 4.
        let n = scenario.cell_count();
        let mut mats = vec![DMatrix::identity(n, n); 10];
        mats[3] = DMatrix::from_element(n, n, f64::NAN);
        scenario.model = TransitionModel::from_sequence(mats, (1.0, 1.0));
        let agg = monte_carlo(&scenario, 2, 0, 1);
        assert_eq!(agg.completed(), 0);
        assert_eq!(agg.failures.len(), 2);
        assert!(agg.failures[0].step > 0);
    }

    #[test]
    fn growth_exponent_recovers_synthetic_slopes() {
        let linear: Vec<f64> = (0..1000).map(|k| (k + 1) as f64).collect();
        let sqrt: Vec<f64> = (0..1000).map(|k| ((k + 1) as f64).sqrt()).collect();
        let slope_lin = fit_growth_exponent(&linear, 0.5).unwrap();
        let slope_sqrt = fit_growth_exponent(&sqrt, 0.5).unwrap();
        assert!((slope_lin - 1.0).abs() < 0.01, "got {slope_lin}");
        assert!((slope_sqrt - 0.5).abs() < 0.01, "got {slope_sqrt}");
    }

    #[test]
    fn growth_exponent_zero_trace_is_zero() {
        let zeros = vec![0.0; 500];
        assert_eq!(fit_growth_exponent(&zeros, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn growth_exponent_needs_enough_steps() {
        assert!(fit_growth_exponent(&[1.0; 50], 0.5).is_err());
    }

    #[test]
    fn loss_bound_formula() {
        let mut scenario = desk_scenario("ducb", 5);
        scenario.model = TransitionModel::identity(scenario.cell_count());
        scenario.agents.truncate(1);
        scenario.initial_field = crate::environment::FieldState::new(
            nalgebra::DVector::from_vec(vec![
                1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ]),
            0,
        )
        .unwrap();
        approx::assert_relative_eq!(loss_bound(&scenario).gamma_bar, 2.0, epsilon = 1e-12);

        // Four agents with the same unit-norm field: γ̄ = 4.
        scenario.agents = vec![scenario.agents[0]; 4];
        approx::assert_relative_eq!(loss_bound(&scenario).gamma_bar, 4.0, epsilon = 1e-12);
    }
}
