//! `ducb-seek`: run, validate, and plot multi-agent extremum-seeking
//! experiments described by a JSON scenario config.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error. Log verbosity
//! is controlled by the `DUCB_SEEK_LOG` environment variable.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use ducb_seek::config::{load_config, ScenarioConfig};
use ducb_seek::environment::validate_dynamics_bounds;
use ducb_seek::error::{Error, Result};
use ducb_seek::evaluation::{loss_bound, monte_carlo};
use ducb_seek::output::{
    aggregate_from_trial_rows, read_aggregate_csv, read_trial_csv, render_regret_svg,
    write_aggregate_csv, write_trial_csv, AggregateRow,
};
use ducb_seek::scenario::{PlannerKind, Scenario};

#[derive(Parser)]
#[command(
    name = "ducb-seek",
    version,
    about = "Distributed multi-agent on-line extremum seeking experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured Monte-Carlo experiment and write traces, the
    /// aggregate CSV, and the regret SVG to the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured trial count.
        #[arg(long)]
        trials: Option<u32>,
        /// Override the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured planner (ducb | mean_greedy | naive_sweep).
        #[arg(long)]
        planner: Option<String>,
        /// Worker threads for running trials concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check the scenario assumptions (dynamics bounds, noise bounds, graph
    /// connectivity) and print a report.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Steps of the dynamics-bounds sweep; defaults to min(horizon, 128)
        /// and to a single step on grids beyond 400 cells.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Re-plot regret curves from previously written trace directories.
    Plot {
        /// Directory holding aggregate.csv / trial_*.csv, or a directory of
        /// such run directories (one series per subdirectory).
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter("DUCB_SEEK_LOG")
            .default_filter_or("warn"),
    )
    .init();

    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
            planner,
            jobs,
        } => cmd_run(&config, &out, trials, seed, planner.as_deref(), jobs),
        Command::Validate { config, horizon } => cmd_validate(&config, horizon),
        Command::Plot { traces, out } => cmd_plot(&traces, &out),
    };
    match outcome {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn cmd_run(
    config_path: &Path,
    out_dir: &Path,
    trials: Option<u32>,
    seed: Option<u64>,
    planner: Option<&str>,
    jobs: usize,
) -> Result<()> {
    let mut cfg: ScenarioConfig = load_config(config_path)?;
    if let Some(t) = trials {
        if t == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(p) = planner {
        PlannerKind::parse(p)?;
        cfg.planner = p.to_string();
    }
    let scenario = Scenario::from_config(&cfg)?;

    std::fs::create_dir_all(out_dir)?;
    let agg = monte_carlo(&scenario, scenario.trials, scenario.base_seed, jobs);

    for (idx, trace) in agg.traces.iter().enumerate() {
        write_trial_csv(out_dir, idx as u32, trace)?;
    }
    write_aggregate_csv(out_dir, &agg)?;
    let rows: Vec<AggregateRow> = agg.per_step.iter().map(AggregateRow::from).collect();
    render_regret_svg(
        &[(scenario.planner.as_str().to_string(), rows)],
        &out_dir.join("regret.svg"),
    )?;

    let gamma = loss_bound(&scenario).gamma_bar;
    println!(
        "completed {} of {} trials (planner {}, horizon {}, gamma_bar {:.4})",
        agg.completed(),
        scenario.trials,
        scenario.planner.as_str(),
        scenario.horizon,
        gamma
    );
    println!(
        "mean final cumulative regret: {:.6}; coverage rate: {:.4}",
        agg.mean_final_cum_regret(),
        agg.coverage_rate()
    );
    if !agg.failures.is_empty() {
        // Aborts are data, not failures of the harness: exit 0 with a loud
        // summary so baselines never silently lose trials.
        println!("WARNING: {} trial(s) aborted:", agg.failures.len());
        for f in &agg.failures {
            println!("  {f}");
        }
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn cmd_validate(config_path: &Path, horizon: Option<u64>) -> Result<()> {
    let cfg = load_config(config_path)?;
    let scenario = Scenario::from_config(&cfg)?;
    let n = scenario.cell_count();

    println!(
        "scenario: {0}x{0} grid ({1} cells), {2} agents, horizon {3}, planner {4}",
        scenario.grid.side(),
        n,
        scenario.agent_count(),
        scenario.horizon,
        scenario.planner.as_str()
    );

    let params_cfl = cfg.dynamics.dt
        * (4.0 * cfg.dynamics.diffusivity / (cfg.dynamics.dx * cfg.dynamics.dx)
            + (cfg.dynamics.velocity_x.abs() + cfg.dynamics.velocity_y.abs()) / cfg.dynamics.dx);
    println!("CFL number: {params_cfl:.4} < 1: PASS");

    let sweep_horizon = horizon.unwrap_or_else(|| {
        if n > 400 {
            1
        } else {
            scenario.horizon.clamp(1, 128)
        }
    });
    let report = validate_dynamics_bounds(&scenario.model, sweep_horizon)?;
    let (lo, hi) = scenario.model.bounds();
    println!(
        "assumption 1 (dynamics bounds, {} step sweep): measured eigenvalue range \
         [{:.6e}, {:.6e}], declared [{:.3e}, {:.3e}]: {}",
        sweep_horizon,
        report.alpha_min,
        report.alpha_max,
        lo,
        hi,
        if report.passes() { "PASS" } else { "FAIL" }
    );
    if report.singular {
        println!("  note: near-singular propagation product detected");
    }

    let v_lo = scenario
        .agents
        .iter()
        .map(|a| a.noise_variance)
        .fold(f64::MAX, f64::min);
    let v_hi = scenario
        .agents
        .iter()
        .map(|a| a.noise_variance)
        .fold(f64::MIN, f64::max);
    let noise_ok = v_lo > 0.0 && v_hi.is_finite();
    println!(
        "assumption 2 (noise bounds): variances in [{:.4}, {:.4}]: {}",
        v_lo,
        v_hi,
        if noise_ok { "PASS" } else { "FAIL" }
    );

    println!(
        "graph: connected over {} agents, {} message rounds per step: PASS",
        scenario.agent_count(),
        ducb_seek::consensus::message_rounds(&scenario.graph)
    );
    println!(
        "initial field: max {:.4}, norm {:.4} (gamma_bar {:.4})",
        scenario.initial_field.max_value(),
        scenario.initial_field.values.norm(),
        loss_bound(&scenario).gamma_bar
    );
    Ok(())
}

fn cmd_plot(traces_dir: &Path, out_path: &Path) -> Result<()> {
    let mut series = Vec::new();
    if let Some(rows) = load_run_dir(traces_dir)? {
        let label = traces_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        series.push((label, rows));
    } else {
        let mut subdirs: Vec<PathBuf> = std::fs::read_dir(traces_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        subdirs.sort();
        for dir in subdirs {
            if let Some(rows) = load_run_dir(&dir)? {
                let label = dir
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".to_string());
                series.push((label, rows));
            }
        }
    }
    if series.is_empty() {
        return Err(Error::Parse(format!(
            "no aggregate.csv or trial_*.csv found under {}",
            traces_dir.display()
        )));
    }
    render_regret_svg(&series, out_path)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

/// Aggregate rows for one run directory: prefers aggregate.csv, falls back
/// to re-aggregating trial files.
fn load_run_dir(dir: &Path) -> Result<Option<Vec<AggregateRow>>> {
    let agg_path = dir.join("aggregate.csv");
    if agg_path.is_file() {
        return Ok(Some(read_aggregate_csv(&agg_path)?));
    }
    let mut trial_rows = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trial_") && n.ends_with(".csv"))
        })
        .collect();
    entries.sort();
    for path in entries {
        trial_rows.extend(read_trial_csv(&path)?);
    }
    if trial_rows.is_empty() {
        Ok(None)
    } else {
        Ok(Some(aggregate_from_trial_rows(&trial_rows)))
    }
}
