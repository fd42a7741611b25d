//! Trace CSV files, aggregate CSV files, and the regret SVG plot.
//!
//! Per-trial schema: `trial,k,F_star,F_actual,regret,cum_regret,coverage,
//! agent_positions` with positions semicolon-joined. Aggregate schema:
//! `k,mean_regret,var_regret,mean_cum_regret,var_cum_regret,coverage_rate`.
//! The SVG is rendered directly (axes + polylines), no plotting toolchain
//! involved.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{MonteCarloAggregate, StepStats, TrialTrace};

/// One row of a per-trial trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub trial: u32,
    pub k: u64,
    #[serde(rename = "F_star")]
    pub f_star: f64,
    #[serde(rename = "F_actual")]
    pub f_actual: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub coverage: bool,
    /// Semicolon-joined cell indices, one per agent.
    pub agent_positions: String,
}

/// One row of an aggregate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: u64,
    pub mean_regret: f64,
    pub var_regret: f64,
    pub mean_cum_regret: f64,
    pub var_cum_regret: f64,
    pub coverage_rate: f64,
}

impl From<&StepStats> for AggregateRow {
    fn from(s: &StepStats) -> Self {
        AggregateRow {
            k: s.k,
            mean_regret: s.mean_regret,
            var_regret: s.var_regret,
            mean_cum_regret: s.mean_cum_regret,
            var_cum_regret: s.var_cum_regret,
            coverage_rate: s.coverage_rate,
        }
    }
}

pub fn trace_rows(trial: u32, trace: &TrialTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .zip(&trace.cum_regret)
        .map(|(rec, &cum)| TraceRow {
            trial,
            k: rec.k,
            f_star: rec.f_star,
            f_actual: rec.f_actual,
            regret: rec.regret,
            cum_regret: cum,
            coverage: rec.coverage,
            agent_positions: rec
                .positions
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect()
}

pub fn write_trial_csv(dir: &Path, trial: u32, trace: &TrialTrace) -> Result<PathBuf> {
    let path = dir.join(format!("trial_{trial:03}.csv"));
    let mut writer = csv::Writer::from_path(&path).map_err(csv_error)?;
    for row in trace_rows(trial, trace) {
        writer.serialize(row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(path)
}

pub fn write_aggregate_csv(dir: &Path, agg: &MonteCarloAggregate) -> Result<PathBuf> {
    let path = dir.join("aggregate.csv");
    let mut writer = csv::Writer::from_path(&path).map_err(csv_error)?;
    for stats in &agg.per_step {
        writer.serialize(AggregateRow::from(stats)).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(path)
}

pub fn read_trial_csv(path: &Path) -> Result<Vec<TraceRow>> {
    parse_trial_csv(std::fs::File::open(path)?)
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    parse_aggregate_csv(std::fs::File::open(path)?)
}

pub fn parse_trial_csv<R: std::io::Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_reader(reader);
    reader
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

pub fn parse_aggregate_csv<R: std::io::Read>(reader: R) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::Reader::from_reader(reader);
    reader
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

/// Rebuild aggregate rows from per-trial rows (used by `plot` when a traces
/// directory has no aggregate file).
pub fn aggregate_from_trial_rows(rows: &[TraceRow]) -> Vec<AggregateRow> {
    let mut by_step: std::collections::BTreeMap<u64, Vec<&TraceRow>> = Default::default();
    for row in rows {
        by_step.entry(row.k).or_default().push(row);
    }
    by_step
        .into_iter()
        .map(|(k, rows)| {
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&TraceRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_regret = mean(&|r| r.regret);
            let mean_cum = mean(&|r| r.cum_regret);
            AggregateRow {
                k,
                mean_regret,
                var_regret: rows
                    .iter()
                    .map(|r| (r.regret - mean_regret).powi(2))
                    .sum::<f64>()
                    / n,
                mean_cum_regret: mean_cum,
                var_cum_regret: rows
                    .iter()
                    .map(|r| (r.cum_regret - mean_cum).powi(2))
                    .sum::<f64>()
                    / n,
                coverage_rate: rows.iter().filter(|r| r.coverage).count() as f64 / n,
            }
        })
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Render per-step regret (top panel) and cumulative regret (bottom panel)
/// against the step index, one polyline per labeled series.
pub fn render_regret_svg(series: &[(String, Vec<AggregateRow>)], path: &Path) -> Result<()> {
    if series.is_empty() || series.iter().all(|(_, rows)| rows.is_empty()) {
        return Err(Error::Parse("no trace data to plot".into()));
    }
    let width = 900.0;
    let panel_height = 320.0;
    let margin_left = 70.0;
    let margin_right = 20.0;
    let margin_top = 40.0;
    let gap = 70.0;
    let height = margin_top + 2.0 * panel_height + gap + 50.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );

    type PanelValue = fn(&AggregateRow) -> f64;
    let panels: [(&str, PanelValue); 2] = [
        ("per-step regret", |row| row.mean_regret),
        ("cumulative regret", |row| row.mean_cum_regret),
    ];
    for (panel_idx, (title, value)) in panels.iter().enumerate() {
        let top = margin_top + panel_idx as f64 * (panel_height + gap);
        draw_panel(
            &mut svg,
            series,
            *value,
            title,
            margin_left,
            top,
            width - margin_left - margin_right,
            panel_height,
        );
    }

    // Legend across the top.
    let mut x = margin_left;
    for (i, (label, _)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="18" x2="{:.1}" y2="18" stroke="{color}" stroke-width="2.5"/>"#,
            x + 26.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="22" font-family="monospace" font-size="13">{label}</text>"#,
            x + 32.0
        );
        x += 36.0 + 9.0 * label.len() as f64;
    }

    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn draw_panel(
    svg: &mut String,
    series: &[(String, Vec<AggregateRow>)],
    value: fn(&AggregateRow) -> f64,
    title: &str,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
) {
    let k_max = series
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|r| r.k))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let v_max = series
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(&value))
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let to_x = |k: f64| left + k / k_max * width;
    let to_y = |v: f64| top + height - (v / v_max * height);

    // Frame and ticks.
    let _ = writeln!(
        svg,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{width:.1}" height="{height:.1}" fill="none" stroke="#444" stroke-width="1"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<text x="{left:.1}" y="{:.1}" font-family="monospace" font-size="14" fill="#222">{title}</text>"##,
        top - 8.0
    );
    for tick in 0..=5 {
        let frac = tick as f64 / 5.0;
        let x = left + frac * width;
        let y = top + height - frac * height;
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#bbb" stroke-width="0.5"/>"##,
            top,
            top + height
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" font-family="monospace" font-size="11" text-anchor="middle">{:.0}</text>"#,
            top + height + 16.0,
            frac * k_max
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#bbb" stroke-width="0.5"/>"##,
            left + width
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="11" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            y + 4.0,
            frac * v_max
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12" text-anchor="middle">step k</text>"#,
        left + width / 2.0,
        top + height + 34.0
    );

    for (i, (_, rows)) in series.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for row in rows {
            let _ = write!(points, "{:.2},{:.2} ", to_x(row.k as f64), to_y(value(row)));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.trim_end()
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::StepRecord;

    fn sample_trace() -> TrialTrace {
        let records: Vec<StepRecord> = (0..4)
            .map(|k| StepRecord {
                k,
                f_star: 5.0,
                f_actual: 5.0 - 1.0 / (k + 1) as f64,
                regret: 1.0 / (k + 1) as f64,
                coverage: k % 2 == 0,
                positions: vec![k as usize, k as usize + 1],
            })
            .collect();
        let mut cum = 0.0;
        let cum_regret = records
            .iter()
            .map(|r| {
                cum += r.regret;
                cum
            })
            .collect();
        TrialTrace {
            seed: 9,
            records,
            cum_regret,
        }
    }

    #[test]
    fn trial_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let trace = sample_trace();
        let path = write_trial_csv(dir.path(), 2, &trace).unwrap();
        let rows = read_trial_csv(&path).unwrap();
        assert_eq!(rows, trace_rows(2, &trace));
        assert_eq!(rows[0].agent_positions, "0;1");
        // Header matches the documented schema.
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "trial,k,F_star,F_actual,regret,cum_regret,coverage,agent_positions"
        ));
    }

    #[test]
    fn aggregate_rebuild_matches_direct_stats() {
        let trace = sample_trace();
        let rows = trace_rows(0, &trace);
        let rebuilt = aggregate_from_trial_rows(&rows);
        assert_eq!(rebuilt.len(), 4);
        for (row, rec) in rebuilt.iter().zip(&trace.records) {
            assert_eq!(row.mean_regret, rec.regret);
            assert_eq!(row.var_regret, 0.0);
        }
    }

    #[test]
    fn svg_renders_polylines() {
        let dir = tempfile::tempdir().unwrap();
        let trace = sample_trace();
        let rows = aggregate_from_trial_rows(&trace_rows(0, &trace));
        let path = dir.path().join("regret.svg");
        render_regret_svg(&[("ducb".into(), rows)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert_eq!(text.matches("<polyline").count(), 2);
        assert!(text.contains("cumulative regret"));
    }

    #[test]
    fn svg_with_no_data_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("regret.svg");
        assert!(render_regret_svg(&[], &path).is_err());
    }

    #[test]
    fn malformed_csv_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.csv");
        std::fs::write(&path, "k,mean_regret\nnot-a-number,1.0\n").unwrap();
        assert!(read_aggregate_csv(&path).is_err());
    }
}
