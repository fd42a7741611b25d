//! JSON experiment configuration: parsing, strict validation, round-trip
//! serialization.
//!
//! Unknown keys are rejected and every validation failure names the dotted
//! path of the offending entry, so a bad config fails fast with an
//! actionable message (and exit code 2 from the CLI).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridConfig,
    pub dynamics: DynamicsConfig,
    pub agents: Vec<AgentConfig>,
    pub graph: GraphConfig,
    pub filter: FilterConfig,
    pub ducb: DucbConfig,
    pub planner: String,
    pub horizon: u64,
    pub trials: u32,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub diffusivity: f64,
    pub velocity_x: f64,
    pub velocity_y: f64,
    pub dt: f64,
    pub dx: f64,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    /// Pre-roll transitions (sources active) that shape the initial field
    /// before step 0.
    #[serde(default)]
    pub warmup_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub cell: u64,
    pub rate: f64,
    /// Last run step whose transition still injects; 0 confines the source
    /// to warm-up.
    #[serde(default)]
    pub until_step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// "pointwise" or "circular".
    pub sensor: String,
    #[serde(default)]
    pub radius: f64,
    pub noise_variance: f64,
}

impl AgentConfig {
    pub(crate) fn to_spec(&self) -> crate::sensing::SensorSpec {
        let kind = match self.sensor.as_str() {
            "pointwise" => crate::sensing::SensorKind::Pointwise,
            _ => crate::sensing::SensorKind::Circular,
        };
        crate::sensing::SensorSpec {
            kind,
            radius: self.radius,
            noise_variance: self.noise_variance,
        }
    }
}

/// Exactly one of `kind` ("line" | "ring" | "complete") or an explicit edge
/// list must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[u32; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub sigma0: f64,
    #[serde(default)]
    pub filter_knows_source: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DucbConfig {
    pub delta: f64,
    #[serde(default = "default_beta_scale")]
    pub beta_scale: f64,
    /// Upper bound on the initial estimation error `‖φ̂_0 − φ_0‖`; defaults
    /// to `√N · max(φ_0)` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_error_bound: Option<f64>,
}

fn default_beta_scale() -> f64 {
    1.0
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "<root>".to_string() } else { path };
            Error::config(key, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Structural cross-validation of everything checkable at load time.
    pub fn validate(&self) -> Result<()> {
        if self.grid.size == 0 {
            return Err(Error::config("grid.size", "must be at least 1"));
        }
        if self.grid.size > 4096 {
            return Err(Error::config(
                "grid.size",
                "grids beyond 4096x4096 are not supported",
            ));
        }
        let n = u64::from(self.grid.size) * u64::from(self.grid.size);

        let grid = crate::environment::Grid::new(self.grid.size as usize)?;
        let params = crate::environment::ConvectionDiffusionParams {
            diffusivity: self.dynamics.diffusivity,
            velocity_x: self.dynamics.velocity_x,
            velocity_y: self.dynamics.velocity_y,
            dt: self.dynamics.dt,
            dx: self.dynamics.dx,
            sources: self
                .dynamics
                .sources
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    if s.cell >= n {
                        Err(Error::config(
                            format!("dynamics.sources[{i}].cell"),
                            format!("cell {} outside grid of {n} cells", s.cell),
                        ))
                    } else {
                        Ok(crate::environment::SourceTerm {
                            cell: s.cell as usize,
                            rate: s.rate,
                            until_step: s.until_step,
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        };
        params.validate(&grid)?;

        if self.agents.is_empty() {
            return Err(Error::config("agents", "need at least one agent"));
        }
        if self.agents.len() as u64 > n {
            return Err(Error::config(
                "agents",
                format!(
                    "{} agents cannot occupy distinct cells of a {n}-cell grid",
                    self.agents.len()
                ),
            ));
        }
        for (i, a) in self.agents.iter().enumerate() {
            match a.sensor.as_str() {
                "pointwise" | "circular" => {}
                other => {
                    return Err(Error::config(
                        format!("agents[{i}].sensor"),
                        format!("unknown sensor `{other}`; expected pointwise | circular"),
                    ))
                }
            }
            if !(a.radius.is_finite() && a.radius >= 0.0) {
                return Err(Error::config(
                    format!("agents[{i}].radius"),
                    "must be finite and non-negative",
                ));
            }
            if !(a.noise_variance.is_finite() && a.noise_variance > 0.0) {
                return Err(Error::config(
                    format!("agents[{i}].noise_variance"),
                    "must be finite and positive",
                ));
            }
        }

        match (&self.graph.kind, &self.graph.edges) {
            (Some(kind), None) => {
                if !matches!(kind.as_str(), "line" | "ring" | "complete") {
                    return Err(Error::config(
                        "graph.kind",
                        format!("unknown kind `{kind}`; expected line | ring | complete"),
                    ));
                }
            }
            (None, Some(edges)) => {
                let pairs: Vec<(usize, usize)> = edges
                    .iter()
                    .map(|e| (e[0] as usize, e[1] as usize))
                    .collect();
                crate::consensus::CommGraph::from_edges(self.agents.len(), &pairs)?;
            }
            _ => {
                return Err(Error::config(
                    "graph",
                    "exactly one of `kind` or `edges` must be given",
                ));
            }
        }

        if !(self.filter.sigma0.is_finite() && self.filter.sigma0 > 0.0) {
            return Err(Error::config("filter.sigma0", "must be finite and positive"));
        }
        if !(self.ducb.delta > 0.0 && self.ducb.delta < 1.0) {
            return Err(Error::config("ducb.delta", "must lie strictly in (0, 1)"));
        }
        if !(self.ducb.beta_scale.is_finite() && self.ducb.beta_scale > 0.0) {
            return Err(Error::config(
                "ducb.beta_scale",
                "must be finite and positive",
            ));
        }
        if let Some(b) = self.ducb.prior_error_bound {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::config(
                    "ducb.prior_error_bound",
                    "must be finite and non-negative",
                ));
            }
        }
        crate::scenario::PlannerKind::parse(&self.planner)?;
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        Ok(())
    }
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json_str(&text)
}
