//! Sweep configuration: a TOML file expanded into a fully resolved [`SweepSpec`].
//!
//! A config either lists cells explicitly (`[[experiments]]`, `[[seek_cells]]`)
//! or uses the grid shorthand below, which expands to the product of
//! algorithms × functions × agent counts. Singular keys (`algorithm = "gmes"`)
//! and plural keys (`algorithms = [...]`) are both accepted.
//!
//! ```toml
//! algorithms = ["gmes", "bucb"]
//! function = "ackley"
//! seeds = [0, 1, 2, 3, 4]
//! [kernel]
//! length_scale = 0.2
//! ```
//!
//! The resolved spec serializes back to the explicit form, so re-parsing the
//! emitted TOML gives an identical spec.

use std::path::{Path, PathBuf};

use gmes::acquisition::GmesConfig;
use gmes::baselines::BaselineConfig;
use gmes::sim::{Preset, Scenario, SeekConfig};
use gmes::testbed::{Algorithm, ExperimentConfig, KernelParams, TestFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: invalid configuration:\n  - {}", problems.join("\n  - "))]
    Invalid { path: PathBuf, problems: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateFlags {
    pub mean: bool,
    /// Normal-approximation 95% interval, `mean ± 1.96·s/√n`.
    pub ci95: bool,
}

impl Default for AggregateFlags {
    fn default() -> Self {
        AggregateFlags { mean: true, ci95: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeekCell {
    pub scenario: Scenario,
    pub config: SeekConfig,
}

/// Fully resolved sweep. Every run is one cell × one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub seeds: Vec<u64>,
    pub aggregate: AggregateFlags,
    pub experiments: Vec<ExperimentConfig>,
    pub seek_cells: Vec<SeekCell>,
}

impl SweepSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.jobs == 0 {
            problems.push("jobs must be >= 1".into());
        }
        if self.seeds.is_empty() {
            problems.push("at least one seed is required".into());
        }
        if self.experiments.is_empty() && self.seek_cells.is_empty() {
            problems.push("no experiments or seek cells configured".into());
        }
        for (i, e) in self.experiments.iter().enumerate() {
            problems.extend(e.validate().into_iter().map(|p| format!("experiments[{i}]: {p}")));
        }
        for (i, c) in self.seek_cells.iter().enumerate() {
            problems.extend(c.config.validate().into_iter().map(|p| format!("seek_cells[{i}]: {p}")));
            problems.extend(c.scenario.field.validate().into_iter().map(|p| format!("seek_cells[{i}].scenario: {p}")));
            if c.scenario.starts.len() < c.config.agents {
                problems.push(format!(
                    "seek_cells[{i}]: scenario `{}` has {} starts for {} agents",
                    c.scenario.name,
                    c.scenario.starts.len(),
                    c.config.agents
                ));
            }
        }
        problems
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep spec is representable in TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep spec is representable in JSON")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

fn merge<T>(one: Option<OneOrMany<T>>, many: Option<OneOrMany<T>>) -> Vec<T> {
    one.into_iter().chain(many).flat_map(OneOrMany::into_vec).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeek {
    scenario: Option<OneOrMany<String>>,
    scenarios: Option<OneOrMany<String>>,
    #[serde(default)]
    custom: Vec<Scenario>,
    agents: Option<OneOrMany<usize>>,
    config: Option<SeekConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<PathBuf>,
    jobs: Option<usize>,
    seed: Option<OneOrMany<u64>>,
    seeds: Option<OneOrMany<u64>>,
    aggregate: Option<AggregateFlags>,

    algorithm: Option<OneOrMany<String>>,
    algorithms: Option<OneOrMany<String>>,
    function: Option<OneOrMany<String>>,
    functions: Option<OneOrMany<String>>,
    agents: Option<OneOrMany<usize>>,
    iterations: Option<usize>,
    noise_std: Option<f64>,
    record_wall_time: Option<bool>,
    kernel: Option<KernelParams>,
    gmes: Option<GmesConfig>,
    baseline: Option<BaselineConfig>,

    #[serde(default)]
    experiments: Vec<ExperimentConfig>,
    seek: Option<RawSeek>,
    #[serde(default)]
    seek_cells: Vec<SeekCell>,
}

/// Reads and resolves a config file.
pub fn parse_config(path: &Path) -> Result<SweepSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path)
}

/// Resolves config text; `path` is used for diagnostics only.
pub fn parse_config_str(text: &str, path: &Path) -> Result<SweepSpec, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut problems = Vec::new();
    let spec = resolve(raw, &mut problems);
    problems.extend(spec.validate());
    if problems.is_empty() {
        Ok(spec)
    } else {
        Err(ConfigError::Invalid {
            path: path.to_path_buf(),
            problems,
        })
    }
}

fn parse_names<T: std::str::FromStr<Err = String>>(names: Vec<String>, problems: &mut Vec<String>) -> Vec<T> {
    names
        .into_iter()
        .filter_map(|n| n.parse().map_err(|e| problems.push(e)).ok())
        .collect()
}

fn resolve(raw: RawConfig, problems: &mut Vec<String>) -> SweepSpec {
    let algorithms: Vec<Algorithm> = parse_names(merge(raw.algorithm, raw.algorithms), problems);
    let functions: Vec<TestFunction> = parse_names(merge(raw.function, raw.functions), problems);
    let mut agents = merge(raw.agents, None);
    if agents.is_empty() {
        agents.push(5);
    }
    let grid_keys = raw.iterations.is_some()
        || raw.noise_std.is_some()
        || raw.record_wall_time.is_some()
        || raw.kernel.is_some()
        || raw.gmes.is_some()
        || raw.baseline.is_some();
    if algorithms.is_empty() != functions.is_empty() {
        problems.push("the grid shorthand needs both `algorithm(s)` and `function(s)`".into());
    } else if algorithms.is_empty() && grid_keys {
        problems.push("experiment settings given without `algorithm(s)` and `function(s)`".into());
    }

    let mut experiments = raw.experiments;
    for &function in &functions {
        for &algorithm in &algorithms {
            for &m in &agents {
                let mut e = ExperimentConfig::new(algorithm, function);
                e.agents = m;
                if let Some(k) = raw.kernel {
                    e.kernel = k;
                }
                if let Some(t) = raw.iterations {
                    e.iterations = t;
                }
                if let Some(s) = raw.noise_std {
                    e.noise_std = s;
                }
                if let Some(w) = raw.record_wall_time {
                    e.record_wall_time = w;
                }
                if let Some(g) = &raw.gmes {
                    e.gmes = g.clone();
                }
                if let Some(b) = &raw.baseline {
                    e.baseline = b.clone();
                }
                experiments.push(e);
            }
        }
    }

    let mut seek_cells = raw.seek_cells;
    if let Some(seek) = raw.seek {
        let presets: Vec<Preset> = parse_names(merge(seek.scenario, seek.scenarios), problems);
        let scenarios: Vec<Scenario> = presets.into_iter().map(Preset::scenario).chain(seek.custom).collect();
        if scenarios.is_empty() {
            problems.push("[seek] lists no scenarios".into());
        }
        let base = seek.config.unwrap_or_default();
        let mut seek_agents = merge(seek.agents, None);
        if seek_agents.is_empty() {
            seek_agents.push(base.agents);
        }
        for scenario in &scenarios {
            for &m in &seek_agents {
                seek_cells.push(SeekCell {
                    scenario: scenario.clone(),
                    config: SeekConfig { agents: m, ..base.clone() },
                });
            }
        }
    }

    let mut seeds = merge(raw.seed, raw.seeds);
    if seeds.is_empty() {
        seeds = (0..5).collect();
    }
    SweepSpec {
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("results")),
        jobs: raw.jobs.unwrap_or(1),
        seeds,
        aggregate: raw.aggregate.unwrap_or_default(),
        experiments,
        seek_cells,
    }
}
