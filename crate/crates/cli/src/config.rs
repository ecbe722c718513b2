//! Experiment configuration: presets, JSON files and `--key=value` overrides.
//!
//! Resolution order is preset ← file ← overrides ← `--seed`/`--out`. The
//! window and lag are only ever given in steps (`N_delta`, `N_lag`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mavg_core::lsmc::{CellCounts, Exercise, Method, Payoff, PricingConfig};
use mavg_core::market::{GbmModel, TimeGrid};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// One pricing run with the configured method.
    Price,
    Table1,
    ApproxError,
    Trajectory,
    Table2,
    Table3,
    DeltaSweep,
    LagSweep,
    LagWindowSweep,
    BermudanConvergence,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Price,
        Experiment::Table1,
        Experiment::ApproxError,
        Experiment::Trajectory,
        Experiment::Table2,
        Experiment::Table3,
        Experiment::DeltaSweep,
        Experiment::LagSweep,
        Experiment::LagWindowSweep,
        Experiment::BermudanConvergence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Price => "price",
            Experiment::Table1 => "table1",
            Experiment::ApproxError => "approx-error",
            Experiment::Trajectory => "trajectory",
            Experiment::Table2 => "table2",
            Experiment::Table3 => "table3",
            Experiment::DeltaSweep => "delta-sweep",
            Experiment::LagSweep => "lag-sweep",
            Experiment::LagWindowSweep => "lag-window-sweep",
            Experiment::BermudanConvergence => "bermudan-convergence",
        }
    }

    /// Whether the experiment runs the Monte Carlo pricer.
    pub fn prices_options(&self) -> bool {
        !matches!(self, Experiment::Table1 | Experiment::ApproxError | Experiment::Trajectory)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let known: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            CliError::config(format!("unknown experiment '{s}' (expected one of {})", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// Few paths and seeds, minutes on a workstation.
    #[default]
    Desk,
    /// Full-size path and valuation counts.
    Paper,
}

impl FromStr for Scale {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(CliError::config(format!("unknown scale '{s}' (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub s0: f64,
    pub r: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub maturity: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    #[serde(rename = "N_delta")]
    pub window_steps: usize,
    #[serde(rename = "N_lag")]
    pub lag_steps: usize,
}

impl GridConfig {
    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid {
            maturity: self.maturity,
            steps: self.steps,
            window_steps: self.window_steps,
            lag_steps: self.lag_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    #[serde(rename = "bS")]
    pub spot_cells: usize,
    #[serde(rename = "bX")]
    pub state_cells: usize,
    #[serde(default)]
    pub min_points_per_cell: Option<usize>,
}

/// Experiment-specific sweep values. Unset lists are filled from the preset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SweepConfig {
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default)]
    pub N_delta: Option<Vec<usize>>,
    #[serde(default)]
    pub N_lag: Option<Vec<usize>>,
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    /// Path count for Laguerre orders n >= 4 and for reference rows, when set.
    #[serde(default)]
    pub M_high_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scale: Scale,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub payoff: Payoff,
    pub method: Method,
    pub n: usize,
    pub regression: RegressionConfig,
    #[serde(rename = "M")]
    pub paths: usize,
    pub seeds: Vec<u64>,
    pub exercise: Exercise,
    /// Fixed Laguerre scale; the optimal one is used when absent.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub sweep: SweepConfig,
    pub out: PathBuf,
    #[serde(default)]
    pub dump_paths: bool,
}

/// Command-line inputs before resolution.
#[derive(Debug, Clone, Default)]
pub struct ConfigSources {
    pub file: Option<PathBuf>,
    /// Raw `key=value` pairs, keys as dotted paths or aliases.
    pub overrides: Vec<String>,
    pub scale: Option<Scale>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

const ALIASES: [(&str, &str); 10] = [
    ("s0", "model.s0"),
    ("r", "model.r"),
    ("sigma", "model.sigma"),
    ("T", "grid.T"),
    ("N", "grid.N"),
    ("N_delta", "grid.N_delta"),
    ("N_lag", "grid.N_lag"),
    ("bS", "regression.bS"),
    ("bX", "regression.bX"),
    ("min_points_per_cell", "regression.min_points_per_cell"),
];

const LIST_KEYS: [&str; 5] = ["seeds", "sweep.n", "sweep.N_delta", "sweep.N_lag", "sweep.methods"];

/// Preset for `experiment` at `scale`, as a JSON document.
pub fn preset(experiment: Experiment, scale: Scale) -> Value {
    let paper = scale == Scale::Paper;
    let mut v = json!({
        "version": CONFIG_VERSION,
        "scale": scale,
        "model": { "s0": 100.0, "r": 0.05, "sigma": 0.3 },
        "grid": { "T": 0.2, "N": 50, "N_delta": 10, "N_lag": 0 },
        "payoff": { "kind": "moving-average-call" },
        "method": "lag-ls-star",
        "n": 3,
        "regression": { "bS": 4, "bX": 1, "min_points_per_cell": null },
        "M": if paper { 10_000_000 } else { 500_000 },
        "seeds": if paper { vec![1, 2, 3, 4, 5] } else { vec![1, 2, 3] },
        "exercise": "bermudan",
        "p": null,
        "sweep": {},
        "out": "results",
        "dump_paths": false,
    });
    let patch = match experiment {
        Experiment::Price => json!({}),
        Experiment::Table1 | Experiment::ApproxError => json!({ "n": 10 }),
        Experiment::Trajectory => json!({ "M": 1, "seeds": [1], "sweep": { "n": [1, 3, 7] } }),
        Experiment::Table2 => json!({
            "method": "nm-ls",
            "regression": { "bS": 2, "bX": 2 },
            "sweep": { "N_delta": [2, 3, 4, 5, 6, 7, 8, 9, 10], "methods": ["nm-ls", "m-ls"] },
        }),
        Experiment::Table3 => json!({
            "n": 7,
            "M": if paper { 5_000_000 } else { 1_000_000 },
            "sweep": {
                "methods": ["lag-ls-star", "lag-ls", "nm-ls"],
                "M_high_order": if paper { Value::from(10_000_000) } else { Value::Null },
            },
        }),
        Experiment::DeltaSweep => json!({
            "n": 7,
            "sweep": {
                "N_delta": [1, 2, 3, 4, 5, 6, 7, 8, 10, 15, 20, 25, 30, 40, 50],
                "methods": ["lag-ls-star", "nm-ls"],
            },
        }),
        Experiment::LagSweep => json!({
            "n": 7,
            "grid": { "N_delta": 5 },
            "sweep": { "N_lag": [0, 5, 10, 15, 20, 25, 30, 35, 40, 45], "methods": ["lag-ls-star", "nm-ls"] },
        }),
        Experiment::LagWindowSweep => json!({
            "n": 7,
            "grid": { "N_lag": 20 },
            "sweep": { "N_delta": [1, 2, 3, 5, 8, 10, 15, 20, 25, 30], "methods": ["lag-ls-star", "nm-ls"] },
        }),
        Experiment::BermudanConvergence => json!({
            "n": 7,
            "grid": { "T": 0.5, "N": 40, "N_delta": 8 },
            "regression": { "bS": 2, "bX": 1 },
            "M": if paper { 20_000_000 } else { 500_000 },
            "sweep": { "N_delta": [2, 3, 4, 5, 6, 7, 8], "methods": ["lag-ls-star", "m-ls"] },
        }),
    };
    merge(&mut v, patch);
    v
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Parses the right-hand side of an override: JSON if possible, then a
/// comma-separated list, then a bare string.
fn override_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str(raw) {
        return v;
    }
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(|s| override_value(s.trim())).collect());
    }
    Value::String(raw.to_string())
}

/// Sets `key` (dotted path or alias) to `raw` inside `doc`.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override '{assignment}' is not of the form key=value")))?;
    let key = key.trim_start_matches("--");
    let path = ALIASES.iter().find(|(alias, _)| *alias == key).map_or(key, |(_, full)| full);
    let mut slot = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::config(format!("empty component in key '{key}'")));
        }
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| CliError::config(format!("'{}' is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            let mut value = override_value(raw);
            if LIST_KEYS.contains(&path) && !value.is_array() && !value.is_null() {
                value = Value::Array(vec![value]);
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        slot = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split always yields one part")
}

fn read_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    /// Merges preset, file and overrides, then validates everything the
    /// experiment will run.
    pub fn resolve(experiment: Experiment, sources: &ConfigSources) -> Result<Self> {
        let file = sources.file.as_deref().map(read_file).transpose()?;
        let file_scale = file.as_ref().and_then(|f| f.get("scale")).cloned();
        let scale = match (sources.scale, file_scale) {
            (Some(s), _) => s,
            (None, Some(v)) => {
                serde_json::from_value(v).map_err(|e| CliError::config(format!("scale: {e}")))?
            }
            (None, None) => Scale::Desk,
        };
        let mut doc = preset(experiment, scale);
        if let Some(f) = file {
            merge(&mut doc, f);
        }
        for o in &sources.overrides {
            apply_override(&mut doc, o)?;
        }
        doc["scale"] = json!(scale);
        if let Some(seed) = sources.seed {
            let count = doc["seeds"].as_array().map_or(1, |s| s.len().max(1)) as u64;
            doc["seeds"] = json!((seed..seed + count).collect::<Vec<u64>>());
        }
        if let Some(out) = &sources.out {
            doc["out"] = json!(out);
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(doc).map_err(|e| CliError::config(e.to_string()))?;
        cfg.fill_sweep(experiment);
        cfg.validate(experiment)?;
        Ok(cfg)
    }

    /// Derived sweep defaults that depend on other fields.
    fn fill_sweep(&mut self, experiment: Experiment) {
        let orders = || Some((1..=self.n).collect());
        match experiment {
            Experiment::Table1
            | Experiment::ApproxError
            | Experiment::Table3
            | Experiment::BermudanConvergence => {
                if self.sweep.n.is_none() {
                    self.sweep.n = orders();
                }
            }
            Experiment::Price => {
                if self.sweep.methods.is_none() {
                    self.sweep.methods = Some(vec![self.method]);
                }
            }
            _ => {}
        }
    }

    pub fn model(&self) -> GbmModel {
        GbmModel { s0: self.model.s0, rate: self.model.r, volatility: self.model.sigma }
    }

    /// Pricing configuration for one run of the experiment.
    pub fn pricing(&self, method: Method, order: usize, grid: TimeGrid, paths: usize) -> PricingConfig {
        PricingConfig {
            model: self.model(),
            grid,
            payoff: self.payoff,
            method,
            order: if method.uses_laguerre() { order } else { 1 },
            cells: CellCounts { spot: self.regression.spot_cells, state: self.regression.state_cells },
            min_points_per_cell: self.regression.min_points_per_cell,
            paths,
            seeds: self.seeds.clone(),
            exercise: self.exercise,
            scale: if method.uses_laguerre() { self.p } else { None },
        }
    }

    fn validate(&self, experiment: Experiment) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.model().validate().map_err(as_config)?;
        self.grid.time_grid().validate().map_err(as_config)?;
        if self.n == 0 {
            return Err(CliError::config("Laguerre order n must be at least 1"));
        }
        if self.regression.spot_cells == 0 || self.regression.state_cells == 0 {
            return Err(CliError::config("regression cell counts bS and bX must be at least 1"));
        }
        if self.paths == 0 {
            return Err(CliError::config("M must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("at least one seed is required"));
        }
        if let Some(p) = self.p {
            if !(p.is_finite() && p > 0.0) {
                return Err(CliError::config(format!("Laguerre scale p must be > 0, got {p}")));
            }
        }
        if let Payoff::FixedStrikeCall { strike } = self.payoff {
            if !(strike.is_finite() && strike >= 0.0) {
                return Err(CliError::config(format!("strike must be finite and >= 0, got {strike}")));
            }
        }
        // The top-level method and order are checked first so that the
        // message names the values the user gave.
        if let Some(orders) = &self.sweep.n {
            if orders.contains(&0) {
                return Err(CliError::config("sweep.n entries must be at least 1"));
            }
        }
        if matches!(experiment, Experiment::Price | Experiment::Table3) && self.method.uses_laguerre() {
            let base = self.pricing(self.method, self.n, self.grid.time_grid(), self.paths);
            base.validate().map_err(as_config)?;
        }
        for run in crate::experiments::plan(experiment, self)? {
            run.config.validate().map_err(as_config)?;
        }
        Ok(())
    }

    /// The resolved config, one `key: json` line per top-level field.
    pub fn header_lines(&self) -> Vec<String> {
        match serde_json::to_value(self).expect("config serialises") {
            Value::Object(fields) => fields.iter().map(|(k, v)| format!("{k}: {v}")).collect(),
            _ => unreachable!("config serialises to an object"),
        }
    }
}

fn as_config(e: mavg_core::Error) -> CliError {
    match e {
        mavg_core::Error::InvalidParameter(msg) => CliError::Config(msg),
        other => CliError::Config(other.to_string()),
    }
}
