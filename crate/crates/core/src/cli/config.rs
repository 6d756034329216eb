//! The JSON experiment file: one section per module, validated field by field.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::algorithms::{ServerInit, Variant};
use crate::channel::{ChannelConfig, SchedulerConfig, SchedulerMode};
use crate::dataset::DataGenConfig;
use crate::harness::ExperimentConfig;
use crate::theory::TheoryOptions;

fn default_variants() -> Vec<Variant> {
    vec![Variant::RerceFed]
}
fn default_rho() -> f64 {
    1.0
}
fn default_rounds() -> u64 {
    1000
}
fn default_trials() -> usize {
    100
}
fn default_window() -> f64 {
    0.1
}
fn default_divergence() -> f64 {
    100.0
}
fn default_stride() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub init: ServerInit,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection {
            variants: default_variants(),
            rho: default_rho(),
            init: ServerInit::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    #[serde(default = "default_rounds")]
    pub num_rounds: u64,
    #[serde(default = "default_trials")]
    pub num_trials: usize,
    /// Master seed for scheduling and link noise.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    #[serde(default = "default_divergence")]
    pub divergence_db: f64,
    #[serde(default)]
    pub track_bias: bool,
    /// Write every n-th round to the curve CSV.
    #[serde(default = "default_stride")]
    pub csv_stride: u64,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection {
            num_rounds: default_rounds(),
            num_trials: default_trials(),
            seed: 0,
            window_fraction: default_window(),
            divergence_db: default_divergence(),
            track_bias: false,
            csv_stride: default_stride(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Every client's uplink variance.
    UplinkVariance,
    /// Every client's downlink variance.
    DownlinkVariance,
    /// Uplink and downlink together.
    LinkVariance,
    /// Fixed scheduling cardinality `C`.
    Cardinality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// A fully resolved experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dataset: DataGenConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    /// Absent means full participation; always present after resolution.
    #[serde(default)]
    pub scheduler: Option<SchedulerConfig>,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub harness: HarnessSection,
    #[serde(default)]
    pub theory: TheoryOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

const SECTIONS: [&str; 7] = ["dataset", "channel", "scheduler", "algorithm", "harness", "theory", "sweep"];

impl Config {
    pub fn new(dataset: DataGenConfig) -> Self {
        let k = dataset.num_clients;
        Config {
            dataset,
            channel: ChannelConfig::noiseless(),
            scheduler: Some(SchedulerConfig::fixed(k)),
            algorithm: AlgorithmSection::default(),
            harness: HarnessSection::default(),
            theory: TheoryOptions::default(),
            sweep: None,
        }
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        self.scheduler
            .unwrap_or_else(|| SchedulerConfig::fixed(self.dataset.num_clients))
    }

    pub fn cardinality(&self) -> Option<usize> {
        match self.scheduler().mode {
            SchedulerMode::FixedCardinality { cardinality } => Some(cardinality),
            SchedulerMode::Bernoulli { .. } => None,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            dataset: self.dataset.clone(),
            channel: self.channel.clone(),
            scheduler: Some(self.scheduler()),
            variants: self.algorithm.variants.clone(),
            rho: self.algorithm.rho,
            num_rounds: self.harness.num_rounds,
            num_trials: self.harness.num_trials,
            seed: self.harness.seed,
            window_fraction: self.harness.window_fraction,
            init: self.algorithm.init,
            track_bias: self.harness.track_bias,
            divergence_db: self.harness.divergence_db,
        }
    }

    /// Semantic checks on a parsed file, one message per offending field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for v in self.experiment().violations() {
            out.push(rename_field(&v));
        }
        if self.harness.csv_stride == 0 {
            out.push("harness.csv_stride must be at least 1".into());
        }
        let t = &self.theory;
        if !(t.eigen_tolerance > 0.0) {
            out.push("theory.eigen_tolerance must be positive".into());
        }
        if !(t.cluster_tolerance > 0.0) {
            out.push("theory.cluster_tolerance must be positive".into());
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                out.push("sweep.values must not be empty".into());
            }
            let k = self.dataset.num_clients;
            for (i, &v) in s.values.iter().enumerate() {
                let ok = match s.parameter {
                    SweepParameter::Cardinality => v.fract() == 0.0 && v >= 1.0 && v <= k as f64,
                    _ => v.is_finite() && v >= 0.0,
                };
                if !ok {
                    out.push(format!("sweep.values[{i}] = {v} is invalid for {:?}", s.parameter));
                }
            }
        }
        out
    }

    /// Resolved copy: absent scheduler replaced by full participation.
    pub fn resolved(mut self) -> Self {
        self.scheduler = Some(self.scheduler());
        self
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Maps harness-level field names to the section they live in.
fn rename_field(msg: &str) -> String {
    for (flat, section) in [
        ("variants", "algorithm.variants"),
        ("rho", "algorithm.rho"),
        ("num_trials", "harness.num_trials"),
        ("window_fraction", "harness.window_fraction"),
        ("divergence_db", "harness.divergence_db"),
    ] {
        if let Some(rest) = msg.strip_prefix(flat) {
            return format!("{section}{rest}");
        }
    }
    msg.to_string()
}

/// A validated file plus the paths that were filled from defaults.
#[derive(Clone, Debug)]
pub struct Validated {
    pub config: Config,
    pub defaulted: Vec<String>,
}

fn section<T: for<'de> Deserialize<'de>>(obj: &Map<String, Value>, name: &str, errors: &mut Vec<String>) -> Option<T> {
    let v = obj.get(name)?;
    match serde_json::from_value::<T>(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("{name}: {e}"));
            None
        }
    }
}

/// Parses and checks an experiment file, collecting every problem instead of stopping at
/// the first one. Empty input counts as `{}`.
pub fn validate_str(text: &str) -> std::result::Result<Validated, Vec<String>> {
    let raw: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(text).map_err(|e| vec![format!("not valid JSON: {e}")])?
    };
    validate_value(&raw)
}

pub fn validate_value(raw: &Value) -> std::result::Result<Validated, Vec<String>> {
    let Some(obj) = raw.as_object() else {
        return Err(vec!["top level must be a JSON object".into()]);
    };
    let mut errors = Vec::new();
    for key in obj.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            errors.push(format!("{key}: unknown section (expected one of {})", SECTIONS.join(", ")));
        }
    }
    let dataset = match obj.get("dataset") {
        None => {
            errors.push("dataset: required section missing".into());
            errors.push("dataset.num_clients: required, no default".into());
            errors.push("dataset.model_dim: required, no default".into());
            None
        }
        Some(d) => {
            let mut missing = false;
            for f in ["num_clients", "model_dim"] {
                if d.get(f).is_none() {
                    errors.push(format!("dataset.{f}: required, no default"));
                    missing = true;
                }
            }
            if missing {
                None
            } else {
                section::<DataGenConfig>(obj, "dataset", &mut errors)
            }
        }
    };
    let channel = section::<ChannelConfig>(obj, "channel", &mut errors);
    let scheduler = section::<SchedulerConfig>(obj, "scheduler", &mut errors);
    let algorithm = section::<AlgorithmSection>(obj, "algorithm", &mut errors);
    let harness = section::<HarnessSection>(obj, "harness", &mut errors);
    let theory = section::<TheoryOptions>(obj, "theory", &mut errors);
    let sweep = section::<SweepSection>(obj, "sweep", &mut errors);
    // Semantic checks still run when the only problems so far are unknown sections, so
    // one pass reports everything.
    let parsed = errors.iter().all(|e| e.contains("unknown section"));
    let (Some(dataset), true) = (dataset, parsed) else {
        return Err(errors);
    };
    let config = Config {
        dataset,
        channel: channel.unwrap_or_default(),
        scheduler,
        algorithm: algorithm.unwrap_or_default(),
        harness: harness.unwrap_or_default(),
        theory: theory.unwrap_or_default(),
        sweep,
    }
    .resolved();
    errors.extend(config.violations());
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut defaulted = Vec::new();
    missing_paths(&config.to_value(), raw, "", &mut defaulted);
    Ok(Validated { config, defaulted })
}

/// Leaf paths of `resolved` that `raw` does not mention.
fn missing_paths(resolved: &Value, raw: &Value, prefix: &str, out: &mut Vec<String>) {
    let Some(obj) = resolved.as_object() else { return };
    for (k, v) in obj {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match raw.get(k) {
            None => out.push(path),
            Some(r) if v.is_object() && r.is_object() => missing_paths(v, r, &path, out),
            Some(_) => {}
        }
    }
}

/// JSON merge patch: objects merge recursively, `null` deletes, anything else replaces.
pub fn merge_patch(target: &mut Value, patch: &Value) {
    let Some(p) = patch.as_object() else {
        *target = patch.clone();
        return;
    };
    if !target.is_object() {
        *target = Value::Object(Map::new());
    }
    let t = target.as_object_mut().expect("object");
    for (k, v) in p {
        if v.is_null() {
            t.remove(k);
        } else {
            merge_patch(t.entry(k.clone()).or_insert(Value::Null), v);
        }
    }
}
