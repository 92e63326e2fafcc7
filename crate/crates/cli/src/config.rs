//! Run configuration: JSON file, per-setting presets, command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use synergy_core::learner::{MethodKind, Setting, SynergyConfig};
use synergy_core::streams::{DatasetSpec, Scenario, StreamSpec, Weighting};
use synergy_core::Precision;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalCadence {
    /// Evaluate every seen task at each boundary (fills the task matrix).
    #[default]
    PerTask,
    /// Only evaluate the final model.
    EndOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
    SmallCnn,
}

fn default_hidden() -> usize {
    100
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Mlp { hidden: default_hidden() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: MethodKind,
    /// Short scenario name used in tables.
    pub scenario_name: String,
    pub stream: StreamSpec,
    pub synergy: SynergyConfig,
    pub model: ModelSpec,
    pub n_seeds: usize,
    /// Explicit per-seed master seeds. When absent they are derived from
    /// `synergy.seed`.
    pub seeds: Option<Vec<u64>>,
    pub output_dir: PathBuf,
    pub data_dir: PathBuf,
    pub eval_cadence: EvalCadence,
    /// Also fill a task matrix for the working model.
    pub record_working: bool,
    /// Write every step's losses to `training.log.jsonl`.
    pub log_steps: bool,
    pub log_level: String,
    pub eval_chunk: usize,
    /// Run seeds one after another instead of on the thread pool.
    pub sequential: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let (scenario_name, stream) = scenario_preset("r-mnist").expect("known scenario");
        RunConfig {
            method: MethodKind::Synergy,
            scenario_name,
            stream,
            synergy: SynergyConfig::default(),
            model: ModelSpec::default(),
            n_seeds: 1,
            seeds: None,
            output_dir: PathBuf::from("runs/out"),
            data_dir: PathBuf::from("data/mnist"),
            eval_cadence: EvalCadence::PerTask,
            record_working: false,
            log_steps: false,
            log_level: "info".into(),
            eval_chunk: 1000,
            sequential: false,
        }
    }
}

/// Scenario names accepted by `--scenario`.
pub const SCENARIOS: &[&str] = &["r-mnist", "mnist-360", "seq-mnist", "gcil-u", "gcil-l", "synthetic", "synthetic-joint"];

/// Ten Gaussian classes in 20 dimensions. The Class-IL fixture uses
/// overlapping classes (separation 3) so forgetting is visible; the joint
/// single-task variant is well separated (separation 5) as a sanity check.
fn synthetic(tasks: usize, separation: f64) -> StreamSpec {
    StreamSpec {
        scenario: Scenario::ClassIl { n_tasks: tasks },
        dataset: DatasetSpec::Synthetic {
            classes: 10,
            dim: 20,
            train_per_class: 500,
            test_per_class: 200,
            separation,
            seed: 11,
        },
    }
}

/// Hyperparameters for streams outside the tuned table: the synthetic
/// fixture's values for synthetic data, else the R-MNIST row.
fn fallback_hyperparameters(stream: &StreamSpec, buffer: usize) -> SynergyConfig {
    match stream.dataset {
        DatasetSpec::Synthetic { .. } => SynergyConfig {
            batch_size: 10,
            epochs: 5,
            eta: 0.1,
            lambda: 0.5,
            beta: 1.0,
            alpha_s: 0.99,
            r_s: 0.5,
            alpha_f: 0.99,
            r_f: 0.1,
            buffer_size: buffer,
            ..SynergyConfig::default()
        },
        DatasetSpec::Mnist => SynergyConfig { buffer_size: buffer, ..SynergyConfig::default() },
    }
}

/// Named stream presets.
pub fn scenario_preset(name: &str) -> Option<(String, StreamSpec)> {
    let mnist = |scenario| StreamSpec { scenario, dataset: DatasetSpec::Mnist };
    let spec = match name {
        "r-mnist" => mnist(Scenario::rotated_mnist()),
        "mnist-360" => mnist(Scenario::mnist_360()),
        "seq-mnist" => mnist(Scenario::ClassIl { n_tasks: 5 }),
        "gcil-u" => mnist(Scenario::gcil(Weighting::Uniform)),
        "gcil-l" => mnist(Scenario::gcil(Weighting::Longtail)),
        "synthetic" => synthetic(5, 3.0),
        "synthetic-joint" => synthetic(1, 5.0),
        _ => return None,
    };
    Some((name.to_string(), spec))
}

/// Preset name of a stream, or `<scenario>/<dataset>` for custom ones.
pub fn scenario_name_of(stream: &StreamSpec) -> String {
    if let Some(name) = SCENARIOS.iter().find(|n| scenario_preset(n).is_some_and(|(_, s)| &s == stream)) {
        return name.to_string();
    }
    let tag = |v: Value| v.get("type").and_then(Value::as_str).unwrap_or("custom").to_string();
    let scenario = tag(serde_json::to_value(&stream.scenario).unwrap_or_default());
    let dataset = tag(serde_json::to_value(&stream.dataset).unwrap_or_default());
    format!("{scenario}/{dataset}")
}

/// The tuned-hyperparameter row a stream maps to, if any.
pub fn setting_of(stream: &StreamSpec) -> Option<Setting> {
    match (&stream.scenario, &stream.dataset) {
        (Scenario::RotatedDomainIl { .. }, DatasetSpec::Mnist) => Some(Setting::RMnist),
        (Scenario::Blurry360 { .. }, DatasetSpec::Mnist) => Some(Setting::Mnist360),
        (Scenario::Gcil { weighting: Weighting::Uniform, .. }, _) => Some(Setting::GcilU),
        (Scenario::Gcil { weighting: Weighting::Longtail, .. }, _) => Some(Setting::GcilL),
        _ => None,
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub method: Option<MethodKind>,
    pub scenario: Option<String>,
    pub buffer_size: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub precision: Option<Precision>,
}

fn object_mut<'a>(v: &'a mut Value, key: &str) -> Result<&'a mut Map<String, Value>> {
    let root = v.as_object_mut().ok_or_else(|| anyhow!("configuration must be a JSON object"))?;
    let entry = root.entry(key.to_string()).or_insert_with(|| json!({}));
    entry.as_object_mut().ok_or_else(|| anyhow!("field `{key}` must be an object"))
}

/// Builds the final configuration from an optional file value and overrides.
///
/// Order: file, then flags on top; then the `synergy` block is laid over the
/// preset for the resulting (scenario, buffer) pair, so explicitly given
/// hyperparameters always win over preset ones.
pub fn resolve(file: Option<Value>, ov: &Overrides) -> Result<RunConfig> {
    let mut v = file.unwrap_or_else(|| json!({}));
    if !v.is_object() {
        bail!("configuration must be a JSON object");
    }
    {
        let root = v.as_object_mut().expect("checked above");
        if let Some(m) = ov.method {
            root.insert("method".into(), serde_json::to_value(m)?);
        }
        if let Some(name) = &ov.scenario {
            let (label, spec) = scenario_preset(name)
                .ok_or_else(|| anyhow!("unknown scenario `{name}` (expected one of {})", SCENARIOS.join(", ")))?;
            root.insert("scenario_name".into(), json!(label));
            root.insert("stream".into(), serde_json::to_value(spec)?);
        }
        if let Some(n) = ov.seeds {
            root.insert("n_seeds".into(), json!(n));
        }
        if let Some(d) = &ov.data_dir {
            root.insert("data_dir".into(), json!(d));
        }
        if let Some(d) = &ov.out {
            root.insert("output_dir".into(), json!(d));
        }
    }
    {
        let syn = object_mut(&mut v, "synergy")?;
        if let Some(b) = ov.buffer_size {
            syn.insert("buffer_size".into(), json!(b));
        }
        if let Some(s) = ov.seed {
            syn.insert("seed".into(), json!(s));
        }
        if let Some(p) = ov.precision {
            syn.insert("precision".into(), serde_json::to_value(p)?);
        }
    }

    let root = v.as_object().expect("object");
    let stream: StreamSpec = match root.get("stream") {
        Some(s) => serde_json::from_value(s.clone()).context("invalid field `stream`")?,
        None => RunConfig::default().stream,
    };
    let name_missing = !root.contains_key("scenario_name");
    let syn_file = root.get("synergy").cloned().unwrap_or_else(|| json!({}));
    let buffer = match syn_file.get("buffer_size") {
        Some(b) => b
            .as_u64()
            .ok_or_else(|| anyhow!("invalid field `synergy.buffer_size`: expected a non-negative integer"))?
            as usize,
        None => 500,
    };
    let base = setting_of(&stream)
        .and_then(|s| SynergyConfig::preset(s, buffer))
        .unwrap_or_else(|| fallback_hyperparameters(&stream, buffer));
    let mut merged = serde_json::to_value(base)?;
    let dst = merged.as_object_mut().expect("struct serializes to object");
    for (k, val) in syn_file.as_object().expect("object") {
        dst.insert(k.clone(), val.clone());
    }
    v.as_object_mut().expect("object").insert("synergy".into(), merged);
    if name_missing {
        v.as_object_mut().expect("object").insert("scenario_name".into(), json!(scenario_name_of(&stream)));
    }

    let cfg: RunConfig = serde_json::from_value(v).context("invalid configuration")?;
    if cfg.scenario_name.is_empty() {
        bail!("invalid field `scenario_name`: must not be empty");
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a JSON file (if given) and resolves it against the overrides.
pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?)
        }
        None => None,
    };
    resolve(file, ov)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            bail!("invalid field `n_seeds`: must be at least 1");
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.n_seeds {
                bail!("invalid field `seeds`: {} listed but n_seeds = {}", s.len(), self.n_seeds);
            }
        }
        if self.eval_chunk == 0 {
            bail!("invalid field `eval_chunk`: must be positive");
        }
        if let ModelSpec::Mlp { hidden: 0 } = self.model {
            bail!("invalid field `model.hidden`: must be positive");
        }
        self.synergy.validate().map_err(|e| anyhow!("invalid field in `synergy`: {e}"))?;
        if self.method.needs_boundaries() && !self.stream.scenario.has_boundaries() {
            bail!("invalid field `method`: {} needs task boundaries, which this stream does not have", self.method.label());
        }
        Ok(())
    }

    /// Master seed of every run, in order.
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.n_seeds as u64)
                .map(|k| synergy_core::rng::derive_indexed(self.synergy.seed, "run.seed", k))
                .collect(),
        }
    }
}
