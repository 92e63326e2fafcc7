//! Multi-seed experiment execution and result files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use synergy_core::data::LabeledDataset;
use synergy_core::learner::{Learner, MethodKind, TaskData};
use synergy_core::metrics::{self, ReliabilityBins, TaskMatrix};
use synergy_core::models::{build_mlp, build_small_cnn, Network};
use synergy_core::par::{self, Exec};
use synergy_core::streams::{self, ScenarioPlan, Stream, StreamEvent};
use synergy_core::{rng, Precision, Real};

use crate::config::{EvalCadence, ModelSpec, RunConfig};
use crate::report::{emit_markdown, Aggregate};

/// Everything measured for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed_index: usize,
    pub seed: u64,
    pub method: MethodKind,
    pub scenario: String,
    /// Final-row mean accuracy of the inference model (semantic memory when
    /// the method has one).
    pub avg_accuracy: f64,
    pub avg_accuracy_working: f64,
    pub stability: Option<f64>,
    pub plasticity: Option<f64>,
    pub tradeoff: Option<f64>,
    pub ece: f64,
    pub reliability: ReliabilityBins,
    pub task_probs: Vec<f64>,
    pub drift_matrix: Vec<Vec<f64>>,
    pub steps: u64,
    pub semantic_updates: u64,
    pub fisher_updates: u64,
}

#[derive(Clone, Debug)]
pub struct SeedReport {
    pub metrics: SeedMetrics,
    pub task_matrix: TaskMatrix,
    pub working_matrix: Option<TaskMatrix>,
    /// Lines of the training log, already JSON-encoded.
    pub log: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: RunConfig,
    pub seeds: Vec<SeedReport>,
    pub aggregate: Aggregate,
}

fn exec_of(cfg: &RunConfig) -> Exec {
    if cfg.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

pub fn build_model<T: Real>(spec: &ModelSpec, sample_shape: &[usize], classes: usize, seed: u64) -> Result<Network<T>> {
    let net = match *spec {
        ModelSpec::Mlp { hidden } => build_mlp(sample_shape.iter().product(), hidden, classes, seed)?,
        ModelSpec::SmallCnn => match *sample_shape {
            [c, h, w] if h == w => build_small_cnn(c, h, classes, seed)?,
            [h, w] if h == w => build_small_cnn(1, h, classes, seed)?,
            _ => bail!("invalid field `model`: small_cnn needs square image samples, got shape {sample_shape:?}"),
        },
    };
    Ok(net)
}

/// Loads the configured dataset, with the data directory in the message on
/// failure.
pub fn load_data(cfg: &RunConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    cfg.stream
        .dataset
        .load(&cfg.data_dir)
        .with_context(|| format!("loading data from {}", cfg.data_dir.display()))
}

/// Runs every seed and aggregates. Nothing is written to disk.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    let seeds: Vec<(usize, u64)> = cfg.seed_list().into_iter().enumerate().collect();
    let exec = exec_of(cfg);
    let reports = par::map(exec, &seeds, |&(k, seed)| match cfg.synergy.precision {
        Precision::F64 => run_seed::<f64>(cfg, &train, &test, k, seed),
        Precision::F32 => run_seed::<f32>(cfg, &train, &test, k, seed),
    });
    let seeds = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let metrics: Vec<&SeedMetrics> = seeds.iter().map(|s| &s.metrics).collect();
    let aggregate = Aggregate::from_seeds(&metrics);
    Ok(ExperimentReport { config: cfg.clone(), seeds, aggregate })
}

fn eval_row<T: Real>(
    model: &Network<T>,
    test: &LabeledDataset,
    plan: &ScenarioPlan,
    upto: usize,
    chunk: usize,
    exec: Exec,
) -> Result<Vec<f64>> {
    plan.eval[..=upto]
        .iter()
        .map(|set| Ok(metrics::evaluate(model, test, set, chunk, false, exec)?.accuracy()))
        .collect()
}

fn task_map(plan: &ScenarioPlan) -> Option<Vec<Option<usize>>> {
    let mut map = vec![None; plan.classes];
    for (t, task) in plan.tasks.iter().enumerate() {
        for &c in &task.classes {
            if map[c].is_some() {
                return None;
            }
            map[c] = Some(t);
        }
    }
    map.iter().all(Option::is_some).then_some(map)
}

/// Trains and evaluates one seed.
pub fn run_seed<T: Real>(
    cfg: &RunConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    index: usize,
    seed: u64,
) -> Result<SeedReport> {
    let started = Instant::now();
    let exec = exec_of(cfg);
    let method = cfg.method;
    let plan = streams::plan(&cfg.stream.scenario, train, test, cfg.synergy.epochs, rng::derive(seed, "stream"))?;
    let net = build_model::<T>(&cfg.model, &train.sample_shape, plan.classes, rng::derive(seed, "model"))?;
    let mut sc = cfg.synergy.clone();
    sc.seed = rng::derive(seed, "learner");
    let mut learner = Learner::new(method, sc, net)?.with_exec(exec);

    let n_eval = plan.eval.len();
    let per_task = cfg.eval_cadence == EvalCadence::PerTask && plan.boundaries && n_eval == plan.n_tasks();
    let mut tm = TaskMatrix::new(n_eval);
    let mut wm = cfg.record_working.then(|| TaskMatrix::new(n_eval));
    let mut snapshots: Vec<Network<T>> = Vec::new();
    let mut log = Vec::new();
    let mut pending: Option<usize> = None;

    let stream = Stream::<T>::new(&plan, train, cfg.synergy.batch_size)?;
    for event in stream {
        match event {
            StreamEvent::Batch(b) => {
                let report = if method.needs_boundaries() {
                    let finished = pending.take().map(|t| {
                        let entries = &plan.tasks[t].entries;
                        // Later epochs repeat the first one's samples.
                        streams::gather::<T>(train, &entries[..entries.len() / cfg.synergy.epochs])
                    });
                    let data = finished.as_ref().map(|(x, y)| TaskData { inputs: x, labels: y });
                    learner.observe_with_boundary(&b.inputs, &b.labels, data)?
                } else {
                    learner.observe(&b.inputs, &b.labels)?
                };
                if cfg.log_steps {
                    let mut v = serde_json::to_value(&report)?;
                    v["seed"] = json!(index);
                    log.push(v.to_string());
                }
            }
            StreamEvent::TaskEnd { task } => {
                snapshots.push(learner.inference_model(true).clone());
                let mut line = json!({"seed": index, "event": "task_end", "task": task, "step": learner.steps()});
                if per_task {
                    let row = eval_row(learner.inference_model(true), test, &plan, task, cfg.eval_chunk, exec)?;
                    for (j, a) in row.iter().enumerate() {
                        tm.set(task, j, *a)?;
                    }
                    line["accuracy"] = json!(row);
                    if let Some(wm) = wm.as_mut() {
                        let row = eval_row(learner.working(), test, &plan, task, cfg.eval_chunk, exec)?;
                        for (j, a) in row.iter().enumerate() {
                            wm.set(task, j, *a)?;
                        }
                    }
                }
                log.push(line.to_string());
                if method.needs_boundaries() {
                    pending = Some(task);
                }
            }
        }
    }

    // Final evaluation of both models on every split.
    let last = n_eval - 1;
    let classes = plan.classes;
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    let mut final_row = Vec::with_capacity(n_eval);
    let mut working_row = Vec::with_capacity(n_eval);
    for (j, set) in plan.eval.iter().enumerate() {
        let out = metrics::evaluate(learner.inference_model(true), test, set, cfg.eval_chunk, true, exec)?;
        final_row.push(out.accuracy());
        tm.set(last, j, out.accuracy())?;
        probs.extend(out.probs.expect("requested"));
        labels.extend(out.labels);
        let w = metrics::evaluate(learner.working(), test, set, cfg.eval_chunk, false, exec)?.accuracy();
        working_row.push(w);
        if let Some(wm) = wm.as_mut() {
            wm.set(last, j, w)?;
        }
    }
    let avg_accuracy = metrics::average_accuracy(&tm)?;
    let avg_accuracy_working = working_row.iter().sum::<f64>() / working_row.len() as f64;
    let (stability, plasticity, tradeoff) = if per_task && n_eval >= 2 {
        let s = metrics::stability(&tm)?;
        let p = metrics::plasticity(&tm)?;
        (Some(s), Some(p), Some(metrics::tradeoff(s, p)))
    } else {
        (None, None, None)
    };
    let (ece, reliability) = metrics::ece(&probs, classes, &labels, 10)?;
    let task_probs = match task_map(&plan) {
        Some(map) => metrics::task_probabilities(&probs, classes, &map)?,
        None => Vec::new(),
    };
    if snapshots.is_empty() {
        snapshots.push(learner.inference_model(true).clone());
    }
    let drift_matrix = metrics::drift_matrix(&snapshots)?;

    let metrics = SeedMetrics {
        seed_index: index,
        seed,
        method,
        scenario: cfg.scenario_name.clone(),
        avg_accuracy,
        avg_accuracy_working,
        stability,
        plasticity,
        tradeoff,
        ece,
        reliability,
        task_probs,
        drift_matrix,
        steps: learner.steps(),
        semantic_updates: learner.semantic_memory().map_or(0, |m| m.updates()),
        fisher_updates: learner.fisher().map_or(0, |f| f.updates()),
    };
    log.push(
        json!({
            "seed": index,
            "event": "done",
            "step": learner.steps(),
            "avg_accuracy": avg_accuracy,
            "avg_accuracy_working": avg_accuracy_working,
            "final_row": final_row,
        })
        .to_string(),
    );
    log::info!(
        "{} on {} seed {index}: {:.2}% (working {:.2}%) in {:.1}s",
        method.label(),
        cfg.scenario_name,
        avg_accuracy,
        avg_accuracy_working,
        started.elapsed().as_secs_f64()
    );
    Ok(SeedReport { metrics, task_matrix: tm, working_matrix: wm, log })
}

/// Writes the per-seed and aggregate files under `dir`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut log = String::new();
    for s in &report.seeds {
        let sd = dir.join(format!("seed_{}", s.metrics.seed_index));
        fs::create_dir_all(&sd)?;
        fs::write(sd.join("metrics.json"), serde_json::to_string_pretty(&s.metrics)? + "\n")?;
        fs::write(sd.join("task_matrix.csv"), s.task_matrix.to_csv())?;
        if let Some(wm) = &s.working_matrix {
            fs::write(sd.join("task_matrix_working.csv"), wm.to_csv())?;
        }
        for line in &s.log {
            log.push_str(line);
            log.push('\n');
        }
    }
    fs::write(dir.join("training.log.jsonl"), log)?;
    fs::write(dir.join("aggregate.json"), serde_json::to_string_pretty(&report.aggregate)? + "\n")?;
    fs::write(dir.join("table.md"), emit_markdown(std::slice::from_ref(&report.aggregate), "avg_accuracy"))?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&report.config)? + "\n")?;
    Ok(())
}

/// Methods of the ablation matrix, in table order.
pub const ABLATION: [MethodKind; 6] = [
    MethodKind::Synergy,
    MethodKind::SynergyNoAdj,
    MethodKind::SynergyWorkingFisher,
    MethodKind::MeanErOewc,
    MethodKind::MeanEr,
    MethodKind::Er,
];

/// Runs the ablation matrix with shared hyperparameters, one subdirectory
/// per method. Methods that need boundaries are skipped on streams without
/// them.
pub fn run_ablation(cfg: &RunConfig, dir: Option<&Path>) -> Result<Vec<Aggregate>> {
    let mut out = Vec::new();
    for m in ABLATION {
        if m.needs_boundaries() && !cfg.stream.scenario.has_boundaries() {
            log::warn!("skipping {}: stream has no task boundaries", m.label());
            continue;
        }
        let c = RunConfig { method: m, output_dir: cfg.output_dir.join(m.name()), ..cfg.clone() };
        let report = run_experiment(&c)?;
        if let Some(d) = dir {
            write_outputs(&report, &d.join(m.name()))?;
        }
        out.push(report.aggregate);
    }
    if let Some(d) = dir {
        fs::write(d.join("table.md"), emit_markdown(&out, "avg_accuracy"))?;
    }
    Ok(out)
}

/// First `k` stream events as JSON lines: labels and input checksum per
/// batch, plus boundary markers.
pub fn stream_dump(cfg: &RunConfig, seed_index: usize, k: usize) -> Result<Vec<Value>> {
    let (train, test) = load_data(cfg)?;
    let seed = *cfg
        .seed_list()
        .get(seed_index)
        .with_context(|| format!("seed index {seed_index} out of range for n_seeds = {}", cfg.n_seeds))?;
    let plan = streams::plan(&cfg.stream.scenario, &train, &test, cfg.synergy.epochs, rng::derive(seed, "stream"))?;
    let stream = Stream::<f64>::new(&plan, &train, cfg.synergy.batch_size)?;
    let mut out = Vec::new();
    let mut batches = 0;
    for event in stream {
        if batches == k {
            break;
        }
        match event {
            StreamEvent::Batch(b) => {
                batches += 1;
                out.push(json!({
                    "step": b.step,
                    "labels": b.labels,
                    "checksum": format!("{:016x}", streams::batch_checksum(&b.inputs, &b.labels)),
                }));
            }
            StreamEvent::TaskEnd { task } => out.push(json!({"task_end": task})),
        }
    }
    Ok(out)
}

/// Per-seed metric values by name, for aggregation.
pub(crate) fn scalar_metrics(m: &SeedMetrics) -> BTreeMap<&'static str, Option<f64>> {
    BTreeMap::from([
        ("avg_accuracy", Some(m.avg_accuracy)),
        ("avg_accuracy_working", Some(m.avg_accuracy_working)),
        ("stability", m.stability),
        ("plasticity", m.plasticity),
        ("tradeoff", m.tradeoff),
        ("ece", Some(m.ece)),
    ])
}
