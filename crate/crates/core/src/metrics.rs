//! Accuracy matrix, stability/plasticity trade-off, calibration, task
//! probabilities, parameter drift, and the evaluation loop producing them.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{Network, ParamRole};
use crate::ops;
use crate::par::{self, Exec};
use crate::real::Real;
use crate::streams::{gather, EvalSet};

/// `T[i][j]`: accuracy (percent) on task `j` after learning task `i`.
/// Entries that were never measured are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMatrix {
    rows: Vec<Vec<Option<f64>>>,
}

impl TaskMatrix {
    pub fn new(n: usize) -> Self {
        TaskMatrix {
            rows: vec![vec![None; n]; n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("task matrix must be square".into()));
        }
        for v in rows.iter().flatten().flatten() {
            if !(0.0..=100.0).contains(v) {
                return Err(Error::Validation(format!("accuracy {v} outside [0, 100]")));
            }
        }
        Ok(TaskMatrix { rows })
    }

    pub fn n_tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn set(&mut self, after: usize, task: usize, acc: f64) -> Result<()> {
        if !(0.0..=100.0).contains(&acc) {
            return Err(Error::Validation(format!("accuracy {acc} outside [0, 100]")));
        }
        let n = self.n_tasks();
        let cell = self
            .rows
            .get_mut(after)
            .and_then(|r| r.get_mut(task))
            .ok_or(Error::Index {
                context: "task matrix",
                index: after.max(task),
                bound: n,
            })?;
        *cell = Some(acc);
        Ok(())
    }

    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        self.rows.get(after)?.get(task).copied().flatten()
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    fn final_row(&self) -> Result<Vec<f64>> {
        let last = self
            .rows
            .last()
            .ok_or_else(|| Error::Validation("task matrix is empty".into()))?;
        last.iter()
            .enumerate()
            .map(|(j, v)| v.ok_or_else(|| Error::Validation(format!("final row misses task {j}"))))
            .collect()
    }

    /// One CSV line per training checkpoint; unmeasured cells are empty.
    pub fn to_csv(&self) -> String {
        let n = self.n_tasks();
        let mut s = String::from("after_task");
        for j in 0..n {
            s.push_str(&format!(",task_{j}"));
        }
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            s.push_str(&i.to_string());
            for v in row {
                s.push(',');
                if let Some(v) = v {
                    s.push_str(&v.to_string());
                }
            }
            s.push('\n');
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of the final row.
pub fn average_accuracy(t: &TaskMatrix) -> Result<f64> {
    Ok(mean(&t.final_row()?))
}

/// Mean final-row accuracy over every task but the last.
pub fn stability(t: &TaskMatrix) -> Result<f64> {
    let row = t.final_row()?;
    if row.len() < 2 {
        return Err(Error::Validation("stability needs at least two tasks".into()));
    }
    Ok(mean(&row[..row.len() - 1]))
}

/// Mean accuracy of each task right after it was learned (the diagonal).
pub fn plasticity(t: &TaskMatrix) -> Result<f64> {
    let diag = (0..t.n_tasks())
        .map(|i| t.get(i, i).ok_or_else(|| Error::Validation(format!("diagonal entry {i} missing"))))
        .collect::<Result<Vec<f64>>>()?;
    if diag.is_empty() {
        return Err(Error::Validation("task matrix is empty".into()));
    }
    Ok(mean(&diag))
}

/// Harmonic mean `2SP/(S+P)`, 0 when `S + P == 0`.
pub fn tradeoff(s: f64, p: f64) -> f64 {
    if s + p == 0.0 {
        0.0
    } else {
        2.0 * s * p / (s + p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub counts: Vec<usize>,
    pub mean_confidence: Vec<f64>,
    pub mean_accuracy: Vec<f64>,
}

/// Expected calibration error over `bins` equal-width confidence bins on
/// `(0, 1]`. `probs` is a row-major `[labels.len(), classes]` block.
pub fn ece(probs: &[f64], classes: usize, labels: &[usize], bins: usize) -> Result<(f64, ReliabilityBins)> {
    if bins == 0 || classes == 0 || probs.len() != labels.len() * classes {
        return Err(Error::shape("ece", &[labels.len(), classes], &[probs.len(), bins]));
    }
    let mut counts = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut acc_sum = vec![0.0; bins];
    for (i, (row, &y)) in probs.chunks(classes).zip(labels).enumerate() {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("probability row {i} sums to {total}")));
        }
        if y >= classes {
            return Err(Error::Index {
                context: "ece label",
                index: y,
                bound: classes,
            });
        }
        let mut best = 0;
        for (j, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = j;
            }
        }
        let conf = row[best];
        let b = ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        counts[b] += 1;
        conf_sum[b] += conf;
        acc_sum[b] += f64::from(u8::from(best == y));
    }
    let n = labels.len() as f64;
    let mut e = 0.0;
    let mut mean_confidence = vec![0.0; bins];
    let mut mean_accuracy = vec![0.0; bins];
    for b in 0..bins {
        if counts[b] == 0 {
            continue;
        }
        let k = counts[b] as f64;
        mean_confidence[b] = conf_sum[b] / k;
        mean_accuracy[b] = acc_sum[b] / k;
        e += k / n * (mean_accuracy[b] - mean_confidence[b]).abs();
    }
    Ok((
        e,
        ReliabilityBins {
            counts,
            mean_confidence,
            mean_accuracy,
        },
    ))
}

/// Mean (over samples) softmax mass falling on each task's classes.
/// `task_of_class[c]` names the task owning class `c`.
pub fn task_probabilities(probs: &[f64], classes: usize, task_of_class: &[Option<usize>]) -> Result<Vec<f64>> {
    if task_of_class.len() < classes {
        return Err(Error::Config(format!(
            "task map covers {} of {classes} classes",
            task_of_class.len()
        )));
    }
    let mut map = Vec::with_capacity(classes);
    for (c, t) in task_of_class[..classes].iter().enumerate() {
        map.push(t.ok_or_else(|| Error::Config(format!("class {c} is not mapped to a task")))?);
    }
    let n_tasks = map.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![0.0; n_tasks];
    if classes == 0 || probs.is_empty() {
        return Ok(out);
    }
    let n = probs.len() / classes;
    for row in probs.chunks(classes) {
        for (c, p) in row.iter().enumerate() {
            out[map[c]] += *p;
        }
    }
    for v in out.iter_mut() {
        *v /= n as f64;
    }
    Ok(out)
}

fn layer_cosine(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mb = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    match (ma == 0.0, mb == 0.0) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x / ma, y / mb);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    // sqrt of the product keeps identical inputs at exactly 1.
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// Mean over weight-bearing layers of the cosine similarity between the
/// two models' max-abs-normalised weight tensors.
pub fn layer_drift<T: Real>(a: &Network<T>, b: &Network<T>) -> Result<f64> {
    if !a.same_structure(b) {
        return Err(Error::shape("layer_drift", &[a.param_count()], &[b.param_count()]));
    }
    let mut sims = Vec::new();
    for ((id, pa), pb) in a.param_ids().iter().zip(a.params()).zip(b.params()) {
        if id.role != ParamRole::Weight {
            continue;
        }
        if pa.numel() == 0 {
            continue;
        }
        let va: Vec<f64> = pa.data().iter().map(|v| v.as_f64()).collect();
        let vb: Vec<f64> = pb.data().iter().map(|v| v.as_f64()).collect();
        sims.push(layer_cosine(&va, &vb));
    }
    if sims.is_empty() {
        return Ok(1.0);
    }
    Ok(mean(&sims))
}

/// Pairwise [`layer_drift`] between model snapshots.
pub fn drift_matrix<T: Real>(snapshots: &[Network<T>]) -> Result<Vec<Vec<f64>>> {
    snapshots
        .iter()
        .map(|a| snapshots.iter().map(|b| layer_drift(a, b)).collect())
        .collect()
}

/// Predictions of a model on one evaluation split.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub correct: usize,
    pub total: usize,
    /// Row-major softmax probabilities, kept only when requested.
    pub probs: Option<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl EvalOutcome {
    /// Accuracy in percent (0 for an empty split).
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

/// Runs `model` over `set` in chunks of `chunk` samples.
pub fn evaluate<T: Real>(
    model: &Network<T>,
    data: &LabeledDataset,
    set: &EvalSet,
    chunk: usize,
    keep_probs: bool,
    exec: Exec,
) -> Result<EvalOutcome> {
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..set.entries.len()).step_by(chunk).collect();
    let c = model.output_dim();
    let parts = par::map(exec, &starts, |&s| -> Result<(usize, Vec<f64>, Vec<usize>)> {
        let e = (s + chunk).min(set.entries.len());
        let (x, y) = gather::<T>(data, &set.entries[s..e]);
        let logits = model.predict(&x)?;
        let pred = logits.argmax_rows();
        let correct = pred.iter().zip(&y).filter(|(p, t)| p == t).count();
        let probs = if keep_probs {
            ops::softmax_rows(logits.data(), c).iter().map(|v| v.as_f64()).collect()
        } else {
            Vec::new()
        };
        Ok((correct, probs, y))
    });
    let mut out = EvalOutcome {
        correct: 0,
        total: set.entries.len(),
        probs: keep_probs.then(Vec::new),
        labels: Vec::with_capacity(set.entries.len()),
    };
    for p in parts {
        let (correct, probs, y) = p?;
        out.correct += correct;
        if let Some(all) = out.probs.as_mut() {
            all.extend(probs);
        }
        out.labels.extend(y);
    }
    Ok(out)
}
