//! Scenario generators. A scenario is planned up front as, per task, an
//! ordered list of `(dataset index, rotation angle)` entries; batches are
//! gathered (and rotated) lazily while the stream is consumed.
//!
//! Task identity only leaves this module through [`StreamEvent::TaskEnd`],
//! which the evaluation harness and boundary-consuming baselines read;
//! [`StreamBatch`] carries inputs and labels only.

use std::marker::PhantomData;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    Longtail,
}

fn default_tasks() -> usize {
    20
}
fn default_angle_range() -> (f64, f64) {
    (0.0, 180.0)
}
fn default_rounds() -> usize {
    3
}
fn default_sweep() -> f64 {
    360.0
}
fn default_blurry_classes() -> usize {
    9
}
fn default_class_offset() -> f64 {
    60.0
}

/// How Blurry360 assigns rotation angles to training samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSchedule {
    /// Each class sweeps `sweep_degrees` over its own samples in the order
    /// they are streamed, starting at `(c - 1)·class_offset`.
    #[default]
    PerClass,
    /// One sweep over the whole stream: the angle is nondecreasing in stream
    /// position regardless of class.
    Global,
}
fn default_samples_per_task() -> usize {
    1000
}
fn default_max_classes() -> usize {
    50
}
fn default_gil_seed() -> u64 {
    1993
}
fn default_imbalance() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Disjoint class splits in ascending label order.
    ClassIl { n_tasks: usize },
    /// One uniformly drawn rotation per task, fixed label set.
    RotatedDomainIl {
        #[serde(default = "default_tasks")]
        n_tasks: usize,
        #[serde(default = "default_angle_range")]
        angle_range: (f64, f64),
    },
    /// Consecutive class pairs `{k, k+1 mod classes}` repeated for `rounds`,
    /// with rotations that grow monotonically along the stream (see
    /// [`RotationSchedule`]).
    Blurry360 {
        #[serde(default = "default_rounds")]
        rounds: usize,
        #[serde(default = "default_sweep")]
        sweep_degrees: f64,
        #[serde(default = "default_blurry_classes")]
        classes: usize,
        #[serde(default)]
        schedule: RotationSchedule,
        #[serde(default = "default_class_offset")]
        class_offset: f64,
    },
    /// Generalised class-incremental stream: random class subsets and
    /// uniform or long-tailed sample allocation.
    Gcil {
        #[serde(default = "default_tasks")]
        n_tasks: usize,
        #[serde(default = "default_samples_per_task")]
        samples_per_task: usize,
        #[serde(default = "default_max_classes")]
        max_classes: usize,
        #[serde(default)]
        weighting: Weighting,
        #[serde(default = "default_gil_seed")]
        gil_seed: u64,
        /// Largest-to-smallest class weight ratio in long-tail mode.
        #[serde(default = "default_imbalance")]
        imbalance: f64,
    },
}

impl Scenario {
    pub fn rotated_mnist() -> Self {
        Scenario::RotatedDomainIl {
            n_tasks: default_tasks(),
            angle_range: default_angle_range(),
        }
    }

    pub fn mnist_360() -> Self {
        Scenario::Blurry360 {
            rounds: default_rounds(),
            sweep_degrees: default_sweep(),
            classes: default_blurry_classes(),
            schedule: RotationSchedule::PerClass,
            class_offset: default_class_offset(),
        }
    }

    pub fn gcil(weighting: Weighting) -> Self {
        Scenario::Gcil {
            n_tasks: default_tasks(),
            samples_per_task: default_samples_per_task(),
            max_classes: default_max_classes(),
            weighting,
            gil_seed: default_gil_seed(),
            imbalance: default_imbalance(),
        }
    }

    /// Whether task boundaries are meaningful (and emitted) for this scenario.
    pub fn has_boundaries(&self) -> bool {
        !matches!(self, Scenario::Blurry360 { .. })
    }
}

/// Base dataset a stream draws from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// MNIST IDX files from the data directory.
    Mnist,
    /// Gaussian blobs generated in memory (train and test from separate
    /// seeds derived from `seed`).
    Synthetic {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        separation: f64,
        seed: u64,
    },
}

impl DatasetSpec {
    /// Loads or generates the `(train, test)` pair.
    pub fn load(&self, data_dir: &std::path::Path) -> Result<(LabeledDataset, LabeledDataset)> {
        match *self {
            DatasetSpec::Mnist => crate::data::load_mnist(data_dir),
            DatasetSpec::Synthetic {
                classes,
                dim,
                train_per_class,
                test_per_class,
                separation,
                seed,
            } => {
                let train = crate::data::synthetic_gaussians(
                    classes,
                    dim,
                    train_per_class,
                    separation,
                    rng::derive(seed, "synthetic.train"),
                )?;
                let test = crate::data::synthetic_gaussians(
                    classes,
                    dim,
                    test_per_class,
                    separation,
                    rng::derive(seed, "synthetic.test"),
                )?;
                Ok((train, test))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub scenario: Scenario,
    pub dataset: DatasetSpec,
}

/// One planned task: the ordered training entries of all its epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskPlan {
    pub entries: Vec<(usize, f32)>,
    pub classes: Vec<usize>,
    /// Rotation shared by the whole task, when there is one.
    pub angle: Option<f64>,
}

/// A named evaluation split: test-set entries with their rotations.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    pub name: String,
    pub entries: Vec<(usize, f32)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioPlan {
    pub tasks: Vec<TaskPlan>,
    pub eval: Vec<EvalSet>,
    pub boundaries: bool,
    /// Class universe of the scenario.
    pub classes: usize,
}

impl ScenarioPlan {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn total_samples(&self) -> usize {
        self.tasks.iter().map(|t| t.entries.len()).sum()
    }

    /// Steps per task at a given batch size (ceil division).
    pub fn steps_per_task(&self, batch: usize) -> Vec<usize> {
        self.tasks.iter().map(|t| t.entries.len().div_ceil(batch)).collect()
    }
}

fn shuffled(mut v: Vec<usize>, r: &mut Rng) -> Vec<usize> {
    v.shuffle(r);
    v
}

fn epochs_of(indices: &[usize], epochs: usize, angle: f32, r: &mut Rng) -> Vec<(usize, f32)> {
    let mut out = Vec::with_capacity(indices.len() * epochs);
    for _ in 0..epochs {
        out.extend(shuffled(indices.to_vec(), r).into_iter().map(|i| (i, angle)));
    }
    out
}

/// Plans a scenario over `train` / `test` with the given stream seed.
pub fn plan(
    scenario: &Scenario,
    train: &LabeledDataset,
    test: &LabeledDataset,
    epochs: usize,
    seed: u64,
) -> Result<ScenarioPlan> {
    if epochs == 0 {
        return Err(Error::Config("epochs must be positive".into()));
    }
    let mut order = rng::stream(seed, "stream.order");
    match *scenario {
        Scenario::ClassIl { n_tasks } => class_il(train, test, n_tasks, epochs, &mut order),
        Scenario::RotatedDomainIl { n_tasks, angle_range } => {
            rotated(train, test, n_tasks, angle_range, epochs, seed, &mut order)
        }
        Scenario::Blurry360 {
            rounds,
            sweep_degrees,
            classes,
            schedule,
            class_offset,
        } => blurry360(
            train,
            test,
            BlurryParams {
                rounds,
                sweep: sweep_degrees,
                classes,
                schedule,
                class_offset,
            },
            epochs,
            &mut order,
        ),
        Scenario::Gcil {
            n_tasks,
            samples_per_task,
            max_classes,
            weighting,
            gil_seed,
            imbalance,
        } => gcil(
            train,
            test,
            GcilParams {
                n_tasks,
                samples_per_task,
                max_classes,
                weighting,
                gil_seed,
                imbalance,
            },
            epochs,
            &mut order,
        ),
    }
}

fn class_il(
    train: &LabeledDataset,
    test: &LabeledDataset,
    n_tasks: usize,
    epochs: usize,
    order: &mut Rng,
) -> Result<ScenarioPlan> {
    let c = train.class_count;
    if n_tasks == 0 || !c.is_multiple_of(n_tasks) {
        return Err(Error::Config(format!(
            "class_il: {c} classes cannot be split evenly into {n_tasks} tasks"
        )));
    }
    let per = c / n_tasks;
    let by_class = train.indices_by_class();
    let test_by_class = test.indices_by_class();
    let mut tasks = Vec::new();
    let mut eval = Vec::new();
    for t in 0..n_tasks {
        let classes: Vec<usize> = (t * per..(t + 1) * per).collect();
        let idx: Vec<usize> = classes.iter().flat_map(|&k| by_class[k].iter().copied()).collect();
        tasks.push(TaskPlan {
            entries: epochs_of(&idx, epochs, 0.0, order),
            classes: classes.clone(),
            angle: None,
        });
        let mut tidx: Vec<usize> = classes
            .iter()
            .flat_map(|&k| test_by_class.get(k).into_iter().flatten().copied())
            .collect();
        tidx.sort_unstable();
        eval.push(EvalSet {
            name: format!("task_{t}"),
            entries: tidx.into_iter().map(|i| (i, 0.0)).collect(),
        });
    }
    Ok(ScenarioPlan {
        tasks,
        eval,
        boundaries: true,
        classes: c,
    })
}

fn rotated(
    train: &LabeledDataset,
    test: &LabeledDataset,
    n_tasks: usize,
    (lo, hi): (f64, f64),
    epochs: usize,
    seed: u64,
    order: &mut Rng,
) -> Result<ScenarioPlan> {
    if n_tasks == 0 || !(lo <= hi) {
        return Err(Error::Config(format!(
            "rotated stream needs n_tasks > 0 and a valid angle range, got {n_tasks} and ({lo}, {hi})"
        )));
    }
    let mut angles = rng::stream(seed, "stream.angles");
    let all: Vec<usize> = (0..train.len()).collect();
    let mut tasks = Vec::new();
    let mut eval = Vec::new();
    for t in 0..n_tasks {
        let angle = if lo == hi { lo } else { angles.random_range(lo..hi) };
        tasks.push(TaskPlan {
            entries: epochs_of(&all, epochs, angle as f32, order),
            classes: (0..train.class_count).collect(),
            angle: Some(angle),
        });
        eval.push(EvalSet {
            name: format!("task_{t}"),
            entries: (0..test.len()).map(|i| (i, angle as f32)).collect(),
        });
    }
    Ok(ScenarioPlan {
        tasks,
        eval,
        boundaries: true,
        classes: train.class_count,
    })
}

struct BlurryParams {
    rounds: usize,
    sweep: f64,
    classes: usize,
    schedule: RotationSchedule,
    class_offset: f64,
}

/// Interleaves two ordered lists, drawing from each with probability
/// proportional to what it has left, so both keep their internal order.
fn interleave(a: &[(usize, f32)], b: &[(usize, f32)], r: &mut Rng) -> Vec<(usize, f32)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        let (ra, rb) = (a.len() - i, b.len() - j);
        if r.random_range(0..ra + rb) < ra {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out
}

fn blurry360(
    train: &LabeledDataset,
    test: &LabeledDataset,
    p: BlurryParams,
    epochs: usize,
    order: &mut Rng,
) -> Result<ScenarioPlan> {
    let BlurryParams {
        rounds,
        sweep,
        classes,
        schedule,
        class_offset,
    } = p;
    if classes < 2 || classes > train.class_count || rounds == 0 {
        return Err(Error::Config(format!(
            "blurry360 needs 2 ≤ classes ≤ {} and rounds > 0, got {classes} and {rounds}",
            train.class_count
        )));
    }
    // Each class occurs twice per round (as the first and the second member
    // of a pair), so its shuffled samples are cut into 2·rounds chunks
    // handed out in order of occurrence.
    let chunks = 2 * rounds;
    let by_class: Vec<Vec<usize>> = train.indices_by_class()[..classes]
        .iter()
        .map(|v| shuffled(v.clone(), order))
        .collect();
    let wrap = |a: f64| a.rem_euclid(360.0) as f32;
    // Per-class angles follow the class's own consumption order.
    let class_angle = |c: usize, k: usize, n: usize| wrap((c as f64 - 1.0) * class_offset + sweep * k as f64 / n as f64);
    let chunk_of = |c: usize, j: usize| -> Vec<(usize, f32)> {
        let idx = &by_class[c];
        let n = idx.len();
        (j * n / chunks..(j + 1) * n / chunks)
            .map(|k| (idx[k], class_angle(c, k, n)))
            .collect()
    };
    let mut used = vec![0usize; classes];
    let mut raw = Vec::new();
    for _ in 0..rounds {
        for k in 0..classes {
            let pair = [k, (k + 1) % classes];
            let parts: Vec<Vec<(usize, f32)>> = pair
                .iter()
                .map(|&c| {
                    used[c] += 1;
                    chunk_of(c, used[c] - 1)
                })
                .collect();
            let mut entries = Vec::new();
            for _ in 0..epochs {
                match schedule {
                    RotationSchedule::PerClass => entries.extend(interleave(&parts[0], &parts[1], order)),
                    RotationSchedule::Global => {
                        let mut all: Vec<(usize, f32)> = parts.concat();
                        all.shuffle(order);
                        entries.extend(all);
                    }
                }
            }
            raw.push((pair.to_vec(), entries));
        }
    }
    let total: usize = raw.iter().map(|(_, e)| e.len()).sum();
    let mut pos = 0usize;
    let tasks = raw
        .into_iter()
        .map(|(pair, mut entries)| {
            if schedule == RotationSchedule::Global {
                for e in entries.iter_mut() {
                    e.1 = (sweep * pos as f64 / total.max(1) as f64) as f32;
                    pos += 1;
                }
            }
            TaskPlan {
                entries,
                classes: pair,
                angle: None,
            }
        })
        .collect();
    let test_by_class = test.indices_by_class();
    let mut entries = Vec::new();
    for c in 0..classes.min(test_by_class.len()) {
        let n = test_by_class[c].len();
        for (k, &i) in test_by_class[c].iter().enumerate() {
            entries.push((i, (sweep * k as f64 / n as f64) as f32));
        }
    }
    entries.sort_unstable_by_key(|e| e.0);
    Ok(ScenarioPlan {
        tasks,
        eval: vec![EvalSet {
            name: "all".into(),
            entries,
        }],
        boundaries: false,
        classes,
    })
}

struct GcilParams {
    n_tasks: usize,
    samples_per_task: usize,
    max_classes: usize,
    weighting: Weighting,
    gil_seed: u64,
    imbalance: f64,
}

/// Splits `total` proportionally to `weights` with largest-remainder
/// rounding, giving every entry at least one when `total` allows it.
pub fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let k = weights.len();
    if k == 0 {
        return Vec::new();
    }
    let floor = if total >= k { 1 } else { 0 };
    let rest = total - floor * k;
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| rest as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = rest - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts.iter().map(|c| c + floor).collect()
}

fn gcil(
    train: &LabeledDataset,
    test: &LabeledDataset,
    p: GcilParams,
    epochs: usize,
    order: &mut Rng,
) -> Result<ScenarioPlan> {
    let universe = train.class_count;
    if p.n_tasks == 0 || universe < 2 {
        return Err(Error::Config("gcil needs at least one task and two classes".into()));
    }
    if !(p.imbalance >= 1.0) {
        return Err(Error::Config(format!("gcil imbalance must be ≥ 1, got {}", p.imbalance)));
    }
    let max_k = p.max_classes.min(universe).max(2);
    let mut g = rng::stream(p.gil_seed, "gcil.compose");
    let by_class = train.indices_by_class();
    let test_by_class = test.indices_by_class();
    let mut tasks = Vec::new();
    let mut eval = Vec::new();
    for t in 0..p.n_tasks {
        let k = g.random_range(2..=max_k);
        let mut classes = rand::seq::index::sample(&mut g, universe, k).into_vec();
        let weights: Vec<f64> = match p.weighting {
            Weighting::Uniform => vec![1.0; k],
            Weighting::Longtail => {
                let r = p.imbalance.powf(-1.0 / (k - 1) as f64);
                (0..k).map(|i| r.powi(i as i32)).collect()
            }
        };
        let counts = allocate(p.samples_per_task, &weights);
        let mut idx = Vec::with_capacity(p.samples_per_task);
        for (&c, &n) in classes.iter().zip(&counts) {
            let pool = &by_class[c];
            if pool.is_empty() {
                return Err(Error::Config(format!("gcil: class {c} has no training samples")));
            }
            if n > pool.len() {
                log::warn!(
                    "gcil task {t}: class {c} needs {n} samples but has {}; resampling with replacement",
                    pool.len()
                );
                idx.extend((0..n).map(|_| pool[g.random_range(0..pool.len())]));
            } else {
                idx.extend(rand::seq::index::sample(&mut g, pool.len(), n).into_iter().map(|j| pool[j]));
            }
        }
        classes.sort_unstable();
        let mut tidx: Vec<usize> = classes
            .iter()
            .flat_map(|&c| test_by_class.get(c).into_iter().flatten().copied())
            .collect();
        tidx.sort_unstable();
        eval.push(EvalSet {
            name: format!("task_{t}"),
            entries: tidx.into_iter().map(|i| (i, 0.0)).collect(),
        });
        tasks.push(TaskPlan {
            entries: epochs_of(&idx, epochs, 0.0, order),
            classes,
            angle: None,
        });
    }
    Ok(ScenarioPlan {
        tasks,
        eval,
        boundaries: true,
        classes: universe,
    })
}

/// Rotates a `[channels, h, w]` image by `degrees` about its centre with
/// bilinear interpolation; samples falling outside the image read as zero.
pub fn rotate_image(src: &[f32], channels: usize, h: usize, w: usize, degrees: f64) -> Vec<f32> {
    if degrees == 0.0 || h == 0 || w == 0 {
        return src.to_vec();
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = vec![0.0f32; src.len()];
    let plane = h * w;
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = cx + c * dx + s * dy;
            let sy = cy - s * dx + c * dy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1, y0, fx * (1.0 - fy)),
                (x0, y0 + 1, (1.0 - fx) * fy),
                (x0 + 1, y0 + 1, fx * fy),
            ];
            for ch in 0..channels {
                let p = &src[ch * plane..(ch + 1) * plane];
                let mut acc = 0.0f64;
                for &(tx, ty, wt) in &taps {
                    if tx >= 0 && ty >= 0 && (tx as usize) < w && (ty as usize) < h {
                        acc += wt * p[ty as usize * w + tx as usize] as f64;
                    }
                }
                out[ch * plane + y * w + x] = acc as f32;
            }
        }
    }
    out
}

/// Gathers `entries` from `data`, rotating image samples where the angle is
/// non-zero, into a `[n, sample_shape..]` tensor.
pub fn gather<T: Real>(data: &LabeledDataset, entries: &[(usize, f32)]) -> (Tensor<T>, Vec<usize>) {
    let shape = &data.sample_shape;
    let (ch, h, w) = match shape.as_slice() {
        [c, h, w] => (*c, *h, *w),
        _ => (0, 0, 0),
    };
    let mut buf = Vec::with_capacity(entries.len() * data.sample_len());
    let mut labels = Vec::with_capacity(entries.len());
    for &(i, a) in entries {
        let s = data.sample(i);
        if a != 0.0 && h > 0 {
            buf.extend(rotate_image(s, ch, h, w, a as f64).into_iter().map(|v| T::lit(v as f64)));
        } else {
            buf.extend(s.iter().map(|v| T::lit(*v as f64)));
        }
        labels.push(data.labels[i]);
    }
    let mut full = vec![entries.len()];
    full.extend_from_slice(shape);
    (Tensor::new(full, buf).expect("rows match sample shape"), labels)
}

#[derive(Clone, Debug)]
pub struct StreamBatch<T: Real = f64> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
    pub step: u64,
}

#[derive(Clone, Debug)]
pub enum StreamEvent<T: Real = f64> {
    Batch(StreamBatch<T>),
    /// The task with this index just finished. Only emitted for scenarios
    /// with boundaries; the final task ends when the stream does.
    TaskEnd { task: usize },
}

/// Ordered batch stream over a planned scenario.
pub struct Stream<'a, T: Real = f64> {
    data: &'a LabeledDataset,
    plan: &'a ScenarioPlan,
    batch: usize,
    task: usize,
    pos: usize,
    step: u64,
    _t: PhantomData<T>,
}

impl<'a, T: Real> Stream<'a, T> {
    pub fn new(plan: &'a ScenarioPlan, data: &'a LabeledDataset, batch: usize) -> Result<Self> {
        if batch == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(Stream {
            data,
            plan,
            batch,
            task: 0,
            pos: 0,
            step: 0,
            _t: PhantomData,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.plan.steps_per_task(self.batch).iter().sum()
    }
}

impl<T: Real> Iterator for Stream<'_, T> {
    type Item = StreamEvent<T>;

    fn next(&mut self) -> Option<StreamEvent<T>> {
        loop {
            let task = self.plan.tasks.get(self.task)?;
            if self.pos < task.entries.len() {
                let end = (self.pos + self.batch).min(task.entries.len());
                let (inputs, labels) = gather(self.data, &task.entries[self.pos..end]);
                self.pos = end;
                let step = self.step;
                self.step += 1;
                return Some(StreamEvent::Batch(StreamBatch { inputs, labels, step }));
            }
            let finished = self.task;
            self.task += 1;
            self.pos = 0;
            if self.plan.boundaries {
                return Some(StreamEvent::TaskEnd { task: finished });
            }
        }
    }
}

/// FNV-1a over the little-endian `f64` bytes of a tensor and its labels.
pub fn batch_checksum<T: Real>(inputs: &Tensor<T>, labels: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for v in inputs.data() {
        eat(&v.as_f64().to_le_bytes());
    }
    for y in labels {
        eat(&(*y as u64).to_le_bytes());
    }
    h
}
