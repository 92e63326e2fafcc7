//! Training-step orchestration for SYNERgy, its ablations and the baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::consolidation::{consolidation_loss, estimate_fisher, FisherInit, FisherState};
use crate::error::{Error, Result};
use crate::memory::{EpisodicBuffer, SemanticMemory};
use crate::models::Network;
use crate::optim::sgd_step;
use crate::par::Exec;
use crate::real::{Precision, Real};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Sgd,
    Er,
    #[serde(rename = "derpp")]
    DerPP,
    MeanEr,
    MeanErOewc,
    Synergy,
    /// SYNERgy without the filter-level Fisher adjustment.
    SynergyNoAdj,
    /// SYNERgy with the Fisher taken on the working model and stream batch.
    SynergyWorkingFisher,
}

impl MethodKind {
    pub const ALL: [MethodKind; 8] = [
        MethodKind::Sgd,
        MethodKind::Er,
        MethodKind::DerPP,
        MethodKind::MeanEr,
        MethodKind::MeanErOewc,
        MethodKind::Synergy,
        MethodKind::SynergyNoAdj,
        MethodKind::SynergyWorkingFisher,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Sgd => "sgd",
            MethodKind::Er => "er",
            MethodKind::DerPP => "derpp",
            MethodKind::MeanEr => "mean_er",
            MethodKind::MeanErOewc => "mean_er_oewc",
            MethodKind::Synergy => "synergy",
            MethodKind::SynergyNoAdj => "synergy_no_adj",
            MethodKind::SynergyWorkingFisher => "synergy_working_fisher",
        }
    }

    /// Human-readable row label for tables.
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::Sgd => "SGD",
            MethodKind::Er => "ER",
            MethodKind::DerPP => "DER++",
            MethodKind::MeanEr => "Mean-ER",
            MethodKind::MeanErOewc => "Mean-ER + oEWC",
            MethodKind::Synergy => "SYNERgy",
            MethodKind::SynergyNoAdj => "SYNERgy -F_adj",
            MethodKind::SynergyWorkingFisher => "SYNERgy -M,θ_S",
        }
    }

    pub fn uses_buffer(self) -> bool {
        self != MethodKind::Sgd
    }

    pub fn has_semantic(self) -> bool {
        matches!(
            self,
            MethodKind::MeanEr
                | MethodKind::MeanErOewc
                | MethodKind::Synergy
                | MethodKind::SynergyNoAdj
                | MethodKind::SynergyWorkingFisher
        )
    }

    pub fn has_fisher(self) -> bool {
        matches!(
            self,
            MethodKind::Synergy | MethodKind::SynergyNoAdj | MethodKind::SynergyWorkingFisher
        )
    }

    /// Whether the method consumes task-boundary events.
    pub fn needs_boundaries(self) -> bool {
        self == MethodKind::MeanErOewc
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '+', ' '], "_");
        Ok(match key.as_str() {
            "sgd" => MethodKind::Sgd,
            "er" => MethodKind::Er,
            "derpp" | "der__" => MethodKind::DerPP,
            "mean_er" | "meaner" => MethodKind::MeanEr,
            "mean_er_oewc" | "mean_er__oewc" | "meaner_oewc" => MethodKind::MeanErOewc,
            "synergy" => MethodKind::Synergy,
            "synergy_no_adj" | "synergy_noadj" => MethodKind::SynergyNoAdj,
            "synergy_working_fisher" | "synergy_workingfisher" => MethodKind::SynergyWorkingFisher,
            _ => return Err(Error::Config(format!("unknown method `{s}`"))),
        })
    }
}

/// Benchmark settings with tuned hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    SCifar10,
    STinyImg,
    RMnist,
    Mnist360,
    GcilU,
    GcilL,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynergyConfig {
    pub eta: f64,
    pub lambda: f64,
    pub beta: f64,
    pub alpha_s: f64,
    pub r_s: f64,
    pub alpha_f: f64,
    pub r_f: f64,
    pub batch_size: usize,
    /// Replay minibatch size; `None` means the stream batch size.
    pub replay_batch_size: Option<usize>,
    pub epochs: usize,
    pub buffer_size: usize,
    pub precision: Precision,
    pub seed: u64,
    pub fisher_init: FisherInit,
    /// Rows per Fisher estimation chunk.
    pub fisher_chunk: usize,
    /// DER++ logit-consistency weight.
    pub derpp_alpha: f64,
    /// DER++ replay cross-entropy weight.
    pub derpp_beta: f64,
    /// Decay applied to the accumulated oEWC importance at each boundary.
    pub oewc_gamma: f64,
}

impl Default for SynergyConfig {
    fn default() -> Self {
        SynergyConfig::preset(Setting::RMnist, 500).expect("R-MNIST/500 preset exists")
    }
}

impl SynergyConfig {
    /// Tuned hyperparameters for a benchmark setting and buffer size.
    pub fn preset(setting: Setting, buffer: usize) -> Option<Self> {
        // (batch, epochs, eta, lambda, beta, alpha_s, r_s, alpha_f, r_f)
        type Row = (usize, usize, f64, f64, f64, f64, f64, f64, f64);
        let row: Row = match (setting, buffer) {
            (Setting::SCifar10, 200) => (32, 50, 0.05, 0.2, 5.0, 0.999, 0.2, 0.999, 0.01),
            (Setting::SCifar10, 500) => (32, 50, 0.05, 0.2, 5.0, 0.999, 0.4, 0.999, 0.007),
            (Setting::SCifar10, 1000) => (32, 50, 0.05, 0.2, 5.0, 0.999, 0.9, 0.999, 0.001),
            (Setting::STinyImg, 200) => (32, 50, 0.05, 0.1, 0.1, 0.999, 0.05, 0.999, 0.0005),
            (Setting::STinyImg, 500 | 1000) => (32, 50, 0.05, 0.1, 0.1, 0.999, 0.05, 0.999, 0.0004),
            (Setting::RMnist, 200 | 1000) => (128, 1, 0.2, 1.0, 1.0, 0.99, 1.0, 0.99, 0.4),
            (Setting::RMnist, 500) => (128, 1, 0.2, 1.0, 1.0, 0.99, 1.0, 0.99, 0.8),
            (Setting::Mnist360, 200) => (16, 1, 0.2, 1.0, 1.0, 0.99, 0.8, 0.99, 0.9),
            (Setting::Mnist360, 500) => (16, 1, 0.2, 1.0, 1.0, 0.99, 0.8, 0.99, 0.8),
            (Setting::Mnist360, 1000) => (16, 1, 0.2, 0.8, 1.0, 0.99, 0.8, 0.99, 0.8),
            (Setting::GcilU, 200 | 500) => (32, 50, 0.05, 0.2, 1.0, 0.999, 0.3, 0.999, 0.005),
            (Setting::GcilU, 1000) => (32, 50, 0.05, 0.2, 1.0, 0.999, 0.4, 0.999, 0.005),
            (Setting::GcilL, 200 | 500) => (32, 50, 0.05, 0.2, 1.0, 0.999, 0.2, 0.999, 0.005),
            (Setting::GcilL, 1000) => (32, 50, 0.05, 0.2, 1.0, 0.999, 0.4, 0.999, 0.005),
            _ => return None,
        };
        let (batch_size, epochs, eta, lambda, beta, alpha_s, r_s, alpha_f, r_f) = row;
        Some(SynergyConfig {
            eta,
            lambda,
            beta,
            alpha_s,
            r_s,
            alpha_f,
            r_f,
            batch_size,
            replay_batch_size: None,
            epochs,
            buffer_size: buffer,
            precision: Precision::F64,
            seed: 0,
            fisher_init: FisherInit::FirstAssign,
            fisher_chunk: 256,
            derpp_alpha: 0.5,
            derpp_beta: 1.0,
            oewc_gamma: 1.0,
        })
    }

    pub fn replay_batch(&self) -> usize {
        self.replay_batch_size.unwrap_or(self.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_s", self.alpha_s),
            ("r_s", self.r_s),
            ("alpha_f", self.alpha_f),
            ("r_f", self.r_f),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        for (name, v) in [
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("derpp_alpha", self.derpp_alpha),
            ("derpp_beta", self.derpp_beta),
            ("oewc_gamma", self.oewc_gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.replay_batch() == 0 {
            return Err(Error::Config("replay_batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.fisher_chunk == 0 {
            return Err(Error::Config("fisher_chunk must be positive".into()));
        }
        Ok(())
    }
}

/// Losses and gate outcomes of one training step. Unused terms are 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub loss: f64,
    pub l_sl: f64,
    pub l_task: f64,
    pub l_er: f64,
    pub l_sr: f64,
    pub l_sc: f64,
    /// DER++ logit consistency or oEWC penalty, unweighted.
    pub l_aux: f64,
    pub replayed: bool,
    pub semantic_updated: bool,
    pub fisher_updated: bool,
    pub inserted: usize,
}

/// Data of a finished task, handed to boundary-consuming methods.
#[derive(Clone, Copy, Debug)]
pub struct TaskData<'a, T: Real = f64> {
    pub inputs: &'a Tensor<T>,
    pub labels: &'a [usize],
}

#[derive(Clone, Debug)]
struct OewcState<T: Real> {
    fisher: Vec<T>,
    anchor: Network<T>,
}

/// One continual learner: working model plus whatever memories the method
/// uses.
#[derive(Clone, Debug)]
pub struct Learner<T: Real = f64> {
    method: MethodKind,
    config: SynergyConfig,
    working: Network<T>,
    semantic: Option<SemanticMemory<T>>,
    buffer: EpisodicBuffer<T>,
    fisher: Option<FisherState<T>>,
    oewc: Option<OewcState<T>>,
    exec: Exec,
    step: u64,
}

fn mse_value<T: Real>(a: &[T], b: &[T]) -> T {
    if a.is_empty() {
        return T::zero();
    }
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc += d * d;
    }
    acc / T::lit(a.len() as f64)
}

impl<T: Real> Learner<T> {
    /// Sets up the method around `working`; the semantic memory starts as a
    /// copy of it.
    pub fn new(method: MethodKind, config: SynergyConfig, working: Network<T>) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let semantic = if method.has_semantic() {
            Some(SemanticMemory::new(&working, config.alpha_s, config.r_s, seed)?)
        } else {
            None
        };
        let fisher = if method.has_fisher() {
            Some(FisherState::new(
                &working,
                config.alpha_f,
                config.r_f,
                config.fisher_init,
                method != MethodKind::SynergyNoAdj,
                seed,
            )?)
        } else {
            None
        };
        let capacity = if method.uses_buffer() { config.buffer_size } else { 0 };
        Ok(Learner {
            method,
            buffer: EpisodicBuffer::new(capacity, seed),
            config,
            working,
            semantic,
            fisher,
            oewc: None,
            exec: Exec::default(),
            step: 0,
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn method(&self) -> MethodKind {
        self.method
    }

    pub fn config(&self) -> &SynergyConfig {
        &self.config
    }

    pub fn working(&self) -> &Network<T> {
        &self.working
    }

    pub fn semantic(&self) -> Option<&Network<T>> {
        self.semantic.as_ref().map(SemanticMemory::model)
    }

    pub fn semantic_memory(&self) -> Option<&SemanticMemory<T>> {
        self.semantic.as_ref()
    }

    pub fn buffer(&self) -> &EpisodicBuffer<T> {
        &self.buffer
    }

    pub fn fisher(&self) -> Option<&FisherState<T>> {
        self.fisher.as_ref()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Model used for inference: the semantic memory when present and
    /// requested, else the working model.
    pub fn inference_model(&self, use_semantic: bool) -> &Network<T> {
        match (use_semantic, self.semantic()) {
            (true, Some(s)) => s,
            _ => &self.working,
        }
    }

    pub fn predict(&self, x: &Tensor<T>, use_semantic: bool) -> Result<Tensor<T>> {
        self.inference_model(use_semantic).predict(x)
    }

    /// One training step on a stream batch. Never sees task identity.
    pub fn observe(&mut self, x: &Tensor<T>, y: &[usize]) -> Result<StepReport> {
        if self.method.needs_boundaries() {
            return Err(Error::Config(format!(
                "{} consumes task boundaries; drive it through observe_with_boundary",
                self.method
            )));
        }
        self.step_inner(x, y)
    }

    /// Training step for boundary-consuming baselines. `finished` carries the
    /// data of a task that ended right before this batch.
    pub fn observe_with_boundary(
        &mut self,
        x: &Tensor<T>,
        y: &[usize],
        finished: Option<TaskData<'_, T>>,
    ) -> Result<StepReport> {
        if let Some(task) = finished {
            self.end_task(task)?;
        }
        self.step_inner(x, y)
    }

    /// Task-boundary hook: accumulates online-EWC importance on the finished
    /// task with the working model and re-anchors to the current weights.
    pub fn end_task(&mut self, task: TaskData<'_, T>) -> Result<()> {
        if !self.method.needs_boundaries() {
            return Err(Error::Config(format!("{} does not use task boundaries", self.method)));
        }
        let f_new = estimate_fisher(
            &self.working,
            task.inputs,
            task.labels,
            self.config.fisher_chunk,
            self.exec,
        )?;
        let gamma = T::lit(self.config.oewc_gamma);
        let fisher = match self.oewc.take() {
            Some(prev) => prev.fisher.iter().zip(&f_new).map(|(a, b)| gamma * *a + *b).collect(),
            None => f_new,
        };
        self.oewc = Some(OewcState {
            fisher,
            anchor: self.working.clone(),
        });
        Ok(())
    }

    fn step_inner(&mut self, x: &Tensor<T>, y: &[usize]) -> Result<StepReport> {
        if x.batch_len() != y.len() {
            return Err(Error::shape("stream batch", x.shape(), &[y.len()]));
        }
        if y.is_empty() {
            return Err(Error::Validation("empty stream batch".into()));
        }
        let cfg = &self.config;
        let method = self.method;
        let rb = cfg.replay_batch();
        let replay = if method.uses_buffer() && !self.buffer.is_empty() {
            Some(self.buffer.sample_batch(rb)?)
        } else {
            None
        };
        let replay2 = match (&replay, method) {
            (Some(_), MethodKind::DerPP) => Some(self.buffer.sample_batch(rb)?),
            _ => None,
        };

        let mut report = StepReport {
            step: self.step,
            replayed: replay.is_some(),
            ..StepReport::default()
        };
        let mut tape = Tape::new();
        let pv = self.working.bind(&mut tape);
        let xb = tape.constant(x.clone());
        let logits_b = self.working.forward(&mut tape, &pv, xb)?;
        let l_task = tape.softmax_cross_entropy(logits_b, y)?;
        report.l_task = tape.value(l_task).item()?.as_f64();
        let mut total = l_task;
        let mut l_sl = report.l_task;

        let add_weighted = |tape: &mut Tape<T>, total: Var, term: Var, w: f64| -> Result<Var> {
            if w == 0.0 {
                return Ok(total);
            }
            let t = if w == 1.0 { term } else { tape.scale(term, T::lit(w)) };
            tape.add(total, t)
        };

        if let Some(r) = &replay {
            let xm = tape.constant(r.inputs.clone());
            let logits_m = self.working.forward(&mut tape, &pv, xm)?;
            let l_er = tape.softmax_cross_entropy(logits_m, &r.labels)?;
            report.l_er = tape.value(l_er).item()?.as_f64();
            let er_weight = if method == MethodKind::DerPP { cfg.derpp_beta } else { 1.0 };
            total = add_weighted(&mut tape, total, l_er, er_weight)?;
            l_sl += er_weight * report.l_er;

            if let Some(sem) = &self.semantic {
                let target = sem.model().predict(&r.inputs)?;
                report.l_sr = mse_value(tape.value(logits_m).data(), target.data()).as_f64();
                if cfg.lambda != 0.0 {
                    let t = tape.constant(target);
                    let l_sr = tape.mse(logits_m, t)?;
                    total = add_weighted(&mut tape, total, l_sr, cfg.lambda)?;
                }
            }
        }
        if let Some(r2) = &replay2 {
            let stored = r2
                .logits
                .clone()
                .ok_or_else(|| Error::State("DER++ buffer entries carry no logits".into()))?;
            let x2 = tape.constant(r2.inputs.clone());
            let logits2 = self.working.forward(&mut tape, &pv, x2)?;
            let t = tape.constant(stored);
            let l_cons = tape.mse(logits2, t)?;
            report.l_aux = tape.value(l_cons).item()?.as_f64();
            total = add_weighted(&mut tape, total, l_cons, cfg.derpp_alpha)?;
        }
        if let (Some(fs), Some(sem)) = (&self.fisher, &self.semantic) {
            if fs.initialized() {
                let l_sc = consolidation_loss(&mut tape, &pv, sem.model(), fs.weights())?;
                report.l_sc = tape.value(l_sc).item()?.as_f64();
                total = add_weighted(&mut tape, total, l_sc, cfg.beta)?;
            }
        }
        if let Some(ew) = &self.oewc {
            let pen = consolidation_loss(&mut tape, &pv, &ew.anchor, &ew.fisher)?;
            report.l_aux = tape.value(pen).item()?.as_f64();
            total = add_weighted(&mut tape, total, pen, cfg.beta)?;
        }
        report.l_sl = l_sl;
        report.loss = tape.value(total).item()?.as_f64();

        let stored_logits = (method == MethodKind::DerPP).then(|| tape.value(logits_b).clone());
        tape.backward(total)?;
        self.working.absorb_grads(&mut tape, &pv)?;
        drop(tape);
        sgd_step(self.working.params_mut(), T::lit(cfg.eta))?;

        if let Some(sem) = self.semantic.as_mut() {
            report.semantic_updated = sem.maybe_update(&self.working)?;
        }
        if let (Some(fs), Some(sem)) = (self.fisher.as_mut(), self.semantic.as_ref()) {
            report.fisher_updated = if method == MethodKind::SynergyWorkingFisher {
                fs.maybe_update(&self.working, Some((x, y)), cfg.fisher_chunk, self.exec)?
            } else if self.buffer.is_empty() {
                fs.maybe_update(sem.model(), None, cfg.fisher_chunk, self.exec)?
            } else {
                let all = self.buffer.all();
                fs.maybe_update(sem.model(), Some((&all.inputs, &all.labels)), cfg.fisher_chunk, self.exec)?
            };
        }
        if method.uses_buffer() {
            report.inserted = self.buffer.add_batch(x, y, stored_logits.as_ref())?;
        }
        self.step += 1;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build_mlp;

    fn batch(n: usize, seed: u64) -> (Tensor<f64>, Vec<usize>) {
        use rand::{Rng as _, SeedableRng};
        let mut r = crate::rng::Rng::seed_from_u64(seed);
        let x = (0..n * 4).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = (0..n).map(|_| r.random_range(0..3)).collect();
        (Tensor::new(vec![n, 4], x).unwrap(), y)
    }

    fn cfg() -> SynergyConfig {
        SynergyConfig {
            batch_size: 8,
            buffer_size: 20,
            eta: 0.1,
            ..SynergyConfig::default()
        }
    }

    #[test]
    fn preset_matches_tuned_table() {
        let c = SynergyConfig::preset(Setting::RMnist, 500).unwrap();
        assert_eq!(
            (c.eta, c.lambda, c.beta, c.alpha_s, c.r_s, c.alpha_f, c.r_f),
            (0.2, 1.0, 1.0, 0.99, 1.0, 0.99, 0.8)
        );
        assert_eq!((c.batch_size, c.epochs), (128, 1));
        let c = SynergyConfig::preset(Setting::Mnist360, 1000).unwrap();
        assert_eq!((c.lambda, c.r_s, c.r_f, c.batch_size), (0.8, 0.8, 0.8, 16));
        assert!(SynergyConfig::preset(Setting::RMnist, 300).is_none());
    }

    #[test]
    fn first_step_is_task_loss_only() {
        let net = build_mlp::<f64>(4, 5, 3, 1).unwrap();
        let mut l = Learner::new(MethodKind::Synergy, cfg(), net).unwrap();
        let (x, y) = batch(8, 2);
        let r = l.observe(&x, &y).unwrap();
        assert!(!r.replayed);
        assert_eq!(r.loss, r.l_task);
        assert_eq!(r.inserted, 8);
    }

    #[test]
    fn loss_decomposes() {
        let net = build_mlp::<f64>(4, 5, 3, 1).unwrap();
        let mut c = cfg();
        c.lambda = 0.7;
        c.beta = 3.0;
        c.r_f = 1.0;
        let mut l = Learner::new(MethodKind::Synergy, c.clone(), net).unwrap();
        for s in 0..6 {
            let (x, y) = batch(8, s);
            let r = l.observe(&x, &y).unwrap();
            let expect = r.l_sl + c.lambda * r.l_sr + c.beta * r.l_sc;
            assert!((r.loss - expect).abs() < 1e-9, "{r:?}");
            if s > 1 {
                assert!(r.l_sc > 0.0);
            }
        }
    }

    #[test]
    fn oewc_requires_boundary_api() {
        let net = build_mlp::<f64>(4, 5, 3, 1).unwrap();
        let mut l = Learner::new(MethodKind::MeanErOewc, cfg(), net.clone()).unwrap();
        let (x, y) = batch(8, 2);
        assert!(matches!(l.observe(&x, &y), Err(Error::Config(_))));
        let r = l.observe_with_boundary(&x, &y, None).unwrap();
        assert_eq!(r.l_aux, 0.0);
        l.observe_with_boundary(&x, &y, Some(TaskData { inputs: &x, labels: &y }))
            .unwrap();
        let mut er = Learner::new(MethodKind::Er, cfg(), net).unwrap();
        assert!(er.end_task(TaskData { inputs: &x, labels: &y }).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in MethodKind::ALL {
            assert_eq!(m.name().parse::<MethodKind>().unwrap(), m);
            let j = serde_json::to_string(&m).unwrap();
            assert_eq!(j, format!("\"{}\"", m.name()));
        }
        assert_eq!("DER++".parse::<MethodKind>().unwrap(), MethodKind::DerPP);
        assert_eq!("Mean-ER+oEWC".parse::<MethodKind>().unwrap(), MethodKind::MeanErOewc);
    }

    #[test]
    fn invalid_config_names_field() {
        let net = build_mlp::<f64>(4, 5, 3, 1).unwrap();
        let mut c = cfg();
        c.r_s = 1.5;
        match Learner::new(MethodKind::Synergy, c, net) {
            Err(Error::Config(m)) => assert!(m.contains("r_s")),
            other => panic!("{other:?}"),
        }
    }
}
