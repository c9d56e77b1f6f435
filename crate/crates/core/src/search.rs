//! Joint search over network weights and edge distributions, architecture
//! derivation, retraining of fixed codes and the random-search baseline.
//!
//! Each search step samples an ensemble code per edge, takes one momentum
//! step on the weights against the training loss, then resamples and takes
//! one gradient step on the edge logits against the validation loss. Both
//! passes use the straight-through code: binary in the forward pass, relaxed
//! in the backward pass.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::datasets::{Batch, Dataset, Split};
use crate::egs::{egs_sample, egs_sample_var, marginal_inclusion_oracle, CodeMask, EdgeNoise};
use crate::error::{Error, Result};
use crate::gumbel::RngState;
use crate::model::{ModelDims, Momentum, SuperNet};
use crate::space::{
    decode, log_probabilities_var, ArchitectureCode, Cell, EdgeWeights, OutputRule, Primitive, DEFAULT_LAMBDA,
};
use crate::tensor::{Tape, Tensor, Var};

const NOISE_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const ORDER_STREAM: u64 = 2;
const DERIVE_STREAM: u64 = 3;
const BASELINE_STREAM: u64 = 4;

/// Number of ensemble draws per edge used by [`DeriveMode::ModeSample`].
pub const MODE_SAMPLE_DRAWS: usize = 1000;

pub const DEFAULT_GRAD_CLIP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeriveMode {
    /// Most frequent ensemble code per edge.
    ModeSample,
    /// Bits whose exact inclusion probability reaches one half.
    MaxMarginal,
}

impl std::str::FromStr for DeriveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode-sample" => Ok(DeriveMode::ModeSample),
            "max-marginal" => Ok(DeriveMode::MaxMarginal),
            other => Err(Error::Parse(format!("unknown derive mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub nodes: usize,
    pub hidden: usize,
    pub ops: Vec<Primitive>,
    pub output: OutputRule,
    pub sampling_count: usize,
    pub lambda: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub lr_weights: f64,
    pub momentum: f64,
    /// Global L2 bound on each weight gradient.
    pub grad_clip: Option<f64>,
    pub lr_arch: f64,
    /// Standardize cell nodes in the supernet; retraining never does.
    pub normalize_nodes: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub derive: DeriveMode,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            nodes: 4,
            hidden: 16,
            ops: Primitive::ALL.to_vec(),
            output: OutputRule::Sum,
            sampling_count: 4,
            lambda: DEFAULT_LAMBDA,
            tau_start: 1.0,
            tau_end: 0.1,
            lr_weights: 0.05,
            momentum: 0.9,
            grad_clip: Some(DEFAULT_GRAD_CLIP),
            lr_arch: 0.3,
            normalize_nodes: true,
            epochs: 40,
            batch_size: 32,
            derive: DeriveMode::ModeSample,
            seed: 0,
        }
    }
}

/// Linear temperature annealing from `start` to `end` over `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
    pub total_steps: usize,
}

impl TemperatureSchedule {
    pub fn tau(&self, step: usize) -> f64 {
        if self.total_steps <= 1 {
            return self.start;
        }
        let t = step.min(self.total_steps - 1) as f64 / (self.total_steps - 1) as f64;
        self.start + (self.end - self.start) * t
    }
}

/// Which edge weights the forward pass consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relaxation {
    /// Binary code forward, relaxed code backward.
    StraightThrough,
    /// Relaxed code in both directions.
    Soft,
}

#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub loss: f64,
    pub codes: Vec<CodeMask>,
    pub weight_grads: Option<Vec<Tensor>>,
    pub logit_grads: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub train: f64,
    pub valid: f64,
}

/// Everything a search run mutates.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub cell: Cell,
    pub net: SuperNet,
    optimizer: Momentum,
    pub tau: f64,
    pub sampling_count: usize,
    pub step: usize,
    pub rng: RngState,
    pub schedule: TemperatureSchedule,
    pub lr_arch: f64,
    /// Per-edge counts of sampled hard codes.
    pub histogram: Vec<BTreeMap<CodeMask, u64>>,
    pub sampling_events: u64,
}

fn format_codes(codes: &[CodeMask], ops: usize) -> String {
    codes.iter().map(|c| c.render(ops)).collect::<Vec<_>>().join("|")
}

impl SearchState {
    pub fn new(config: &SearchConfig, input_dims: usize, classes: usize, total_steps: usize) -> Result<Self> {
        if config.sampling_count < 1 {
            return Err(Error::InvalidSamplingCount(config.sampling_count));
        }
        for (name, tau) in [("tau_start", config.tau_start), ("tau_end", config.tau_end)] {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::config(name, "temperature must be positive"));
            }
        }
        if config.tau_end > config.tau_start {
            return Err(Error::config("tau_end", "temperature must not increase"));
        }
        let cell = Cell::new(config.nodes, config.ops.clone(), config.lambda, config.output)?;
        let dims = ModelDims {
            input: input_dims,
            hidden: config.hidden,
            classes,
            nodes: config.nodes,
            ops: config.ops.clone(),
            output: config.output,
            normalize_nodes: config.normalize_nodes,
        };
        let net = SuperNet::new(dims, &mut RngState::with_stream(config.seed, INIT_STREAM));
        let optimizer = Momentum::new(config.lr_weights, config.momentum, &net.weights).with_clip(config.grad_clip);
        let schedule = TemperatureSchedule {
            start: config.tau_start,
            end: config.tau_end,
            total_steps,
        };
        let edges = cell.edge_count();
        Ok(Self {
            cell,
            net,
            optimizer,
            tau: schedule.tau(0),
            sampling_count: config.sampling_count,
            step: 0,
            rng: RngState::with_stream(config.seed, NOISE_STREAM),
            schedule,
            lr_arch: config.lr_arch,
            histogram: vec![BTreeMap::new(); edges],
            sampling_events: 0,
        })
    }

    /// Fresh Gumbel noise for every edge.
    pub fn draw_noise(&mut self) -> Result<Vec<EdgeNoise>> {
        let k = self.cell.op_count();
        (0..self.cell.edge_count())
            .map(|_| EdgeNoise::draw(&mut self.rng, self.sampling_count, k))
            .collect()
    }

    /// Cross-entropy of the network on `batch` under the codes sampled from
    /// `noise`, with gradients for the requested parameter groups.
    pub fn evaluate(
        &self,
        batch: &Batch,
        noise: &[EdgeNoise],
        relaxation: Relaxation,
        wrt_weights: bool,
        wrt_arch: bool,
    ) -> Result<LossEvaluation> {
        if noise.len() != self.cell.edge_count() {
            return Err(Error::MissingEdgeSample(noise.len()));
        }
        let mut tape = Tape::new();
        let vars = self.net.register(&mut tape, wrt_weights);
        let logit_vars: Vec<Var> = self
            .cell
            .edges
            .iter()
            .map(|e| tape.leaf(Tensor::vector(e.logits.clone()), wrt_arch))
            .collect();
        let mut edges = Vec::with_capacity(noise.len());
        let mut codes = Vec::with_capacity(noise.len());
        for ((edge, &logits), edge_noise) in self.cell.edges.iter().zip(&logit_vars).zip(noise) {
            let log_p = log_probabilities_var(&mut tape, logits, edge)?;
            let code = egs_sample_var(
                &mut tape,
                log_p,
                self.tau,
                edge_noise,
                relaxation == Relaxation::Soft,
            )?;
            codes.push(code.mask());
            edges.push(EdgeWeights::Relaxed(code));
        }
        let x = tape.constant(batch.x.clone());
        let y = tape.constant(batch.y.clone());
        let logits = self.net.forward(&mut tape, &vars, x, &edges)?;
        let loss_var = tape.cross_entropy_with_logits(logits, y)?;
        let loss = tape.value(loss_var).item();
        let mut out = LossEvaluation {
            loss,
            codes,
            weight_grads: None,
            logit_grads: None,
        };
        if loss.is_finite() && (wrt_weights || wrt_arch) {
            let grads = tape.backward(loss_var)?;
            if wrt_weights {
                out.weight_grads = Some(
                    vars.all
                        .iter()
                        .map(|&v| grads.get(v).expect("trainable weight").clone())
                        .collect(),
                );
            }
            if wrt_arch {
                out.logit_grads = Some(
                    logit_vars
                        .iter()
                        .map(|&v| grads.get(v).expect("trainable logits").data().to_vec())
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    fn record(&mut self, codes: &[CodeMask]) {
        for (hist, &code) in self.histogram.iter_mut().zip(codes) {
            *hist.entry(code).or_insert(0) += 1;
        }
        self.sampling_events += 1;
    }

    fn check_finite(&self, phase: &'static str, eval: &LossEvaluation) -> Result<()> {
        if eval.loss.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteLoss {
                phase,
                step: self.step,
                tau: self.tau,
                codes: format_codes(&eval.codes, self.cell.op_count()),
            })
        }
    }

    /// One weight update on `train` followed by one logit update on `valid`.
    pub fn search_step(&mut self, train: &Batch, valid: &Batch) -> Result<StepLosses> {
        if train.is_empty() || valid.is_empty() {
            return Err(Error::config("batch_size", "empty batch"));
        }
        let noise = self.draw_noise()?;
        let eval = self.evaluate(train, &noise, Relaxation::StraightThrough, true, false)?;
        self.check_finite("train", &eval)?;
        self.record(&eval.codes);
        let grads = eval.weight_grads.expect("requested weight gradients");
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        self.optimizer.step(&mut self.net.weights, &grad_refs);

        let noise = self.draw_noise()?;
        let eval_valid = self.evaluate(valid, &noise, Relaxation::StraightThrough, false, true)?;
        self.check_finite("valid", &eval_valid)?;
        self.record(&eval_valid.codes);
        let logit_grads = eval_valid.logit_grads.expect("requested logit gradients");
        for (edge, g) in self.cell.edges.iter_mut().zip(&logit_grads) {
            for (l, gv) in edge.logits.iter_mut().zip(g) {
                *l -= self.lr_arch * gv;
            }
        }

        self.step += 1;
        self.tau = self.schedule.tau(self.step);
        Ok(StepLosses {
            train: eval.loss,
            valid: eval_valid.loss,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub tau: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "step,train_loss,valid_loss,tau,wall_seconds";

/// Appends one line per epoch under [`METRICS_HEADER`].
pub fn write_metrics_csv<W: Write>(metrics: &[EpochMetrics], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{:.3}",
            m.step, m.train_loss, m.valid_loss, m.tau, m.wall_seconds
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    pub epochs: Vec<EpochMetrics>,
    /// Per-step training losses, in step order.
    pub step_losses: Vec<f64>,
    pub histogram: Vec<BTreeMap<CodeMask, u64>>,
    pub sampling_events: u64,
    pub derived: ArchitectureCode,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SearchRun {
    pub state: SearchState,
    pub report: SearchReport,
}

pub fn steps_per_epoch(train_len: usize, batch_size: usize) -> usize {
    train_len.div_ceil(batch_size)
}

/// Full search: `epochs` passes over the training split, each minibatch
/// paired with the next validation minibatch.
pub fn run_search(config: &SearchConfig, dataset: &Dataset) -> Result<SearchRun> {
    if config.batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    if config.epochs == 0 {
        return Err(Error::config("epochs", "must be at least 1"));
    }
    if dataset.train.is_empty() || dataset.valid.is_empty() {
        return Err(Error::config("dataset", "train and validation splits must be non-empty"));
    }
    let start = Instant::now();
    let per_epoch = steps_per_epoch(dataset.train.len(), config.batch_size);
    let mut state = SearchState::new(config, dataset.dims, dataset.classes, per_epoch * config.epochs)?;
    let mut order_rng = RngState::with_stream(config.seed, ORDER_STREAM);
    let mut train_order = dataset.train.clone();
    let mut valid_order = dataset.valid.clone();
    valid_order.shuffle(order_rng.inner());
    let mut valid_cursor = 0;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut step_losses = Vec::with_capacity(per_epoch * config.epochs);

    for epoch in 0..config.epochs {
        train_order.shuffle(order_rng.inner());
        let (mut train_sum, mut valid_sum) = (0.0, 0.0);
        for chunk in train_order.chunks(config.batch_size) {
            let mut valid_idx = Vec::with_capacity(config.batch_size);
            while valid_idx.len() < config.batch_size.min(valid_order.len()) {
                valid_idx.push(valid_order[valid_cursor]);
                valid_cursor = (valid_cursor + 1) % valid_order.len();
            }
            let losses = state.search_step(&dataset.batch(chunk), &dataset.batch(&valid_idx))?;
            train_sum += losses.train;
            valid_sum += losses.valid;
            step_losses.push(losses.train);
        }
        epochs.push(EpochMetrics {
            epoch,
            step: state.step,
            train_loss: train_sum / per_epoch as f64,
            valid_loss: valid_sum / per_epoch as f64,
            tau: state.tau,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let derived = derive_architecture(&state, config.derive)?;
    let report = SearchReport {
        epochs,
        step_losses,
        histogram: state.histogram.clone(),
        sampling_events: state.sampling_events,
        derived,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(SearchRun { state, report })
}

/// Whether `a` wins a tie against `b`: the code holding the lowest op index
/// at which they differ.
fn prefers(a: CodeMask, b: CodeMask) -> bool {
    let diff = a.0 ^ b.0;
    diff != 0 && a.0 & (diff & diff.wrapping_neg()) != 0
}

/// Most frequent code; equal counts go to the code containing the lowest
/// differing op index.
pub fn mode_of_histogram(hist: &BTreeMap<CodeMask, u64>) -> Option<CodeMask> {
    let mut best: Option<(CodeMask, u64)> = None;
    for (&code, &count) in hist {
        best = match best {
            Some((b, c)) if c > count || (c == count && !prefers(code, b)) => Some((b, c)),
            _ => Some((code, count)),
        };
    }
    best.map(|(c, _)| c)
}

/// Max-marginal edge code: bits with `1 - (1 - p_k)^M >= 1/2`, falling back
/// to the argmax when none qualifies and keeping at most `M` bits.
pub fn max_marginal_code(p: &[f64], sampling_count: usize) -> CodeMask {
    let mut ranked: Vec<usize> = (0..p.len()).collect();
    // stable sort keeps the lowest index first among equal probabilities
    ranked.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    let mut chosen: Vec<usize> = ranked
        .iter()
        .copied()
        .filter(|&k| marginal_inclusion_oracle(p, sampling_count, k) >= 0.5)
        .take(sampling_count)
        .collect();
    if chosen.is_empty() {
        chosen.push(ranked[0]);
    }
    chosen.into_iter().fold(CodeMask(0), |acc, k| acc.union(CodeMask::one_hot(k)))
}

/// Derives a code from explicit per-edge probabilities.
pub fn derive_from_probabilities(
    probs: &[Vec<f64>],
    nodes: usize,
    sampling_count: usize,
    tau: f64,
    mode: DeriveMode,
    rng: &mut RngState,
) -> Result<ArchitectureCode> {
    let ops = probs.first().map_or(0, Vec::len);
    let masks = probs
        .iter()
        .map(|p| match mode {
            DeriveMode::MaxMarginal => Ok(max_marginal_code(p, sampling_count)),
            DeriveMode::ModeSample => {
                let mut hist = BTreeMap::new();
                for _ in 0..MODE_SAMPLE_DRAWS {
                    let s = egs_sample(p, sampling_count, tau, rng)?;
                    *hist.entry(s.mask()).or_insert(0u64) += 1;
                }
                Ok(mode_of_histogram(&hist).expect("at least one draw"))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ArchitectureCode::from_edge_masks(nodes, ops, &masks)
}

/// Converts the learned edge distributions into one concrete code.
pub fn derive_architecture(state: &SearchState, mode: DeriveMode) -> Result<ArchitectureCode> {
    let mut rng = state.rng.fork(DERIVE_STREAM);
    derive_from_probabilities(
        &state.cell.probabilities(),
        state.cell.nodes,
        state.sampling_count,
        state.tau,
        mode,
        &mut rng,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainConfig {
    pub hidden: usize,
    pub output: OutputRule,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            output: OutputRule::Sum,
            epochs: 200,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            grad_clip: Some(DEFAULT_GRAD_CLIP),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub net: SuperNet,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

fn predict(net: &SuperNet, edges: &[EdgeWeights], batch: &Batch) -> Result<Vec<usize>> {
    let mut tape = Tape::new();
    let vars = net.register(&mut tape, false);
    let x = tape.constant(batch.x.clone());
    let z = net.forward(&mut tape, &vars, x, edges)?;
    let logits = tape.value(z);
    let classes = logits.shape()[1];
    Ok(logits
        .data()
        .chunks(classes)
        .map(crate::gumbel::argmax)
        .collect())
}

/// Fraction of `split` classified correctly.
pub fn accuracy(net: &SuperNet, edges: &[EdgeWeights], dataset: &Dataset, split: Split) -> Result<f64> {
    let indices = dataset.indices(split);
    if indices.is_empty() {
        return Ok(0.0);
    }
    let batch = dataset.batch(indices);
    let predictions = predict(net, edges, &batch)?;
    let correct = predictions
        .iter()
        .zip(batch.labels())
        .filter(|(p, y)| **p == *y)
        .count();
    Ok(correct as f64 / indices.len() as f64)
}

/// Trains fresh weights for the fixed network described by `code`.
pub fn retrain(code: &ArchitectureCode, ops: &[Primitive], dataset: &Dataset, cfg: &RetrainConfig) -> Result<RetrainOutcome> {
    let network = decode(code, ops)?;
    let edges = network.edge_weights();
    let dims = ModelDims {
        input: dataset.dims,
        hidden: cfg.hidden,
        classes: dataset.classes,
        nodes: code.nodes(),
        ops: ops.to_vec(),
        output: cfg.output,
        normalize_nodes: false,
    };
    let mut net = SuperNet::new(dims, &mut RngState::with_stream(cfg.seed, INIT_STREAM));
    let mut optimizer = Momentum::new(cfg.lr, cfg.momentum, &net.weights).with_clip(cfg.grad_clip);
    let mut order_rng = RngState::with_stream(cfg.seed, ORDER_STREAM);
    let mut order = dataset.train.clone();
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(order_rng.inner());
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch = dataset.batch(chunk);
            let mut tape = Tape::new();
            let vars = net.register(&mut tape, true);
            let x = tape.constant(batch.x);
            let y = tape.constant(batch.y);
            let z = net.forward(&mut tape, &vars, x, &edges)?;
            let loss = tape.cross_entropy_with_logits(z, y)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: "retrain",
                    step: epoch,
                    tau: 0.0,
                    codes: code.render(),
                });
            }
            total += value;
            let grads = tape.backward(loss)?;
            let refs: Vec<&Tensor> = vars.all.iter().map(|&v| grads.get(v).expect("trainable")).collect();
            optimizer.step(&mut net.weights, &refs);
        }
        final_loss = total / order.len().div_ceil(cfg.batch_size.max(1)) as f64;
    }
    Ok(RetrainOutcome {
        train_accuracy: accuracy(&net, &edges, dataset, Split::Train)?,
        valid_accuracy: accuracy(&net, &edges, dataset, Split::Valid)?,
        test_accuracy: accuracy(&net, &edges, dataset, Split::Test)?,
        final_loss,
        net,
    })
}

#[derive(Debug, Clone)]
pub struct BaselineCandidate {
    pub code: ArchitectureCode,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub candidates: Vec<BaselineCandidate>,
    pub best: usize,
}

impl BaselineOutcome {
    pub fn best_code(&self) -> &ArchitectureCode {
        &self.candidates[self.best].code
    }

    pub fn best_valid_accuracy(&self) -> f64 {
        self.candidates[self.best].valid_accuracy
    }
}

/// Uniform random code: every bit a fair coin. With `resample_empty_edges`,
/// an edge drawn with no bit set is drawn again.
pub fn random_code(nodes: usize, ops: usize, resample_empty_edges: bool, rng: &mut RngState) -> Result<ArchitectureCode> {
    let edges = crate::space::edge_count(nodes);
    let masks: Vec<CodeMask> = (0..edges)
        .map(|_| loop {
            let bits: Vec<bool> = (0..ops).map(|_| rng.coin()).collect();
            let mask = CodeMask::from_bits(&bits);
            if mask.0 != 0 || !resample_empty_edges {
                break mask;
            }
        })
        .collect();
    ArchitectureCode::from_edge_masks(nodes, ops, &masks)
}

/// Best of `budget` uniformly sampled codes, each retrained for
/// `brief_epochs` and ranked by validation accuracy (first wins ties).
pub fn random_search_baseline(
    nodes: usize,
    ops: &[Primitive],
    budget: usize,
    dataset: &Dataset,
    cfg: &RetrainConfig,
    brief_epochs: usize,
    resample_empty_edges: bool,
) -> Result<BaselineOutcome> {
    if budget < 1 {
        return Err(Error::config("budget", "must be at least 1"));
    }
    let mut rng = RngState::with_stream(cfg.seed, BASELINE_STREAM);
    let mut candidates = Vec::with_capacity(budget);
    let mut best = 0;
    for i in 0..budget {
        let code = random_code(nodes, ops.len(), resample_empty_edges, &mut rng)?;
        let brief = RetrainConfig {
            epochs: brief_epochs,
            seed: cfg.seed.wrapping_add(1 + i as u64),
            ..cfg.clone()
        };
        let outcome = retrain(&code, ops, dataset, &brief)?;
        if outcome.valid_accuracy > candidates.get(best).map_or(f64::NEG_INFINITY, |c: &BaselineCandidate| c.valid_accuracy) {
            best = i;
        }
        candidates.push(BaselineCandidate {
            code,
            valid_accuracy: outcome.valid_accuracy,
        });
    }
    Ok(BaselineOutcome { candidates, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_two_moons;

    #[test]
    fn schedule_is_linear_and_non_increasing() {
        let s = TemperatureSchedule {
            start: 1.0,
            end: 0.1,
            total_steps: 10,
        };
        assert_eq!(s.tau(0), 1.0);
        assert!((s.tau(9) - 0.1).abs() < 1e-15);
        assert!((s.tau(50) - 0.1).abs() < 1e-15);
        for step in 0..12 {
            assert!(s.tau(step + 1) <= s.tau(step));
        }
    }

    #[test]
    fn histogram_tie_prefers_lowest_op() {
        let mut hist = BTreeMap::new();
        hist.insert(CodeMask(0b100), 5);
        hist.insert(CodeMask(0b010), 5);
        hist.insert(CodeMask(0b001), 5);
        assert_eq!(mode_of_histogram(&hist), Some(CodeMask(0b001)));
        hist.insert(CodeMask(0b110), 6);
        assert_eq!(mode_of_histogram(&hist), Some(CodeMask(0b110)));
        let mut pair = BTreeMap::new();
        pair.insert(CodeMask(0b10), 3);
        pair.insert(CodeMask(0b11), 3);
        assert_eq!(mode_of_histogram(&pair), Some(CodeMask(0b11)));
    }

    #[test]
    fn degenerate_distributions_select_first_op() {
        let p = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0]; 3];
        for mode in [DeriveMode::ModeSample, DeriveMode::MaxMarginal] {
            let code = derive_from_probabilities(&p, 3, 4, 0.1, mode, &mut RngState::new(2)).unwrap();
            for e in 0..3 {
                assert_eq!(code.edge_mask(e), CodeMask(1));
            }
        }
    }

    #[test]
    fn max_marginal_respects_sampling_count() {
        assert_eq!(max_marginal_code(&[0.2, 0.2, 0.2, 0.2, 0.2], 1), CodeMask(1));
        assert_eq!(max_marginal_code(&[0.5, 0.5], 1), CodeMask(1));
        // 1 - 0.7^4 = 0.76, 1 - 0.9^4 = 0.34
        assert_eq!(max_marginal_code(&[0.3, 0.6, 0.1], 4), CodeMask(0b011));
    }

    #[test]
    fn baseline_requires_budget() {
        let d = make_two_moons(40, 0.1, 0).unwrap();
        let err = random_search_baseline(3, &Primitive::ALL, 0, &d, &RetrainConfig::default(), 1, true).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn random_codes_have_no_empty_edges_when_resampled() {
        let mut rng = RngState::new(5);
        for _ in 0..200 {
            let code = random_code(4, 2, true, &mut rng).unwrap();
            assert!(code.edge_masks().iter().all(|m| m.0 != 0));
        }
    }

    #[test]
    fn invalid_temperatures_rejected() {
        let cfg = SearchConfig {
            tau_start: 0.0,
            ..SearchConfig::default()
        };
        assert!(SearchState::new(&cfg, 2, 2, 10).is_err());
        let cfg = SearchConfig {
            tau_end: 2.0,
            ..SearchConfig::default()
        };
        assert!(SearchState::new(&cfg, 2, 2, 10).is_err());
    }
}
