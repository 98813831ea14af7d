//! Mini-batch Adam training with plateau decay and early stopping.
//!
//! One epoch shuffles the training sequences with the run's seeded generator,
//! splits them into batches of `batch_size` sequences and takes one Adam step
//! per batch on the mean of the per-sequence losses. Sequences keep their own
//! length, so the DCT never sees padding. Per-sequence gradients are computed
//! in parallel and reduced in batch order, which keeps runs bitwise
//! reproducible.
//!
//! After each epoch the validation loss drives two counters:
//!
//! * plateau: no improvement of at least `plateau_min_delta` for
//!   `plateau_patience` epochs multiplies the learning rate by `plateau_decay`;
//! * early stopping: no improvement at all for `early_stop_patience + 1`
//!   epochs ends training. The parameters of the best epoch are returned.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ensure_len, Error, Result};
use crate::filters::{FilterBand, SpectralFilter, UnknownBand};
use crate::probe::{evaluate, Gradients, LinearProbe, ModelMeta, Prepared, ProbeMode, ProbeModel};

/// Seeds used for every reported configuration.
pub const DEFAULT_SEEDS: [u64; 5] = [1932, 2771, 7308, 8119, 9095];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub plateau_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            plateau_decay: 0.5,
            batch_size: 32,
            max_epochs: 30,
            early_stop_patience: 1,
            plateau_patience: 1,
            plateau_min_delta: 1e-4,
            seed: DEFAULT_SEEDS[0],
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.plateau_decay > 0.0 && self.plateau_decay < 1.0) {
            return fail("plateau_decay must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1");
        }
        if self.plateau_patience == 0 {
            return fail("plateau_patience must be at least 1");
        }
        if self.plateau_min_delta.is_nan() || self.plateau_min_delta < 0.0 {
            return fail("plateau_min_delta must be non-negative");
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return fail("Adam betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return fail("adam_eps must be positive");
        }
        Ok(())
    }

    fn adam(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, hyper: AdamHyper) -> Result<()> {
    ensure_len("gradient length", params.len(), grads.len())?;
    ensure_len("optimizer state length", params.len(), state.m.len())?;
    state.step += 1;
    let t = state.step.min(i32::MAX as u64) as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

struct Optimizer {
    hyper: AdamHyper,
    weight: AdamState,
    bias: AdamState,
    gamma: Option<AdamState>,
}

impl Optimizer {
    fn new(model: &ProbeModel, hyper: AdamHyper) -> Self {
        Optimizer {
            hyper,
            weight: AdamState::new(model.probe.weight().len()),
            bias: AdamState::new(model.classes()),
            gamma: model.mode.filter().map(|f| AdamState::new(f.len())),
        }
    }

    fn step(&mut self, model: &mut ProbeModel, grads: &Gradients, lr: f64) -> Result<()> {
        let (weight, bias) = model.probe.params_mut();
        let w = weight.as_slice_mut().expect("probe weights are contiguous");
        adam_step(w, grads.weight.as_slice().unwrap(), &mut self.weight, lr, self.hyper)?;
        let b = bias.as_slice_mut().expect("probe bias is contiguous");
        adam_step(b, grads.bias.as_slice().unwrap(), &mut self.bias, lr, self.hyper)?;
        if let (ProbeMode::Auto(filter), Some(state), Some(g)) = (&mut model.mode, &mut self.gamma, &grads.gamma) {
            adam_step(filter.raw_mut(), g, state, lr, self.hyper)?;
        }
        Ok(())
    }
}

/// Metrics of one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate in effect during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
    /// Wall-clock time; excluded from serialized reports so they stay reproducible.
    #[serde(skip)]
    pub duration: Duration,
}

impl TrainReport {
    /// One JSON object per epoch, newline-terminated.
    pub fn to_json_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("epoch record serializes") + "\n")
            .collect()
    }

    pub fn learning_rates(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.learning_rate).collect()
    }
}

/// Filter treatment requested for a run; [`build_model`] turns it into a
/// [`ProbeMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModeSpec {
    Orig,
    Fixed { band: FilterBand },
    Auto,
}

impl fmt::Display for ModeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeSpec::Orig => f.write_str("orig"),
            ModeSpec::Fixed { band } => write!(f, "fixed:{band}"),
            ModeSpec::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for ModeSpec {
    type Err = UnknownBand;

    /// Accepts `orig`, `auto` or `fixed:<band name>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "orig" => Ok(ModeSpec::Orig),
            "auto" => Ok(ModeSpec::Auto),
            _ => match s.strip_prefix("fixed:") {
                Some(name) => Ok(ModeSpec::Fixed { band: name.parse()? }),
                None => Err(UnknownBand(s.to_string())),
            },
        }
    }
}

/// Fresh model with seeded probe initialization and an all-zero filter.
pub fn build_model(
    mode: ModeSpec,
    embed_dim: usize,
    classes: usize,
    filter_len: usize,
    meta: ModelMeta,
    seed: u64,
) -> Result<ProbeModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = LinearProbe::init(embed_dim, classes, &mut rng)?;
    let mode = match mode {
        ModeSpec::Orig => ProbeMode::Orig,
        ModeSpec::Fixed { band } => ProbeMode::FixedBand(band),
        ModeSpec::Auto => ProbeMode::Auto(SpectralFilter::new(filter_len)?),
    };
    Ok(ProbeModel::new(mode, probe).with_meta(meta))
}

struct PreparedSet {
    items: Vec<(Prepared, Vec<usize>, Vec<bool>)>,
}

impl PreparedSet {
    fn new(model: &ProbeModel, dataset: &Dataset) -> Result<Self> {
        let items = dataset
            .sequences
            .par_iter()
            .map(|seq| {
                let prepared = model.prepare(seq.values_f64().view())?;
                Ok((prepared, seq.labels_usize(), seq.ignore.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedSet { items })
    }
}

fn check_dataset(model: &ProbeModel, dataset: &Dataset, what: &'static str) -> Result<()> {
    if dataset.sequences.is_empty() {
        return Err(Error::Empty(what));
    }
    ensure_len("dataset embedding width", model.embed_dim(), dataset.embed_dim)?;
    if dataset.classes > model.classes() {
        return Err(Error::ShapeMismatch {
            what: "dataset class count",
            expected: model.classes(),
            found: dataset.classes,
        });
    }
    Ok(())
}

fn gradients_finite(g: &Gradients) -> bool {
    g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite())
        && g.gamma.as_ref().is_none_or(|x| x.iter().all(|v| v.is_finite()))
}

/// Trains `model` in place of a copy and returns the best-validation-loss
/// parameters together with the per-epoch report.
pub fn train(model: ProbeModel, train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<(ProbeModel, TrainReport)> {
    cfg.validate()?;
    check_dataset(&model, train_set, "training set")?;
    check_dataset(&model, val_set, "validation set")?;
    let started = Instant::now();

    let train_data = PreparedSet::new(&model, train_set)?;
    let val_data = PreparedSet::new(&model, val_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut model = model;
    let mut optimizer = Optimizer::new(&model, cfg.adam());
    let mut lr = cfg.learning_rate;
    let mut order: Vec<usize> = (0..train_data.items.len()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(ProbeModel, usize, f64, f64)> = None;
    let mut since_best = 0;
    let mut plateau_ref = f64::INFINITY;
    let mut plateau_count = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let (prepared, labels, ignore) = &train_data.items[i];
                    model.loss_and_grads_prepared(prepared, labels, Some(ignore))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = Gradients::zeros_like(&model);
            let mut batch_loss = 0.0;
            let mut contributing = 0usize;
            for r in results.iter().filter(|r| r.active > 0) {
                grads.add_assign(&r.grads);
                batch_loss += r.loss;
                contributing += 1;
            }
            if contributing == 0 {
                continue;
            }
            grads.scale(1.0 / contributing as f64);
            if !batch_loss.is_finite() || !gradients_finite(&grads) {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx + 1,
                    loss: batch_loss / contributing as f64,
                });
            }
            optimizer.step(&mut model, &grads, lr)?;
            loss_sum += batch_loss;
            seen += contributing;
        }
        let train_loss = if seen > 0 { loss_sum / seen as f64 } else { 0.0 };

        let (val_loss, val_accuracy) = validation_metrics(&model, &val_data);
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                loss: val_loss,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            learning_rate: lr,
        });
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, val loss {val_loss:.6}, val acc {val_accuracy:.4}, lr {lr:e}"
        );

        if best.as_ref().is_none_or(|b| val_loss < b.2) {
            best = Some((model.clone(), epoch, val_loss, val_accuracy));
            since_best = 0;
        } else {
            since_best += 1;
        }

        if val_loss < plateau_ref - cfg.plateau_min_delta {
            plateau_ref = val_loss;
            plateau_count = 0;
        } else {
            plateau_count += 1;
            if plateau_count >= cfg.plateau_patience {
                lr *= cfg.plateau_decay;
                plateau_count = 0;
            }
        }

        if since_best > cfg.early_stop_patience {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }

    let (best_model, best_epoch, best_val_loss, best_val_accuracy) = best.expect("at least one epoch ran");
    Ok((
        best_model,
        TrainReport {
            epochs,
            best_epoch,
            best_val_loss,
            best_val_accuracy,
            stopped_early,
            duration: started.elapsed(),
        },
    ))
}

/// Mean per-sequence loss (the training objective) and pooled position accuracy.
fn validation_metrics(model: &ProbeModel, data: &PreparedSet) -> (f64, f64) {
    let per_seq: Vec<(f64, usize, usize)> = data
        .items
        .par_iter()
        .map(|(prepared, labels, ignore)| {
            let logits = model.forward_prepared(prepared);
            let mut loss = 0.0;
            let mut active = 0;
            let mut correct = 0;
            for (i, row) in logits.outer_iter().enumerate() {
                if ignore[i] {
                    continue;
                }
                let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                loss += lse - row[labels[i]];
                active += 1;
                let pred = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b })
                    .0;
                if pred == labels[i] {
                    correct += 1;
                }
            }
            let mean = if active > 0 { loss / active as f64 } else { 0.0 };
            (mean, active, correct)
        })
        .collect();
    let mut loss = 0.0;
    let mut sequences = 0;
    let mut active = 0;
    let mut correct = 0;
    for (l, a, c) in per_seq {
        if a > 0 {
            loss += l;
            sequences += 1;
        }
        active += a;
        correct += c;
    }
    let loss = if sequences > 0 { loss / sequences as f64 } else { 0.0 };
    let accuracy = if active > 0 { correct as f64 / active as f64 } else { 0.0 };
    (loss, accuracy)
}

/// Everything needed to train one configuration, minus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub mode: ModeSpec,
    pub filter_len: usize,
    pub config: TrainConfig,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub model: ProbeModel,
    pub config: TrainConfig,
    pub report: TrainReport,
    /// Validation accuracy of the returned (best-epoch) model.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: std::result::Result<SeedResult, String>,
}

#[derive(Debug, Clone)]
pub struct MultiSeedReport {
    pub runs: Vec<SeedRun>,
    /// Mean accuracy over successful runs.
    pub mean: Option<f64>,
    /// Population standard deviation over successful runs.
    pub std_dev: Option<f64>,
}

impl MultiSeedReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.accuracy))
            .collect()
    }

    pub fn successes(&self) -> impl Iterator<Item = (u64, &SeedResult)> {
        self.runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|s| (r.seed, s)))
    }
}

pub fn mean_and_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Trains one freshly initialized model per seed. Failed seeds are recorded
/// and do not stop the remaining ones.
pub fn run_multiseed(spec: &RunSpec, train_set: &Dataset, val_set: &Dataset, seeds: &[u64]) -> Result<MultiSeedReport> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let runs = seeds
        .iter()
        .map(|&seed| {
            let outcome = run_single(spec, train_set, val_set, seed).map_err(|e| e.to_string());
            if let Err(msg) = &outcome {
                log::warn!("seed {seed} failed: {msg}");
            }
            SeedRun { seed, outcome }
        })
        .collect::<Vec<_>>();
    let stats = mean_and_std(
        &runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.accuracy))
            .collect::<Vec<_>>(),
    );
    Ok(MultiSeedReport {
        runs,
        mean: stats.map(|s| s.0),
        std_dev: stats.map(|s| s.1),
    })
}

pub fn run_single(spec: &RunSpec, train_set: &Dataset, val_set: &Dataset, seed: u64) -> Result<SeedResult> {
    let config = TrainConfig {
        seed,
        ..spec.config.clone()
    };
    let model = build_model(
        spec.mode,
        train_set.embed_dim,
        train_set.classes,
        spec.filter_len,
        spec.meta.clone(),
        seed,
    )?;
    let (model, report) = train(model, train_set, val_set, &config)?;
    let accuracy = evaluate(&model, val_set)?.accuracy;
    Ok(SeedResult {
        model,
        config,
        report,
        accuracy,
    })
}
