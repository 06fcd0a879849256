//! Two-stage training: label-smoothed cross-entropy over expanded
//! (source, reference) pairs, then REINFORCE with a sentence-BLEU reward,
//! optionally mixed with cross-entropy.
//!
//! A batch gradient is the mean of per-example gradients. Per-example work
//! runs in parallel; the results are summed in a canonical order (example
//! index, then reference index) so updates do not depend on batch order or
//! thread scheduling.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{expand_multiref, sample_one_view, Corpus};
use crate::decoding::greedy_corpus;
use crate::error::{Error, Result};
use crate::metrics::{corpus_bleu, sentence_bleu, BleuConfig};
use crate::model::{self, detokenize, ModelParams, Translator, Vocab};
use crate::seed::{derive_seed, rng_for};
use crate::text::{order_free_mean, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ExpandShuffle,
    SampleOne,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expand_shuffle" | "expand-shuffle" => Ok(Strategy::ExpandShuffle),
            "sample_one" | "sample-one" => Ok(Strategy::SampleOne),
            other => Err(Error::config(format!(
                "strategy: unknown value `{other}` (expected expand_shuffle or sample_one)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    RunningMean,
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Baseline::None),
            "running_mean" | "running-mean" => Ok(Baseline::RunningMean),
            other => Err(Error::config(format!(
                "baseline: unknown value `{other}` (expected none or running_mean)"
            ))),
        }
    }
}

/// Decay of the running-mean reward baseline.
pub const BASELINE_DECAY: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub label_smoothing: f64,
    pub lr_min: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            epochs: 200,
            batch_size: 32,
            lr0: 0.03,
            momentum: 0.9,
            label_smoothing: 0.2,
            lr_min: 0.0,
            strategy: Strategy::ExpandShuffle,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub lr_min: f64,
    /// Weight of the RL term; `1 - beta` weights cross-entropy.
    pub beta: f64,
    pub samples_per_source: usize,
    pub baseline: Baseline,
    /// Smoothing of the cross-entropy term when `beta < 1`.
    pub label_smoothing: f64,
    pub seed: u64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            epochs: 30,
            batch_size: 32,
            lr0: 0.03,
            momentum: 0.9,
            lr_min: 0.0,
            beta: 1.0,
            samples_per_source: 1,
            baseline: Baseline::None,
            label_smoothing: 0.2,
            seed: 0,
        }
    }
}

/// Learning-rate schedule parameters shared by both stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub lr0: f64,
    pub lr_min: f64,
}

fn check_optim(problems: &mut Vec<String>, epochs: usize, batch: usize, lr0: f64, lr_min: f64, momentum: f64) {
    if epochs == 0 {
        problems.push("epochs: must be at least 1".into());
    }
    if batch == 0 {
        problems.push("batch_size: must be at least 1".into());
    }
    if !(lr_min.is_finite() && lr_min >= 0.0) {
        problems.push("lr_min: must be finite and non-negative".into());
    }
    if !(lr0.is_finite() && lr0 > lr_min) {
        problems.push("lr0: must be finite and greater than lr_min".into());
    }
    if !(0.0..1.0).contains(&momentum) {
        problems.push("momentum: must be in [0, 1)".into());
    }
}

fn finish(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(problems))
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        check_optim(
            &mut problems,
            self.epochs,
            self.batch_size,
            self.lr0,
            self.lr_min,
            self.momentum,
        );
        if !(0.0..1.0).contains(&self.label_smoothing) {
            problems.push("label_smoothing: must be in [0, 1)".into());
        }
        finish(problems)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            epochs: self.epochs,
            lr0: self.lr0,
            lr_min: self.lr_min,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        check_optim(
            &mut problems,
            self.epochs,
            self.batch_size,
            self.lr0,
            self.lr_min,
            self.momentum,
        );
        if !(0.0..=1.0).contains(&self.beta) {
            problems.push("beta: must be in [0, 1]".into());
        }
        if self.samples_per_source == 0 {
            problems.push("samples_per_source: must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            problems.push("label_smoothing: must be in [0, 1)".into());
        }
        finish(problems)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            epochs: self.epochs,
            lr0: self.lr0,
            lr_min: self.lr_min,
        }
    }
}

/// Cosine annealing from `lr0` at epoch 0 to `lr_min` at the last epoch.
pub fn cosine_lr(epoch: usize, s: &Schedule) -> f64 {
    if s.epochs <= 1 {
        return s.lr0;
    }
    let t = epoch as f64 / (s.epochs - 1) as f64;
    s.lr_min + 0.5 * (s.lr0 - s.lr_min) * (1.0 + (PI * t).cos())
}

/// Classical momentum SGD: `v <- m v - lr g`, `theta <- theta + v`.
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    pub momentum: f64,
    velocity: ModelParams,
}

impl MomentumSgd {
    pub fn new(params: &ModelParams, momentum: f64) -> Self {
        MomentumSgd {
            momentum,
            velocity: params.zeros_like(),
        }
    }

    pub fn velocity(&self) -> &ModelParams {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, lr: f64) {
        let m = self.momentum;
        for ((theta, v), g) in params
            .blocks_mut()
            .into_iter()
            .zip(self.velocity.blocks_mut())
            .zip(grad.blocks())
        {
            for ((t, v), g) in theta.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = m * *v - lr * g;
                *t += *v;
            }
        }
    }
}

/// Sentence BLEU against all references with high-order add-one smoothing,
/// scaled to [0, 1].
pub fn reward_fn(hyp: &Sentence, refs: &[Sentence]) -> Result<f64> {
    Ok(sentence_bleu(hyp, refs, &BleuConfig::sentence())? / 100.0)
}

/// A corpus example mapped to model ids.
#[derive(Debug, Clone)]
pub struct EncodedExample {
    pub source: Vec<u32>,
    /// EOS-terminated target ids, one per reference.
    pub targets: Vec<Vec<u32>>,
    pub references: Vec<Sentence>,
}

pub fn encode_corpus(model: &Translator, corpus: &Corpus) -> Vec<EncodedExample> {
    corpus
        .examples()
        .iter()
        .map(|ex| EncodedExample {
            source: model.encode_source(&ex.source),
            targets: ex.references.iter().map(|r| model.encode_target(r)).collect(),
            references: ex.references.clone(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    pub grad: ModelParams,
}

fn mean_in_order(mut parts: Vec<((usize, usize), f64, ModelParams)>) -> Result<BatchGrad> {
    parts.sort_by_key(|(key, _, _)| *key);
    let n = parts.len() as f64;
    let mut it = parts.into_iter();
    let (_, mut loss, mut grad) = it.next().ok_or(Error::EmptyInput("empty batch"))?;
    for (_, l, g) in it {
        loss += l;
        grad.add_scaled(1.0, &g);
    }
    grad.scale(1.0 / n);
    Ok(BatchGrad { loss: loss / n, grad })
}

/// Mean label-smoothed cross-entropy gradient over `(example, reference)` pairs.
pub fn stage1_batch_grad(
    params: &ModelParams,
    data: &[EncodedExample],
    batch: &[(usize, usize)],
    label_smoothing: f64,
) -> Result<BatchGrad> {
    let parts = batch
        .par_iter()
        .map(|&(i, k)| {
            let ex = &data[i];
            let (loss, g) = model::ce_grad(params, &ex.source, &ex.targets[k], label_smoothing)?;
            Ok(((i, k), loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    mean_in_order(parts)
}

#[derive(Debug, Clone)]
pub struct Stage2Batch {
    pub loss: f64,
    pub grad: ModelParams,
    /// Raw rewards (before baseline) in example-index order.
    pub rewards: Vec<f64>,
    /// Reference drawn for the cross-entropy term of each example.
    pub ce_refs: Vec<(usize, usize)>,
}

/// Mixed RL / cross-entropy gradient for a batch of example indices.
/// `baseline` is subtracted from every reward.
#[allow(clippy::too_many_arguments)]
pub fn stage2_batch_grad(
    params: &ModelParams,
    vocab: &Vocab,
    data: &[EncodedExample],
    batch: &[usize],
    cfg: &Stage2Config,
    epoch: usize,
    baseline: f64,
    max_len: usize,
) -> Result<Stage2Batch> {
    let beta = cfg.beta;
    let outcomes = batch
        .par_iter()
        .map(|&i| {
            let ex = &data[i];
            let mut rewards = Vec::new();
            let mut rl: Option<(f64, ModelParams)> = None;
            if beta > 0.0 {
                let mut rng = rng_for(cfg.seed, &format!("stage2/sample/{epoch}/{i}"));
                let s = cfg.samples_per_source as f64;
                let mut loss = 0.0;
                let mut grad = params.zeros_like();
                for _ in 0..cfg.samples_per_source {
                    let ids = model::sample_sequence_with(params, &ex.source, &mut rng, max_len)?;
                    let (hyp, _) = detokenize(vocab, &ids);
                    let r = reward_fn(&hyp, &ex.references)?;
                    let adv = r - baseline;
                    let (lp, g) = model::tokens_logprob_grad(params, &ex.source, &ids)?;
                    loss -= adv * lp / s;
                    grad.add_scaled(-adv / s, &g);
                    rewards.push(r);
                }
                rl = Some((loss, grad));
            }
            let mut ce: Option<(f64, ModelParams)> = None;
            let mut ce_ref = None;
            if beta < 1.0 {
                let k = rng_for(cfg.seed, &format!("stage2/ref/{epoch}/{i}")).gen_range(0..ex.targets.len());
                ce = Some(model::ce_grad(params, &ex.source, &ex.targets[k], cfg.label_smoothing)?);
                ce_ref = Some((i, k));
            }
            let (loss, grad) = match (rl, ce) {
                (Some(r), None) => r,
                (None, Some(c)) => c,
                (Some((rl_loss, mut rl_grad)), Some((ce_loss, ce_grad))) => {
                    rl_grad.scale(beta);
                    rl_grad.add_scaled(1.0 - beta, &ce_grad);
                    (beta * rl_loss + (1.0 - beta) * ce_loss, rl_grad)
                }
                (None, None) => unreachable!("beta is in [0, 1]"),
            };
            Ok((i, loss, grad, rewards, ce_ref))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rewards = Vec::new();
    let mut ce_refs = Vec::new();
    let mut parts = Vec::with_capacity(outcomes.len());
    let mut sorted = outcomes;
    sorted.sort_by_key(|o| o.0);
    for (i, loss, grad, r, ce_ref) in sorted {
        rewards.extend(r);
        ce_refs.extend(ce_ref);
        parts.push(((i, 0), loss, grad));
    }
    let BatchGrad { loss, grad } = mean_in_order(parts)?;
    Ok(Stage2Batch {
        loss,
        grad,
        rewards,
        ce_refs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Mean sampled training reward (stage 2 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    pub dev_bleu_mr: f64,
    /// Mean reward of greedy dev decodes.
    pub dev_reward: f64,
    /// Training units visited this epoch.
    pub visits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub wall_time_secs: f64,
}

impl TrainLog {
    fn new() -> Self {
        TrainLog {
            records: Vec::new(),
            best_epoch: None,
            wall_time_secs: 0.0,
        }
    }

    /// One JSON object per epoch.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Index of the epoch with the highest dev BLEU-MR; ties go to the later epoch.
pub fn best_epoch(records: &[EpochRecord]) -> Result<usize> {
    best_index(records.iter().map(|r| r.dev_bleu_mr))
}

fn best_index(scores: impl Iterator<Item = f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if best.is_none_or(|(_, b)| s >= b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptyLog)
}

/// The checkpoint of the best epoch; `checkpoints[i]` belongs to record `i`.
pub fn select_checkpoint<'a, T>(log: &TrainLog, checkpoints: &'a [T]) -> Result<&'a T> {
    if checkpoints.len() != log.records.len() {
        return Err(Error::LengthMismatch {
            left: log.records.len(),
            right: checkpoints.len(),
        });
    }
    Ok(&checkpoints[best_epoch(&log.records)?])
}

/// Greedy dev decode scored by corpus BLEU-MR and mean sentence reward.
pub fn dev_scores(model: &Translator, dev: &Corpus) -> Result<(f64, f64)> {
    let hyps = greedy_corpus(model, dev, model.config.max_decode_len)?;
    let refsets = dev.refsets();
    let bleu = corpus_bleu(&hyps, &refsets, &BleuConfig::corpus())?;
    let rewards = hyps
        .iter()
        .zip(&refsets)
        .map(|(h, r)| reward_fn(h, r))
        .collect::<Result<Vec<_>>>()?;
    Ok((bleu, order_free_mean(rewards)))
}

fn check_finite(loss: f64, grad: &ModelParams, stage: u8, epoch: usize, batch: usize) -> Result<()> {
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite(format!(
            "stage {stage}, epoch {epoch}, batch {batch}: loss {loss}, gradient finite: {}",
            grad.is_finite()
        )));
    }
    Ok(())
}

fn check_inputs(model: &Translator, train: &Corpus, dev: &Corpus) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training corpus is empty"));
    }
    if dev.is_empty() {
        return Err(Error::EmptyInput("dev corpus is empty"));
    }
    model.params.check_shapes(&model.config)
}

struct Tracker {
    log: TrainLog,
    best: Option<(f64, ModelParams)>,
}

impl Tracker {
    fn record(&mut self, model: &Translator, record: EpochRecord) {
        let score = record.dev_bleu_mr;
        if self.best.as_ref().is_none_or(|(b, _)| score >= *b) {
            self.best = Some((score, model.params.clone()));
            self.log.best_epoch = Some(record.epoch);
        }
        log::info!(
            "stage {} epoch {} lr {:.5} loss {:.4} dev BLEU-MR {:.2} dev reward {:.4}",
            record.stage,
            record.epoch,
            record.lr,
            record.loss,
            record.dev_bleu_mr,
            record.dev_reward
        );
        self.log.records.push(record);
    }

    fn finish(mut self, mut model: Translator, start: Instant) -> (Translator, TrainLog) {
        if let Some((_, params)) = self.best.take() {
            model.params = params;
        }
        self.log.wall_time_secs = start.elapsed().as_secs_f64();
        (model, self.log)
    }
}

/// Stage 1: cross-entropy over expanded pairs; returns the best dev epoch.
pub fn train_stage1(
    train: &Corpus,
    dev: &Corpus,
    model: &Translator,
    cfg: &Stage1Config,
) -> Result<(Translator, TrainLog)> {
    cfg.validate()?;
    check_inputs(model, train, dev)?;
    let start = Instant::now();
    let data = encode_corpus(model, train);
    let mut model = model.clone();
    let mut opt = MomentumSgd::new(&model.params, cfg.momentum);
    let mut tracker = Tracker {
        log: TrainLog::new(),
        best: None,
    };
    let sched = cfg.schedule();
    for epoch in 0..cfg.epochs {
        let pairs = match cfg.strategy {
            Strategy::ExpandShuffle => {
                expand_multiref(train, Some(derive_seed(cfg.seed, &format!("stage1/shuffle/{epoch}"))))
            }
            Strategy::SampleOne => sample_one_view(train, epoch as u64, derive_seed(cfg.seed, "stage1/sample_one")),
        };
        let lr = cosine_lr(epoch, &sched);
        let units: Vec<(usize, usize)> = pairs.iter().map(|p| (p.example_index, p.ref_index)).collect();
        let mut weighted_loss = 0.0;
        for (b, batch) in units.chunks(cfg.batch_size).enumerate() {
            let BatchGrad { loss, grad } = stage1_batch_grad(&model.params, &data, batch, cfg.label_smoothing)?;
            check_finite(loss, &grad, 1, epoch, b)?;
            weighted_loss += loss * batch.len() as f64;
            opt.step(&mut model.params, &grad, lr);
        }
        let (dev_bleu_mr, dev_reward) = dev_scores(&model, dev)?;
        tracker.record(
            &model,
            EpochRecord {
                stage: 1,
                epoch,
                lr,
                loss: weighted_loss / units.len() as f64,
                reward: None,
                dev_bleu_mr,
                dev_reward,
                visits: units.len(),
            },
        );
    }
    Ok(tracker.finish(model, start))
}

/// Stage 2: REINFORCE (mixed with cross-entropy when `beta < 1`).
pub fn train_stage2(
    train: &Corpus,
    dev: &Corpus,
    model: &Translator,
    cfg: &Stage2Config,
) -> Result<(Translator, TrainLog)> {
    cfg.validate()?;
    check_inputs(model, train, dev)?;
    let start = Instant::now();
    let data = encode_corpus(model, train);
    let mut model = model.clone();
    let mut opt = MomentumSgd::new(&model.params, cfg.momentum);
    let mut tracker = Tracker {
        log: TrainLog::new(),
        best: None,
    };
    let sched = cfg.schedule();
    let max_len = model.config.max_decode_len;
    let mut baseline = 0.0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, &format!("stage2/shuffle/{epoch}")));
        let lr = cosine_lr(epoch, &sched);
        let mut weighted_loss = 0.0;
        let mut rewards = Vec::new();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let used = match cfg.baseline {
                Baseline::None => 0.0,
                Baseline::RunningMean => baseline,
            };
            let out = stage2_batch_grad(&model.params, &model.tgt_vocab, &data, batch, cfg, epoch, used, max_len)?;
            check_finite(out.loss, &out.grad, 2, epoch, b)?;
            weighted_loss += out.loss * batch.len() as f64;
            opt.step(&mut model.params, &out.grad, lr);
            for &r in &out.rewards {
                baseline = BASELINE_DECAY * baseline + (1.0 - BASELINE_DECAY) * r;
            }
            rewards.extend(out.rewards);
        }
        let (dev_bleu_mr, dev_reward) = dev_scores(&model, dev)?;
        tracker.record(
            &model,
            EpochRecord {
                stage: 2,
                epoch,
                lr,
                loss: weighted_loss / data.len() as f64,
                reward: (!rewards.is_empty()).then(|| order_free_mean(rewards)),
                dev_bleu_mr,
                dev_reward,
                visits: data.len(),
            },
        );
    }
    Ok(tracker.finish(model, start))
}
