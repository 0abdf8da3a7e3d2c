//! Training loop: Adam with decoupled weight decay, a step-wise learning
//! rate schedule, the stochastic gradient stop for the lower network part,
//! multi-level connectionist temporal classification, and evaluation.
//!
//! Each iteration draws one Bernoulli gate; when it fires, the first-part
//! parameters are bound as constants for that step, leaving the forward
//! values untouched while their gradients vanish exactly. The optimizer
//! never touches a parameter that received no gradient — no moment update
//! and no decay — so a permanently closed gate keeps the first part
//! bit-identical.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctc::{beam_decode, greedy_decode, GlossSequence};
use crate::datagen::{augment, center_crop, AugmentConfig, Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::metrics::{corpus_wer, EditOps};
use crate::model::{BindMode, ModelInstance};
use crate::network::parse_num;
use crate::scalar::Scalar;
use crate::tape::Tape;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Zero-based epochs at which the rate drops by `lr_drop_factor`.
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
    /// Probability per iteration of stopping first-part gradients.
    pub p_stop: f64,
    /// Heads entering the loss, counted from the deepest.
    pub levels: usize,
    pub beam_width: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 1e-4,
            batch_size: 2,
            epochs: 15,
            lr_drop_epochs: vec![45, 65],
            lr_drop_factor: 0.2,
            p_stop: 0.5,
            levels: 3,
            beam_width: 10,
            seed: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_stop) {
            return Err(Error::config("stop probability must be within [0, 1]"));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor < 1.0) {
            return Err(Error::config("learning-rate drop factor must be in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.levels == 0 || self.levels > 3 {
            return Err(Error::config("loss levels must be within 1..=3"));
        }
        if self.beam_width == 0 {
            return Err(Error::config("beam width must be positive"));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::config("learning rate must be positive and decay non-negative"));
        }
        Ok(())
    }

    /// Effective learning rate at a zero-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_drop_epochs.iter().filter(|&&e| e <= epoch).count();
        self.lr * Float::powi(self.lr_drop_factor, drops as i32)
    }

    pub fn to_text(&self) -> String {
        let drops: Vec<String> = self.lr_drop_epochs.iter().map(|e| format!("{e}")).collect();
        let mut s = String::new();
        s.push_str(&format!("lr {}\n", self.lr));
        s.push_str(&format!("weight_decay {}\n", self.weight_decay));
        s.push_str(&format!("batch {}\n", self.batch_size));
        s.push_str(&format!("epochs {}\n", self.epochs));
        s.push_str(&format!("lr_drop_epochs {}\n", drops.join(",")));
        s.push_str(&format!("lr_drop_factor {}\n", self.lr_drop_factor));
        s.push_str(&format!("p_stop {}\n", self.p_stop));
        s.push_str(&format!("levels {}\n", self.levels));
        s.push_str(&format!("beam {}\n", self.beam_width));
        s.push_str(&format!("seed {}\n", self.seed));
        s.push_str(&format!("stretch {}\n", if self.augment.temporal_stretch { "on" } else { "off" }));
        s.push_str(&format!("crop_pad {}\n", self.augment.crop_pad));
        s.push_str(&format!("flip {}\n", if self.augment.flip { "on" } else { "off" }));
        s
    }

    /// Parses the `key value` lines produced by [`Self::to_text`]; missing
    /// keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::config(format!("malformed config line \"{line}\"")))?;
            let rest = rest.trim();
            let flag = |v: &str| match v {
                "on" | "true" | "1" => Ok(true),
                "off" | "false" | "0" => Ok(false),
                _ => Err(Error::config(format!("expected on/off, got \"{v}\""))),
            };
            match key {
                "lr" => cfg.lr = parse_num(key, rest)?,
                "weight_decay" => cfg.weight_decay = parse_num(key, rest)?,
                "batch" => cfg.batch_size = parse_num(key, rest)?,
                "epochs" => cfg.epochs = parse_num(key, rest)?,
                "lr_drop_epochs" => {
                    cfg.lr_drop_epochs = if rest.is_empty() {
                        Vec::new()
                    } else {
                        rest.split(',')
                            .map(|p| parse_num(key, p.trim()))
                            .collect::<Result<_>>()?
                    };
                }
                "lr_drop_factor" => cfg.lr_drop_factor = parse_num(key, rest)?,
                "p_stop" => cfg.p_stop = parse_num(key, rest)?,
                "levels" => cfg.levels = parse_num(key, rest)?,
                "beam" => cfg.beam_width = parse_num(key, rest)?,
                "seed" => cfg.seed = parse_num(key, rest)?,
                "stretch" => cfg.augment.temporal_stretch = flag(rest)?,
                "crop_pad" => cfg.augment.crop_pad = parse_num(key, rest)?,
                "flip" => cfg.augment.flip = flag(rest)?,
                _ => return Err(Error::config(format!("unknown training key \"{key}\""))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone)]
pub struct AdamState<E: Scalar> {
    pub step: u64,
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
}

impl<E: Scalar> AdamState<E> {
    pub fn new(params: usize) -> Self {
        AdamState { step: 0, m: vec![Vec::new(); params], v: vec![Vec::new(); params] }
    }

    pub fn moments(&self, param: usize) -> (&[E], &[E]) {
        (&self.m[param], &self.v[param])
    }
}

/// One optimizer step. `grads[i] = None` leaves parameter `i` completely
/// untouched: no moment update, no decay, no counter effect on it.
pub fn adam_step<E: Scalar>(
    params: &mut [crate::model::NamedParam<E>],
    grads: &[Option<Vec<E>>],
    state: &mut AdamState<E>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::config("optimizer state does not match the parameter list"));
    }
    state.step += 1;
    let t = state.step;
    let b1 = E::of_f64(BETA1);
    let b2 = E::of_f64(BETA2);
    let one = E::one();
    let corr1 = E::of_f64(1.0 - Float::powi(BETA1, t as i32));
    let corr2 = E::of_f64(1.0 - Float::powi(BETA2, t as i32));
    let eps = E::of_f64(ADAM_EPS);
    let lr_e = E::of_f64(lr);
    let decay = E::of_f64(lr * weight_decay);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let g = match g {
            Some(g) => g,
            None => continue,
        };
        if g.len() != p.value.len() {
            return Err(Error::shape(format!(
                "gradient for \"{}\" has {} elements, parameter has {}",
                p.name,
                g.len(),
                p.value.len()
            )));
        }
        if m.is_empty() {
            m.resize(g.len(), E::zero());
            v.resize(g.len(), E::zero());
        }
        for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            *theta = *theta - lr_e * m_hat / (v_hat.sqrt() + eps) - decay * *theta;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub dev_wer: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<E: Scalar> {
    pub logs: Vec<EpochLog>,
    /// Weights at the best dev error, by greedy decoding.
    pub best: ModelInstance<E>,
    pub best_epoch: usize,
    pub best_dev_wer: f64,
}

/// Selects the deepest `levels` heads in forward order.
fn loss_heads(total: usize, levels: usize) -> Result<core::ops::Range<usize>> {
    if levels > total {
        return Err(Error::config(format!(
            "{levels} loss levels requested but the network has {total} heads"
        )));
    }
    Ok(total - levels..total)
}

/// Runs one optimization step over a batch and returns the averaged loss.
fn train_batch<E: Scalar>(
    model: &mut ModelInstance<E>,
    batch: &[&Sample<E>],
    config: &TrainConfig,
    state: &mut AdamState<E>,
    lr: f64,
    rng: &mut ChaCha8Rng,
    context: &str,
) -> Result<f64> {
    let stop = config.p_stop > 0.0 && rng.gen_bool(config.p_stop);
    let mut tape = Tape::new();
    let binding = model.bind(&mut tape, BindMode::Train { stop_part1: stop });
    let mut total = None;
    for sample in batch {
        let sample = augment(sample, &config.augment, rng)?;
        let x = tape.leaf(&sample.video);
        let heads = model.forward(&mut tape, &binding, x)?;
        for h in loss_heads(heads.len(), config.levels)? {
            let (loss, feasible) = tape.ctc_loss(heads[h], &sample.label)?;
            if !feasible {
                return Err(Error::numeric(format!(
                    "label is infeasible for head {h} ({} frames after pooling, {} tokens) \
                     on sample seed {} — {context}",
                    tape.shape(heads[h])[0],
                    sample.label.len(),
                    sample.seed
                )));
            }
            total = Some(match total {
                None => loss,
                Some(t) => tape.add(t, loss)?,
            });
        }
    }
    let total = total.ok_or_else(|| Error::config("empty batch"))?;
    let mean = tape.scale(total, E::of_f64(1.0 / batch.len() as f64));
    let loss = tape.value(mean)[0].as_f64();
    if !loss.is_finite() {
        let seeds: Vec<String> = batch.iter().map(|s| format!("{}", s.seed)).collect();
        return Err(Error::numeric(format!(
            "non-finite loss {loss} — {context}, lr {lr}, gate {}, sample seeds [{}]",
            if stop { "closed" } else { "open" },
            seeds.join(", ")
        )));
    }
    tape.backward(mean)?;
    let grads: Vec<Option<Vec<E>>> = binding
        .param_ids
        .iter()
        .map(|&id| tape.grad(id).map(|g| g.to_vec()))
        .collect();
    adam_step(model.params_mut(), &grads, state, lr, config.weight_decay)?;
    Ok(loss)
}

/// Trains in place and returns the epoch logs plus the best-dev snapshot.
pub fn train<E: Scalar>(
    model: &mut ModelInstance<E>,
    data: &Dataset<E>,
    config: &TrainConfig,
) -> Result<TrainOutcome<E>> {
    config.validate()?;
    let train_set: Vec<&Sample<E>> = data.split(Split::Train).collect();
    if train_set.is_empty() {
        return Err(Error::config("the train split is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(model.params().len());
    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelInstance<E>)> = None;
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Sample<E>> = chunk.iter().map(|&i| train_set[i]).collect();
            let context = format!("epoch {epoch}, batch {bi}");
            loss_sum += train_batch(model, &batch, config, &mut state, lr, &mut rng, &context)?;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let dev = evaluate_greedy(model, data, Split::Dev)?;
        logs.push(EpochLog { epoch, lr, train_loss, dev_wer: dev.wer });
        let improved = best.as_ref().map(|(w, _, _)| dev.wer < *w).unwrap_or(true);
        if improved {
            best = Some((dev.wer, epoch, model.clone()));
        }
    }
    let (best_dev_wer, best_epoch, best) =
        best.ok_or_else(|| Error::config("training ran for zero epochs"))?;
    Ok(TrainOutcome { logs, best, best_epoch, best_dev_wer })
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub wer: f64,
    pub ops: EditOps,
    pub sentences: usize,
    /// Reference and hypothesis per sentence, in split order.
    pub pairs: Vec<(GlossSequence, GlossSequence)>,
}

fn decode_split<E: Scalar>(
    model: &mut ModelInstance<E>,
    data: &Dataset<E>,
    split: Split,
    decode: impl Fn(&crate::tensor::Tensor<E>) -> Result<GlossSequence>,
) -> Result<EvalReport> {
    let mut pairs = Vec::new();
    for sample in data.split(split) {
        let video = center_crop(&sample.video, model.spec.input_hw)?;
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape, BindMode::Eval);
        let x = tape.leaf(&video);
        let heads = model.forward(&mut tape, &binding, x)?;
        let deepest = *heads.last().ok_or_else(|| Error::config("network has no heads"))?;
        let hyp = decode(&tape.to_tensor(deepest))?;
        pairs.push((sample.label.clone(), hyp));
    }
    let (wer, ops) = corpus_wer(&pairs)?;
    Ok(EvalReport { wer, ops, sentences: pairs.len(), pairs })
}

/// Greedy decoding on the deepest head; used for per-epoch dev tracking.
pub fn evaluate_greedy<E: Scalar>(
    model: &mut ModelInstance<E>,
    data: &Dataset<E>,
    split: Split,
) -> Result<EvalReport> {
    decode_split(model, data, split, |t| greedy_decode(t))
}

/// Center crop plus prefix beam search on the deepest head.
pub fn evaluate<E: Scalar>(
    model: &mut ModelInstance<E>,
    data: &Dataset<E>,
    split: Split,
    beam_width: usize,
) -> Result<EvalReport> {
    decode_split(model, data, split, |t| beam_decode(t, beam_width))
}
