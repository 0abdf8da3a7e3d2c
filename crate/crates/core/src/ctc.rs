//! Connectionist temporal classification: forward–backward loss with an
//! analytic gradient, greedy best-path decoding, and prefix beam search.
//!
//! Everything runs in log space. Token id 0 is the blank throughout; real
//! vocabulary entries start at 1. An unalignable label (more symbols than the
//! frame count can carry) yields an infinite loss and a cleared feasibility
//! flag rather than an error, so callers can skip or report such samples.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;

pub const BLANK: usize = 0;

/// Label sequence over a vocabulary of real tokens (ids from 1 upward).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GlossSequence {
    tokens: Vec<usize>,
}

impl GlossSequence {
    pub fn new(tokens: Vec<usize>) -> Result<Self> {
        if tokens.iter().any(|&t| t == BLANK) {
            return Err(Error::config(
                "label sequences cannot contain the blank id",
            ));
        }
        Ok(GlossSequence { tokens })
    }

    pub fn empty() -> Self {
        GlossSequence { tokens: Vec::new() }
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Blank-interleaved form: `- a - b -` for the label `a b`.
    pub fn extended(&self) -> Vec<usize> {
        let mut ext = Vec::with_capacity(2 * self.tokens.len() + 1);
        ext.push(BLANK);
        for &t in &self.tokens {
            ext.push(t);
            ext.push(BLANK);
        }
        ext
    }
}

/// Multi-level loss arrangement plus decoding width.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcConfig {
    pub levels: usize,
    pub weights: Vec<f64>,
    pub beam_width: usize,
}

impl CtcConfig {
    pub fn new(levels: usize) -> Self {
        CtcConfig {
            levels,
            weights: vec![1.0; levels],
            beam_width: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::config("at least one loss level is required"));
        }
        if self.weights.len() != self.levels {
            return Err(Error::config(format!(
                "{} level weights given for {} levels",
                self.weights.len(),
                self.levels
            )));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::config("level weights must be positive"));
        }
        if self.beam_width == 0 {
            return Err(Error::config("beam width must be at least 1"));
        }
        Ok(())
    }
}

impl Default for CtcConfig {
    fn default() -> Self {
        CtcConfig::new(3)
    }
}

/// Loss value, gradient with respect to the log-probabilities, and whether
/// the label was alignable at all.
#[derive(Debug, Clone)]
pub struct CtcOutcome<E: Scalar> {
    pub loss: E,
    pub grad: Tensor<E>,
    pub feasible: bool,
}

#[inline]
fn lse2<E: Scalar>(a: E, b: E) -> E {
    let m = a.max(b);
    if m == E::neg_infinity() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[inline]
fn lse3<E: Scalar>(a: E, b: E, c: E) -> E {
    lse2(lse2(a, b), c)
}

fn rows_cols<E: Scalar>(logprobs: &Tensor<E>) -> Result<(usize, usize)> {
    match logprobs.shape() {
        [t, v] if *v >= 1 => Ok((*t, *v)),
        other => Err(Error::shape(format!(
            "log-probabilities must be [T', V+1], got {}",
            crate::tensor::shape_string(other)
        ))),
    }
}

fn check_label<E: Scalar>(logprobs: &Tensor<E>, label: &GlossSequence) -> Result<(usize, usize)> {
    let (t, v) = rows_cols(logprobs)?;
    if t == 0 {
        return Err(Error::shape("log-probabilities have zero frames"));
    }
    if let Some(&bad) = label.tokens().iter().find(|&&tok| tok >= v) {
        return Err(Error::config(format!(
            "label token {bad} outside vocabulary of size {v} (including blank)"
        )));
    }
    Ok((t, v))
}

/// Negative log-likelihood of `label` under the per-frame distributions,
/// with its analytic gradient. Rows of `logprobs` are log-probabilities over
/// blank + vocabulary.
pub fn ctc_loss<E: Scalar>(logprobs: &Tensor<E>, label: &GlossSequence) -> Result<CtcOutcome<E>> {
    let (t_len, v) = check_label(logprobs, label)?;
    let y = logprobs.data();
    let ext = label.extended();
    let s_len = ext.len();
    let ninf = E::neg_infinity();
    let at = |t: usize, k: usize| y[t * v + k];

    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = at(0, ext[0]);
    if s_len > 1 {
        alpha[1] = at(0, ext[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let stay = alpha[(t - 1) * s_len + s];
            let step = if s >= 1 { alpha[(t - 1) * s_len + s - 1] } else { ninf };
            let skip = if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                alpha[(t - 1) * s_len + s - 2]
            } else {
                ninf
            };
            let prev = lse3(stay, step, skip);
            alpha[t * s_len + s] = if prev == ninf { ninf } else { prev + at(t, ext[s]) };
        }
    }

    let tail = alpha[(t_len - 1) * s_len + s_len - 1];
    let tail2 = if s_len > 1 { alpha[(t_len - 1) * s_len + s_len - 2] } else { ninf };
    let log_p = lse2(tail, tail2);

    if log_p == ninf {
        return Ok(CtcOutcome {
            loss: E::infinity(),
            grad: Tensor::zeros(logprobs.shape()),
            feasible: false,
        });
    }

    let mut beta = vec![ninf; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = at(t_len - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[(t_len - 1) * s_len + s_len - 2] = at(t_len - 1, ext[s_len - 2]);
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let stay = beta[(t + 1) * s_len + s];
            let step = if s + 1 < s_len { beta[(t + 1) * s_len + s + 1] } else { ninf };
            let skip = if s + 2 < s_len && ext[s + 2] != BLANK && ext[s + 2] != ext[s] {
                beta[(t + 1) * s_len + s + 2]
            } else {
                ninf
            };
            let next = lse3(stay, step, skip);
            beta[t * s_len + s] = if next == ninf { ninf } else { next + at(t, ext[s]) };
        }
    }

    // d(-log p)/d(logprob[t][k]) = -exp(lse_{s: ext[s]=k}(alpha+beta) - y[t][k] - log p)
    let mut grad = vec![E::zero(); t_len * v];
    for t in 0..t_len {
        let mut per_symbol = vec![ninf; v];
        for s in 0..s_len {
            let ab = alpha[t * s_len + s] + beta[t * s_len + s];
            if ab != ninf {
                per_symbol[ext[s]] = lse2(per_symbol[ext[s]], ab);
            }
        }
        for k in 0..v {
            if per_symbol[k] != ninf {
                grad[t * v + k] = -(per_symbol[k] - at(t, k) - log_p).exp();
            }
        }
    }

    Ok(CtcOutcome {
        loss: -log_p,
        grad: Tensor::new(logprobs.shape(), grad)?,
        feasible: true,
    })
}

/// Weighted sum of per-head losses. Head `i` pairs with `config.weights[i]`;
/// the head list length must match `config.levels`.
pub fn multilevel_ctc<E: Scalar>(
    heads: &[Tensor<E>],
    label: &GlossSequence,
    config: &CtcConfig,
) -> Result<(E, Vec<CtcOutcome<E>>)> {
    config.validate()?;
    if heads.len() != config.levels {
        return Err(Error::config(format!(
            "{} head outputs given for {} loss levels",
            heads.len(),
            config.levels
        )));
    }
    let mut total = E::zero();
    let mut outcomes = Vec::with_capacity(heads.len());
    for (head, &w) in heads.iter().zip(&config.weights) {
        let outcome = ctc_loss(head, label)?;
        total = total + E::of_f64(w) * outcome.loss;
        outcomes.push(outcome);
    }
    Ok((total, outcomes))
}

/// Best-path decoding: per-frame argmax, collapse adjacent repeats, drop
/// blanks.
pub fn greedy_decode<E: Scalar>(logprobs: &Tensor<E>) -> Result<GlossSequence> {
    let (t_len, v) = rows_cols(logprobs)?;
    let y = logprobs.data();
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for t in 0..t_len {
        let row = &y[t * v..(t + 1) * v];
        let mut best = 0usize;
        for k in 1..v {
            if row[k] > row[best] {
                best = k;
            }
        }
        if best != prev && best != BLANK {
            out.push(best);
        }
        prev = best;
    }
    GlossSequence::new(out)
}

/// Prefix beam search. Prefixes that collapse to the same label sequence are
/// merged, tracking blank-ending and symbol-ending probability mass
/// separately; the best prefix by total mass wins.
pub fn beam_decode<E: Scalar>(logprobs: &Tensor<E>, width: usize) -> Result<GlossSequence> {
    if width == 0 {
        return Err(Error::config("beam width must be at least 1"));
    }
    let (t_len, v) = rows_cols(logprobs)?;
    let y = logprobs.data();
    let ninf = E::neg_infinity();

    // prefix -> (log mass ending in blank, log mass ending in its last symbol)
    let mut beams: BTreeMap<Vec<usize>, (E, E)> = BTreeMap::new();
    beams.insert(Vec::new(), (E::zero(), ninf));

    for t in 0..t_len {
        let row = &y[t * v..(t + 1) * v];
        let mut next: BTreeMap<Vec<usize>, (E, E)> = BTreeMap::new();
        let bump = |map: &mut BTreeMap<Vec<usize>, (E, E)>,
                        key: Vec<usize>,
                        blank_part: E,
                        symbol_part: E| {
            let entry = map.entry(key).or_insert((ninf, ninf));
            entry.0 = lse2(entry.0, blank_part);
            entry.1 = lse2(entry.1, symbol_part);
        };
        for (prefix, &(pb, pnb)) in &beams {
            let total = lse2(pb, pnb);
            bump(&mut next, prefix.clone(), total + row[BLANK], ninf);
            for k in 1..v {
                let pk = row[k];
                if prefix.last() == Some(&k) {
                    // same symbol again: no separator collapses it into the
                    // existing prefix; a blank in between started a new copy
                    bump(&mut next, prefix.clone(), ninf, pnb + pk);
                    let mut grown = prefix.clone();
                    grown.push(k);
                    bump(&mut next, grown, ninf, pb + pk);
                } else {
                    let mut grown = prefix.clone();
                    grown.push(k);
                    bump(&mut next, grown, ninf, total + pk);
                }
            }
        }
        let mut ranked: Vec<(Vec<usize>, (E, E))> = next.into_iter().collect();
        ranked.sort_by(|a, b| {
            let ta = lse2(a.1 .0, a.1 .1);
            let tb = lse2(b.1 .0, b.1 .1);
            tb.partial_cmp(&ta).unwrap_or(core::cmp::Ordering::Equal)
        });
        ranked.truncate(width);
        beams = ranked.into_iter().collect();
    }

    let best = beams
        .into_iter()
        .max_by(|a, b| {
            let ta = lse2(a.1 .0, a.1 .1);
            let tb = lse2(b.1 .0, b.1 .1);
            ta.partial_cmp(&tb).unwrap_or(core::cmp::Ordering::Equal)
        })
        .map(|(prefix, _)| prefix)
        .unwrap_or_default();
    GlossSequence::new(best)
}

impl<E: Scalar> Tape<E> {
    /// Loss node over a `[T', V+1]` log-probability value. The gradient is
    /// computed analytically during the forward pass and replayed by
    /// `backward`. The boolean reports label feasibility.
    pub fn ctc_loss(&mut self, logprobs: ValueId, label: &GlossSequence) -> Result<(ValueId, bool)> {
        let value = self.to_tensor(logprobs);
        let outcome = ctc_loss(&value, label)?;
        let id = self.push_ctc(logprobs, outcome.loss, outcome.grad.into_data());
        Ok((id, outcome.feasible))
    }
}
