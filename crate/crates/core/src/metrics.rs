//! Word error rate over gloss sequences.
//!
//! The rate is always `100 * (insertions + deletions + substitutions) /
//! reference length`, with the edit counts from a unit-cost alignment seen
//! from the reference side: a token present in the reference but not the
//! hypothesis is a deletion. Corpus scores pool the raw counts before
//! dividing; they are not averages of per-sentence rates.

use alloc::vec;

use crate::ctc::GlossSequence;
use crate::error::{Error, Result};

/// Unit-cost edit alignment summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditOps {
    pub ins: usize,
    pub del: usize,
    pub sub: usize,
    /// Reference length the counts are scored against.
    pub sum: usize,
}

impl EditOps {
    pub fn distance(&self) -> usize {
        self.ins + self.del + self.sub
    }

    pub fn rate(&self) -> f64 {
        if self.sum == 0 {
            return 0.0;
        }
        100.0 * self.distance() as f64 / self.sum as f64
    }

    pub fn accumulate(&mut self, other: &EditOps) {
        self.ins += other.ins;
        self.del += other.del;
        self.sub += other.sub;
        self.sum += other.sum;
    }
}

/// Aligns `hyp` against `reference` and returns the rate with its edit
/// counts. The reference may be empty here; only corpus scoring insists on a
/// non-empty pooled reference.
pub fn wer(reference: &GlossSequence, hyp: &GlossSequence) -> (f64, EditOps) {
    let ops = align(reference.tokens(), hyp.tokens());
    (ops.rate(), ops)
}

/// Pools edit counts over all pairs, then divides once.
pub fn corpus_wer(pairs: &[(GlossSequence, GlossSequence)]) -> Result<(f64, EditOps)> {
    let mut pooled = EditOps::default();
    for (reference, hyp) in pairs {
        let (_, ops) = wer(reference, hyp);
        pooled.accumulate(&ops);
    }
    if pooled.sum == 0 {
        return Err(Error::config(
            "corpus word error rate needs a non-empty pooled reference",
        ));
    }
    Ok((pooled.rate(), pooled))
}

fn align(reference: &[usize], hyp: &[usize]) -> EditOps {
    let (rl, hl) = (reference.len(), hyp.len());
    // cost[i][j]: edits to turn reference[..i] into hyp[..j]
    let mut cost = vec![0usize; (rl + 1) * (hl + 1)];
    let at = |i: usize, j: usize| i * (hl + 1) + j;
    for i in 0..=rl {
        cost[at(i, 0)] = i;
    }
    for j in 0..=hl {
        cost[at(0, j)] = j;
    }
    for i in 1..=rl {
        for j in 1..=hl {
            let sub = cost[at(i - 1, j - 1)] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = cost[at(i - 1, j)] + 1;
            let ins = cost[at(i, j - 1)] + 1;
            cost[at(i, j)] = sub.min(del).min(ins);
        }
    }
    // walk the table back to split the distance into operation counts
    let mut ops = EditOps {
        sum: rl,
        ..EditOps::default()
    };
    let (mut i, mut j) = (rl, hl);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let here = cost[at(i, j)];
            let diag = cost[at(i - 1, j - 1)];
            if reference[i - 1] == hyp[j - 1] && here == diag {
                i -= 1;
                j -= 1;
                continue;
            }
            if here == diag + 1 {
                ops.sub += 1;
                i -= 1;
                j -= 1;
                continue;
            }
            if here == cost[at(i - 1, j)] + 1 {
                ops.del += 1;
                i -= 1;
                continue;
            }
            ops.ins += 1;
            j -= 1;
        } else if i > 0 {
            ops.del += 1;
            i -= 1;
        } else {
            ops.ins += 1;
            j -= 1;
        }
    }
    debug_assert_eq!(ops.distance(), cost[at(rl, hl)]);
    ops
}
