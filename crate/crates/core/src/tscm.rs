//! Temporal superimposed crossover: per-channel time shifts that mix
//! information across adjacent frames without any parameters or
//! multiply-accumulates.
//!
//! A [`ChannelOffsetMap`] assigns every channel an integer frame offset;
//! applying it reads `out[t][c] = x[t + o(c)][c]`, zero-filling where the
//! source frame falls outside the clip. The map patterns come from a
//! [`TscmSpec`]: interleaved crossover combs, contiguous superposition
//! blocks, seeded random assignments, a two-group TSM baseline, or identity.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ConvWeights, Dims4, KernelDims, Tensor};

/// Channel shift pattern family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftMode {
    /// Cyclic comb: channel `c` gets offset `(c mod n) - (n-1)/2`.
    Crossover,
    /// Contiguous blocks of `C/n` channels per offset, ascending.
    Superposition,
    /// Independent uniform draws from the span, fixed by seed.
    RandomCrossover,
    /// Two shifted groups at the front of the channel range, rest static.
    Tsm,
    /// No shifts anywhere.
    Identity,
}

impl ShiftMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "crossover" => Ok(ShiftMode::Crossover),
            "superposition" => Ok(ShiftMode::Superposition),
            "random_crossover" | "random" => Ok(ShiftMode::RandomCrossover),
            "tsm" => Ok(ShiftMode::Tsm),
            "identity" => Ok(ShiftMode::Identity),
            other => Err(Error::config(format!("unknown shift mode \"{other}\""))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShiftMode::Crossover => "crossover",
            ShiftMode::Superposition => "superposition",
            ShiftMode::RandomCrossover => "random_crossover",
            ShiftMode::Tsm => "tsm",
            ShiftMode::Identity => "identity",
        }
    }
}

impl core::fmt::Display for ShiftMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shift pattern configuration; see [`ChannelOffsetMap::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct TscmSpec {
    pub mode: ShiftMode,
    /// Number of adjacent frames mixed together; odd, at least 3.
    pub span: usize,
    /// Seed for `random_crossover` draws.
    pub seed: u64,
    /// Fraction of channels TSM shifts in total (half each direction).
    pub tsm_fraction: f64,
}

impl Default for TscmSpec {
    fn default() -> Self {
        TscmSpec {
            mode: ShiftMode::Crossover,
            span: 3,
            seed: 0,
            tsm_fraction: 0.25,
        }
    }
}

impl TscmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.span < 3 || self.span % 2 == 0 {
            return Err(Error::config(format!(
                "shift span must be an odd integer of at least 3, got {}",
                self.span
            )));
        }
        if !(0.0..=1.0).contains(&self.tsm_fraction) {
            return Err(Error::config(format!(
                "tsm fraction must lie in [0, 1], got {}",
                self.tsm_fraction
            )));
        }
        Ok(())
    }
}

/// Frozen per-channel offsets, ready to apply to any clip with a matching
/// channel count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelOffsetMap {
    offsets: Vec<i32>,
}

impl ChannelOffsetMap {
    /// Builds the offset table for `channels` channels. Random draws happen
    /// here, once — the map does not resample afterwards.
    pub fn new(spec: &TscmSpec, channels: usize) -> Result<Self> {
        spec.validate()?;
        let n = spec.span;
        let half = ((n - 1) / 2) as i32;
        let covered = n * (channels / n);
        let mut offsets = vec![0i32; channels];
        match spec.mode {
            ShiftMode::Identity => {}
            ShiftMode::Crossover => {
                for (c, o) in offsets.iter_mut().enumerate().take(covered) {
                    *o = (c % n) as i32 - half;
                }
            }
            ShiftMode::Superposition => {
                let block = channels / n;
                for (c, o) in offsets.iter_mut().enumerate().take(covered) {
                    *o = (c / block) as i32 - half;
                }
            }
            ShiftMode::RandomCrossover => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                for o in offsets.iter_mut().take(covered) {
                    *o = rng.gen_range(-half..=half);
                }
            }
            ShiftMode::Tsm => {
                let group = (channels as f64 * spec.tsm_fraction / 2.0) as usize;
                for o in offsets.iter_mut().take(group) {
                    *o = -1;
                }
                for o in offsets.iter_mut().skip(group).take(group) {
                    *o = 1;
                }
            }
        }
        Ok(ChannelOffsetMap { offsets })
    }

    pub fn from_offsets(offsets: Vec<i32>) -> Self {
        ChannelOffsetMap { offsets }
    }

    pub fn identity(channels: usize) -> Self {
        ChannelOffsetMap {
            offsets: vec![0; channels],
        }
    }

    pub fn offsets(&self) -> &[i32] {
        &self.offsets
    }

    pub fn channels(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_identity(&self) -> bool {
        self.offsets.iter().all(|&o| o == 0)
    }
}

/// Remaps each channel along time: `out[t][c][h][w] = x[t+o(c)][h][w]` where
/// the source frame exists, zero elsewhere. Shape is preserved exactly.
pub fn apply<E: Scalar>(x: &Tensor<E>, map: &ChannelOffsetMap) -> Result<Tensor<E>> {
    let d = Dims4::of(x)?;
    if map.channels() != d.c {
        return Err(Error::shape(format!(
            "offset map covers {} channels, input has {}",
            map.channels(),
            d.c
        )));
    }
    let src = x.data();
    let plane = d.h * d.w;
    let mut out = vec![E::zero(); d.count()];
    for t in 0..d.t {
        for c in 0..d.c {
            let from = t as i64 + map.offsets[c] as i64;
            if from < 0 || from >= d.t as i64 {
                continue;
            }
            let dst = d.idx(t, c, 0, 0);
            let s = d.idx(from as usize, c, 0, 0);
            out[dst..dst + plane].copy_from_slice(&src[s..s + plane]);
        }
    }
    Tensor::new(x.shape(), out)
}

/// Adjoint of [`apply`]: scatters each output-side gradient frame back to the
/// input frame it was read from.
pub fn apply_backward<E: Scalar>(grad_out: &Tensor<E>, map: &ChannelOffsetMap) -> Result<Tensor<E>> {
    let d = Dims4::of(grad_out)?;
    if map.channels() != d.c {
        return Err(Error::shape(format!(
            "offset map covers {} channels, gradient has {}",
            map.channels(),
            d.c
        )));
    }
    let g = grad_out.data();
    let plane = d.h * d.w;
    let mut out = vec![E::zero(); d.count()];
    for t in 0..d.t {
        for c in 0..d.c {
            let from = t as i64 + map.offsets[c] as i64;
            if from < 0 || from >= d.t as i64 {
                continue;
            }
            let dst = d.idx(t, c, 0, 0);
            let s = d.idx(from as usize, c, 0, 0);
            for i in 0..plane {
                out[s + i] = out[s + i] + g[dst + i];
            }
        }
    }
    Tensor::new(grad_out.shape(), out)
}

fn series_dims<E: Scalar>(x: &Tensor<E>) -> Result<(usize, usize)> {
    match x.shape() {
        [t, c] => Ok((*t, *c)),
        other => Err(Error::shape(format!(
            "series must be rank-2 [T, C], got {}",
            crate::tensor::shape_string(other)
        ))),
    }
}

fn temporal_conv_series<E: Scalar>(x: &Tensor<E>, w: &ConvWeights<E>) -> Result<Vec<E>> {
    let (t_dim, c) = series_dims(x)?;
    let kt = 3usize;
    let (cout, cin) = (w.out_channels, w.in_channels);
    let xv = x.data();
    let wv = w.tensor().data();
    let mut out = vec![E::zero(); t_dim * cout];
    for t in 0..t_dim {
        for o in 0..cout {
            let mut acc = E::zero();
            for ci in 0..cin {
                for dt in 0..kt {
                    let src = t as i64 + dt as i64 - 1;
                    if src < 0 || src >= t_dim as i64 {
                        continue;
                    }
                    acc = acc + wv[(o * cin + ci) * kt + dt] * xv[src as usize * c + ci];
                }
            }
            out[t * cout + o] = acc;
        }
    }
    Ok(out)
}

fn stacked_pointwise_series<E: Scalar>(
    x: &Tensor<E>,
    w: &ConvWeights<E>,
    reverse_blocks: bool,
) -> Result<Vec<E>> {
    let (t_dim, c) = series_dims(x)?;
    let kt = 3usize;
    let (cout, cin) = (w.out_channels, w.in_channels);
    let xv = x.data();
    let wv = w.tensor().data();
    // stacked[t] = concat over dt of the frame at t + dt - 1
    let mut stacked = vec![E::zero(); t_dim * kt * c];
    for t in 0..t_dim {
        for dt in 0..kt {
            let src = t as i64 + dt as i64 - 1;
            if src < 0 || src >= t_dim as i64 {
                continue;
            }
            for ci in 0..c {
                stacked[(t * kt + dt) * c + ci] = xv[src as usize * c + ci];
            }
        }
    }
    // pointwise weights: block dt of row o is w[o, :, dt]
    let mut out = vec![E::zero(); t_dim * cout];
    for t in 0..t_dim {
        for o in 0..cout {
            let mut acc = E::zero();
            for dt in 0..kt {
                let block = if reverse_blocks { kt - 1 - dt } else { dt };
                for ci in 0..cin {
                    acc = acc + wv[(o * cin + ci) * kt + block] * stacked[(t * kt + dt) * c + ci];
                }
            }
            out[t * cout + o] = acc;
        }
    }
    Ok(out)
}

fn check_series_pair<E: Scalar>(x: &Tensor<E>, w: &ConvWeights<E>) -> Result<()> {
    let (_, c) = series_dims(x)?;
    if w.kernel != KernelDims::temporal(3) {
        return Err(Error::config(String::from(
            "stacked equivalence reference is defined for temporal kernels of size 3",
        )));
    }
    if w.in_channels != c {
        return Err(Error::shape(format!(
            "weights expect {} channels, series has {c}",
            w.in_channels
        )));
    }
    Ok(())
}

/// Computes the same temporal convolution two ways: directly along time, and
/// as a pointwise convolution over frames stacked with their two neighbours.
/// The returned series are elementwise equal up to rounding.
pub fn stacked_equivalence_reference<E: Scalar>(
    x: &Tensor<E>,
    w: &ConvWeights<E>,
) -> Result<(Tensor<E>, Tensor<E>)> {
    check_series_pair(x, w)?;
    let (t_dim, _) = series_dims(x)?;
    let direct = temporal_conv_series(x, w)?;
    let stacked = stacked_pointwise_series(x, w, false)?;
    Ok((
        Tensor::new(&[t_dim, w.out_channels], direct)?,
        Tensor::new(&[t_dim, w.out_channels], stacked)?,
    ))
}

/// Negative control for the equivalence check: the stacked path deliberately
/// pairs each neighbour frame with the wrong weight slice, which must break
/// the agreement for generic weights.
pub fn stacked_equivalence_control<E: Scalar>(
    x: &Tensor<E>,
    w: &ConvWeights<E>,
) -> Result<(Tensor<E>, Tensor<E>)> {
    check_series_pair(x, w)?;
    let (t_dim, _) = series_dims(x)?;
    let direct = temporal_conv_series(x, w)?;
    let stacked = stacked_pointwise_series(x, w, true)?;
    Ok((
        Tensor::new(&[t_dim, w.out_channels], direct)?,
        Tensor::new(&[t_dim, w.out_channels], stacked)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: ShiftMode, span: usize) -> TscmSpec {
        TscmSpec {
            mode,
            span,
            ..TscmSpec::default()
        }
    }

    #[test]
    fn crossover_offsets_follow_cyclic_comb() {
        let m = ChannelOffsetMap::new(&spec(ShiftMode::Crossover, 3), 6).unwrap();
        assert_eq!(m.offsets(), &[-1, 0, 1, -1, 0, 1]);
        let m = ChannelOffsetMap::new(&spec(ShiftMode::Crossover, 5), 7).unwrap();
        assert_eq!(m.offsets(), &[-2, -1, 0, 1, 2, 0, 0]);
    }

    #[test]
    fn superposition_offsets_form_contiguous_blocks() {
        let m = ChannelOffsetMap::new(&spec(ShiftMode::Superposition, 3), 6).unwrap();
        assert_eq!(m.offsets(), &[-1, -1, 0, 0, 1, 1]);
        let m = ChannelOffsetMap::new(&spec(ShiftMode::Superposition, 3), 7).unwrap();
        assert_eq!(m.offsets(), &[-1, -1, 0, 0, 1, 1, 0]);
    }

    #[test]
    fn tsm_offsets_shift_front_groups() {
        let s = TscmSpec {
            mode: ShiftMode::Tsm,
            ..TscmSpec::default()
        };
        let m = ChannelOffsetMap::new(&s, 16).unwrap();
        assert_eq!(
            m.offsets(),
            &[-1, -1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn random_offsets_reproduce_for_fixed_seed() {
        let s = TscmSpec {
            mode: ShiftMode::RandomCrossover,
            seed: 9,
            ..TscmSpec::default()
        };
        let a = ChannelOffsetMap::new(&s, 32).unwrap();
        let b = ChannelOffsetMap::new(&s, 32).unwrap();
        assert_eq!(a, b);
        assert!(a.offsets().iter().all(|o| (-1..=1).contains(o)));
    }

    #[test]
    fn even_span_is_rejected() {
        assert!(ChannelOffsetMap::new(&spec(ShiftMode::Crossover, 4), 8).is_err());
        assert!(ChannelOffsetMap::new(&spec(ShiftMode::Crossover, 1), 8).is_err());
    }

    #[test]
    fn apply_matches_hand_example() {
        let x = Tensor::new(&[3, 3, 1, 1], vec![1., 2., 3., 4., 5., 6., 7., 8., 9.]).unwrap();
        let m = ChannelOffsetMap::new(&spec(ShiftMode::Crossover, 3), 3).unwrap();
        let y = apply(&x, &m).unwrap();
        assert_eq!(y.data(), &[0., 2., 6., 1., 5., 9., 4., 8., 0.]);
    }

    #[test]
    fn identity_apply_is_bit_equal() {
        let x = Tensor::new(&[2, 4, 1, 1], vec![0.5f32; 8]).unwrap();
        let y = apply(&x, &ChannelOffsetMap::identity(4)).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn backward_scatters_where_forward_gathered() {
        let m = ChannelOffsetMap::from_offsets(vec![-1]);
        let g = Tensor::new(&[3, 1, 1, 1], vec![10., 20., 30.]).unwrap();
        // forward read out[t] = x[t-1]; adjoint sends grad at t to slot t-1
        let gi = apply_backward(&g, &m).unwrap();
        assert_eq!(gi.data(), &[20., 30., 0.]);
    }

    #[test]
    fn stacked_reference_agrees_on_hand_case() {
        let x = Tensor::new(&[3, 1], vec![1., 2., 3.]).unwrap();
        let w = ConvWeights::new(1, 1, KernelDims::temporal(3), vec![1., 1., 1.]).unwrap();
        let (a, b) = stacked_equivalence_reference(&x, &w).unwrap();
        assert_eq!(a.data()[1], 6.0);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn reversed_stacking_breaks_agreement() {
        let x = Tensor::new(&[4, 1], vec![1., 2., 3., 4.]).unwrap();
        let w = ConvWeights::new(1, 1, KernelDims::temporal(3), vec![1., 0., -1.]).unwrap();
        let (a, b) = stacked_equivalence_control(&x, &w).unwrap();
        assert_ne!(a.data(), b.data());
    }
}
