//! MovingGlyphs: a synthetic continuous-gesture corpus whose classes are
//! separable only through motion.
//!
//! Each gloss is a colored glyph travelling across the canvas. The
//! vocabulary is built from mirror-symmetric shapes, each contributing a
//! pair of glosses with identical appearance and opposite directions: a
//! single frame cannot tell the pair members apart, so a network that
//! ignores time plateaus near 50% error while a temporally-aware one can
//! separate them. Sentences concatenate 2–5 glosses with one or two blank
//! transition frames between them.
//!
//! Velocities and start positions are quantized to an eighth of a pixel,
//! which keeps every interpolated position exactly representable: the two
//! clips of an opposite-motion pair rendered over the same path are
//! bit-identical under time reversal, not merely close.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctc::GlossSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fraction of the canvas a glyph covers per frame.
const SPEED_FRACTION: f64 = 0.035;
/// Glyph radius as a fraction of the canvas.
const RADIUS_FRACTION: f64 = 0.15;
const MIN_RESOLUTION: usize = 16;
const DURATION_RANGE: (usize, usize) = (8, 12);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlyphShape {
    Disc,
    Ring,
    Bar,
    Cross,
}

impl GlyphShape {
    fn color(self) -> [f64; 3] {
        match self {
            GlyphShape::Disc => [1.0, 0.25, 0.25],
            GlyphShape::Ring => [0.25, 1.0, 0.25],
            GlyphShape::Bar => [0.25, 0.45, 1.0],
            GlyphShape::Cross => [1.0, 1.0, 0.3],
        }
    }

    fn tag(self) -> &'static str {
        match self {
            GlyphShape::Disc => "disc",
            GlyphShape::Ring => "ring",
            GlyphShape::Bar => "bar",
            GlyphShape::Cross => "cross",
        }
    }
}

/// One vocabulary entry: a glyph with a fixed motion.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphGloss {
    /// Token id; 0 stays reserved for the blank.
    pub id: usize,
    pub name: String,
    pub shape: GlyphShape,
    /// Unit direction of travel.
    pub direction: (f64, f64),
    /// Canvas fraction covered per frame.
    pub speed: f64,
    /// Inclusive frame-count range for one occurrence.
    pub duration: (usize, usize),
}

/// Builds the gloss vocabulary: shapes times opposite direction pairs, in
/// pair-adjacent order. `vocab` must be even, at least 4 (two opposite
/// pairs), and at most 16.
pub fn vocabulary(vocab: usize) -> Result<Vec<GlyphGloss>> {
    if vocab < 4 || vocab > 16 || vocab % 2 != 0 {
        return Err(Error::config(format!(
            "vocabulary size must be even and within 4..=16, got {vocab}"
        )));
    }
    let shapes = [GlyphShape::Disc, GlyphShape::Ring, GlyphShape::Bar, GlyphShape::Cross];
    let axes: [((f64, f64), &str, &str); 2] =
        [((1.0, 0.0), "e", "w"), ((0.0, 1.0), "s", "n")];
    let mut out = Vec::with_capacity(vocab);
    'fill: for (axis, fwd, bwd) in axes {
        for shape in shapes {
            for (dir, suffix) in [(axis, fwd), ((-axis.0, -axis.1), bwd)] {
                if out.len() == vocab {
                    break 'fill;
                }
                out.push(GlyphGloss {
                    id: out.len() + 1,
                    name: format!("{}_{}", shape.tag(), suffix),
                    shape,
                    direction: dir,
                    speed: SPEED_FRACTION,
                    duration: DURATION_RANGE,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Deterministic 80/10/10 split by sample index.
pub fn split_of(index: usize, total: usize) -> Split {
    let train = total * 8 / 10;
    let dev = total / 10;
    if index < train {
        Split::Train
    } else if index < train + dev {
        Split::Dev
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone)]
pub struct Sample<E: Scalar> {
    /// Video `[T, 3, H, W]` with values in `[0, 1]`.
    pub video: Tensor<E>,
    pub label: GlossSequence,
    pub split: Split,
    pub seed: u64,
    /// Frame span `[start, end)` of each gloss, transitions excluded.
    pub spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Dataset<E: Scalar> {
    pub glosses: Vec<GlyphGloss>,
    pub samples: Vec<Sample<E>>,
    pub resolution: usize,
}

impl<E: Scalar> Dataset<E> {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample<E>> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

#[derive(Debug, Clone)]
pub struct DataConfig {
    pub vocab: usize,
    pub sentences: usize,
    pub resolution: usize,
    pub seed: u64,
    pub min_glosses: usize,
    pub max_glosses: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            vocab: 8,
            sentences: 200,
            resolution: 32,
            seed: 0,
            min_glosses: 2,
            max_glosses: 5,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab % 2 != 0 || !(4..=16).contains(&self.vocab) {
            return Err(Error::config(format!(
                "vocabulary size must be even and within 4..=16, got {}",
                self.vocab
            )));
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::config(format!(
                "resolution {} is too small for the glyphs (minimum {})",
                self.resolution, MIN_RESOLUTION
            )));
        }
        if self.min_glosses < 1 || self.min_glosses > self.max_glosses {
            return Err(Error::config("gloss count range is empty"));
        }
        if self.sentences == 0 {
            return Err(Error::config("sentence count must be positive"));
        }
        let train = self.sentences * 8 / 10;
        if train < self.vocab {
            return Err(Error::config(format!(
                "{} sentences leave a train split smaller than the {}-gloss vocabulary",
                self.sentences, self.vocab
            )));
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn sample_seed(dataset_seed: u64, index: usize) -> u64 {
    splitmix64(dataset_seed ^ splitmix64(index as u64 + 1))
}

/// Snaps to the exact 1/8-pixel grid.
fn quantize(x: f64) -> f64 {
    Float::round(x * 8.0) / 8.0
}

fn glyph_alpha(shape: GlyphShape, dx: f64, dy: f64, r: f64) -> f64 {
    let soft = |signed_dist: f64| (0.5 - signed_dist).clamp(0.0, 1.0);
    let adx = Float::abs(dx);
    let ady = Float::abs(dy);
    match shape {
        GlyphShape::Disc => soft(Float::sqrt(dx * dx + dy * dy) - r),
        GlyphShape::Ring => {
            let d = Float::sqrt(dx * dx + dy * dy);
            soft(Float::abs(d - 0.7 * r) - 0.3 * r)
        }
        GlyphShape::Bar => {
            if ady <= r {
                soft(adx - 0.35 * r)
            } else {
                0.0
            }
        }
        GlyphShape::Cross => {
            let horiz = if adx <= r { soft(ady - 0.35 * r) } else { 0.0 };
            let vert = if ady <= r { soft(adx - 0.35 * r) } else { 0.0 };
            horiz.max(vert)
        }
    }
}

/// Renders one gloss occurrence: `duration` frames of the glyph moving from
/// `start` with the gloss velocity, as `[duration, 3, res, res]` data.
/// `start` and the per-frame velocity are quantized internally, so a pair
/// of opposite glosses rendered over the same path produces bit-identical
/// frames in reverse order.
pub fn render_gloss<E: Scalar>(
    gloss: &GlyphGloss,
    start: (f64, f64),
    duration: usize,
    resolution: usize,
) -> Vec<E> {
    let res = resolution;
    let v = velocity(gloss, res);
    let sx = quantize(start.0);
    let sy = quantize(start.1);
    let r = RADIUS_FRACTION * res as f64;
    let color = gloss.shape.color();
    let mut out = vec![E::zero(); duration * 3 * res * res];
    for t in 0..duration {
        let cx = sx + v.0 * t as f64;
        let cy = sy + v.1 * t as f64;
        let frame = &mut out[t * 3 * res * res..(t + 1) * 3 * res * res];
        for y in 0..res {
            for x in 0..res {
                let a = glyph_alpha(gloss.shape, x as f64 - cx, y as f64 - cy, r);
                if a > 0.0 {
                    for c in 0..3 {
                        frame[c * res * res + y * res + x] = E::of_f64(a * color[c]);
                    }
                }
            }
        }
    }
    out
}

/// Exact per-frame displacement of a gloss at a given resolution.
pub fn velocity(gloss: &GlyphGloss, resolution: usize) -> (f64, f64) {
    let px = gloss.speed * resolution as f64;
    (quantize(gloss.direction.0 * px), quantize(gloss.direction.1 * px))
}

fn render_sentence<E: Scalar>(
    glosses: &[GlyphGloss],
    tokens: &[usize],
    resolution: usize,
    rng: &mut ChaCha8Rng,
) -> (Tensor<E>, Vec<(usize, usize)>) {
    let res = resolution;
    let mut frames: Vec<E> = Vec::new();
    let mut spans = Vec::with_capacity(tokens.len());
    let mut t = 0usize;
    for (i, &tok) in tokens.iter().enumerate() {
        if i > 0 {
            let gap = rng.gen_range(1..=2usize);
            frames.extend(core::iter::repeat(E::zero()).take(gap * 3 * res * res));
            t += gap;
        }
        let gloss = &glosses[tok - 1];
        let duration = rng.gen_range(gloss.duration.0..=gloss.duration.1);
        let v = velocity(gloss, res);
        let half = res as f64 / 2.0;
        let jx = rng.gen_range(-2.0..2.0);
        let jy = rng.gen_range(-2.0..2.0);
        let start = (
            half + jx - v.0 * (duration - 1) as f64 / 2.0,
            half + jy - v.1 * (duration - 1) as f64 / 2.0,
        );
        frames.extend(render_gloss::<E>(gloss, start, duration, res));
        spans.push((t, t + duration));
        t += duration;
    }
    let video = Tensor::new(&[t, 3, res, res], frames).expect("frame count is tracked");
    (video, spans)
}

/// Generates the full corpus in memory, deterministically for the seed.
/// Every gloss is planted at least once in the train split.
pub fn generate<E: Scalar>(config: &DataConfig) -> Result<Dataset<E>> {
    config.validate()?;
    let glosses = vocabulary(config.vocab)?;
    let mut samples = Vec::with_capacity(config.sentences);
    for i in 0..config.sentences {
        let seed = sample_seed(config.seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(config.min_glosses..=config.max_glosses);
        let mut tokens: Vec<usize> =
            (0..len).map(|_| rng.gen_range(1..=config.vocab)).collect();
        if i < config.vocab {
            tokens[0] = i + 1;
        }
        let (video, spans) = render_sentence::<E>(&glosses, &tokens, config.resolution, &mut rng);
        samples.push(Sample {
            video,
            label: GlossSequence::new(tokens)?,
            split: split_of(i, config.sentences),
            seed,
            spans,
        });
    }
    Ok(Dataset { glosses, samples, resolution: config.resolution })
}

// ---------------------------------------------------------------------------
// Augmentation

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Resample the clip to a length drawn uniformly within ±20%.
    pub temporal_stretch: bool,
    /// Zero-pad this many pixels per side, then crop back at a random
    /// offset. 0 disables the crop.
    pub crop_pad: usize,
    /// Mirror horizontally with probability 0.5. Off by default: flipping
    /// swaps the opposite-motion classes without touching the label.
    pub flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { temporal_stretch: true, crop_pad: 2, flip: false }
    }
}

/// Resamples to `frames` by uniform index duplication or deletion.
pub fn temporal_resample<E: Scalar>(video: &Tensor<E>, frames: usize) -> Result<Tensor<E>> {
    video.expect_rank(4, "video")?;
    let t = video.shape()[0];
    if frames == 0 || t == 0 {
        return Err(Error::shape("cannot resample an empty clip"));
    }
    let stride: usize = video.shape()[1..].iter().product();
    let mut out = Vec::with_capacity(frames * stride);
    for j in 0..frames {
        let src = j * t / frames;
        out.extend_from_slice(&video.data()[src * stride..(src + 1) * stride]);
    }
    let mut shape = video.shape().to_vec();
    shape[0] = frames;
    Tensor::new(&shape, out)
}

/// Crops `target`-sized frames at a uniformly random offset; the input must
/// be at least as large.
pub fn random_crop<E: Scalar>(
    video: &Tensor<E>,
    target: (usize, usize),
    rng: &mut impl Rng,
) -> Result<Tensor<E>> {
    video.expect_rank(4, "video")?;
    let (t, c, h, w) = (video.shape()[0], video.shape()[1], video.shape()[2], video.shape()[3]);
    if target.0 > h || target.1 > w || target.0 == 0 || target.1 == 0 {
        return Err(Error::shape(format!(
            "cannot crop {}x{} from a {h}x{w} frame",
            target.0, target.1
        )));
    }
    let oy = rng.gen_range(0..=h - target.0);
    let ox = rng.gen_range(0..=w - target.1);
    let mut out = Vec::with_capacity(t * c * target.0 * target.1);
    for tc in 0..t * c {
        let plane = &video.data()[tc * h * w..(tc + 1) * h * w];
        for y in 0..target.0 {
            let row = (oy + y) * w + ox;
            out.extend_from_slice(&plane[row..row + target.1]);
        }
    }
    Tensor::new(&[t, c, target.0, target.1], out)
}

/// Zero-pads by `pad` per side, then crops back to the original size at a
/// random offset.
pub fn padded_crop<E: Scalar>(
    video: &Tensor<E>,
    pad: usize,
    rng: &mut impl Rng,
) -> Result<Tensor<E>> {
    if pad == 0 {
        return Ok(video.clone());
    }
    video.expect_rank(4, "video")?;
    let (t, c, h, w) = (video.shape()[0], video.shape()[1], video.shape()[2], video.shape()[3]);
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut padded = vec![E::zero(); t * c * ph * pw];
    for tc in 0..t * c {
        for y in 0..h {
            let src = tc * h * w + y * w;
            let dst = tc * ph * pw + (y + pad) * pw + pad;
            padded[dst..dst + w].copy_from_slice(&video.data()[src..src + w]);
        }
    }
    let padded = Tensor::new(&[t, c, ph, pw], padded)?;
    random_crop(&padded, (h, w), rng)
}

/// Crops `target`-sized frames from the middle; evaluation uses this in
/// place of the random crop.
pub fn center_crop<E: Scalar>(video: &Tensor<E>, target: (usize, usize)) -> Result<Tensor<E>> {
    video.expect_rank(4, "video")?;
    let (t, c, h, w) = (video.shape()[0], video.shape()[1], video.shape()[2], video.shape()[3]);
    if target.0 > h || target.1 > w || target.0 == 0 || target.1 == 0 {
        return Err(Error::shape(format!(
            "cannot crop {}x{} from a {h}x{w} frame",
            target.0, target.1
        )));
    }
    if target == (h, w) {
        return Ok(video.clone());
    }
    let oy = (h - target.0) / 2;
    let ox = (w - target.1) / 2;
    let mut out = Vec::with_capacity(t * c * target.0 * target.1);
    for tc in 0..t * c {
        let plane = &video.data()[tc * h * w..(tc + 1) * h * w];
        for y in 0..target.0 {
            let row = (oy + y) * w + ox;
            out.extend_from_slice(&plane[row..row + target.1]);
        }
    }
    Tensor::new(&[t, c, target.0, target.1], out)
}

/// Mirrors every frame left-to-right.
pub fn hflip<E: Scalar>(video: &Tensor<E>) -> Result<Tensor<E>> {
    video.expect_rank(4, "video")?;
    let w = video.shape()[3];
    let mut out = video.data().to_vec();
    for row in out.chunks_mut(w) {
        row.reverse();
    }
    Tensor::new(video.shape(), out)
}

/// Applies the configured augmentations; the label is never rewritten.
pub fn augment<E: Scalar>(
    sample: &Sample<E>,
    config: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<Sample<E>> {
    let mut video = sample.video.clone();
    if config.temporal_stretch {
        let t = video.shape()[0];
        let lo = (t * 8).div_ceil(10);
        let hi = t * 12 / 10;
        let frames = rng.gen_range(lo..=hi.max(lo));
        video = temporal_resample(&video, frames)?;
    }
    if config.crop_pad > 0 {
        video = padded_crop(&video, config.crop_pad, rng)?;
    }
    if config.flip && rng.gen_bool(0.5) {
        video = hflip(&video)?;
    }
    Ok(Sample {
        video,
        label: sample.label.clone(),
        split: sample.split,
        seed: sample.seed,
        spans: sample.spans.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> DataConfig {
        DataConfig { sentences: 20, seed: 42, ..DataConfig::default() }
    }

    #[test]
    fn vocabulary_is_pair_adjacent_and_validated() {
        let v = vocabulary(8).unwrap();
        assert_eq!(v.len(), 8);
        for pair in v.chunks(2) {
            assert_eq!(pair[0].shape, pair[1].shape);
            assert_eq!(pair[0].direction.0, -pair[1].direction.0);
            assert_eq!(pair[0].direction.1, -pair[1].direction.1);
        }
        let names: alloc::collections::BTreeSet<_> = v.iter().map(|g| g.name.clone()).collect();
        assert_eq!(names.len(), 8);
        assert_eq!(v[3].id, 4);
        assert!(vocabulary(7).is_err());
        assert!(vocabulary(2).is_err());
        assert!(vocabulary(18).is_err());
        assert_eq!(vocabulary(16).unwrap().len(), 16);
    }

    #[test]
    fn generation_is_deterministic_for_a_seed() {
        let a: Dataset<f32> = generate(&small_config()).unwrap();
        let b: Dataset<f32> = generate(&small_config()).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.label.tokens(), y.label.tokens());
            assert_eq!(x.video.data(), y.video.data());
            assert_eq!(x.spans, y.spans);
        }
        let c: Dataset<f32> =
            generate(&DataConfig { seed: 43, ..small_config() }).unwrap();
        assert!(a.samples.iter().zip(&c.samples).any(|(x, y)| x.video.data() != y.video.data()));
    }

    #[test]
    fn split_sizes_and_coverage_hold() {
        let cfg = DataConfig { sentences: 200, ..DataConfig::default() };
        let ds: Dataset<f32> = generate(&cfg).unwrap();
        assert_eq!(ds.samples.len(), 200);
        assert_eq!(ds.split(Split::Train).count(), 160);
        assert_eq!(ds.split(Split::Dev).count(), 20);
        assert_eq!(ds.split(Split::Test).count(), 20);
        let mut seen = vec![false; cfg.vocab + 1];
        for s in ds.split(Split::Train) {
            for &tok in s.label.tokens() {
                seen[tok] = true;
            }
        }
        assert!(seen[1..].iter().all(|&s| s), "every gloss must appear in train");
    }

    #[test]
    fn sentences_have_expected_shape() {
        let ds: Dataset<f32> = generate(&small_config()).unwrap();
        for s in &ds.samples {
            let len = s.label.len();
            assert!((2..=5).contains(&len));
            assert_eq!(s.spans.len(), len);
            let gloss_frames: usize = s.spans.iter().map(|(a, b)| b - a).sum();
            let t = s.video.shape()[0];
            let transitions = t - gloss_frames;
            assert!(transitions >= len - 1 && transitions <= 2 * (len - 1));
            assert_eq!(&s.video.shape()[1..], &[3, 32, 32]);
            assert!(s.video.data().iter().all(|v| (0.0f32..=1.0).contains(v)));
        }
    }

    #[test]
    fn opposite_pair_is_bitwise_time_reversed() {
        let v = vocabulary(8).unwrap();
        let (east, west) = (&v[0], &v[1]);
        let res = 32;
        let d = 10;
        let ve = velocity(east, res);
        let start = (9.5, 14.25);
        let end = (start.0 + ve.0 * (d - 1) as f64, start.1 + ve.1 * (d - 1) as f64);
        let fwd: Vec<f32> = render_gloss(east, start, d, res);
        let bwd: Vec<f32> = render_gloss(west, end, d, res);
        let frame = 3 * res * res;
        for t in 0..d {
            let a = &fwd[t * frame..(t + 1) * frame];
            let b = &bwd[(d - 1 - t) * frame..(d - t) * frame];
            assert_eq!(a, b, "frame {t} must match its reversed counterpart exactly");
        }
        // the histogram form of the same property
        let hist = |frame: &[f32]| {
            let mut h = alloc::collections::BTreeMap::new();
            for &v in frame {
                *h.entry(v.to_bits()).or_insert(0usize) += 1;
            }
            h
        };
        for t in 0..d {
            assert_eq!(
                hist(&fwd[t * frame..(t + 1) * frame]),
                hist(&bwd[(d - 1 - t) * frame..(d - t) * frame])
            );
        }
    }

    #[test]
    fn flip_maps_a_gloss_onto_its_mirror() {
        let v = vocabulary(8).unwrap();
        let (east, west) = (&v[0], &v[1]);
        let res = 32;
        let d = 8;
        let start = (10.0, 16.0);
        let fwd: Vec<f64> = render_gloss(east, start, d, res);
        // mirror of x is (res - 1) - x, and west's velocity is exactly -ve
        let mirrored_start = ((res - 1) as f64 - start.0, start.1);
        let wst: Vec<f64> = render_gloss(west, mirrored_start, d, res);
        let video = Tensor::new(&[d, 3, res, res], fwd).unwrap();
        assert_eq!(hflip(&video).unwrap().data(), wst.as_slice());
    }

    #[test]
    fn stretch_stays_within_twenty_percent() {
        let video: Tensor<f32> = Tensor::zeros(&[100, 3, 4, 4]);
        let sample = Sample {
            video,
            label: GlossSequence::new(vec![1, 2]).unwrap(),
            split: Split::Train,
            seed: 0,
            spans: vec![(0, 50), (50, 100)],
        };
        let cfg = AugmentConfig { temporal_stretch: true, crop_pad: 0, flip: false };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut seen = alloc::collections::BTreeSet::new();
        for _ in 0..50 {
            let out = augment(&sample, &cfg, &mut rng).unwrap();
            let t = out.video.shape()[0];
            assert!((80..=120).contains(&t));
            assert_eq!(out.label.tokens(), sample.label.tokens());
            seen.insert(t);
        }
        assert!(seen.len() > 10, "the stretch range should actually be explored");
    }

    #[test]
    fn identity_augmentation_is_exact() {
        let ds: Dataset<f64> = generate(&small_config()).unwrap();
        let cfg = AugmentConfig { temporal_stretch: false, crop_pad: 0, flip: false };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment(&ds.samples[0], &cfg, &mut rng).unwrap();
        assert_eq!(out.video.data(), ds.samples[0].video.data());
        let same = temporal_resample(&ds.samples[0].video, ds.samples[0].video.shape()[0]).unwrap();
        assert_eq!(same.data(), ds.samples[0].video.data());
    }

    #[test]
    fn crop_from_larger_canvas_hits_the_target_size() {
        let video: Tensor<f32> = Tensor::zeros(&[1, 3, 256, 256]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = random_crop(&video, (224, 224), &mut rng).unwrap();
        assert_eq!(out.shape(), &[1, 3, 224, 224]);
        assert!(random_crop(&video, (300, 224), &mut rng).is_err());
    }

    #[test]
    fn center_crop_takes_the_middle() {
        let mut video: Tensor<f64> = Tensor::zeros(&[1, 1, 6, 6]);
        for (i, v) in video.data_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        let out = center_crop(&video, (2, 2)).unwrap();
        // rows 2..4, cols 2..4 of the 6x6 index grid
        assert_eq!(out.data(), &[14.0, 15.0, 20.0, 21.0]);
        let same = center_crop(&video, (6, 6)).unwrap();
        assert_eq!(same.data(), video.data());
        assert!(center_crop(&video, (7, 6)).is_err());
    }

    #[test]
    fn padded_crop_preserves_shape_and_content_set() {
        let mut video: Tensor<f64> = Tensor::zeros(&[2, 3, 32, 32]);
        video.data_mut()[5 * 32 + 7] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = padded_crop(&video, 2, &mut rng).unwrap();
        assert_eq!(out.shape(), video.shape());
    }

    #[test]
    fn tiny_resolution_is_rejected() {
        let cfg = DataConfig { resolution: 8, ..small_config() };
        assert!(generate::<f32>(&cfg).is_err());
    }
}
