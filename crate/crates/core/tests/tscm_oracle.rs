//! Shift-module oracles: an independent per-element reference for the
//! channel-wise temporal remap, adjoint and inversion invariants over
//! randomized inputs, and the frozen offset tables for every mode.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tscm_core::tscm::{apply, apply_backward};
use tscm_core::{ChannelOffsetMap, ShiftMode, Tape, Tensor, TscmSpec};

fn spec(mode: ShiftMode, span: usize, seed: u64) -> TscmSpec {
    TscmSpec {
        mode,
        span,
        seed,
        ..TscmSpec::default()
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Element-at-a-time reference: each output position independently resolves
/// its source frame and reads it, with no slice copies involved.
fn shift_reference(x: &Tensor<f64>, offsets: &[i32]) -> Tensor<f64> {
    let (t, c, h, w) = match x.shape() {
        [t, c, h, w] => (*t, *c, *h, *w),
        _ => panic!("reference expects rank 4"),
    };
    let xv = x.data();
    let mut out = vec![0.0; xv.len()];
    for ti in 0..t {
        for ci in 0..c {
            for yi in 0..h {
                for xi in 0..w {
                    let src_t = ti as i64 + offsets[ci] as i64;
                    let value = if (0..t as i64).contains(&src_t) {
                        xv[((src_t as usize * c + ci) * h + yi) * w + xi]
                    } else {
                        0.0
                    };
                    out[((ti * c + ci) * h + yi) * w + xi] = value;
                }
            }
        }
    }
    Tensor::new(x.shape(), out).unwrap()
}

const MODES: [ShiftMode; 5] = [
    ShiftMode::Crossover,
    ShiftMode::Superposition,
    ShiftMode::RandomCrossover,
    ShiftMode::Tsm,
    ShiftMode::Identity,
];

#[test]
fn apply_is_bit_exact_against_the_elementwise_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..50 {
        let t = rng.gen_range(1..=8);
        let c = rng.gen_range(1..=16);
        let h = rng.gen_range(1..=4);
        let w = rng.gen_range(1..=4);
        let mode = MODES[case % MODES.len()];
        let span = [3, 5, 7][rng.gen_range(0..3)];
        let map = ChannelOffsetMap::new(&spec(mode, span, case as u64), c).unwrap();
        let x = rand_tensor(&mut rng, &[t, c, h, w]);
        let got = apply(&x, &map).unwrap();
        let want = shift_reference(&x, map.offsets());
        assert_eq!(got.shape(), x.shape());
        assert_eq!(got.data(), want.data(), "case {case}: {mode} span {span}");
    }
}

#[test]
fn hand_checked_shift_on_distinct_frames() {
    // frame t holds the constant t+1, three channels shifted -1 / 0 / +1
    let (t, c) = (4, 3);
    let data: Vec<f64> = (0..t)
        .flat_map(|ti| core::iter::repeat((ti + 1) as f64).take(c))
        .collect();
    let x = Tensor::new(&[t, c, 1, 1], data).unwrap();
    let map = ChannelOffsetMap::from_offsets(vec![-1, 0, 1]);
    let y = apply(&x, &map).unwrap();
    #[rustfmt::skip]
    let want = [
        0.0, 1.0, 2.0,
        1.0, 2.0, 3.0,
        2.0, 3.0, 4.0,
        3.0, 4.0, 0.0,
    ];
    assert_eq!(y.data(), &want);
}

#[test]
fn frozen_offset_tables_per_mode() {
    let table = |mode, span, channels| {
        ChannelOffsetMap::new(&spec(mode, span, 0), channels)
            .unwrap()
            .offsets()
            .to_vec()
    };
    assert_eq!(table(ShiftMode::Crossover, 3, 6), vec![-1, 0, 1, -1, 0, 1]);
    assert_eq!(
        table(ShiftMode::Crossover, 5, 7),
        vec![-2, -1, 0, 1, 2, 0, 0]
    );
    assert_eq!(
        table(ShiftMode::Superposition, 3, 6),
        vec![-1, -1, 0, 0, 1, 1]
    );
    assert_eq!(table(ShiftMode::Identity, 3, 5), vec![0; 5]);
    let tsm = table(ShiftMode::Tsm, 3, 8);
    assert_eq!(tsm, vec![-1, 1, 0, 0, 0, 0, 0, 0]);
    let residue: Vec<i32> = table(ShiftMode::Crossover, 3, 8)[6..].to_vec();
    assert_eq!(residue, vec![0, 0], "channels past the covered comb stay put");
}

#[test]
fn random_mode_is_frozen_by_seed() {
    let a = ChannelOffsetMap::new(&spec(ShiftMode::RandomCrossover, 5, 9), 32).unwrap();
    let b = ChannelOffsetMap::new(&spec(ShiftMode::RandomCrossover, 5, 9), 32).unwrap();
    let c = ChannelOffsetMap::new(&spec(ShiftMode::RandomCrossover, 5, 10), 32).unwrap();
    assert_eq!(a.offsets(), b.offsets());
    assert_ne!(a.offsets(), c.offsets());
    assert!(a.offsets().iter().all(|o| (-2..=2).contains(o)));
}

#[test]
fn tape_gather_agrees_with_the_module() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..20 {
        let (t, c, h, w) = (
            rng.gen_range(2..=6),
            rng.gen_range(1..=8),
            rng.gen_range(1..=3),
            rng.gen_range(1..=3),
        );
        let mode = MODES[case % MODES.len()];
        let map = ChannelOffsetMap::new(&spec(mode, 3, case as u64), c).unwrap();
        let x = rand_tensor(&mut rng, &[t, c, h, w]);
        let module = apply(&x, &map).unwrap();
        let mut tape = Tape::new();
        let leaf = tape.leaf(&x);
        let gathered = tape.temporal_gather(leaf, map.offsets()).unwrap();
        assert_eq!(tape.value(gathered), module.data());
    }
}

#[test]
fn span_wider_than_the_clip_zero_fills_shifted_channels() {
    let map = ChannelOffsetMap::from_offsets(vec![-4, 4]);
    let x = Tensor::new(&[2, 2, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = apply(&x, &map).unwrap();
    assert_eq!(y.data(), &[0.0, 0.0, 0.0, 0.0]);
}

proptest! {
    #[test]
    fn shift_matches_reference_everywhere(
        t in 1usize..=8,
        c in 1usize..=16,
        h in 1usize..=4,
        w in 1usize..=4,
        mode_index in 0usize..5,
        span_index in 0usize..3,
        seed in 0u64..1000,
    ) {
        let span = [3, 5, 7][span_index];
        let map = ChannelOffsetMap::new(&spec(MODES[mode_index], span, seed), c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let x = rand_tensor(&mut rng, &[t, c, h, w]);
        let got = apply(&x, &map).unwrap();
        let want = shift_reference(&x, map.offsets());
        prop_assert_eq!(got.data(), want.data());
    }

    #[test]
    fn backward_is_the_adjoint_of_forward(
        t in 1usize..=6,
        c in 1usize..=8,
        h in 1usize..=3,
        w in 1usize..=3,
        mode_index in 0usize..5,
        seed in 0u64..1000,
    ) {
        let map = ChannelOffsetMap::new(&spec(MODES[mode_index], 3, seed), c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
        let x = rand_tensor(&mut rng, &[t, c, h, w]);
        let y = rand_tensor(&mut rng, &[t, c, h, w]);
        let fx = apply(&x, &map).unwrap();
        let bty = apply_backward(&y, &map).unwrap();
        let lhs: f64 = fx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(bty.data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12, "<Sx,y>={lhs} vs <x,S'y>={rhs}");
    }

    #[test]
    fn identity_mode_copies_the_input_bitwise(
        t in 1usize..=6,
        c in 1usize..=8,
        seed in 0u64..1000,
    ) {
        let map = ChannelOffsetMap::new(&spec(ShiftMode::Identity, 3, seed), c).unwrap();
        prop_assert!(map.is_identity());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[t, c, 2, 2]);
        let y = apply(&x, &map).unwrap();
        prop_assert_eq!(y.data(), x.data());
    }

    #[test]
    fn reversed_offsets_restore_interior_frames(
        t in 3usize..=8,
        c in 1usize..=8,
        mode_index in 0usize..5,
        seed in 0u64..1000,
    ) {
        let map = ChannelOffsetMap::new(&spec(MODES[mode_index], 3, seed), c).unwrap();
        let reversed = ChannelOffsetMap::from_offsets(
            map.offsets().iter().map(|o| -o).collect(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf00d);
        let x = rand_tensor(&mut rng, &[t, c, 2, 2]);
        let round = apply(&apply(&x, &map).unwrap(), &reversed).unwrap();
        let plane = 4;
        for ti in 0..t {
            for ci in 0..c {
                let back = ti as i64 - map.offsets()[ci] as i64;
                if back < 0 || back >= t as i64 {
                    continue;
                }
                let base = (ti * c + ci) * plane;
                prop_assert_eq!(
                    &round.data()[base..base + plane],
                    &x.data()[base..base + plane]
                );
            }
        }
    }

    #[test]
    fn offsets_stay_inside_the_span(
        c in 1usize..=32,
        mode_index in 0usize..5,
        span_index in 0usize..3,
        seed in 0u64..1000,
    ) {
        let span = [3, 5, 7][span_index];
        let half = ((span - 1) / 2) as i32;
        let map = ChannelOffsetMap::new(&spec(MODES[mode_index], span, seed), c).unwrap();
        prop_assert!(map.offsets().iter().all(|o| (-half..=half).contains(o)));
    }
}
