//! Central finite-difference checks for every differentiable operation.
//! Each case reduces the operation output to a scalar through a fixed random
//! weighting (`sum(out * w)`), so every output position contributes to the
//! loss with a distinct coefficient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tscm_core::{GlossSequence, Tape, ValueId};

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Values bounded away from the relu kink so the finite-difference step
/// cannot cross it.
fn rand_vec_off_kink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Pairwise-distinct values with gaps of at least 2e-3, so max-pooling's
/// argmax cannot flip under the finite-difference step.
fn rand_vec_distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    assert!(n < 900);
    let mut picked: Vec<i64> = Vec::with_capacity(n);
    while picked.len() < n {
        let v = rng.gen_range(-500..500);
        if !picked.contains(&v) {
            picked.push(v);
        }
    }
    picked.iter().map(|v| *v as f64 / 500.0).collect()
}

type Build = dyn Fn(&mut Tape<f64>, &[ValueId]) -> ValueId;

/// Compares backward-pass gradients against central differences for every
/// element of every input.
fn check_gradients(inputs: &[(Vec<usize>, Vec<f64>)], build: &Build, what: &str) {
    let mut tape = Tape::new();
    let ids: Vec<ValueId> = inputs
        .iter()
        .map(|(s, d)| tape.leaf_from(s, d.clone(), true).unwrap())
        .collect();
    let loss = build(&mut tape, &ids);
    assert_eq!(tape.value(loss).len(), 1, "{what}: loss must be scalar");
    tape.backward(loss).unwrap();
    let grads: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| {
            tape.grad(*id)
                .unwrap_or_else(|| panic!("{what}: missing gradient"))
                .to_vec()
        })
        .collect();

    let eval = |datas: &[Vec<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<ValueId> = inputs
            .iter()
            .zip(datas)
            .map(|((s, _), d)| tape.leaf_from(s, d.clone(), false).unwrap())
            .collect();
        let loss = build(&mut tape, &ids);
        tape.value(loss)[0]
    };

    for (i, (_, data)) in inputs.iter().enumerate() {
        for j in 0..data.len() {
            let mut datas: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
            datas[i][j] = data[j] + STEP;
            let up = eval(&datas);
            datas[i][j] = data[j] - STEP;
            let down = eval(&datas);
            let fd = (up - down) / (2.0 * STEP);
            let analytic = grads[i][j];
            let denom = analytic.abs().max(fd.abs()).max(1.0);
            assert!(
                (analytic - fd).abs() / denom < REL_TOL,
                "{what}: input {i} element {j}: analytic {analytic} vs finite difference {fd}"
            );
        }
    }
}

/// Weighted-sum reduction appended after `out`, with the weights fixed by
/// the caller and excluded from differentiation.
fn weighted(tape: &mut Tape<f64>, out: ValueId, weights: &[f64]) -> ValueId {
    let shape = tape.shape(out).to_vec();
    let w = tape.leaf_from(&shape, weights.to_vec(), false).unwrap();
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod)
}

#[test]
fn conv2d_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, cin, cout) = (rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=2));
        let (h, w) = (rng.gen_range(3..=5), rng.gen_range(3..=5));
        let k = [1, 3][rng.gen_range(0..2)];
        let (s, p) = (rng.gen_range(1..=2), rng.gen_range(0..=1));
        let xv = rand_vec(&mut rng, t * cin * h * w);
        let wv = rand_vec(&mut rng, cout * cin * k * k);
        let mut probe = Tape::new();
        let px = probe.leaf_from(&[t, cin, h, w], xv.clone(), false).unwrap();
        let pw = probe.leaf_from(&[cout, cin, k, k], wv.clone(), false).unwrap();
        let pout = match probe.conv2d(px, pw, s, p) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let wr = rand_vec(&mut rng, probe.value(pout).len());
        check_gradients(
            &[(vec![t, cin, h, w], xv), (vec![cout, cin, k, k], wv)],
            &move |tape, ids| {
                let y = tape.conv2d(ids[0], ids[1], s, p).unwrap();
                weighted(tape, y, &wr)
            },
            "conv2d",
        );
    }
}

#[test]
fn temporal_conv_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (t, cin, cout) = (rng.gen_range(3..=5), rng.gen_range(1..=2), rng.gen_range(1..=2));
        let (h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (s, p) = (rng.gen_range(1..=2), rng.gen_range(0..=1));
        let xv = rand_vec(&mut rng, t * cin * h * w);
        let wv = rand_vec(&mut rng, cout * cin * 3);
        let mut probe = Tape::new();
        let px = probe.leaf_from(&[t, cin, h, w], xv.clone(), false).unwrap();
        let pw = probe.leaf_from(&[cout, cin, 3], wv.clone(), false).unwrap();
        let pout = match probe.conv1d_temporal(px, pw, s, p) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let wr = rand_vec(&mut rng, probe.value(pout).len());
        check_gradients(
            &[(vec![t, cin, h, w], xv), (vec![cout, cin, 3], wv)],
            &move |tape, ids| {
                let y = tape.conv1d_temporal(ids[0], ids[1], s, p).unwrap();
                weighted(tape, y, &wr)
            },
            "conv1d_temporal",
        );
    }
}

#[test]
fn conv3d_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (t, cin, cout) = (rng.gen_range(2..=3), 1, rng.gen_range(1..=2));
        let (h, w) = (rng.gen_range(3..=4), rng.gen_range(3..=4));
        let ss = rng.gen_range(1..=2);
        let xv = rand_vec(&mut rng, t * cin * h * w);
        let wv = rand_vec(&mut rng, cout * cin * 27);
        let mut probe = Tape::new();
        let px = probe.leaf_from(&[t, cin, h, w], xv.clone(), false).unwrap();
        let pw = probe.leaf_from(&[cout, cin, 3, 3, 3], wv.clone(), false).unwrap();
        let pout = probe.conv3d(px, pw, 1, ss, 1, 1).unwrap();
        let wr = rand_vec(&mut rng, probe.value(pout).len());
        check_gradients(
            &[(vec![t, cin, h, w], xv), (vec![cout, cin, 3, 3, 3], wv)],
            &move |tape, ids| {
                let y = tape.conv3d(ids[0], ids[1], 1, ss, 1, 1).unwrap();
                weighted(tape, y, &wr)
            },
            "conv3d",
        );
    }
}

#[test]
fn elementwise_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let n = rng.gen_range(2..=6);
        let av = rand_vec_off_kink(&mut rng, n);
        let bv = rand_vec(&mut rng, n);
        let wr = rand_vec(&mut rng, n);
        check_gradients(
            &[(vec![n], av.clone()), (vec![n], bv.clone())],
            &move |tape, ids| {
                let r = tape.relu(ids[0]);
                let sum = tape.add(r, ids[1]).unwrap();
                let scaled = tape.scale(sum, 1.7);
                let prod = tape.mul(scaled, ids[1]).unwrap();
                weighted(tape, prod, &wr)
            },
            "relu/add/scale/mul",
        );
    }
}

#[test]
fn detach_blocks_gradient_flow() {
    let mut tape = Tape::new();
    let x = tape.leaf_from(&[3], vec![1.0, -2.0, 3.0], true).unwrap();
    let d = tape.detach(x);
    let y = tape.leaf_from(&[3], vec![0.5, 0.5, 0.5], true).unwrap();
    let s = tape.add(d, y).unwrap();
    let loss = tape.sum(s);
    tape.backward(loss).unwrap();
    assert!(tape.grad(x).is_none(), "detach must sever the input");
    assert_eq!(tape.grad(y).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn maxpool_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let (t, c) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let (h, w) = (rng.gen_range(4..=6), rng.gen_range(4..=6));
        let (k, s, p) = if rng.gen_bool(0.5) { (3, 2, 1) } else { (2, 2, 0) };
        let xv = rand_vec_distinct(&mut rng, t * c * h * w);
        let mut probe = Tape::new();
        let px = probe.leaf_from(&[t, c, h, w], xv.clone(), false).unwrap();
        let pout = probe.maxpool2d(px, k, s, p).unwrap();
        let wr = rand_vec(&mut rng, probe.value(pout).len());
        check_gradients(
            &[(vec![t, c, h, w], xv)],
            &move |tape, ids| {
                let y = tape.maxpool2d(ids[0], k, s, p).unwrap();
                weighted(tape, y, &wr)
            },
            "maxpool2d",
        );
    }
}

#[test]
fn temporal_maxpool_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (t, c) = (rng.gen_range(2..=6), rng.gen_range(1..=2));
        let (h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let xv = rand_vec_distinct(&mut rng, t * c * h * w);
        let ot = (t - 2) / 2 + 1;
        let wr = rand_vec(&mut rng, ot * c * h * w);
        check_gradients(
            &[(vec![t, c, h, w], xv)],
            &move |tape, ids| {
                let y = tape.maxpool1d_temporal(ids[0], 2, 2).unwrap();
                weighted(tape, y, &wr)
            },
            "maxpool1d_temporal",
        );
    }
}

#[test]
fn pooling_and_gather_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let (t, c) = (rng.gen_range(2..=4), rng.gen_range(1..=3));
        let (h, w) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let offsets: Vec<i32> = (0..c).map(|_| rng.gen_range(-2..=2)).collect();
        let xv = rand_vec(&mut rng, t * c * h * w);
        let wr = rand_vec(&mut rng, t * c);
        let offs = offsets.clone();
        check_gradients(
            &[(vec![t, c, h, w], xv)],
            &move |tape, ids| {
                let g = tape.temporal_gather(ids[0], &offs).unwrap();
                let y = tape.global_avgpool_spatial(g).unwrap();
                weighted(tape, y, &wr)
            },
            "temporal_gather + global_avgpool_spatial",
        );
    }
}

#[test]
fn linear_and_log_softmax_gradients() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let (rows, i, o) = (rng.gen_range(1..=3), rng.gen_range(2..=4), rng.gen_range(2..=4));
        let xv = rand_vec(&mut rng, rows * i);
        let wv = rand_vec(&mut rng, o * i);
        let bv = rand_vec(&mut rng, o);
        let wr = rand_vec(&mut rng, rows * o);
        check_gradients(
            &[(vec![rows, i], xv), (vec![o, i], wv), (vec![o], bv)],
            &move |tape, ids| {
                let lin = tape.linear(ids[0], ids[1], Some(ids[2])).unwrap();
                let y = tape.log_softmax(lin).unwrap();
                weighted(tape, y, &wr)
            },
            "linear + log_softmax",
        );
    }
}

#[test]
fn channel_norm_gradients_batch_statistics() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let (t, c) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (h, w) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let xv = rand_vec(&mut rng, t * c * h * w);
        let gv = rand_vec(&mut rng, c);
        let bv = rand_vec(&mut rng, c);
        let wr = rand_vec(&mut rng, t * c * h * w);
        check_gradients(
            &[(vec![t, c, h, w], xv), (vec![c], gv), (vec![c], bv)],
            &move |tape, ids| {
                let (y, _) = tape.channel_norm(ids[0], ids[1], ids[2], 1e-5, None).unwrap();
                weighted(tape, y, &wr)
            },
            "channel_norm (batch statistics)",
        );
    }
}

#[test]
fn channel_norm_gradients_running_statistics() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let (t, c) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let (h, w) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let xv = rand_vec(&mut rng, t * c * h * w);
        let gv = rand_vec(&mut rng, c);
        let bv = rand_vec(&mut rng, c);
        let rm = rand_vec(&mut rng, c);
        let rv: Vec<f64> = rand_vec(&mut rng, c).iter().map(|v| v.abs() + 0.2).collect();
        let wr = rand_vec(&mut rng, t * c * h * w);
        check_gradients(
            &[(vec![t, c, h, w], xv), (vec![c], gv), (vec![c], bv)],
            &move |tape, ids| {
                let (y, _) = tape
                    .channel_norm(ids[0], ids[1], ids[2], 1e-5, Some((&rm, &rv)))
                    .unwrap();
                weighted(tape, y, &wr)
            },
            "channel_norm (running statistics)",
        );
    }
}

#[test]
fn ctc_loss_gradients_on_raw_scores() {
    // the stored gradient is exact even when rows are not normalized, so the
    // check runs directly on free leaf values
    let labels: [&[usize]; 4] = [&[1], &[1, 2], &[2, 1], &[1, 1]];
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let tokens = labels[seed as usize % labels.len()].to_vec();
        let label = GlossSequence::new(tokens).unwrap();
        let (t, v) = (rng.gen_range(4..=6), 3);
        let xv = rand_vec(&mut rng, t * v);
        let lab = label.clone();
        check_gradients(
            &[(vec![t, v], xv)],
            &move |tape, ids| tape.ctc_loss(ids[0], &lab).unwrap().0,
            "ctc_loss (raw scores)",
        );
    }
}

#[test]
fn ctc_loss_gradients_through_log_softmax() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + seed);
        let label = GlossSequence::new(vec![rng.gen_range(1..=2), rng.gen_range(1..=2)]).unwrap();
        let (t, v) = (rng.gen_range(5..=6), 3);
        let xv = rand_vec(&mut rng, t * v);
        let lab = label.clone();
        check_gradients(
            &[(vec![t, v], xv)],
            &move |tape, ids| {
                let lp = tape.log_softmax(ids[0]).unwrap();
                tape.ctc_loss(lp, &lab).unwrap().0
            },
            "log_softmax + ctc_loss",
        );
    }
}

#[test]
fn composite_network_gradients() {
    // stem conv -> norm -> relu -> shift -> pool -> head -> loss, checked
    // over every parameter leaf at once
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(1200 + seed);
        let (t, cin, cmid, h, w) = (4, 1, 2, 5, 5);
        let vocab = 2;
        let xv = rand_vec(&mut rng, t * cin * h * w);
        let cv = rand_vec(&mut rng, cmid * cin * 9);
        let gv = vec![rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5)];
        let bv = rand_vec(&mut rng, cmid);
        let lw = rand_vec(&mut rng, (vocab + 1) * cmid);
        let lb = rand_vec(&mut rng, vocab + 1);
        let label = GlossSequence::new(vec![1]).unwrap();
        let lab = label.clone();
        check_gradients(
            &[
                (vec![t, cin, h, w], xv),
                (vec![cmid, cin, 3, 3], cv),
                (vec![cmid], gv),
                (vec![cmid], bv),
                (vec![vocab + 1, cmid], lw),
                (vec![vocab + 1], lb),
            ],
            &move |tape, ids| {
                let conv = tape.conv2d(ids[0], ids[1], 1, 1).unwrap();
                let (norm, _) = tape.channel_norm(conv, ids[2], ids[3], 1e-5, None).unwrap();
                let act = tape.relu(norm);
                let shifted = tape.temporal_gather(act, &[-1, 1]).unwrap();
                let pooled = tape.maxpool1d_temporal(shifted, 2, 2).unwrap();
                let feat = tape.global_avgpool_spatial(pooled).unwrap();
                let logits = tape.linear(feat, ids[4], Some(ids[5])).unwrap();
                let lp = tape.log_softmax(logits).unwrap();
                tape.ctc_loss(lp, &lab).unwrap().0
            },
            "composite network",
        );
    }
}
