//! Scalar loop kernels behind the tape ops.
//!
//! Everything here works on raw row-major slices; shape validation happens in
//! the tape layer. Forward and backward pairs live next to each other so the
//! index arithmetic can be compared line by line.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;
use crate::tensor::Dims4;

#[inline]
fn in_range(i: isize, dim: usize) -> Option<usize> {
    if i >= 0 && (i as usize) < dim {
        Some(i as usize)
    } else {
        None
    }
}

pub fn conv_out_dim(dim: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = dim + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

// ---------------------------------------------------------------------------
// 2D convolution over each frame independently

pub struct Conv2dArgs {
    pub cout: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

pub fn conv2d_fwd<E: Scalar>(x: &[E], xd: Dims4, w: &[E], a: &Conv2dArgs, od: Dims4) -> Vec<E> {
    let mut out = vec![E::zero(); od.count()];
    let (s, p) = (a.stride as isize, a.pad as isize);
    for t in 0..xd.t {
        for co in 0..a.cout {
            for oh in 0..od.h {
                for ow in 0..od.w {
                    let mut acc = E::zero();
                    for ci in 0..a.cin {
                        for dh in 0..a.kh {
                            let ih = match in_range(oh as isize * s + dh as isize - p, xd.h) {
                                Some(v) => v,
                                None => continue,
                            };
                            let xrow = &x[xd.idx(t, ci, ih, 0)..xd.idx(t, ci, ih, 0) + xd.w];
                            let wrow = &w[((co * a.cin + ci) * a.kh + dh) * a.kw..][..a.kw];
                            for dw in 0..a.kw {
                                if let Some(iw) =
                                    in_range(ow as isize * s + dw as isize - p, xd.w)
                                {
                                    acc = acc + wrow[dw] * xrow[iw];
                                }
                            }
                        }
                    }
                    out[od.idx(t, co, oh, ow)] = acc;
                }
            }
        }
    }
    out
}

pub fn conv2d_bwd<E: Scalar>(
    x: &[E],
    xd: Dims4,
    w: &[E],
    a: &Conv2dArgs,
    od: Dims4,
    gy: &[E],
    gx: Option<&mut Vec<E>>,
    gw: Option<&mut Vec<E>>,
) {
    let (s, p) = (a.stride as isize, a.pad as isize);
    let mut gx = gx;
    let mut gw = gw;
    for t in 0..xd.t {
        for co in 0..a.cout {
            for oh in 0..od.h {
                for ow in 0..od.w {
                    let g = gy[od.idx(t, co, oh, ow)];
                    for ci in 0..a.cin {
                        for dh in 0..a.kh {
                            let ih = match in_range(oh as isize * s + dh as isize - p, xd.h) {
                                Some(v) => v,
                                None => continue,
                            };
                            let wbase = ((co * a.cin + ci) * a.kh + dh) * a.kw;
                            let xbase = xd.idx(t, ci, ih, 0);
                            for dw in 0..a.kw {
                                let iw = match in_range(ow as isize * s + dw as isize - p, xd.w)
                                {
                                    Some(v) => v,
                                    None => continue,
                                };
                                if let Some(gx) = gx.as_deref_mut() {
                                    gx[xbase + iw] = gx[xbase + iw] + g * w[wbase + dw];
                                }
                                if let Some(gw) = gw.as_deref_mut() {
                                    gw[wbase + dw] = gw[wbase + dw] + g * x[xbase + iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 1D convolution along the time axis

pub struct Conv1dArgs {
    pub cout: usize,
    pub cin: usize,
    pub kt: usize,
    pub stride: usize,
    pub pad: usize,
}

pub fn conv1d_temporal_fwd<E: Scalar>(
    x: &[E],
    xd: Dims4,
    w: &[E],
    a: &Conv1dArgs,
    od: Dims4,
) -> Vec<E> {
    let mut out = vec![E::zero(); od.count()];
    let plane = xd.h * xd.w;
    let (s, p) = (a.stride as isize, a.pad as isize);
    for ot in 0..od.t {
        for co in 0..a.cout {
            let obase = od.idx(ot, co, 0, 0);
            for ci in 0..a.cin {
                for dt in 0..a.kt {
                    let it = match in_range(ot as isize * s + dt as isize - p, xd.t) {
                        Some(v) => v,
                        None => continue,
                    };
                    let wv = w[(co * a.cin + ci) * a.kt + dt];
                    let xbase = xd.idx(it, ci, 0, 0);
                    for i in 0..plane {
                        out[obase + i] = out[obase + i] + wv * x[xbase + i];
                    }
                }
            }
        }
    }
    out
}

pub fn conv1d_temporal_bwd<E: Scalar>(
    x: &[E],
    xd: Dims4,
    w: &[E],
    a: &Conv1dArgs,
    od: Dims4,
    gy: &[E],
    gx: Option<&mut Vec<E>>,
    gw: Option<&mut Vec<E>>,
) {
    let plane = xd.h * xd.w;
    let (s, p) = (a.stride as isize, a.pad as isize);
    let mut gx = gx;
    let mut gw = gw;
    for ot in 0..od.t {
        for co in 0..a.cout {
            let obase = od.idx(ot, co, 0, 0);
            for ci in 0..a.cin {
                for dt in 0..a.kt {
                    let it = match in_range(ot as isize * s + dt as isize - p, xd.t) {
                        Some(v) => v,
                        None => continue,
                    };
                    let widx = (co * a.cin + ci) * a.kt + dt;
                    let xbase = xd.idx(it, ci, 0, 0);
                    if let Some(gx) = gx.as_deref_mut() {
                        let wv = w[widx];
                        for i in 0..plane {
                            gx[xbase + i] = gx[xbase + i] + wv * gy[obase + i];
                        }
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        let mut acc = E::zero();
                        for i in 0..plane {
                            acc = acc + gy[obase + i] * x[xbase + i];
                        }
                        gw[widx] = gw[widx] + acc;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Full 3D convolution

pub struct Conv3dArgs {
    pub cout: usize,
    pub cin: usize,
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride_t: usize,
    pub stride_s: usize,
    pub pad_t: usize,
    pub pad_s: usize,
}

pub fn conv3d_fwd<E: Scalar>(x: &[E], xd: Dims4, w: &[E], a: &Conv3dArgs, od: Dims4) -> Vec<E> {
    let mut out = vec![E::zero(); od.count()];
    let (st, ss) = (a.stride_t as isize, a.stride_s as isize);
    let (pt, ps) = (a.pad_t as isize, a.pad_s as isize);
    for ot in 0..od.t {
        for co in 0..a.cout {
            for oh in 0..od.h {
                for ow in 0..od.w {
                    let mut acc = E::zero();
                    for ci in 0..a.cin {
                        for dt in 0..a.kt {
                            let it = match in_range(ot as isize * st + dt as isize - pt, xd.t) {
                                Some(v) => v,
                                None => continue,
                            };
                            for dh in 0..a.kh {
                                let ih =
                                    match in_range(oh as isize * ss + dh as isize - ps, xd.h) {
                                        Some(v) => v,
                                        None => continue,
                                    };
                                let wbase =
                                    (((co * a.cin + ci) * a.kt + dt) * a.kh + dh) * a.kw;
                                let xbase = xd.idx(it, ci, ih, 0);
                                for dw in 0..a.kw {
                                    if let Some(iw) =
                                        in_range(ow as isize * ss + dw as isize - ps, xd.w)
                                    {
                                        acc = acc + w[wbase + dw] * x[xbase + iw];
                                    }
                                }
                            }
                        }
                    }
                    out[od.idx(ot, co, oh, ow)] = acc;
                }
            }
        }
    }
    out
}

pub fn conv3d_bwd<E: Scalar>(
    x: &[E],
    xd: Dims4,
    w: &[E],
    a: &Conv3dArgs,
    od: Dims4,
    gy: &[E],
    gx: Option<&mut Vec<E>>,
    gw: Option<&mut Vec<E>>,
) {
    let (st, ss) = (a.stride_t as isize, a.stride_s as isize);
    let (pt, ps) = (a.pad_t as isize, a.pad_s as isize);
    let mut gx = gx;
    let mut gw = gw;
    for ot in 0..od.t {
        for co in 0..a.cout {
            for oh in 0..od.h {
                for ow in 0..od.w {
                    let g = gy[od.idx(ot, co, oh, ow)];
                    for ci in 0..a.cin {
                        for dt in 0..a.kt {
                            let it = match in_range(ot as isize * st + dt as isize - pt, xd.t) {
                                Some(v) => v,
                                None => continue,
                            };
                            for dh in 0..a.kh {
                                let ih =
                                    match in_range(oh as isize * ss + dh as isize - ps, xd.h) {
                                        Some(v) => v,
                                        None => continue,
                                    };
                                let wbase =
                                    (((co * a.cin + ci) * a.kt + dt) * a.kh + dh) * a.kw;
                                let xbase = xd.idx(it, ci, ih, 0);
                                for dw in 0..a.kw {
                                    let iw = match in_range(
                                        ow as isize * ss + dw as isize - ps,
                                        xd.w,
                                    ) {
                                        Some(v) => v,
                                        None => continue,
                                    };
                                    if let Some(gx) = gx.as_deref_mut() {
                                        gx[xbase + iw] = gx[xbase + iw] + g * w[wbase + dw];
                                    }
                                    if let Some(gw) = gw.as_deref_mut() {
                                        gw[wbase + dw] = gw[wbase + dw] + g * x[xbase + iw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pooling

/// Spatial max pool; returns pooled values plus the flat input index of each
/// maximum for the backward scatter.
pub fn maxpool2d_fwd<E: Scalar>(
    x: &[E],
    xd: Dims4,
    k: usize,
    stride: usize,
    pad: usize,
    od: Dims4,
) -> (Vec<E>, Vec<u32>) {
    let mut out = vec![E::zero(); od.count()];
    let mut arg = vec![0u32; od.count()];
    let (s, p) = (stride as isize, pad as isize);
    for t in 0..xd.t {
        for c in 0..xd.c {
            for oh in 0..od.h {
                for ow in 0..od.w {
                    let mut best = E::neg_infinity();
                    let mut best_idx = 0usize;
                    for dh in 0..k {
                        let ih = match in_range(oh as isize * s + dh as isize - p, xd.h) {
                            Some(v) => v,
                            None => continue,
                        };
                        for dw in 0..k {
                            let iw = match in_range(ow as isize * s + dw as isize - p, xd.w) {
                                Some(v) => v,
                                None => continue,
                            };
                            let idx = xd.idx(t, c, ih, iw);
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[od.idx(t, c, oh, ow)] = best;
                    arg[od.idx(t, c, oh, ow)] = best_idx as u32;
                }
            }
        }
    }
    (out, arg)
}

/// Temporal max pool (no padding); same argmax bookkeeping as the spatial one.
pub fn maxpool1d_temporal_fwd<E: Scalar>(
    x: &[E],
    xd: Dims4,
    k: usize,
    stride: usize,
    od: Dims4,
) -> (Vec<E>, Vec<u32>) {
    let mut out = vec![E::zero(); od.count()];
    let mut arg = vec![0u32; od.count()];
    let plane = xd.c * xd.h * xd.w;
    for ot in 0..od.t {
        for i in 0..plane {
            let mut best = E::neg_infinity();
            let mut best_idx = 0usize;
            for dt in 0..k {
                let it = ot * stride + dt;
                if it >= xd.t {
                    continue;
                }
                let idx = it * plane + i;
                if x[idx] > best {
                    best = x[idx];
                    best_idx = idx;
                }
            }
            out[ot * plane + i] = best;
            arg[ot * plane + i] = best_idx as u32;
        }
    }
    (out, arg)
}

pub fn maxpool_bwd<E: Scalar>(arg: &[u32], gy: &[E], gx: &mut [E]) {
    for (o, &src) in arg.iter().enumerate() {
        gx[src as usize] = gx[src as usize] + gy[o];
    }
}

// ---------------------------------------------------------------------------
// Normalization

pub struct NormSaved<E> {
    pub mean: Vec<E>,
    pub rstd: Vec<E>,
}

/// Per-channel statistics over (T, H, W), biased variance.
pub fn channel_stats<E: Scalar>(x: &[E], xd: Dims4) -> (Vec<E>, Vec<E>) {
    let m = E::of_usize(xd.t * xd.h * xd.w);
    let plane = xd.h * xd.w;
    let mut mean = vec![E::zero(); xd.c];
    let mut var = vec![E::zero(); xd.c];
    for c in 0..xd.c {
        let mut sum = E::zero();
        let mut sumsq = E::zero();
        for t in 0..xd.t {
            let base = xd.idx(t, c, 0, 0);
            for i in 0..plane {
                let v = x[base + i];
                sum = sum + v;
                sumsq = sumsq + v * v;
            }
        }
        let mu = sum / m;
        mean[c] = mu;
        var[c] = (sumsq / m - mu * mu).max(E::zero());
    }
    (mean, var)
}

pub fn channel_norm_fwd<E: Scalar>(
    x: &[E],
    xd: Dims4,
    gamma: &[E],
    beta: &[E],
    mean: &[E],
    rstd: &[E],
) -> Vec<E> {
    let plane = xd.h * xd.w;
    let mut out = vec![E::zero(); xd.count()];
    for t in 0..xd.t {
        for c in 0..xd.c {
            let base = xd.idx(t, c, 0, 0);
            let (mu, rs, g, b) = (mean[c], rstd[c], gamma[c], beta[c]);
            for i in 0..plane {
                out[base + i] = g * ((x[base + i] - mu) * rs) + b;
            }
        }
    }
    out
}

/// Backward through normalization with batch statistics.
#[allow(clippy::too_many_arguments)]
pub fn channel_norm_bwd<E: Scalar>(
    x: &[E],
    xd: Dims4,
    gamma: &[E],
    saved: &NormSaved<E>,
    gy: &[E],
    gx: Option<&mut Vec<E>>,
    ggamma: Option<&mut Vec<E>>,
    gbeta: Option<&mut Vec<E>>,
    batch_stats: bool,
) {
    let plane = xd.h * xd.w;
    let m = E::of_usize(xd.t * xd.h * xd.w);
    let mut gx = gx;
    let mut ggamma = ggamma;
    let mut gbeta = gbeta;
    for c in 0..xd.c {
        let (mu, rs, g) = (saved.mean[c], saved.rstd[c], gamma[c]);
        let mut sum_gy = E::zero();
        let mut sum_gy_xhat = E::zero();
        for t in 0..xd.t {
            let base = xd.idx(t, c, 0, 0);
            for i in 0..plane {
                let xhat = (x[base + i] - mu) * rs;
                sum_gy = sum_gy + gy[base + i];
                sum_gy_xhat = sum_gy_xhat + gy[base + i] * xhat;
            }
        }
        if let Some(gg) = ggamma.as_deref_mut() {
            gg[c] = gg[c] + sum_gy_xhat;
        }
        if let Some(gb) = gbeta.as_deref_mut() {
            gb[c] = gb[c] + sum_gy;
        }
        if let Some(gx) = gx.as_deref_mut() {
            let mean_gy = sum_gy / m;
            let mean_gy_xhat = sum_gy_xhat / m;
            for t in 0..xd.t {
                let base = xd.idx(t, c, 0, 0);
                for i in 0..plane {
                    let xhat = (x[base + i] - mu) * rs;
                    let d = if batch_stats {
                        // d/dx of ((x - mu) * rstd) with mu, rstd functions of x
                        g * rs * (gy[base + i] - mean_gy - xhat * mean_gy_xhat)
                    } else {
                        g * rs * gy[base + i]
                    };
                    gx[base + i] = gx[base + i] + d;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Log-softmax over the last axis of a [rows, cols] matrix

pub fn log_softmax_fwd<E: Scalar>(x: &[E], rows: usize, cols: usize) -> Vec<E> {
    let mut out = vec![E::zero(); rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mut mx = E::neg_infinity();
        for &v in row {
            mx = mx.max(v);
        }
        let mut sum = E::zero();
        for &v in row {
            sum = sum + (v - mx).exp();
        }
        let lse = mx + sum.ln();
        for c in 0..cols {
            out[r * cols + c] = row[c] - lse;
        }
    }
    out
}

pub fn log_softmax_bwd<E: Scalar>(y: &[E], rows: usize, cols: usize, gy: &[E], gx: &mut [E]) {
    for r in 0..rows {
        let mut gsum = E::zero();
        for c in 0..cols {
            gsum = gsum + gy[r * cols + c];
        }
        for c in 0..cols {
            let i = r * cols + c;
            gx[i] = gx[i] + gy[i] - y[i].exp() * gsum;
        }
    }
}
