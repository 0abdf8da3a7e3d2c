//! Reverse-mode automatic differentiation over a flat operation tape.
//!
//! Every intermediate tensor lives in one [`Tape`] as a [`Node`]; ops append
//! nodes and record the indices of their inputs, so a node's inputs always
//! precede it. [`Tape::backward`] walks the tape once in reverse, computing
//! each node's input adjoints into temporaries and accumulating them into the
//! stored gradients.
//!
//! Values are identified by [`ValueId`]. The tape owns plain buffers only, so
//! it can be built, differentiated, and dropped per training step without any
//! shared-ownership bookkeeping.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, Conv1dArgs, Conv2dArgs, Conv3dArgs, NormSaved};
use crate::scalar::Scalar;
use crate::tensor::{Dims4, Tensor};

/// Index of a value on its tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(pub(crate) usize);

pub(crate) enum Op<E: Scalar> {
    Leaf,
    Relu {
        x: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    Scale {
        x: ValueId,
        factor: E,
    },
    Detach,
    Sum {
        x: ValueId,
    },
    Mul {
        a: ValueId,
        b: ValueId,
    },
    Conv2d {
        x: ValueId,
        w: ValueId,
        args: Conv2dArgs,
        xd: Dims4,
        od: Dims4,
    },
    Conv1dTemporal {
        x: ValueId,
        w: ValueId,
        args: Conv1dArgs,
        xd: Dims4,
        od: Dims4,
    },
    Conv3d {
        x: ValueId,
        w: ValueId,
        args: Conv3dArgs,
        xd: Dims4,
        od: Dims4,
    },
    MaxPool {
        x: ValueId,
        argmax: Vec<u32>,
    },
    GlobalAvgPoolSpatial {
        x: ValueId,
        xd: Dims4,
    },
    Linear {
        x: ValueId,
        w: ValueId,
        b: Option<ValueId>,
        rows: usize,
        in_dim: usize,
        out_dim: usize,
    },
    LogSoftmax {
        x: ValueId,
        rows: usize,
        cols: usize,
    },
    ChannelNorm {
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        xd: Dims4,
        saved: NormSaved<E>,
        batch_stats: bool,
    },
    TemporalGather {
        x: ValueId,
        xd: Dims4,
        offsets: Vec<i32>,
    },
    CtcLoss {
        x: ValueId,
        grad: Vec<E>,
    },
}

pub(crate) struct Node<E: Scalar> {
    shape: Vec<usize>,
    data: Vec<E>,
    grad: Option<Vec<E>>,
    requires_grad: bool,
    op: Op<E>,
}

/// Growable computation record; see the module docs.
pub struct Tape<E: Scalar> {
    nodes: Vec<Node<E>>,
}

impl<E: Scalar> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> Tape<E> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Copies a tensor onto the tape, keeping its `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor<E>) -> ValueId {
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Leaf,
            t.requires_grad,
        )
    }

    pub fn leaf_from(
        &mut self,
        shape: &[usize],
        data: Vec<E>,
        requires_grad: bool,
    ) -> Result<ValueId> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::shape(alloc::format!(
                "leaf data has {} elements, shape {} wants {}",
                data.len(),
                crate::tensor::shape_string(shape),
                count
            )));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad))
    }

    pub fn value(&self, id: ValueId) -> &[E] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: ValueId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn grad(&self, id: ValueId) -> Option<&[E]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn to_tensor(&self, id: ValueId) -> Tensor<E> {
        Tensor::new(&self.nodes[id.0].shape, self.nodes[id.0].data.clone())
            .expect("tape node shape is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<E>, op: Op<E>, requires_grad: bool) -> ValueId {
        #[cfg(debug_assertions)]
        {
            let allow_inf = matches!(op, Op::CtcLoss { .. });
            for &v in &data {
                debug_assert!(
                    v.is_finite() || (allow_inf && !v.is_nan()),
                    "non-finite value produced on the tape"
                );
            }
        }
        self.nodes.push(Node {
            shape,
            data,
            grad: None,
            requires_grad,
            op,
        });
        ValueId(self.nodes.len() - 1)
    }

    pub(crate) fn push_ctc(
        &mut self,
        x: ValueId,
        loss: E,
        grad: Vec<E>,
    ) -> ValueId {
        let requires_grad = self.nodes[x.0].requires_grad;
        self.push(Vec::new(), vec![loss], Op::CtcLoss { x, grad }, requires_grad)
    }

    fn requires(&self, id: ValueId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn dims4(&self, id: ValueId, what: &str) -> Result<Dims4> {
        Dims4::from_shape(self.shape(id)).map_err(|_| {
            Error::shape(alloc::format!(
                "{what} expects a [T, C, H, W] input, got {}",
                crate::tensor::shape_string(self.shape(id))
            ))
        })
    }

    fn rank2(&self, id: ValueId, what: &str) -> Result<(usize, usize)> {
        match self.shape(id) {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::shape(alloc::format!(
                "{what} expects a rank-2 input, got {}",
                crate::tensor::shape_string(other)
            ))),
        }
    }

    // -- elementwise ------------------------------------------------------

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let out: Vec<E> = self.nodes[x.0]
            .data
            .iter()
            .map(|&v| v.max(E::zero()))
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        let req = self.requires(x);
        self.push(shape, out, Op::Relu { x }, req)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(alloc::format!(
                "add shape mismatch: {} vs {}",
                crate::tensor::shape_string(self.shape(a)),
                crate::tensor::shape_string(self.shape(b))
            )));
        }
        let out: Vec<E> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&u, &v)| u + v)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(shape, out, Op::Add { a, b }, req))
    }

    pub fn scale(&mut self, x: ValueId, factor: E) -> ValueId {
        let out: Vec<E> = self.nodes[x.0].data.iter().map(|&v| v * factor).collect();
        let shape = self.nodes[x.0].shape.clone();
        let req = self.requires(x);
        self.push(shape, out, Op::Scale { x, factor }, req)
    }

    /// Copies the value but blocks gradient flow through it.
    pub fn detach(&mut self, x: ValueId) -> ValueId {
        let shape = self.nodes[x.0].shape.clone();
        let data = self.nodes[x.0].data.clone();
        self.push(shape, data, Op::Detach, false)
    }

    /// Reduces every element into a single-element value.
    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let mut acc = E::zero();
        for &v in &self.nodes[x.0].data {
            acc = acc + v;
        }
        let req = self.requires(x);
        self.push(vec![1], vec![acc], Op::Sum { x }, req)
    }

    /// Elementwise product of two same-shaped values.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::shape(alloc::format!(
                "mul shapes differ: {} vs {}",
                crate::tensor::shape_string(&self.nodes[a.0].shape),
                crate::tensor::shape_string(&self.nodes[b.0].shape)
            )));
        }
        let out: Vec<E> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(shape, out, Op::Mul { a, b }, req))
    }

    // -- convolutions -----------------------------------------------------

    pub fn conv2d(&mut self, x: ValueId, w: ValueId, stride: usize, pad: usize) -> Result<ValueId> {
        let xd = self.dims4(x, "conv2d")?;
        let (cout, cin, kh, kw) = match self.shape(w) {
            [co, ci, kh, kw] => (*co, *ci, *kh, *kw),
            other => {
                return Err(Error::shape(alloc::format!(
                    "conv2d weight must be [Cout, Cin, kh, kw], got {}",
                    crate::tensor::shape_string(other)
                )))
            }
        };
        if cin != xd.c {
            return Err(Error::shape(alloc::format!(
                "conv2d weight expects {cin} input channels, input has {}",
                xd.c
            )));
        }
        let oh = kernels::conv_out_dim(xd.h, kh, stride, pad);
        let ow = kernels::conv_out_dim(xd.w, kw, stride, pad);
        let (oh, ow) = match (oh, ow) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::shape(alloc::format!(
                    "conv2d kernel {kh}x{kw} does not fit input {}x{} with pad {pad}",
                    xd.h, xd.w
                )))
            }
        };
        let od = Dims4 { t: xd.t, c: cout, h: oh, w: ow };
        let args = Conv2dArgs { cout, cin, kh, kw, stride, pad };
        let out = kernels::conv2d_fwd(&self.nodes[x.0].data, xd, &self.nodes[w.0].data, &args, od);
        let req = self.requires(x) || self.requires(w);
        Ok(self.push(
            vec![od.t, od.c, od.h, od.w],
            out,
            Op::Conv2d { x, w, args, xd, od },
            req,
        ))
    }

    pub fn conv1d_temporal(
        &mut self,
        x: ValueId,
        w: ValueId,
        stride: usize,
        pad: usize,
    ) -> Result<ValueId> {
        let xd = self.dims4(x, "conv1d_temporal")?;
        let (cout, cin, kt) = match self.shape(w) {
            [co, ci, kt] => (*co, *ci, *kt),
            other => {
                return Err(Error::shape(alloc::format!(
                    "temporal conv weight must be [Cout, Cin, kt], got {}",
                    crate::tensor::shape_string(other)
                )))
            }
        };
        if cin != xd.c {
            return Err(Error::shape(alloc::format!(
                "temporal conv weight expects {cin} input channels, input has {}",
                xd.c
            )));
        }
        let ot = kernels::conv_out_dim(xd.t, kt, stride, pad).ok_or_else(|| {
            Error::shape(alloc::format!(
                "temporal kernel {kt} does not fit {} frames with pad {pad}",
                xd.t
            ))
        })?;
        let od = Dims4 { t: ot, c: cout, h: xd.h, w: xd.w };
        let args = Conv1dArgs { cout, cin, kt, stride, pad };
        let out =
            kernels::conv1d_temporal_fwd(&self.nodes[x.0].data, xd, &self.nodes[w.0].data, &args, od);
        let req = self.requires(x) || self.requires(w);
        Ok(self.push(
            vec![od.t, od.c, od.h, od.w],
            out,
            Op::Conv1dTemporal { x, w, args, xd, od },
            req,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv3d(
        &mut self,
        x: ValueId,
        w: ValueId,
        stride_t: usize,
        stride_s: usize,
        pad_t: usize,
        pad_s: usize,
    ) -> Result<ValueId> {
        let xd = self.dims4(x, "conv3d")?;
        let (cout, cin, kt, kh, kw) = match self.shape(w) {
            [co, ci, kt, kh, kw] => (*co, *ci, *kt, *kh, *kw),
            other => {
                return Err(Error::shape(alloc::format!(
                    "conv3d weight must be [Cout, Cin, kt, kh, kw], got {}",
                    crate::tensor::shape_string(other)
                )))
            }
        };
        if cin != xd.c {
            return Err(Error::shape(alloc::format!(
                "conv3d weight expects {cin} input channels, input has {}",
                xd.c
            )));
        }
        let ot = kernels::conv_out_dim(xd.t, kt, stride_t, pad_t);
        let oh = kernels::conv_out_dim(xd.h, kh, stride_s, pad_s);
        let ow = kernels::conv_out_dim(xd.w, kw, stride_s, pad_s);
        let (ot, oh, ow) = match (ot, oh, ow) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::shape(alloc::format!(
                    "conv3d kernel {kt}x{kh}x{kw} does not fit input {}x{}x{}",
                    xd.t, xd.h, xd.w
                )))
            }
        };
        let od = Dims4 { t: ot, c: cout, h: oh, w: ow };
        let args = Conv3dArgs {
            cout,
            cin,
            kt,
            kh,
            kw,
            stride_t,
            stride_s,
            pad_t,
            pad_s,
        };
        let out = kernels::conv3d_fwd(&self.nodes[x.0].data, xd, &self.nodes[w.0].data, &args, od);
        let req = self.requires(x) || self.requires(w);
        Ok(self.push(
            vec![od.t, od.c, od.h, od.w],
            out,
            Op::Conv3d { x, w, args, xd, od },
            req,
        ))
    }

    // -- pooling ----------------------------------------------------------

    pub fn maxpool2d(&mut self, x: ValueId, k: usize, stride: usize, pad: usize) -> Result<ValueId> {
        let xd = self.dims4(x, "maxpool2d")?;
        if pad >= k {
            return Err(Error::config(alloc::format!(
                "maxpool2d pad {pad} must be smaller than window {k}"
            )));
        }
        let oh = kernels::conv_out_dim(xd.h, k, stride, pad);
        let ow = kernels::conv_out_dim(xd.w, k, stride, pad);
        let (oh, ow) = match (oh, ow) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::shape(alloc::format!(
                    "maxpool2d window {k} does not fit input {}x{}",
                    xd.h, xd.w
                )))
            }
        };
        let od = Dims4 { t: xd.t, c: xd.c, h: oh, w: ow };
        let (out, argmax) = kernels::maxpool2d_fwd(&self.nodes[x.0].data, xd, k, stride, pad, od);
        let req = self.requires(x);
        Ok(self.push(
            vec![od.t, od.c, od.h, od.w],
            out,
            Op::MaxPool { x, argmax },
            req,
        ))
    }

    pub fn maxpool1d_temporal(&mut self, x: ValueId, k: usize, stride: usize) -> Result<ValueId> {
        let xd = self.dims4(x, "maxpool1d_temporal")?;
        if k > xd.t {
            return Err(Error::shape(alloc::format!(
                "temporal pool window {k} larger than {} frames",
                xd.t
            )));
        }
        let ot = kernels::conv_out_dim(xd.t, k, stride, 0).ok_or_else(|| {
            Error::shape(alloc::format!(
                "temporal pool window {k} does not fit {} frames",
                xd.t
            ))
        })?;
        let od = Dims4 { t: ot, c: xd.c, h: xd.h, w: xd.w };
        let (out, argmax) = kernels::maxpool1d_temporal_fwd(&self.nodes[x.0].data, xd, k, stride, od);
        let req = self.requires(x);
        Ok(self.push(
            vec![od.t, od.c, od.h, od.w],
            out,
            Op::MaxPool { x, argmax },
            req,
        ))
    }

    /// Collapses H and W by averaging: `[T, C, H, W]` becomes `[T, C]`.
    pub fn global_avgpool_spatial(&mut self, x: ValueId) -> Result<ValueId> {
        let xd = self.dims4(x, "global_avgpool_spatial")?;
        let plane = xd.h * xd.w;
        let inv = E::one() / E::of_usize(plane);
        let data = &self.nodes[x.0].data;
        let mut out = vec![E::zero(); xd.t * xd.c];
        for t in 0..xd.t {
            for c in 0..xd.c {
                let base = xd.idx(t, c, 0, 0);
                let mut acc = E::zero();
                for i in 0..plane {
                    acc = acc + data[base + i];
                }
                out[t * xd.c + c] = acc * inv;
            }
        }
        let req = self.requires(x);
        Ok(self.push(
            vec![xd.t, xd.c],
            out,
            Op::GlobalAvgPoolSpatial { x, xd },
            req,
        ))
    }

    // -- dense / softmax --------------------------------------------------

    pub fn linear(&mut self, x: ValueId, w: ValueId, b: Option<ValueId>) -> Result<ValueId> {
        let (rows, in_dim) = self.rank2(x, "linear")?;
        let (out_dim, w_in) = self.rank2(w, "linear weight")?;
        if w_in != in_dim {
            return Err(Error::shape(alloc::format!(
                "linear weight expects {w_in} features, input has {in_dim}"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [out_dim] {
                return Err(Error::shape(alloc::format!(
                    "linear bias must be [{out_dim}], got {}",
                    crate::tensor::shape_string(self.shape(b))
                )));
            }
        }
        let xv = &self.nodes[x.0].data;
        let wv = &self.nodes[w.0].data;
        let mut out = vec![E::zero(); rows * out_dim];
        for r in 0..rows {
            let xrow = &xv[r * in_dim..(r + 1) * in_dim];
            for o in 0..out_dim {
                let wrow = &wv[o * in_dim..(o + 1) * in_dim];
                let mut acc = E::zero();
                for i in 0..in_dim {
                    acc = acc + xrow[i] * wrow[i];
                }
                out[r * out_dim + o] = acc;
            }
        }
        if let Some(b) = b {
            let bv = &self.nodes[b.0].data;
            for r in 0..rows {
                for o in 0..out_dim {
                    out[r * out_dim + o] = out[r * out_dim + o] + bv[o];
                }
            }
        }
        let req = self.requires(x)
            || self.requires(w)
            || b.map(|b| self.requires(b)).unwrap_or(false);
        Ok(self.push(
            vec![rows, out_dim],
            out,
            Op::Linear { x, w, b, rows, in_dim, out_dim },
            req,
        ))
    }

    pub fn log_softmax(&mut self, x: ValueId) -> Result<ValueId> {
        let (rows, cols) = self.rank2(x, "log_softmax")?;
        let out = kernels::log_softmax_fwd(&self.nodes[x.0].data, rows, cols);
        let req = self.requires(x);
        Ok(self.push(vec![rows, cols], out, Op::LogSoftmax { x, rows, cols }, req))
    }

    // -- normalization ----------------------------------------------------

    /// Normalizes each channel over its (T, H, W) extent, then applies the
    /// affine pair. With `running` statistics the op normalizes against them
    /// and returns no fresh statistics; without, it uses the tensor's own
    /// batch statistics and hands back `(mean, var)` for the caller's running
    /// averages.
    pub fn channel_norm(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: E,
        running: Option<(&[E], &[E])>,
    ) -> Result<(ValueId, Option<(Vec<E>, Vec<E>)>)> {
        let xd = self.dims4(x, "channel_norm")?;
        for (id, name) in [(gamma, "gamma"), (beta, "beta")] {
            if self.shape(id) != [xd.c] {
                return Err(Error::shape(alloc::format!(
                    "channel_norm {name} must be [{}], got {}",
                    xd.c,
                    crate::tensor::shape_string(self.shape(id))
                )));
            }
        }
        let (mean, var, batch_stats, fresh) = match running {
            Some((rm, rv)) => {
                if rm.len() != xd.c || rv.len() != xd.c {
                    return Err(Error::shape(alloc::format!(
                        "running statistics must have {} channels",
                        xd.c
                    )));
                }
                (rm.to_vec(), rv.to_vec(), false, None)
            }
            None => {
                let (m, v) = kernels::channel_stats(&self.nodes[x.0].data, xd);
                (m.clone(), v.clone(), true, Some((m, v)))
            }
        };
        let rstd: Vec<E> = var.iter().map(|&v| E::one() / (v + eps).sqrt()).collect();
        let out = kernels::channel_norm_fwd(
            &self.nodes[x.0].data,
            xd,
            &self.nodes[gamma.0].data,
            &self.nodes[beta.0].data,
            &mean,
            &rstd,
        );
        let req = self.requires(x) || self.requires(gamma) || self.requires(beta);
        let id = self.push(
            vec![xd.t, xd.c, xd.h, xd.w],
            out,
            Op::ChannelNorm {
                x,
                gamma,
                beta,
                xd,
                saved: NormSaved { mean, rstd },
                batch_stats,
            },
            req,
        );
        Ok((id, fresh))
    }

    // -- temporal remapping -----------------------------------------------

    /// Shifts each channel along time by its offset, zero-filling frames
    /// gathered from outside the clip: `out[t][c] = x[t + offsets[c]][c]`.
    pub fn temporal_gather(&mut self, x: ValueId, offsets: &[i32]) -> Result<ValueId> {
        let xd = self.dims4(x, "temporal_gather")?;
        if offsets.len() != xd.c {
            return Err(Error::shape(alloc::format!(
                "offset table has {} entries for {} channels",
                offsets.len(),
                xd.c
            )));
        }
        let data = &self.nodes[x.0].data;
        let plane = xd.h * xd.w;
        let mut out = vec![E::zero(); xd.count()];
        for t in 0..xd.t {
            for c in 0..xd.c {
                let src = t as i64 + offsets[c] as i64;
                if src < 0 || src >= xd.t as i64 {
                    continue;
                }
                let dst_base = xd.idx(t, c, 0, 0);
                let src_base = xd.idx(src as usize, c, 0, 0);
                out[dst_base..dst_base + plane]
                    .copy_from_slice(&data[src_base..src_base + plane]);
            }
        }
        let req = self.requires(x);
        Ok(self.push(
            vec![xd.t, xd.c, xd.h, xd.w],
            out,
            Op::TemporalGather { x, xd, offsets: offsets.to_vec() },
            req,
        ))
    }

    // -- backward ---------------------------------------------------------

    /// Seeds the scalar `loss` with gradient one and accumulates adjoints
    /// into every upstream node that requires them.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::shape(alloc::format!(
                "backward needs a scalar loss, got shape {}",
                crate::tensor::shape_string(&self.nodes[loss.0].shape)
            )));
        }
        self.nodes[loss.0].grad = Some(vec![E::one()]);
        for i in (0..=loss.0).rev() {
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &tail[0];
            if !node.requires_grad {
                continue;
            }
            let gy = match &node.grad {
                Some(g) => g,
                None => continue,
            };
            let mut contribs: Vec<(ValueId, Vec<E>)> = Vec::new();
            let needs = |id: ValueId| head[id.0].requires_grad;
            match &node.op {
                Op::Leaf | Op::Detach => {}
                Op::Relu { x } => {
                    if needs(*x) {
                        let g = head[x.0]
                            .data
                            .iter()
                            .zip(gy)
                            .map(|(&v, &g)| if v > E::zero() { g } else { E::zero() })
                            .collect();
                        contribs.push((*x, g));
                    }
                }
                Op::Add { a, b } => {
                    for id in [*a, *b] {
                        if needs(id) {
                            contribs.push((id, gy.clone()));
                        }
                    }
                }
                Op::Scale { x, factor } => {
                    if needs(*x) {
                        let f = *factor;
                        contribs.push((*x, gy.iter().map(|&g| g * f).collect()));
                    }
                }
                Op::Sum { x } => {
                    if needs(*x) {
                        let g = gy[0];
                        contribs.push((*x, vec![g; head[x.0].data.len()]));
                    }
                }
                Op::Mul { a, b } => {
                    if needs(*a) {
                        let g = head[b.0].data.iter().zip(gy).map(|(&v, &g)| v * g).collect();
                        contribs.push((*a, g));
                    }
                    if needs(*b) {
                        let g = head[a.0].data.iter().zip(gy).map(|(&v, &g)| v * g).collect();
                        contribs.push((*b, g));
                    }
                }
                Op::Conv2d { x, w, args, xd, od } => {
                    let mut gx = needs(*x).then(|| vec![E::zero(); head[x.0].data.len()]);
                    let mut gw = needs(*w).then(|| vec![E::zero(); head[w.0].data.len()]);
                    kernels::conv2d_bwd(
                        &head[x.0].data,
                        *xd,
                        &head[w.0].data,
                        args,
                        *od,
                        gy,
                        gx.as_mut(),
                        gw.as_mut(),
                    );
                    if let Some(g) = gx {
                        contribs.push((*x, g));
                    }
                    if let Some(g) = gw {
                        contribs.push((*w, g));
                    }
                }
                Op::Conv1dTemporal { x, w, args, xd, od } => {
                    let mut gx = needs(*x).then(|| vec![E::zero(); head[x.0].data.len()]);
                    let mut gw = needs(*w).then(|| vec![E::zero(); head[w.0].data.len()]);
                    kernels::conv1d_temporal_bwd(
                        &head[x.0].data,
                        *xd,
                        &head[w.0].data,
                        args,
                        *od,
                        gy,
                        gx.as_mut(),
                        gw.as_mut(),
                    );
                    if let Some(g) = gx {
                        contribs.push((*x, g));
                    }
                    if let Some(g) = gw {
                        contribs.push((*w, g));
                    }
                }
                Op::Conv3d { x, w, args, xd, od } => {
                    let mut gx = needs(*x).then(|| vec![E::zero(); head[x.0].data.len()]);
                    let mut gw = needs(*w).then(|| vec![E::zero(); head[w.0].data.len()]);
                    kernels::conv3d_bwd(
                        &head[x.0].data,
                        *xd,
                        &head[w.0].data,
                        args,
                        *od,
                        gy,
                        gx.as_mut(),
                        gw.as_mut(),
                    );
                    if let Some(g) = gx {
                        contribs.push((*x, g));
                    }
                    if let Some(g) = gw {
                        contribs.push((*w, g));
                    }
                }
                Op::MaxPool { x, argmax } => {
                    if needs(*x) {
                        let mut gx = vec![E::zero(); head[x.0].data.len()];
                        kernels::maxpool_bwd(argmax, gy, &mut gx);
                        contribs.push((*x, gx));
                    }
                }
                Op::GlobalAvgPoolSpatial { x, xd } => {
                    if needs(*x) {
                        let plane = xd.h * xd.w;
                        let inv = E::one() / E::of_usize(plane);
                        let mut gx = vec![E::zero(); head[x.0].data.len()];
                        for t in 0..xd.t {
                            for c in 0..xd.c {
                                let g = gy[t * xd.c + c] * inv;
                                let base = xd.idx(t, c, 0, 0);
                                for i in 0..plane {
                                    gx[base + i] = gx[base + i] + g;
                                }
                            }
                        }
                        contribs.push((*x, gx));
                    }
                }
                Op::Linear { x, w, b, rows, in_dim, out_dim } => {
                    let (rows, in_dim, out_dim) = (*rows, *in_dim, *out_dim);
                    if needs(*x) {
                        let wv = &head[w.0].data;
                        let mut gx = vec![E::zero(); rows * in_dim];
                        for r in 0..rows {
                            for o in 0..out_dim {
                                let g = gy[r * out_dim + o];
                                let wrow = &wv[o * in_dim..(o + 1) * in_dim];
                                for i in 0..in_dim {
                                    gx[r * in_dim + i] = gx[r * in_dim + i] + g * wrow[i];
                                }
                            }
                        }
                        contribs.push((*x, gx));
                    }
                    if needs(*w) {
                        let xv = &head[x.0].data;
                        let mut gw = vec![E::zero(); out_dim * in_dim];
                        for r in 0..rows {
                            let xrow = &xv[r * in_dim..(r + 1) * in_dim];
                            for o in 0..out_dim {
                                let g = gy[r * out_dim + o];
                                for i in 0..in_dim {
                                    gw[o * in_dim + i] = gw[o * in_dim + i] + g * xrow[i];
                                }
                            }
                        }
                        contribs.push((*w, gw));
                    }
                    if let Some(b) = b {
                        if needs(*b) {
                            let mut gb = vec![E::zero(); out_dim];
                            for r in 0..rows {
                                for o in 0..out_dim {
                                    gb[o] = gb[o] + gy[r * out_dim + o];
                                }
                            }
                            contribs.push((*b, gb));
                        }
                    }
                }
                Op::LogSoftmax { x, rows, cols } => {
                    if needs(*x) {
                        let mut gx = vec![E::zero(); head[x.0].data.len()];
                        kernels::log_softmax_bwd(&node.data, *rows, *cols, gy, &mut gx);
                        contribs.push((*x, gx));
                    }
                }
                Op::ChannelNorm { x, gamma, beta, xd, saved, batch_stats } => {
                    let mut gx = needs(*x).then(|| vec![E::zero(); head[x.0].data.len()]);
                    let mut gg = needs(*gamma).then(|| vec![E::zero(); xd.c]);
                    let mut gb = needs(*beta).then(|| vec![E::zero(); xd.c]);
                    kernels::channel_norm_bwd(
                        &head[x.0].data,
                        *xd,
                        &head[gamma.0].data,
                        saved,
                        gy,
                        gx.as_mut(),
                        gg.as_mut(),
                        gb.as_mut(),
                        *batch_stats,
                    );
                    if let Some(g) = gx {
                        contribs.push((*x, g));
                    }
                    if let Some(g) = gg {
                        contribs.push((*gamma, g));
                    }
                    if let Some(g) = gb {
                        contribs.push((*beta, g));
                    }
                }
                Op::TemporalGather { x, xd, offsets } => {
                    if needs(*x) {
                        let plane = xd.h * xd.w;
                        let mut gx = vec![E::zero(); head[x.0].data.len()];
                        for t in 0..xd.t {
                            for c in 0..xd.c {
                                let src = t as i64 + offsets[c] as i64;
                                if src < 0 || src >= xd.t as i64 {
                                    continue;
                                }
                                let dst_base = xd.idx(t, c, 0, 0);
                                let src_base = xd.idx(src as usize, c, 0, 0);
                                for i in 0..plane {
                                    gx[src_base + i] = gx[src_base + i] + gy[dst_base + i];
                                }
                            }
                        }
                        contribs.push((*x, gx));
                    }
                }
                Op::CtcLoss { x, grad } => {
                    if needs(*x) {
                        let g0 = gy[0];
                        contribs.push((*x, grad.iter().map(|&g| g * g0).collect()));
                    }
                }
            }
            for (id, g) in contribs {
                let target = &mut head[id.0];
                match &mut target.grad {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&g) {
                            *a = *a + *v;
                        }
                    }
                    None => target.grad = Some(g),
                }
            }
        }
        Ok(())
    }
}
