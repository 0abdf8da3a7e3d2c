//! Dense row-major tensors.
//!
//! Feature maps are rank-4 `T x C x H x W` with the time axis outermost, so
//! temporal remapping touches whole `C x H x W` frames contiguously.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense tensor with optional gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Scalar> {
    shape: Vec<usize>,
    data: Vec<E>,
    pub requires_grad: bool,
    pub grad: Option<Vec<E>>,
}

impl<E: Scalar> Tensor<E> {
    pub fn new(shape: &[usize], data: Vec<E>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![E::zero(); n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: E) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Fill with samples from `U(-bound, bound)`.
    pub fn uniform(shape: &[usize], bound: E, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let b = bound.as_f64();
        let data = (0..n)
            .map(|_| E::of_f64(rng.gen_range(-b..=b)))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Reset the gradient accumulator to zeros.
    pub fn zero_grad(&mut self) {
        self.grad = Some(vec![E::zero(); self.data.len()]);
    }

    /// Cast element type (f32 <-> f64); drops any gradient.
    pub fn cast<F: Scalar>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| F::of_f64(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    pub fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::shape(format!(
                "{what}: expected rank {rank}, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Feature-map dimensions `T x C x H x W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims4 {
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims4 {
    pub fn of<E: Scalar>(x: &Tensor<E>) -> Result<Self> {
        x.expect_rank(4, "feature map")?;
        let s = x.shape();
        Ok(Dims4 {
            t: s[0],
            c: s[1],
            h: s[2],
            w: s[3],
        })
    }

    pub fn from_shape(shape: &[usize]) -> Result<Self> {
        match shape {
            [t, c, h, w] => Ok(Dims4 { t: *t, c: *c, h: *h, w: *w }),
            other => Err(Error::shape(alloc::format!(
                "expected a [T, C, H, W] shape, got {}",
                shape_string(other)
            ))),
        }
    }

    #[inline]
    pub fn idx(&self, t: usize, c: usize, h: usize, w: usize) -> usize {
        ((t * self.c + c) * self.h + h) * self.w + w
    }

    pub fn count(&self) -> usize {
        self.t * self.c * self.h * self.w
    }
}

/// Convolution kernel extents: optional temporal depth plus spatial size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelDims {
    pub kt: Option<usize>,
    pub kh: usize,
    pub kw: usize,
}

impl KernelDims {
    pub fn spatial(kh: usize, kw: usize) -> Self {
        KernelDims { kt: None, kh, kw }
    }

    pub fn temporal(kt: usize) -> Self {
        KernelDims {
            kt: Some(kt),
            kh: 1,
            kw: 1,
        }
    }

    pub fn full(kt: usize, kh: usize, kw: usize) -> Self {
        KernelDims {
            kt: Some(kt),
            kh,
            kw,
        }
    }

    pub fn volume(&self) -> usize {
        self.kt.unwrap_or(1) * self.kh * self.kw
    }
}

/// Bias-free convolution weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights<E: Scalar> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: KernelDims,
    tensor: Tensor<E>,
}

impl<E: Scalar> ConvWeights<E> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: KernelDims,
        values: Vec<E>,
    ) -> Result<Self> {
        let expect = out_channels * in_channels * kernel.volume();
        if values.len() != expect {
            return Err(Error::shape(format!(
                "conv weights: {out_channels}x{in_channels} kernel {kernel:?} needs {expect} \
                 values, got {}",
                values.len()
            )));
        }
        let shape = weight_shape(out_channels, in_channels, kernel);
        Ok(ConvWeights {
            out_channels,
            in_channels,
            kernel,
            tensor: Tensor::new(&shape, values)?,
        })
    }

    /// He-style init: uniform with bound sqrt(2 / fan_in).
    pub fn he_init(
        out_channels: usize,
        in_channels: usize,
        kernel: KernelDims,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel.volume();
        let bound = (E::of_f64(2.0) / E::of_usize(fan_in)).sqrt();
        let shape = weight_shape(out_channels, in_channels, kernel);
        ConvWeights {
            out_channels,
            in_channels,
            kernel,
            tensor: Tensor::uniform(&shape, bound, rng),
        }
    }

    pub fn tensor(&self) -> &Tensor<E> {
        &self.tensor
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor<E> {
        &mut self.tensor
    }

    pub fn into_tensor(self) -> Tensor<E> {
        self.tensor
    }
}

fn weight_shape(out_channels: usize, in_channels: usize, kernel: KernelDims) -> Vec<usize> {
    match kernel.kt {
        None => vec![out_channels, in_channels, kernel.kh, kernel.kw],
        Some(kt) if kernel.kh == 1 && kernel.kw == 1 => vec![out_channels, in_channels, kt],
        Some(kt) => vec![out_channels, in_channels, kt, kernel.kh, kernel.kw],
    }
}

pub(crate) fn shape_string(shape: &[usize]) -> String {
    let mut s = String::new();
    for (i, d) in shape.iter().enumerate() {
        if i > 0 {
            s.push('x');
        }
        s.push_str(&format!("{d}"));
    }
    s
}
