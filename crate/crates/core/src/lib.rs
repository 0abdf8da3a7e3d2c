//! Spatio-temporal convolution toolkit: tensors, a reverse-mode tape, the
//! temporal crossover module, connectionist temporal classification, and the
//! networks built from them.
//!
//! The crate is `no_std` + `alloc`; everything that needs files, clocks, or a
//! terminal lives in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod costmodel;
pub mod ctc;
pub mod datagen;
pub mod error;
mod kernels;
pub mod metrics;
pub mod model;
pub mod network;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod trainer;
pub mod tscm;

pub use costmodel::{analyze, compare, CostReport, LayerCost};
pub use ctc::{beam_decode, greedy_decode, CtcConfig, CtcOutcome, GlossSequence};
pub use datagen::{
    center_crop, generate, vocabulary, AugmentConfig, DataConfig, Dataset, GlyphGloss, Sample,
    Split,
};
pub use error::{Error, Result};
pub use metrics::{corpus_wer, wer, EditOps};
pub use model::{BindMode, Binding, ModelInstance, NamedParam};
pub use network::{BlockKind, NetworkSpec, StageSpec, TapPoint, TemporalVariant};
pub use scalar::Scalar;
pub use tape::{Tape, ValueId};
pub use tensor::{ConvWeights, Dims4, KernelDims, Tensor};
pub use trainer::{
    adam_step, evaluate, evaluate_greedy, train, AdamState, EpochLog, EvalReport, TrainConfig,
    TrainOutcome,
};
pub use tscm::{ChannelOffsetMap, ShiftMode, TscmSpec};
