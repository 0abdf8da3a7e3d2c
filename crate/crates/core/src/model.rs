//! Weight allocation and forward execution for a [`NetworkSpec`].
//!
//! A [`ModelInstance`] materializes every layer of the spec's layout as
//! named tensors, then interprets the layout's piece stream on a [`Tape`]:
//! bind the parameters as tape leaves once per step, run one forward pass
//! per clip, and read gradients back off the tape by parameter id.
//!
//! Normalization keeps per-channel running statistics as non-trainable
//! buffers. Training passes normalize with batch statistics and fold them
//! into the buffers; evaluation passes read the buffers and leave them
//! untouched.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{LayerRole, Layout, NetworkSpec, Piece};
use crate::scalar::Scalar;
use crate::tape::{Tape, ValueId};
use crate::tensor::{ConvWeights, KernelDims, Tensor};
use crate::tscm::ChannelOffsetMap;

pub const NORM_EPS: f64 = 1e-5;
pub const NORM_MOMENTUM: f64 = 0.1;

/// One weight tensor with its checkpoint name and training-part tag.
#[derive(Debug, Clone)]
pub struct NamedParam<E: Scalar> {
    pub name: String,
    pub value: Tensor<E>,
    /// True for the improved tail: replaced blocks, temporal pools, and
    /// everything after them. The gradient stop gates the rest.
    pub part2: bool,
}

/// Parameter leaves pushed onto one tape, parallel to
/// [`ModelInstance::params`].
pub struct Binding {
    pub param_ids: Vec<ValueId>,
    pub train: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindMode {
    Train { stop_part1: bool },
    Eval,
}

#[derive(Debug, Clone)]
pub struct ModelInstance<E: Scalar> {
    pub spec: NetworkSpec,
    layout: Layout,
    params: Vec<NamedParam<E>>,
    /// Layer id to the index of its first parameter.
    layer_params: Vec<usize>,
    /// Running mean/variance pairs; `layer_buffers[i]` is the mean index
    /// for norm layer `i` with the variance at the next slot.
    buffers: Vec<NamedParam<E>>,
    layer_buffers: Vec<Option<usize>>,
    shift_maps: Vec<ChannelOffsetMap>,
}

impl<E: Scalar> ModelInstance<E> {
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let layout = spec.layout()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut layer_params = Vec::with_capacity(layout.layers.len());
        let mut buffers = Vec::new();
        let mut layer_buffers = Vec::with_capacity(layout.layers.len());
        for layer in &layout.layers {
            layer_params.push(params.len());
            let mut slot = None;
            match &layer.role {
                LayerRole::Conv2 { cin, cout, k, .. } => {
                    let w = ConvWeights::he_init(*cout, *cin, KernelDims::spatial(*k, *k), &mut rng);
                    params.push(NamedParam {
                        name: format!("{}.w", layer.name),
                        value: w.into_tensor().with_grad(),
                        part2: layer.part2,
                    });
                }
                LayerRole::Conv3 { cin, cout, k, .. } => {
                    let w = ConvWeights::he_init(*cout, *cin, KernelDims::full(3, *k, *k), &mut rng);
                    params.push(NamedParam {
                        name: format!("{}.w", layer.name),
                        value: w.into_tensor().with_grad(),
                        part2: layer.part2,
                    });
                }
                LayerRole::ConvTemporal { cin, cout, kt } => {
                    let w = ConvWeights::he_init(*cout, *cin, KernelDims::temporal(*kt), &mut rng);
                    params.push(NamedParam {
                        name: format!("{}.w", layer.name),
                        value: w.into_tensor().with_grad(),
                        part2: layer.part2,
                    });
                }
                LayerRole::Norm { channels } => {
                    let c = *channels;
                    params.push(NamedParam {
                        name: format!("{}.gamma", layer.name),
                        value: Tensor::new(&[c], vec![E::one(); c])?.with_grad(),
                        part2: layer.part2,
                    });
                    params.push(NamedParam {
                        name: format!("{}.beta", layer.name),
                        value: Tensor::zeros(&[c]).with_grad(),
                        part2: layer.part2,
                    });
                    slot = Some(buffers.len());
                    buffers.push(NamedParam {
                        name: format!("{}.running_mean", layer.name),
                        value: Tensor::zeros(&[c]),
                        part2: layer.part2,
                    });
                    buffers.push(NamedParam {
                        name: format!("{}.running_var", layer.name),
                        value: Tensor::new(&[c], vec![E::one(); c])?,
                        part2: layer.part2,
                    });
                }
                LayerRole::Linear { in_dim, out_dim } => {
                    let bound = (E::one() / E::of_usize(*in_dim)).sqrt();
                    params.push(NamedParam {
                        name: format!("{}.w", layer.name),
                        value: Tensor::uniform(&[*out_dim, *in_dim], bound, &mut rng).with_grad(),
                        part2: layer.part2,
                    });
                    params.push(NamedParam {
                        name: format!("{}.b", layer.name),
                        value: Tensor::zeros(&[*out_dim]).with_grad(),
                        part2: layer.part2,
                    });
                }
            }
            layer_buffers.push(slot);
        }
        let shift_maps = layout
            .shift_slots
            .iter()
            .map(|s| ChannelOffsetMap::new(&spec.tscm, s.channels))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelInstance { spec, layout, params, layer_params, buffers, layer_buffers, shift_maps })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[NamedParam<E>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedParam<E>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[NamedParam<E>] {
        &self.buffers
    }

    pub fn shift_maps(&self) -> &[ChannelOffsetMap] {
        &self.shift_maps
    }

    /// Trainable parameter element count; buffers are excluded.
    pub fn param_count(&self) -> u64 {
        self.params.iter().map(|p| p.value.len() as u64).sum()
    }

    /// All persistent tensors (parameters then buffers) for checkpointing.
    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.params
            .iter()
            .chain(self.buffers.iter())
            .map(|p| (p.name.as_str(), &p.value))
    }

    /// Replaces a parameter or buffer by checkpoint name.
    pub fn load_tensor(&mut self, name: &str, value: Tensor<E>) -> Result<()> {
        let dst = self
            .params
            .iter_mut()
            .chain(self.buffers.iter_mut())
            .find(|p| p.name == name)
            .ok_or_else(|| Error::config(format!("no tensor named \"{name}\" in this network")))?;
        if dst.value.shape() != value.shape() {
            return Err(Error::shape(format!(
                "tensor \"{name}\" has a different shape in the checkpoint"
            )));
        }
        let keep_grad = dst.value.requires_grad;
        dst.value = if keep_grad { value.with_grad() } else { value };
        Ok(())
    }

    /// Pushes every parameter onto the tape as a leaf. In training mode the
    /// gradient stop demotes first-part parameters to constants, which keeps
    /// their forward values identical while pruning their gradients.
    pub fn bind(&self, tape: &mut Tape<E>, mode: BindMode) -> Binding {
        let param_ids = self
            .params
            .iter()
            .map(|p| {
                let requires = match mode {
                    BindMode::Eval => false,
                    BindMode::Train { stop_part1 } => p.part2 || !stop_part1,
                };
                tape.leaf_from(p.value.shape(), p.value.data().to_vec(), requires)
                    .expect("parameter shapes are consistent by construction")
            })
            .collect();
        Binding { param_ids, train: matches!(mode, BindMode::Train { .. }) }
    }

    /// Runs one clip `[T, 3, H, W]` through the network and returns the head
    /// log-probability matrices `[T_head, vocab + 1]` in spec head order.
    pub fn forward(
        &mut self,
        tape: &mut Tape<E>,
        binding: &Binding,
        clip: ValueId,
    ) -> Result<Vec<ValueId>> {
        if binding.param_ids.len() != self.params.len() {
            return Err(Error::config("binding does not match this network"));
        }
        let ids = &binding.param_ids;
        let train = binding.train;
        let mut cur = clip;
        let mut residual: Vec<ValueId> = Vec::new();
        let mut heads: Vec<Option<ValueId>> = vec![None; self.layout.head_layers.len()];
        for piece in &self.layout.pieces {
            match piece {
                Piece::Conv(i) => {
                    cur = apply_conv(
                        tape,
                        cur,
                        &self.layout.layers[*i].role,
                        ids[self.layer_params[*i]],
                    )?;
                }
                Piece::Norm(i) => {
                    cur = apply_norm(
                        tape,
                        cur,
                        ids[self.layer_params[*i]],
                        ids[self.layer_params[*i] + 1],
                        &mut self.buffers,
                        self.layer_buffers[*i]
                            .ok_or_else(|| Error::config("norm layer without buffers"))?,
                        train,
                    )?;
                }
                Piece::Relu => cur = tape.relu(cur),
                Piece::BlockStart { shortcut } => {
                    let saved = match shortcut {
                        None => cur,
                        Some((ci, ni)) => {
                            let y = apply_conv(
                                tape,
                                cur,
                                &self.layout.layers[*ci].role,
                                ids[self.layer_params[*ci]],
                            )?;
                            apply_norm(
                                tape,
                                y,
                                ids[self.layer_params[*ni]],
                                ids[self.layer_params[*ni] + 1],
                                &mut self.buffers,
                                self.layer_buffers[*ni]
                                    .ok_or_else(|| Error::config("norm layer without buffers"))?,
                                train,
                            )?
                        }
                    };
                    residual.push(saved);
                }
                Piece::BlockEnd => {
                    let saved = residual
                        .pop()
                        .ok_or_else(|| Error::config("unbalanced residual block"))?;
                    cur = tape.add(cur, saved)?;
                    cur = tape.relu(cur);
                }
                Piece::Shift { slot } => {
                    cur = tape.temporal_gather(cur, self.shift_maps[*slot].offsets())?;
                }
                Piece::MaxPoolSpatial { k, stride, pad } => {
                    cur = tape.maxpool2d(cur, *k, *stride, *pad)?;
                }
                Piece::TemporalPool => cur = tape.maxpool1d_temporal(cur, 2, 2)?,
                Piece::Tap { head } => {
                    let li = self.layout.head_layers[*head];
                    let pooled = tape.global_avgpool_spatial(cur)?;
                    let logits = tape.linear(
                        pooled,
                        ids[self.layer_params[li]],
                        Some(ids[self.layer_params[li] + 1]),
                    )?;
                    heads[*head] = Some(tape.log_softmax(logits)?);
                }
            }
        }
        heads
            .into_iter()
            .enumerate()
            .map(|(h, id)| id.ok_or_else(|| Error::config(format!("head {h} was never reached"))))
            .collect()
    }
}

fn apply_conv<E: Scalar>(
    tape: &mut Tape<E>,
    x: ValueId,
    role: &LayerRole,
    w: ValueId,
) -> Result<ValueId> {
    match role {
        LayerRole::Conv2 { stride, pad, .. } => tape.conv2d(x, w, *stride, *pad),
        LayerRole::Conv3 { stride, pad, .. } => tape.conv3d(x, w, 1, *stride, 1, *pad),
        LayerRole::ConvTemporal { .. } => tape.conv1d_temporal(x, w, 1, 1),
        _ => Err(Error::config("piece points at a non-convolution layer")),
    }
}

fn apply_norm<E: Scalar>(
    tape: &mut Tape<E>,
    x: ValueId,
    gamma: ValueId,
    beta: ValueId,
    buffers: &mut [NamedParam<E>],
    mean_slot: usize,
    train: bool,
) -> Result<ValueId> {
    let eps = E::of_f64(NORM_EPS);
    if train {
        let (y, stats) = tape.channel_norm(x, gamma, beta, eps, None)?;
        let (bm, bv) = stats.ok_or_else(|| Error::numeric("batch statistics missing"))?;
        fold_running(buffers[mean_slot].value.data_mut(), &bm);
        fold_running(buffers[mean_slot + 1].value.data_mut(), &bv);
        Ok(y)
    } else {
        let mean = buffers[mean_slot].value.data().to_vec();
        let var = buffers[mean_slot + 1].value.data().to_vec();
        let (y, _) = tape.channel_norm(x, gamma, beta, eps, Some((&mean, &var)))?;
        Ok(y)
    }
}

fn fold_running<E: Scalar>(running: &mut [E], batch: &[E]) {
    let m = E::of_f64(NORM_MOMENTUM);
    let keep = E::one() - m;
    for (r, b) in running.iter_mut().zip(batch) {
        *r = keep * *r + m * *b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel;
    use crate::network::TemporalVariant;
    use crate::tscm::ShiftMode;
    use rand::Rng;

    fn desk_clip(seed: u64, frames: usize) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..frames * 3 * 32 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(&[frames, 3, 32, 32], data).unwrap()
    }

    fn desk_model(variant: TemporalVariant, seed: u64) -> ModelInstance<f64> {
        let mut spec = NetworkSpec::preset("resnett34-desk").unwrap();
        spec.variant = variant;
        ModelInstance::init(spec, seed).unwrap()
    }

    #[test]
    fn instantiated_params_match_the_cost_model() {
        for name in ["resnett34", "resnett34-desk"] {
            for variant in [
                TemporalVariant::Tscm,
                TemporalVariant::Plain2d,
                TemporalVariant::Conv2Plus1d,
                TemporalVariant::Conv3d,
            ] {
                let mut spec = NetworkSpec::preset(name).unwrap();
                spec.variant = variant;
                let report =
                    costmodel::analyze(&spec, spec.input_hw, 8).unwrap();
                let model: ModelInstance<f32> = ModelInstance::init(spec, 0).unwrap();
                assert_eq!(model.param_count(), report.params, "{name} {variant:?}");
            }
        }
    }

    #[test]
    fn forward_emits_heads_at_halved_frame_rates() {
        let mut model = desk_model(TemporalVariant::Tscm, 7);
        let clip = desk_clip(1, 8);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape, BindMode::Eval);
        let x = tape.leaf(&clip);
        let heads = model.forward(&mut tape, &binding, x).unwrap();
        assert_eq!(heads.len(), 3);
        assert_eq!(tape.shape(heads[0]), &[4, 9]);
        assert_eq!(tape.shape(heads[1]), &[2, 9]);
        assert_eq!(tape.shape(heads[2]), &[2, 9]);
        for &h in &heads {
            for row in tape.value(h).chunks(9) {
                let total: f64 = row.iter().map(|l| l.exp()).sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_weights_and_outputs() {
        let mut a = desk_model(TemporalVariant::Tscm, 3);
        let mut b = desk_model(TemporalVariant::Tscm, 3);
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value.data(), pb.value.data());
        }
        let clip = desk_clip(2, 8);
        let run = |m: &mut ModelInstance<f64>| {
            let mut tape = Tape::new();
            let binding = m.bind(&mut tape, BindMode::Eval);
            let x = tape.leaf(&clip);
            let heads = m.forward(&mut tape, &binding, x).unwrap();
            tape.value(heads[2]).to_vec()
        };
        assert_eq!(run(&mut a), run(&mut b));
    }

    #[test]
    fn identity_shift_equals_plain_variant_exactly() {
        let mut spec = NetworkSpec::preset("resnett34-desk").unwrap();
        spec.tscm.mode = ShiftMode::Identity;
        let mut ident = ModelInstance::<f64>::init(spec, 11).unwrap();
        let mut plain = desk_model(TemporalVariant::Plain2d, 11);
        let clip = desk_clip(5, 8);
        let run = |m: &mut ModelInstance<f64>| {
            let mut tape = Tape::new();
            let binding = m.bind(&mut tape, BindMode::Eval);
            let x = tape.leaf(&clip);
            let heads = m.forward(&mut tape, &binding, x).unwrap();
            tape.value(heads[2]).to_vec()
        };
        assert_eq!(run(&mut ident), run(&mut plain));
    }

    #[test]
    fn training_forward_updates_running_statistics() {
        let mut model = desk_model(TemporalVariant::Tscm, 5);
        let before: Vec<Vec<f64>> =
            model.buffers().iter().map(|b| b.value.data().to_vec()).collect();
        let clip = desk_clip(9, 8);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape, BindMode::Train { stop_part1: false });
        let x = tape.leaf(&clip);
        model.forward(&mut tape, &binding, x).unwrap();
        let changed = model
            .buffers()
            .iter()
            .zip(&before)
            .filter(|(b, prev)| b.value.data() != prev.as_slice())
            .count();
        assert_eq!(changed, model.buffers().len());

        // evaluation must leave them alone
        let after: Vec<Vec<f64>> =
            model.buffers().iter().map(|b| b.value.data().to_vec()).collect();
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape, BindMode::Eval);
        let x = tape.leaf(&clip);
        model.forward(&mut tape, &binding, x).unwrap();
        for (b, prev) in model.buffers().iter().zip(&after) {
            assert_eq!(b.value.data(), prev.as_slice());
        }
    }

    #[test]
    fn gradient_stop_prunes_first_part_gradients() {
        let mut model = desk_model(TemporalVariant::Tscm, 13);
        let clip = desk_clip(4, 8);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape, BindMode::Train { stop_part1: true });
        let x = tape.leaf(&clip);
        let heads = model.forward(&mut tape, &binding, x).unwrap();
        let label = crate::ctc::GlossSequence::new(vec![1, 2]).unwrap();
        let mut total = None;
        for &h in &heads {
            let (loss, feasible) = tape.ctc_loss(h, &label).unwrap();
            assert!(feasible);
            total = Some(match total {
                None => loss,
                Some(t) => tape.add(t, loss).unwrap(),
            });
        }
        tape.backward(total.unwrap()).unwrap();
        for (p, id) in model.params().iter().zip(&binding.param_ids) {
            if p.part2 {
                assert!(tape.grad(*id).is_some(), "{} should train", p.name);
            } else {
                assert!(tape.grad(*id).is_none(), "{} should be stopped", p.name);
            }
        }
    }

    #[test]
    fn load_tensor_checks_names_and_shapes() {
        let mut model = desk_model(TemporalVariant::Tscm, 1);
        let name = model.params()[0].name.clone();
        let shape = model.params()[0].value.shape().to_vec();
        assert!(model.load_tensor(&name, Tensor::zeros(&shape)).is_ok());
        assert!(model.params()[0].value.data().iter().all(|v| *v == 0.0));
        assert!(model.params()[0].value.requires_grad);
        assert!(model.load_tensor(&name, Tensor::zeros(&[1])).is_err());
        assert!(model.load_tensor("nope.w", Tensor::zeros(&shape)).is_err());
    }
}
