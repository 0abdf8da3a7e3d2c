//! Symbolic cost analysis: parameters, parameter memory, and
//! multiply-accumulate counts for a [`NetworkSpec`] without allocating any
//! weights.
//!
//! Counting conventions: convolutions are bias-free and cost
//! `Cout*Cin*prod(k)` parameters and that times the output positions in
//! MACs; normalization contributes its affine pair (2 per channel) and no
//! MACs; pooling, activations, and temporal shifts are free; classifier
//! heads count their weight matrix plus bias. One MAC is reported as one
//! flop.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::{LayerRole, NetworkSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub name: String,
    pub weight_shape: String,
    /// Frames flowing through this layer.
    pub frames: usize,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub network: String,
    pub variant: String,
    pub input_hw: (usize, usize),
    pub frames: usize,
    pub params: u64,
    pub macs: u64,
    pub layers: Vec<LayerCost>,
}

impl CostReport {
    /// Parameter memory in MiB assuming 32-bit weights.
    pub fn memory_mib(&self) -> f64 {
        self.params as f64 * 4.0 / (1024.0 * 1024.0)
    }

    pub fn gflops(&self) -> f64 {
        self.macs as f64 / 1e9
    }
}

/// Walks the spec's layout at the given input geometry and frame count.
pub fn analyze(spec: &NetworkSpec, input_hw: (usize, usize), frames: usize) -> Result<CostReport> {
    if frames == 0 {
        return Err(Error::config("frame count must be positive"));
    }
    let layout = spec.layout_for(input_hw)?;
    let mut layers = Vec::with_capacity(layout.layers.len());
    let mut params = 0u64;
    let mut macs = 0u64;
    for layer in &layout.layers {
        let t = frames / layer.t_div;
        if t == 0 {
            return Err(Error::config(format!(
                "{} frames cannot reach layer \"{}\" (frame count divided by {})",
                frames, layer.name, layer.t_div
            )));
        }
        let (oh, ow) = layer.out_hw;
        let (p, m, shape) = match &layer.role {
            LayerRole::Conv2 { cin, cout, k, .. } => {
                let p = (cout * cin * k * k) as u64;
                (p, p * (oh * ow * t) as u64, format!("{cout}x{cin}x{k}x{k}"))
            }
            LayerRole::Conv3 { cin, cout, k, .. } => {
                let p = (cout * cin * 3 * k * k) as u64;
                (p, p * (oh * ow * t) as u64, format!("{cout}x{cin}x3x{k}x{k}"))
            }
            LayerRole::ConvTemporal { cin, cout, kt } => {
                let p = (cout * cin * kt) as u64;
                (p, p * (oh * ow * t) as u64, format!("{cout}x{cin}x{kt}"))
            }
            LayerRole::Norm { channels } => {
                ((2 * channels) as u64, 0, format!("2x{channels}"))
            }
            LayerRole::Linear { in_dim, out_dim } => {
                let p = (in_dim * out_dim + out_dim) as u64;
                (p, (in_dim * out_dim * t) as u64, format!("{out_dim}x{in_dim}+{out_dim}"))
            }
        };
        params += p;
        macs += m;
        layers.push(LayerCost {
            name: layer.name.clone(),
            weight_shape: shape,
            frames: t,
            params: p,
            macs: m,
        });
    }
    Ok(CostReport {
        network: spec.name.clone(),
        variant: spec.variant.name().into(),
        input_hw,
        frames,
        params,
        macs,
        layers,
    })
}

/// Analyzes each spec at the same geometry, in order.
pub fn compare(
    specs: &[NetworkSpec],
    input_hw: (usize, usize),
    frames: usize,
) -> Result<Vec<CostReport>> {
    specs.iter().map(|s| analyze(s, input_hw, frames)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::TemporalVariant;

    fn preset_with(variant: TemporalVariant) -> NetworkSpec {
        let mut spec = NetworkSpec::preset("resnett34").unwrap();
        spec.variant = variant;
        spec
    }

    #[test]
    fn pointwise_layers_cost_their_product() {
        let spec = NetworkSpec::preset("resnett34").unwrap();
        let report = analyze(&spec, (224, 224), 8).unwrap();
        let shortcut = report
            .layers
            .iter()
            .find(|l| l.name == "res3.b0.short.conv")
            .unwrap();
        // 128x64 pointwise projection over a 28x28 map at the full 8 frames
        assert_eq!(shortcut.params, 128 * 64);
        assert_eq!(shortcut.macs, 128 * 64 * 28 * 28 * 8);
        assert_eq!(shortcut.frames, 8);
        let head = report.layers.iter().find(|l| l.name == "head2.linear").unwrap();
        // weight plus bias, multiplies only the weight, at a quarter of T
        assert_eq!(head.params, 512 * 1233 + 1233);
        assert_eq!(head.macs, 512 * 1233 * 2);
        assert_eq!(head.frames, 2);
    }

    #[test]
    fn reference_network_matches_hand_count() {
        let report = analyze(&preset_with(TemporalVariant::Tscm), (224, 224), 200).unwrap();
        assert_eq!(report.params, 22_866_611);
        assert_eq!(report.macs, 668_519_296_000);
        assert!((report.memory_mib() - 87.23).abs() < 0.05);
    }

    #[test]
    fn shift_and_plain_variants_cost_the_same() {
        let a = analyze(&preset_with(TemporalVariant::Tscm), (224, 224), 200).unwrap();
        let b = analyze(&preset_with(TemporalVariant::Plain2d), (224, 224), 200).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.macs, b.macs);
        assert_eq!(a.memory_mib(), b.memory_mib());
    }

    #[test]
    fn factored_variant_adds_temporal_kernels() {
        let base = analyze(&preset_with(TemporalVariant::Tscm), (224, 224), 200).unwrap();
        let split = analyze(&preset_with(TemporalVariant::Conv2Plus1d), (224, 224), 200).unwrap();
        assert_eq!(split.params - base.params, 6_291_456);
        assert_eq!(split.params, 29_158_067);
    }

    #[test]
    fn full_3d_variant_triples_replaced_kernels() {
        let base = analyze(&preset_with(TemporalVariant::Tscm), (224, 224), 200).unwrap();
        let cube = analyze(&preset_with(TemporalVariant::Conv3d), (224, 224), 200).unwrap();
        // replaced 3x3 convolutions hold 17,694,720 parameters; the 3x3x3
        // form costs three times that
        assert_eq!(cube.params - base.params, 2 * 17_694_720);
        assert_eq!(cube.params, 58_256_051);
    }

    #[test]
    fn variant_ordering_holds() {
        let reports = compare(
            &[
                preset_with(TemporalVariant::Plain2d),
                preset_with(TemporalVariant::Tscm),
                preset_with(TemporalVariant::Conv2Plus1d),
                preset_with(TemporalVariant::Conv3d),
            ],
            (224, 224),
            200,
        )
        .unwrap();
        assert_eq!(reports[0].params, reports[1].params);
        assert!(reports[1].params < reports[2].params);
        assert!(reports[2].params < reports[3].params);
        assert!(reports[1].macs < reports[2].macs);
        assert!(reports[2].macs < reports[3].macs);
    }

    #[test]
    fn totals_equal_breakdown_sums() {
        let report = analyze(&preset_with(TemporalVariant::Conv2Plus1d), (224, 224), 200).unwrap();
        let p: u64 = report.layers.iter().map(|l| l.params).sum();
        let m: u64 = report.layers.iter().map(|l| l.macs).sum();
        assert_eq!(p, report.params);
        assert_eq!(m, report.macs);
    }

    #[test]
    fn too_few_frames_for_the_pool_chain_errors() {
        let spec = NetworkSpec::preset("resnett34-desk").unwrap();
        assert!(analyze(&spec, (32, 32), 3).is_err());
        assert!(analyze(&spec, (32, 32), 4).is_ok());
        assert!(analyze(&spec, (32, 32), 0).is_err());
    }

    #[test]
    fn frames_scale_macs_but_not_params() {
        let spec = preset_with(TemporalVariant::Tscm);
        let a = analyze(&spec, (224, 224), 100).unwrap();
        let b = analyze(&spec, (224, 224), 200).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(2 * a.macs, b.macs);
    }
}
