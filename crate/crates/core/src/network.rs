//! Network descriptions and their layer-by-layer layouts.
//!
//! A [`NetworkSpec`] is the single source of truth for an architecture: the
//! builder materializes weights from it and the cost model walks it
//! symbolically, so parameter counts agree by construction. The layout
//! produced by [`NetworkSpec::layout`] is a flat list of parameterized
//! layers plus a linear forward program ([`Piece`] list) interpreted by the
//! model and ignored by the analyzer.
//!
//! The reference presets follow the ResNet-34/50/101 stage plans, with a
//! configurable tail of blocks upgraded to temporal ResBlockT form and two
//! temporal max-pools feeding three classifier heads at different frame
//! rates.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tscm::TscmSpec;

/// Residual block family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Two 3x3 convolutions.
    Basic,
    /// 1x1 reduce, 3x3, 1x1 expand; the middle width is a quarter of the
    /// output width.
    Bottleneck,
}

impl BlockKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(BlockKind::Basic),
            "bottleneck" => Ok(BlockKind::Bottleneck),
            other => Err(Error::config(format!("unknown block kind \"{other}\""))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BlockKind::Basic => "basic",
            BlockKind::Bottleneck => "bottleneck",
        }
    }
}

/// How the replaced tail blocks treat time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalVariant {
    /// Channel crossover shifts before each residual-branch convolution.
    Tscm,
    /// Identical weights to `Tscm` with the shifts removed.
    Plain2d,
    /// Each 3x3 spatial convolution followed by a kernel-3 temporal one.
    Conv2Plus1d,
    /// Each 3x3 convolution widened to 3x3x3.
    Conv3d,
}

impl TemporalVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tscm" => Ok(TemporalVariant::Tscm),
            "plain2d" | "2d" => Ok(TemporalVariant::Plain2d),
            "conv2plus1d" | "2+1d" => Ok(TemporalVariant::Conv2Plus1d),
            "conv3d" | "3d" => Ok(TemporalVariant::Conv3d),
            other => Err(Error::config(format!(
                "unknown temporal variant \"{other}\""
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TemporalVariant::Tscm => "tscm",
            TemporalVariant::Plain2d => "plain2d",
            TemporalVariant::Conv2Plus1d => "conv2plus1d",
            TemporalVariant::Conv3d => "conv3d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSpec {
    pub kind: BlockKind,
    pub blocks: usize,
    /// Output channel width before the global multiplier.
    pub width: usize,
    /// Spatial stride of the stage's first block.
    pub stride: usize,
}

/// Where a classifier head reads its features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapPoint {
    /// Directly after the k-th temporal pool (0-based).
    PostPool(usize),
    /// After the last stage and any trailing pool.
    Final,
}

impl TapPoint {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "final" {
            return Ok(TapPoint::Final);
        }
        if let Some(rest) = s.strip_prefix("pool") {
            if let Ok(k) = rest.parse::<usize>() {
                return Ok(TapPoint::PostPool(k));
            }
        }
        Err(Error::config(format!("unknown head tap \"{s}\"")))
    }

    pub fn name(&self) -> String {
        match self {
            TapPoint::PostPool(k) => format!("pool{k}"),
            TapPoint::Final => "final".to_string(),
        }
    }
}

/// Complete architecture description; serializable via [`NetworkSpec::parse`]
/// and [`NetworkSpec::to_text`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    /// Stem output width before the multiplier.
    pub stem_width: usize,
    pub stages: Vec<StageSpec>,
    /// Trailing blocks (counted across stage boundaries from the end)
    /// converted to the temporal variant.
    pub replaced_tail: usize,
    pub variant: TemporalVariant,
    pub tscm: TscmSpec,
    /// Stage indices after which a temporal max-pool (k=2, s=2) runs.
    pub temporal_pools: Vec<usize>,
    pub heads: Vec<TapPoint>,
    /// Real vocabulary size; every head also emits the blank.
    pub vocab: usize,
    pub width_multiplier: f64,
    pub input_hw: (usize, usize),
}

impl NetworkSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let basic34 = vec![
            StageSpec { kind: BlockKind::Basic, blocks: 3, width: 64, stride: 1 },
            StageSpec { kind: BlockKind::Basic, blocks: 4, width: 128, stride: 2 },
            StageSpec { kind: BlockKind::Basic, blocks: 6, width: 256, stride: 2 },
            StageSpec { kind: BlockKind::Basic, blocks: 3, width: 512, stride: 2 },
        ];
        let mut spec = NetworkSpec {
            name: name.to_string(),
            stem_width: 64,
            stages: basic34,
            replaced_tail: 7,
            variant: TemporalVariant::Tscm,
            tscm: TscmSpec::default(),
            temporal_pools: vec![2, 3],
            heads: vec![TapPoint::PostPool(0), TapPoint::PostPool(1), TapPoint::Final],
            vocab: 1232,
            width_multiplier: 1.0,
            input_hw: (224, 224),
        };
        match name {
            "resnett34" => {}
            "resnett50" | "resnett101" => {
                let deep = name == "resnett101";
                spec.stages = vec![
                    StageSpec { kind: BlockKind::Bottleneck, blocks: 3, width: 256, stride: 1 },
                    StageSpec { kind: BlockKind::Bottleneck, blocks: 4, width: 512, stride: 2 },
                    StageSpec {
                        kind: BlockKind::Bottleneck,
                        blocks: if deep { 23 } else { 6 },
                        width: 1024,
                        stride: 2,
                    },
                    StageSpec { kind: BlockKind::Bottleneck, blocks: 3, width: 2048, stride: 2 },
                ];
            }
            "resnett34-desk" => {
                spec.width_multiplier = 0.125;
                spec.input_hw = (32, 32);
                spec.vocab = 8;
            }
            other => return Err(Error::config(format!("unknown preset \"{other}\""))),
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn scaled(&self, width: usize) -> usize {
        let w = num_traits::Float::round(width as f64 * self.width_multiplier) as usize;
        w.max(1)
    }

    pub fn total_blocks(&self) -> usize {
        self.stages.iter().map(|s| s.blocks).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::config("network needs at least one stage"));
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.blocks == 0 || st.width == 0 || st.stride == 0 {
                return Err(Error::config(format!(
                    "stage {i} has a zero block count, width, or stride"
                )));
            }
        }
        if self.replaced_tail > self.total_blocks() {
            return Err(Error::config(format!(
                "cannot replace {} blocks in a {}-block network",
                self.replaced_tail,
                self.total_blocks()
            )));
        }
        for &p in &self.temporal_pools {
            if p >= self.stages.len() {
                return Err(Error::config(format!(
                    "temporal pool after stage {p}, but there are only {} stages",
                    self.stages.len()
                )));
            }
        }
        let mut sorted = self.temporal_pools.clone();
        sorted.sort_unstable();
        if sorted != self.temporal_pools {
            return Err(Error::config("temporal pool positions must be ascending"));
        }
        if self.heads.is_empty() {
            return Err(Error::config("at least one classifier head is required"));
        }
        for h in &self.heads {
            if let TapPoint::PostPool(k) = h {
                if *k >= self.temporal_pools.len() {
                    return Err(Error::config(format!(
                        "head tap pool{k} but only {} temporal pools exist",
                        self.temporal_pools.len()
                    )));
                }
            }
        }
        if self.vocab == 0 {
            return Err(Error::config("vocabulary must contain at least one token"));
        }
        if !(self.width_multiplier > 0.0) {
            return Err(Error::config("width multiplier must be positive"));
        }
        if self.variant == TemporalVariant::Tscm {
            self.tscm.validate()?;
        }
        Ok(())
    }

    /// Number of frames the deepest head divides away.
    pub fn deepest_t_divisor(&self) -> usize {
        1 << self.temporal_pools.len()
    }

    /// Head tap list for an ablation over loss levels: the deepest `levels`
    /// taps of the canonical three-head arrangement.
    pub fn heads_for_levels(levels: usize, pools: usize) -> Result<Vec<TapPoint>> {
        if levels == 0 || levels > pools + 1 {
            return Err(Error::config(format!(
                "{levels} loss levels not expressible with {pools} temporal pools"
            )));
        }
        let mut heads = Vec::with_capacity(levels);
        for i in 0..levels - 1 {
            heads.push(TapPoint::PostPool(pools - (levels - 1) + i));
        }
        heads.push(TapPoint::Final);
        Ok(heads)
    }

    /// Pool placements for an ablation over pool count: the last `count`
    /// stages each get one.
    pub fn pools_for_count(count: usize, stages: usize) -> Result<Vec<usize>> {
        if count > stages {
            return Err(Error::config(format!(
                "{count} temporal pools do not fit {stages} stages"
            )));
        }
        Ok((stages - count..stages).collect())
    }
}

// ---------------------------------------------------------------------------
// Layout: flat layer list plus forward program

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerRole {
    Conv2 { cin: usize, cout: usize, k: usize, stride: usize, pad: usize },
    ConvTemporal { cin: usize, cout: usize, kt: usize },
    Conv3 { cin: usize, cout: usize, k: usize, stride: usize, pad: usize },
    Norm { channels: usize },
    Linear { in_dim: usize, out_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDesc {
    pub name: String,
    pub role: LayerRole,
    /// Spatial size of this layer's output.
    pub out_hw: (usize, usize),
    /// Frame-count divisor in effect at this layer (from earlier pools).
    pub t_div: usize,
    pub part2: bool,
}

/// One step of the forward program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Conv(usize),
    Norm(usize),
    Relu,
    /// Save the current value as a residual input; on `BlockEnd` it returns
    /// through the optional projection layers and is added back.
    BlockStart { shortcut: Option<(usize, usize)> },
    BlockEnd,
    /// Apply the temporal shift map stored in the given instance slot.
    Shift { slot: usize },
    MaxPoolSpatial { k: usize, stride: usize, pad: usize },
    TemporalPool,
    /// Evaluate classifier head `head` on the current value.
    Tap { head: usize },
}

/// Channel count a shift slot operates on; the instance materializes one
/// offset map per slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftSlot {
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub layers: Vec<LayerDesc>,
    pub pieces: Vec<Piece>,
    pub shift_slots: Vec<ShiftSlot>,
    /// Linear layer id per head, in spec head order.
    pub head_layers: Vec<usize>,
}

struct LayoutBuilder {
    layers: Vec<LayerDesc>,
    pieces: Vec<Piece>,
    shift_slots: Vec<ShiftSlot>,
    hw: (usize, usize),
    t_div: usize,
    part2: bool,
}

fn spatial_out(hw: (usize, usize), k: usize, stride: usize, pad: usize) -> Result<(usize, usize)> {
    let h = crate::kernels::conv_out_dim(hw.0, k, stride, pad);
    let w = crate::kernels::conv_out_dim(hw.1, k, stride, pad);
    match (h, w) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err(Error::shape(format!(
            "kernel {k} with stride {stride}, pad {pad} does not fit a {}x{} map",
            hw.0, hw.1
        ))),
    }
}

impl LayoutBuilder {
    fn layer(&mut self, name: String, role: LayerRole) -> usize {
        self.layers.push(LayerDesc {
            name,
            role,
            out_hw: self.hw,
            t_div: self.t_div,
            part2: self.part2,
        });
        self.layers.len() - 1
    }

    fn conv2(&mut self, name: String, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
        self.hw = spatial_out(self.hw, k, stride, pad)?;
        Ok(self.layer(name, LayerRole::Conv2 { cin, cout, k, stride, pad }))
    }

    fn conv3(&mut self, name: String, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
        self.hw = spatial_out(self.hw, k, stride, pad)?;
        Ok(self.layer(name, LayerRole::Conv3 { cin, cout, k, stride, pad }))
    }

    fn norm(&mut self, name: String, channels: usize) -> usize {
        self.layer(name, LayerRole::Norm { channels })
    }

    fn shift(&mut self, channels: usize) {
        self.shift_slots.push(ShiftSlot { channels });
        let slot = self.shift_slots.len() - 1;
        self.pieces.push(Piece::Shift { slot });
    }
}

/// A residual-branch convolution step within a block.
struct ConvStep {
    tag: &'static str,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    relu_after: bool,
}

impl NetworkSpec {
    pub fn layout(&self) -> Result<Layout> {
        self.layout_for(self.input_hw)
    }

    pub fn layout_for(&self, input_hw: (usize, usize)) -> Result<Layout> {
        self.validate()?;
        let mut b = LayoutBuilder {
            layers: Vec::new(),
            pieces: Vec::new(),
            shift_slots: Vec::new(),
            hw: input_hw,
            t_div: 1,
            part2: false,
        };

        let stem_w = self.scaled(self.stem_width);
        let c = b.conv2("stem.conv".to_string(), 3, stem_w, 7, 2, 3)?;
        b.pieces.push(Piece::Conv(c));
        let n = b.norm("stem.norm".to_string(), stem_w);
        b.pieces.push(Piece::Norm(n));
        b.pieces.push(Piece::Relu);
        b.hw = spatial_out(b.hw, 3, 2, 1)?;
        b.pieces.push(Piece::MaxPoolSpatial { k: 3, stride: 2, pad: 1 });

        let first_replaced = self.total_blocks() - self.replaced_tail;
        let mut block_index = 0usize;
        let mut in_ch = stem_w;
        let mut pools_done = 0usize;
        fn tap_pieces_for(heads: &[TapPoint], point: TapPoint, pieces: &mut Vec<Piece>) {
            for (h, tap) in heads.iter().enumerate() {
                if *tap == point {
                    pieces.push(Piece::Tap { head: h });
                }
            }
        }

        for (si, stage) in self.stages.iter().enumerate() {
            let stage_name = format!("res{}", si + 2);
            let out_ch = self.scaled(stage.width);
            for bi in 0..stage.blocks {
                let replaced = block_index >= first_replaced;
                if replaced {
                    b.part2 = true;
                }
                let stride = if bi == 0 { stage.stride } else { 1 };
                let prefix = format!("{stage_name}.b{bi}");
                let needs_projection = stride != 1 || in_ch != out_ch;

                let shortcut = if needs_projection {
                    let before = b.hw;
                    let sc = b.conv2(format!("{prefix}.short.conv"), in_ch, out_ch, 1, stride, 0)?;
                    let sn = b.norm(format!("{prefix}.short.norm"), out_ch);
                    b.hw = before;
                    Some((sc, sn))
                } else {
                    None
                };
                b.pieces.push(Piece::BlockStart { shortcut });

                let steps: Vec<ConvStep> = match stage.kind {
                    BlockKind::Basic => vec![
                        ConvStep { tag: "conv1", cin: in_ch, cout: out_ch, k: 3, stride, relu_after: true },
                        ConvStep { tag: "conv2", cin: out_ch, cout: out_ch, k: 3, stride: 1, relu_after: false },
                    ],
                    BlockKind::Bottleneck => {
                        let mid = (out_ch / 4).max(1);
                        vec![
                            ConvStep { tag: "conv1", cin: in_ch, cout: mid, k: 1, stride: 1, relu_after: true },
                            ConvStep { tag: "conv2", cin: mid, cout: mid, k: 3, stride, relu_after: true },
                            ConvStep { tag: "conv3", cin: mid, cout: out_ch, k: 1, stride: 1, relu_after: false },
                        ]
                    }
                };

                for step in steps {
                    if replaced && self.variant == TemporalVariant::Tscm {
                        b.shift(step.cin);
                    }
                    let pad = step.k / 2;
                    let cid = if replaced && self.variant == TemporalVariant::Conv3d && step.k == 3 {
                        b.conv3(
                            format!("{prefix}.{}", step.tag),
                            step.cin,
                            step.cout,
                            step.k,
                            step.stride,
                            pad,
                        )?
                    } else {
                        b.conv2(
                            format!("{prefix}.{}", step.tag),
                            step.cin,
                            step.cout,
                            step.k,
                            step.stride,
                            pad,
                        )?
                    };
                    b.pieces.push(Piece::Conv(cid));
                    if replaced && self.variant == TemporalVariant::Conv2Plus1d && step.k == 3 {
                        let tid = b.layer(
                            format!("{prefix}.{}t", step.tag),
                            LayerRole::ConvTemporal { cin: step.cout, cout: step.cout, kt: 3 },
                        );
                        b.pieces.push(Piece::Conv(tid));
                    }
                    let nid = b.norm(format!("{prefix}.{}norm", step.tag), step.cout);
                    b.pieces.push(Piece::Norm(nid));
                    if step.relu_after {
                        b.pieces.push(Piece::Relu);
                    }
                }

                b.pieces.push(Piece::BlockEnd);
                in_ch = out_ch;
                block_index += 1;
            }

            if self.temporal_pools.contains(&si) {
                // pools and everything after them belong to the improved part
                b.part2 = true;
                b.t_div *= 2;
                b.pieces.push(Piece::TemporalPool);
                tap_pieces_for(&self.heads, TapPoint::PostPool(pools_done), &mut b.pieces);
                pools_done += 1;
            }
        }
        b.part2 = true;
        tap_pieces_for(&self.heads, TapPoint::Final, &mut b.pieces);

        let final_t_div = b.t_div;
        let mut head_layers = Vec::with_capacity(self.heads.len());
        for (h, tap) in self.heads.iter().enumerate() {
            let channels = match tap {
                TapPoint::Final => in_ch,
                TapPoint::PostPool(k) => {
                    let stage = self.temporal_pools[*k];
                    self.scaled(self.stages[stage].width)
                }
            };
            b.t_div = match tap {
                TapPoint::Final => final_t_div,
                TapPoint::PostPool(k) => 1 << (k + 1),
            };
            let id = b.layer(
                format!("head{h}.linear"),
                LayerRole::Linear { in_dim: channels, out_dim: self.vocab + 1 },
            );
            head_layers.push(id);
        }

        Ok(Layout {
            layers: b.layers,
            pieces: b.pieces,
            shift_slots: b.shift_slots,
            head_layers,
        })
    }
}

// ---------------------------------------------------------------------------
// Text format

impl NetworkSpec {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("name {}\n", self.name));
        s.push_str(&format!("stem_width {}\n", self.stem_width));
        s.push_str(&format!("width_multiplier {}\n", self.width_multiplier));
        s.push_str(&format!("input {}x{}\n", self.input_hw.0, self.input_hw.1));
        s.push_str(&format!("variant {}\n", self.variant.name()));
        s.push_str(&format!("replaced_tail {}\n", self.replaced_tail));
        s.push_str(&format!("shift_mode {}\n", self.tscm.mode.name()));
        s.push_str(&format!("shift_span {}\n", self.tscm.span));
        s.push_str(&format!("shift_seed {}\n", self.tscm.seed));
        s.push_str(&format!("tsm_fraction {}\n", self.tscm.tsm_fraction));
        s.push_str("temporal_pools");
        for p in &self.temporal_pools {
            s.push_str(&format!(" {p}"));
        }
        s.push('\n');
        s.push_str("heads");
        for h in &self.heads {
            s.push_str(&format!(" {}", h.name()));
        }
        s.push('\n');
        s.push_str(&format!("vocab {}\n", self.vocab));
        for st in &self.stages {
            s.push_str(&format!(
                "stage {} {} {} {}\n",
                st.kind.name(),
                st.blocks,
                st.width,
                st.stride
            ));
        }
        s
    }

    /// Parses the text emitted by [`NetworkSpec::to_text`]. Blank lines and
    /// `#` comments are skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = NetworkSpec {
            name: "custom".to_string(),
            stem_width: 64,
            stages: Vec::new(),
            replaced_tail: 0,
            variant: TemporalVariant::Tscm,
            tscm: TscmSpec::default(),
            temporal_pools: Vec::new(),
            heads: vec![TapPoint::Final],
            vocab: 1,
            width_multiplier: 1.0,
            input_hw: (224, 224),
        };
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let rest: Vec<&str> = it.collect();
            let one = || -> Result<&str> {
                rest.first()
                    .copied()
                    .ok_or_else(|| Error::config(format!("\"{key}\" needs a value")))
            };
            match key {
                "name" => spec.name = one()?.to_string(),
                "stem_width" => spec.stem_width = parse_num(key, one()?)?,
                "width_multiplier" => spec.width_multiplier = parse_num(key, one()?)?,
                "input" => {
                    let v = one()?;
                    let (h, w) = v
                        .split_once('x')
                        .ok_or_else(|| Error::config(format!("input \"{v}\" is not HxW")))?;
                    spec.input_hw = (parse_num("input", h)?, parse_num("input", w)?);
                }
                "variant" => spec.variant = TemporalVariant::parse(one()?)?,
                "replaced_tail" => spec.replaced_tail = parse_num(key, one()?)?,
                "shift_mode" => spec.tscm.mode = crate::tscm::ShiftMode::parse(one()?)?,
                "shift_span" => spec.tscm.span = parse_num(key, one()?)?,
                "shift_seed" => spec.tscm.seed = parse_num(key, one()?)?,
                "tsm_fraction" => spec.tscm.tsm_fraction = parse_num(key, one()?)?,
                "temporal_pools" => {
                    spec.temporal_pools = rest
                        .iter()
                        .map(|v| parse_num(key, v))
                        .collect::<Result<Vec<usize>>>()?;
                }
                "heads" => {
                    if rest.is_empty() {
                        return Err(Error::config("\"heads\" needs at least one tap"));
                    }
                    spec.heads = rest
                        .iter()
                        .map(|v| TapPoint::parse(v))
                        .collect::<Result<Vec<TapPoint>>>()?;
                }
                "vocab" => spec.vocab = parse_num(key, one()?)?,
                "stage" => {
                    if rest.len() != 4 {
                        return Err(Error::config(
                            "\"stage\" needs: kind blocks width stride",
                        ));
                    }
                    spec.stages.push(StageSpec {
                        kind: BlockKind::parse(rest[0])?,
                        blocks: parse_num("stage blocks", rest[1])?,
                        width: parse_num("stage width", rest[2])?,
                        stride: parse_num("stage stride", rest[3])?,
                    });
                }
                other => {
                    return Err(Error::config(format!(
                        "unknown network key \"{other}\""
                    )))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub(crate) fn parse_num<T: core::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::config(format!("cannot parse \"{v}\" for {key}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_replaces_seven_blocks() {
        let spec = NetworkSpec::preset("resnett34").unwrap();
        assert_eq!(spec.replaced_tail, 7);
        assert_eq!(spec.total_blocks(), 16);
        assert_eq!(spec.heads.len(), 3);
    }

    #[test]
    fn desk_preset_scales_widths() {
        let spec = NetworkSpec::preset("resnett34-desk").unwrap();
        assert_eq!(spec.scaled(spec.stem_width), 8);
        assert_eq!(spec.scaled(512), 64);
        assert_eq!(spec.input_hw, (32, 32));
    }

    #[test]
    fn over_replacement_is_rejected() {
        let mut spec = NetworkSpec::preset("resnett34").unwrap();
        spec.replaced_tail = 17;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn text_round_trip_preserves_spec() {
        for name in ["resnett34", "resnett50", "resnett34-desk"] {
            let spec = NetworkSpec::preset(name).unwrap();
            let text = spec.to_text();
            let back = NetworkSpec::parse(&text).unwrap();
            assert_eq!(spec, back);
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(NetworkSpec::parse("bogus 3\n").is_err());
    }

    #[test]
    fn layout_marks_replaced_tail_as_part2() {
        let spec = NetworkSpec::preset("resnett34-desk").unwrap();
        let layout = spec.layout().unwrap();
        let part1: Vec<&str> = layout
            .layers
            .iter()
            .filter(|l| !l.part2)
            .map(|l| l.name.as_str())
            .collect();
        // the first two res4 blocks stay original; the last four move
        assert!(part1.iter().any(|n| n.starts_with("res4.b1")));
        assert!(!part1.iter().any(|n| n.starts_with("res4.b2")));
        assert!(!part1.iter().any(|n| n.starts_with("res5")));
        assert!(part1.iter().any(|n| *n == "stem.conv"));
    }

    #[test]
    fn layout_counts_shift_slots_per_replaced_conv() {
        let spec = NetworkSpec::preset("resnett34").unwrap();
        let layout = spec.layout().unwrap();
        // 7 replaced basic blocks, two convolutions each
        assert_eq!(layout.shift_slots.len(), 14);
        let plain = {
            let mut s = spec.clone();
            s.variant = TemporalVariant::Plain2d;
            s.layout().unwrap()
        };
        assert!(plain.shift_slots.is_empty());
        assert_eq!(plain.layers, layout.layers);
    }

    #[test]
    fn head_geometry_tracks_pools() {
        let spec = NetworkSpec::preset("resnett34-desk").unwrap();
        let layout = spec.layout().unwrap();
        assert_eq!(layout.head_layers.len(), 3);
        let head0 = &layout.layers[layout.head_layers[0]];
        let head2 = &layout.layers[layout.head_layers[2]];
        assert_eq!(head0.t_div, 2);
        assert_eq!(head2.t_div, 4);
        match (&head0.role, &head2.role) {
            (
                LayerRole::Linear { in_dim: a, out_dim: va },
                LayerRole::Linear { in_dim: b, out_dim: vb },
            ) => {
                assert_eq!(*a, 32);
                assert_eq!(*b, 64);
                assert_eq!(*va, 9);
                assert_eq!(*vb, 9);
            }
            _ => panic!("head layers must be linear"),
        }
    }

    #[test]
    fn levels_helper_picks_deepest_taps() {
        assert_eq!(
            NetworkSpec::heads_for_levels(3, 2).unwrap(),
            vec![TapPoint::PostPool(0), TapPoint::PostPool(1), TapPoint::Final]
        );
        assert_eq!(
            NetworkSpec::heads_for_levels(1, 2).unwrap(),
            vec![TapPoint::Final]
        );
        assert_eq!(
            NetworkSpec::heads_for_levels(2, 2).unwrap(),
            vec![TapPoint::PostPool(1), TapPoint::Final]
        );
        assert!(NetworkSpec::heads_for_levels(4, 2).is_err());
    }

    #[test]
    fn pools_helper_fills_from_the_tail() {
        assert_eq!(NetworkSpec::pools_for_count(2, 4).unwrap(), vec![2, 3]);
        assert_eq!(NetworkSpec::pools_for_count(0, 4).unwrap(), Vec::<usize>::new());
        assert_eq!(NetworkSpec::pools_for_count(3, 4).unwrap(), vec![1, 2, 3]);
    }
}
