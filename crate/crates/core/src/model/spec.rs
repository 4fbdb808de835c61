use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four network variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    /// Plain encoder–decoder.
    Unet,
    /// Two self-attention blocks at the bottleneck, no positional encoding.
    MhsaNope,
    /// Two self-attention blocks with a learnable positional embedding table.
    MhsaPe,
    /// Edge prior branch feeding two edge-guided attention blocks.
    Edgeattnet,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Unet,
        VariantKind::MhsaNope,
        VariantKind::MhsaPe,
        VariantKind::Edgeattnet,
    ];

    pub fn has_attention(self) -> bool {
        self != VariantKind::Unet
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Unet => "unet",
            VariantKind::MhsaNope => "mhsa-nope",
            VariantKind::MhsaPe => "mhsa-pe",
            VariantKind::Edgeattnet => "edgeattnet",
        }
    }

    /// Target trainable-parameter total at the reference configuration.
    pub fn reference_param_count(self) -> u64 {
        match self {
            VariantKind::Unet => 31_030_593,
            VariantKind::MhsaNope => 35_231_041,
            VariantKind::MhsaPe => 35_362_113,
            VariantKind::Edgeattnet => 22_658_891,
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "unet" | "u-net" => Ok(VariantKind::Unet),
            "mhsa-nope" => Ok(VariantKind::MhsaNope),
            "mhsa-pe" => Ok(VariantKind::MhsaPe),
            "edgeattnet" => Ok(VariantKind::Edgeattnet),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?} (expected unet, mhsa-nope, mhsa-pe or edgeattnet)"
            ))),
        }
    }
}

/// Full architectural description of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: VariantKind,
    pub in_channels: usize,
    pub encoder_channels: Vec<usize>,
    pub bottleneck_channels: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub n_attention_blocks: usize,
    pub dropout_p: f64,
    pub input_height: usize,
    pub input_width: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub ln_eps: f64,
}

impl ModelSpec {
    /// Reference configuration: encoder `[64, 128, 256, 512]`, four heads of
    /// width 128, 256×256 input. The baselines expand the bottleneck to 1024
    /// channels; the edge-guided network keeps it at 512.
    pub fn reference(variant: VariantKind) -> Self {
        Self::scaled(variant, 64, 256)
    }

    /// Same topology with encoder widths `[base, 2·base, 4·base, 8·base]`
    /// and heads of width `2·base`.
    pub fn scaled(variant: VariantKind, base: usize, input_size: usize) -> Self {
        let encoder_channels = vec![base, 2 * base, 4 * base, 8 * base];
        let bottleneck_channels = match variant {
            VariantKind::Edgeattnet => 8 * base,
            _ => 16 * base,
        };
        Self {
            variant,
            in_channels: 1,
            encoder_channels,
            bottleneck_channels,
            heads: 4,
            head_dim: 2 * base,
            n_attention_blocks: 2,
            dropout_p: 0.1,
            input_height: input_size,
            input_width: input_size,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            ln_eps: 1e-5,
        }
    }

    pub fn with_input_size(mut self, height: usize, width: usize) -> Self {
        self.input_height = height;
        self.input_width = width;
        self
    }

    /// Channel width seen by the attention blocks.
    pub fn attention_width(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn depth(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn downsample_factor(&self) -> usize {
        1 << self.depth()
    }

    pub fn bottleneck_size(&self) -> (usize, usize) {
        let f = self.downsample_factor();
        (self.input_height / f, self.input_width / f)
    }

    /// Whether 1×1 convolutions adapt the bottleneck width to the attention
    /// width and back.
    pub fn needs_attention_adapter(&self) -> bool {
        self.variant.has_attention() && self.bottleneck_channels != self.attention_width()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.encoder_channels.is_empty() {
            return Err(Error::invalid("need input channels and at least one encoder stage"));
        }
        if self.encoder_channels.iter().any(|&c| c == 0) || self.bottleneck_channels == 0 {
            return Err(Error::invalid("channel widths must be positive"));
        }
        let f = self.downsample_factor();
        if self.input_height == 0
            || self.input_width == 0
            || self.input_height % f != 0
            || self.input_width % f != 0
        {
            return Err(Error::invalid(format!(
                "input {}x{} must be a positive multiple of {f}",
                self.input_height, self.input_width
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        if self.variant.has_attention() {
            if self.heads == 0 || self.head_dim == 0 || self.n_attention_blocks == 0 {
                return Err(Error::invalid("attention variants need heads, head_dim and blocks"));
            }
            let last = *self.encoder_channels.last().expect("non-empty");
            if self.attention_width() != last {
                return Err(Error::invalid(format!(
                    "heads x head_dim = {} must equal the deepest encoder width {last}",
                    self.attention_width()
                )));
            }
        }
        Ok(())
    }

    /// Every trainable tensor of the network, in construction order.
    pub fn layout(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        let mut cin = self.in_channels;
        for (i, &c) in self.encoder_channels.iter().enumerate() {
            double_conv(&mut slots, &format!("enc{i}"), LayerGroup::Encoder, cin, c);
            cin = c;
        }
        let bott = self.bottleneck_channels;
        double_conv(&mut slots, "bottleneck", LayerGroup::Bottleneck, cin, bott);

        if self.variant.has_attention() {
            let width = self.attention_width();
            if self.needs_attention_adapter() {
                conv(&mut slots, "attn.reduce", LayerGroup::Attention, bott, width, 1);
            }
            if self.variant == VariantKind::MhsaPe {
                let (h, w) = self.bottleneck_size();
                slots.push(ParamSlot::new(
                    "attn.pos_embedding",
                    vec![h * w, width],
                    LayerGroup::PositionalEmbedding,
                    Init::Zeros,
                ));
            }
            for j in 0..self.n_attention_blocks {
                for proj in ["q", "k", "v", "out"] {
                    let name = format!("attn.block{j}.{proj}");
                    slots.push(ParamSlot::new(
                        format!("{name}.weight"),
                        vec![width, width],
                        LayerGroup::Attention,
                        Init::XavierUniform { fan_in: width, fan_out: width },
                    ));
                    slots.push(ParamSlot::new(
                        format!("{name}.bias"),
                        vec![width],
                        LayerGroup::Attention,
                        Init::Zeros,
                    ));
                }
                norm(&mut slots, &format!("attn.block{j}.norm"), LayerGroup::Attention, width);
            }
            if self.needs_attention_adapter() {
                conv(&mut slots, "attn.expand", LayerGroup::Attention, width, bott, 1);
            }
            if self.variant == VariantKind::Edgeattnet {
                conv(&mut slots, "edge.conv", LayerGroup::EdgePrior, self.in_channels, 1, 3);
                conv(&mut slots, "edge.proj", LayerGroup::EdgePrior, 1, width, 1);
            }
        }

        let mut below = bott;
        for (i, &c) in self.encoder_channels.iter().enumerate().rev() {
            let prefix = format!("dec{i}");
            slots.push(ParamSlot::new(
                format!("{prefix}.up.weight"),
                vec![below, c, 2, 2],
                LayerGroup::Decoder,
                Init::KaimingUniform { fan_in: below },
            ));
            slots.push(ParamSlot::new(
                format!("{prefix}.up.bias"),
                vec![c],
                LayerGroup::Decoder,
                Init::Zeros,
            ));
            double_conv(&mut slots, &prefix, LayerGroup::Decoder, 2 * c, c);
            below = c;
        }
        conv(&mut slots, "head", LayerGroup::Head, below, 1, 1);
        slots
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> u64 {
        self.layout().iter().map(|s| s.numel() as u64).sum()
    }

    /// Names of the batch-normalization layers, in construction order.
    pub fn batchnorm_layers(&self) -> Vec<(String, usize)> {
        self.layout()
            .iter()
            .filter_map(|s| {
                s.name
                    .strip_suffix(".gamma")
                    .filter(|p| !p.contains(".norm"))
                    .map(|p| (p.to_string(), s.shape[0]))
            })
            .collect()
    }
}

/// Coarse location of a parameter within the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerGroup {
    Encoder,
    Bottleneck,
    Attention,
    PositionalEmbedding,
    EdgePrior,
    Decoder,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Zeros,
    Ones,
    KaimingUniform { fan_in: usize },
    XavierUniform { fan_in: usize, fan_out: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: LayerGroup,
    pub init: Init,
}

impl ParamSlot {
    fn new(name: impl Into<String>, shape: Vec<usize>, group: LayerGroup, init: Init) -> Self {
        Self {
            name: name.into(),
            shape,
            group,
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_batchnorm_affine(&self) -> bool {
        (self.name.ends_with(".gamma") || self.name.ends_with(".beta")) && self.name.contains(".bn")
    }
}

fn conv(slots: &mut Vec<ParamSlot>, prefix: &str, group: LayerGroup, cin: usize, cout: usize, k: usize) {
    slots.push(ParamSlot::new(
        format!("{prefix}.weight"),
        vec![cout, cin, k, k],
        group,
        Init::KaimingUniform { fan_in: cin * k * k },
    ));
    slots.push(ParamSlot::new(format!("{prefix}.bias"), vec![cout], group, Init::Zeros));
}

fn norm(slots: &mut Vec<ParamSlot>, prefix: &str, group: LayerGroup, c: usize) {
    slots.push(ParamSlot::new(format!("{prefix}.gamma"), vec![c], group, Init::Ones));
    slots.push(ParamSlot::new(format!("{prefix}.beta"), vec![c], group, Init::Zeros));
}

fn double_conv(slots: &mut Vec<ParamSlot>, prefix: &str, group: LayerGroup, cin: usize, cout: usize) {
    conv(slots, &format!("{prefix}.conv1"), group, cin, cout, 3);
    norm(slots, &format!("{prefix}.bn1"), group, cout);
    conv(slots, &format!("{prefix}.conv2"), group, cout, cout, 3);
    norm(slots, &format!("{prefix}.bn2"), group, cout);
}
