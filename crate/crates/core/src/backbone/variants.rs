//! Model variants, weight initialization, parameter counting, and the
//! eigenvalue report.

use super::{BackboneConfig, BackboneError, BackboneWeights, Block, LayerNorm, PatchEmbed};
use crate::mixers::{
    AttentionMixer, EinFftMixer, HydraMixer, MixerWeights, MlpMixer, MvMixer, VimMixer,
};
use crate::rng;
use serde::{Deserialize, Serialize};

/// Sequence-mixer families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeqKind {
    Mv,
    Vim,
    Hydra,
    Attention,
}

/// Channel-mixer families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChanKind {
    EinFft,
    Mlp,
}

/// The six comparison configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    VimEinFft,
    HydraEinFft,
    ViT12,
    ViT24,
    HydraHybrid,
    MvHybrid,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::VimEinFft,
        ModelVariant::HydraEinFft,
        ModelVariant::ViT12,
        ModelVariant::ViT24,
        ModelVariant::HydraHybrid,
        ModelVariant::MvHybrid,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "vim_einfft" => ModelVariant::VimEinFft,
            "hydra_einfft" => ModelVariant::HydraEinFft,
            "vit12" => ModelVariant::ViT12,
            "vit24" => ModelVariant::ViT24,
            "hydra_hybrid" => ModelVariant::HydraHybrid,
            "mv_hybrid" => ModelVariant::MvHybrid,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::VimEinFft => "vim_einfft",
            ModelVariant::HydraEinFft => "hydra_einfft",
            ModelVariant::ViT12 => "vit12",
            ModelVariant::ViT24 => "vit24",
            ModelVariant::HydraHybrid => "hydra_hybrid",
            ModelVariant::MvHybrid => "mv_hybrid",
        }
    }
}

/// Model scale. `Toy` is the working scale for every numerical test;
/// `Small` exists for layout and parameter-count checks only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Toy,
    Small,
}

impl Scale {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "toy" => Some(Scale::Toy),
            "small" => Some(Scale::Small),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scale::Toy => "toy",
            Scale::Small => "small",
        }
    }
}

/// Build the layout for a variant at a scale.
///
/// Small: 384 channels, depth 24 (12 for the shallow attention baseline),
/// hybrids split half state-space half attention. Toy: 64 channels, depth 8
/// (4 for the shallow baseline), 64x64 inputs.
pub fn make_variant(v: ModelVariant, scale: Scale) -> BackboneConfig {
    let (channels, image_size, heads, state_dim, dt_rank, full_depth, shallow_depth) = match scale
    {
        Scale::Small => (384, 256, 6, 16, 384 / 16, 24, 12),
        Scale::Toy => (64, 64, 4, 4, 64 / 4, 8, 4),
    };
    let depth = match v {
        ModelVariant::ViT12 => shallow_depth,
        _ => full_depth,
    };
    let layout: Vec<(SeqKind, ChanKind)> = match v {
        ModelVariant::VimEinFft => vec![(SeqKind::Vim, ChanKind::EinFft); depth],
        ModelVariant::HydraEinFft => vec![(SeqKind::Hydra, ChanKind::EinFft); depth],
        ModelVariant::ViT12 | ModelVariant::ViT24 => {
            vec![(SeqKind::Attention, ChanKind::Mlp); depth]
        }
        ModelVariant::HydraHybrid => half_half(SeqKind::Hydra, depth),
        ModelVariant::MvHybrid => half_half(SeqKind::Mv, depth),
    };
    BackboneConfig {
        image_size,
        patch_size: 16,
        channels,
        depth,
        layout,
        norm_eps: 1e-6,
        heads,
        state_dim,
        dt_rank,
        einfft_blocks: 4,
        expand: 2,
    }
}

fn half_half(ssm: SeqKind, depth: usize) -> Vec<(SeqKind, ChanKind)> {
    let half = depth / 2;
    let mut layout = vec![(ssm, ChanKind::EinFft); half];
    layout.extend(vec![(SeqKind::Attention, ChanKind::Mlp); depth - half]);
    layout
}

/// Deterministically initialize weights for a configuration.
pub fn init_weights(cfg: &BackboneConfig, seed: u64) -> BackboneWeights {
    let mut r = rng::stream(seed, "backbone-weights");
    let mut patch = PatchEmbed::zeros(cfg);
    let std = 1.0 / (cfg.patch_dim() as f64).sqrt();
    patch.proj = rng::scaled_normal_vec(&mut r, patch.proj.len(), std);
    patch.pos = rng::scaled_normal_vec(&mut r, patch.pos.len(), 0.02);

    let blocks = cfg
        .layout
        .iter()
        .map(|&(seq_kind, chan_kind)| {
            let seq = match seq_kind {
                SeqKind::Mv => MixerWeights::Mv(MvMixer::init(
                    cfg.channels,
                    cfg.state_dim,
                    cfg.dt_rank,
                    &mut r,
                )),
                SeqKind::Vim => MixerWeights::Vim(VimMixer::init(
                    cfg.channels,
                    cfg.expand,
                    cfg.state_dim,
                    cfg.dt_rank,
                    &mut r,
                )),
                SeqKind::Hydra => MixerWeights::Hydra(HydraMixer::init(
                    cfg.channels,
                    cfg.expand,
                    cfg.state_dim,
                    cfg.dt_rank,
                    &mut r,
                )),
                SeqKind::Attention => {
                    MixerWeights::Attention(AttentionMixer::init(cfg.channels, cfg.heads, &mut r))
                }
            };
            let chan = match chan_kind {
                ChanKind::EinFft => MixerWeights::EinFft(EinFftMixer::init(
                    cfg.channels,
                    cfg.einfft_blocks,
                    &mut r,
                )),
                ChanKind::Mlp => MixerWeights::Mlp(MlpMixer::init(cfg.channels, &mut r)),
            };
            Block {
                norm1: LayerNorm::new(cfg.channels, cfg.norm_eps),
                seq,
                norm2: LayerNorm::new(cfg.channels, cfg.norm_eps),
                chan,
            }
        })
        .collect();

    BackboneWeights {
        patch,
        blocks,
        final_norm: LayerNorm::new(cfg.channels, cfg.norm_eps),
    }
}

/// Analytic parameter count of a configuration (matches the constructed
/// weights exactly; covered by a test).
pub fn parameter_count(cfg: &BackboneConfig) -> usize {
    let c = cfg.channels;
    let e = cfg.expand * c;
    let n = cfg.state_dim;
    let r = cfg.dt_rank;
    // selective projections on a branch of the given width
    let sel = |w: usize| 2 * w * r + 3 * w * n + 2 * w;
    let mut total = cfg.patch_dim() * c + c + cfg.tokens() * c; // patch embed
    total += 2 * c; // final norm
    for &(seq, chan) in &cfg.layout {
        total += 4 * c; // two layer norms
        total += match seq {
            SeqKind::Mv => 2 * c * 2 * c + 2 * (3 * c) + sel(c),
            SeqKind::Vim => c * 2 * e + e * c + 2 * (3 * e) + 2 * sel(e),
            SeqKind::Hydra => c * 2 * e + e * c + 3 * e + 2 * sel(e) + e,
            SeqKind::Attention => 4 * c * c,
        };
        total += match chan {
            ChanKind::EinFft => 4 * c * c / cfg.einfft_blocks + c,
            ChanKind::Mlp => 8 * c * c,
        };
    }
    total
}

/// Histogram summary of the realized eigenvalues of every state-space
/// block in a weight set.
#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub bin_edges: Vec<f64>,
    pub bin_counts: Vec<usize>,
    pub all_negative: bool,
}

/// Collect -exp(a_log) over every SSM channel/state of the model.
pub fn eigen_report(weights: &BackboneWeights, bins: usize) -> Result<EigenReport, BackboneError> {
    let mut values = Vec::new();
    for block in &weights.blocks {
        match &block.seq {
            MixerWeights::Mv(m) => values.extend(m.ssm.a_log.realize()),
            MixerWeights::Vim(m) => {
                values.extend(m.ssm_fwd.a_log.realize());
                values.extend(m.ssm_bwd.a_log.realize());
            }
            MixerWeights::Hydra(m) => {
                values.extend(m.ssm_fwd.a_log.realize());
                values.extend(m.ssm_bwd.a_log.realize());
            }
            _ => {}
        }
    }
    if values.is_empty() {
        return Err(BackboneError::NoSsmBlocks);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = bins.max(1);
    let span = (max - min).max(1e-12);
    let mut bin_counts = vec![0usize; bins];
    for &v in &values {
        let idx = (((v - min) / span) * bins as f64).floor() as usize;
        bin_counts[idx.min(bins - 1)] += 1;
    }
    let bin_edges = (0..=bins)
        .map(|i| min + span * i as f64 / bins as f64)
        .collect();
    Ok(EigenReport {
        count: values.len(),
        min,
        max,
        bin_edges,
        bin_counts,
        all_negative: values.iter().all(|&v| v < 0.0),
    })
}
