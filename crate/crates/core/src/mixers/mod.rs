//! Sequence- and channel-mixing blocks of the isotropic backbone.
//!
//! Sequence mixers: `MvMixer` (split projection with a selective-scan branch
//! and a convolutional skip branch), `VimMixer` (gated bidirectional
//! selective scan with causal convolutions), `HydraMixer` (gated
//! quasiseparable bidirectional scan with a regular convolution), and
//! `AttentionMixer` (multi-head softmax self-attention).
//!
//! Channel mixers: `EinFftMixer` (block-diagonal complex mixing in the 2-D
//! Fourier domain of the token grid) and `MlpMixer` (tokenwise GELU MLP).
//!
//! Every block is a pure forward transform on a (batch, tokens, channels)
//! tensor and carries an exact reverse-mode pass; the tests hold each one to
//! central finite differences.

mod attention;
mod einfft;
mod mlp;
mod mv;
mod ssm_branch;
mod vim;

pub use attention::{AttentionCache, AttentionMixer};
pub use einfft::{EinFftCache, EinFftMixer};
pub use mlp::{MlpCache, MlpMixer};
pub use mv::{MvCache, MvMixer};
pub use ssm_branch::SelectiveProjections;
pub use vim::{HydraCache, HydraMixer, VimCache, VimMixer};

use crate::act::{dsilu, silu};
use crate::tensor::{ShapeError, Tensor3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MixerError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("heads {heads} must divide channels {channels}")]
    HeadsMismatch { heads: usize, channels: usize },
    #[error("block count {blocks} must divide channels {channels}")]
    BlockMismatch { blocks: usize, channels: usize },
    #[error("inverse transform left imaginary residual {residual:.3e} (> {limit:.1e})")]
    ConjugateSymmetryViolation { residual: f64, limit: f64 },
}

/// Branch activation; `Identity` exists so wiring tests can bypass the
/// nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu(x),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Silu => dsilu(x),
            Activation::Identity => 1.0,
        }
    }
}

/// Bias-free linear map y = x W with W stored row-major (in_dim x out_dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: vec![0.0; in_dim * out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut l = Self::zeros(dim, dim);
        for i in 0..dim {
            l.w[i * dim + i] = 1.0;
        }
        l
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        crate::tensor::matmul(x, &self.w, rows, self.in_dim, self.out_dim)
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], rows: usize, dx: &mut [f64], dw: &mut Linear) {
        crate::tensor::matmul_backward(
            x,
            &self.w,
            dy,
            rows,
            self.in_dim,
            self.out_dim,
            dx,
            &mut dw.w,
        );
    }
}

/// Depthwise width-3 convolution over the token sequence.
///
/// `causal = false` pads one zero on each side (symmetric, non-causal);
/// `causal = true` sees only the current and two previous tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dDepthwise {
    pub kernel: Vec<f64>, // channels x 3
    pub channels: usize,
    pub causal: bool,
}

impl Conv1dDepthwise {
    pub const WIDTH: usize = 3;

    pub fn zeros(channels: usize, causal: bool) -> Self {
        Self {
            kernel: vec![0.0; channels * Self::WIDTH],
            channels,
            causal,
        }
    }

    /// Identity kernel: center tap 1 (symmetric) or last tap 1 (causal).
    pub fn identity(channels: usize, causal: bool) -> Self {
        let mut c = Self::zeros(channels, causal);
        let tap = if causal { 2 } else { 1 };
        for ch in 0..channels {
            c.kernel[ch * Self::WIDTH + tap] = 1.0;
        }
        c
    }

    #[inline]
    fn src_token(&self, t: usize, j: usize, tokens: usize) -> Option<usize> {
        let offset = if self.causal { j as isize - 2 } else { j as isize - 1 };
        let src = t as isize + offset;
        (src >= 0 && src < tokens as isize).then_some(src as usize)
    }

    /// Convolve a (tokens x channels) slab.
    pub fn forward(&self, x: &[f64], tokens: usize) -> Vec<f64> {
        let ch = self.channels;
        debug_assert_eq!(x.len(), tokens * ch);
        let mut y = vec![0.0; tokens * ch];
        for t in 0..tokens {
            for j in 0..Self::WIDTH {
                let Some(src) = self.src_token(t, j, tokens) else {
                    continue;
                };
                for c in 0..ch {
                    y[t * ch + c] += self.kernel[c * Self::WIDTH + j] * x[src * ch + c];
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        tokens: usize,
        dx: &mut [f64],
        dk: &mut Conv1dDepthwise,
    ) {
        let ch = self.channels;
        for t in 0..tokens {
            for j in 0..Self::WIDTH {
                let Some(src) = self.src_token(t, j, tokens) else {
                    continue;
                };
                for c in 0..ch {
                    dx[src * ch + c] += self.kernel[c * Self::WIDTH + j] * dy[t * ch + c];
                    dk.kernel[c * Self::WIDTH + j] += x[src * ch + c] * dy[t * ch + c];
                }
            }
        }
    }
}

/// Variant-tagged weight bundle over every mixer family.
#[derive(Debug, Clone)]
pub enum MixerWeights {
    Mv(MvMixer),
    Vim(VimMixer),
    Hydra(HydraMixer),
    Attention(AttentionMixer),
    EinFft(EinFftMixer),
    Mlp(MlpMixer),
}

impl MixerWeights {
    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3, MixerError> {
        match self {
            MixerWeights::Mv(m) => Ok(m.forward_cached(x)?.0),
            MixerWeights::Vim(m) => Ok(m.forward_cached(x)?.0),
            MixerWeights::Hydra(m) => Ok(m.forward_cached(x)?.0),
            MixerWeights::Attention(m) => Ok(m.forward_cached(x)?.0),
            MixerWeights::EinFft(m) => Ok(m.forward_cached(x)?.0),
            MixerWeights::Mlp(m) => Ok(m.forward_cached(x)?.0),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MixerWeights::Mv(_) => "mv",
            MixerWeights::Vim(_) => "vim",
            MixerWeights::Hydra(_) => "hydra",
            MixerWeights::Attention(_) => "attention",
            MixerWeights::EinFft(_) => "einfft",
            MixerWeights::Mlp(_) => "mlp",
        }
    }
}

/// Named-tensor traversal used by the weight container and the
/// finite-difference harness.
pub trait VisitParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, data| n += data.len());
        n
    }
}

impl VisitParams for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(prefix, &[self.in_dim, self.out_dim], &self.w);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        f(prefix, &[self.in_dim, self.out_dim], &mut self.w);
    }
}

impl VisitParams for Conv1dDepthwise {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(prefix, &[self.channels, Self::WIDTH], &self.kernel);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        f(prefix, &[self.channels, Self::WIDTH], &mut self.kernel);
    }
}

/// Contiguous (tokens x channels) slab of one batch sample.
pub(crate) fn batch_slab(x: &Tensor3, b: usize) -> &[f64] {
    let stride = x.tokens * x.channels;
    &x.data[b * stride..(b + 1) * stride]
}

/// Split a (tokens x 2w) slab into two (tokens x w) halves by column.
pub(crate) fn split_half_cols(h: &[f64], tokens: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut left = vec![0.0; tokens * w];
    let mut right = vec![0.0; tokens * w];
    for t in 0..tokens {
        left[t * w..(t + 1) * w].copy_from_slice(&h[t * 2 * w..t * 2 * w + w]);
        right[t * w..(t + 1) * w].copy_from_slice(&h[t * 2 * w + w..(t + 1) * 2 * w]);
    }
    (left, right)
}

/// Inverse of `split_half_cols`.
pub(crate) fn concat_cols(left: &[f64], right: &[f64], tokens: usize, w: usize) -> Vec<f64> {
    let mut h = vec![0.0; tokens * 2 * w];
    for t in 0..tokens {
        h[t * 2 * w..t * 2 * w + w].copy_from_slice(&left[t * w..(t + 1) * w]);
        h[t * 2 * w + w..(t + 1) * 2 * w].copy_from_slice(&right[t * w..(t + 1) * w]);
    }
    h
}

/// Reverse the token order of a (tokens x w) slab.
pub(crate) fn reverse_tokens(x: &[f64], tokens: usize, w: usize) -> Vec<f64> {
    let mut y = vec![0.0; tokens * w];
    for t in 0..tokens {
        y[t * w..(t + 1) * w].copy_from_slice(&x[(tokens - 1 - t) * w..(tokens - t) * w]);
    }
    y
}

/// Shift a slab one token later (row 0 becomes zero); makes a scan output
/// strictly causal.
pub(crate) fn shift_tokens_right(x: &[f64], tokens: usize, w: usize) -> Vec<f64> {
    let mut y = vec![0.0; tokens * w];
    for t in 1..tokens {
        y[t * w..(t + 1) * w].copy_from_slice(&x[(t - 1) * w..t * w]);
    }
    y
}

/// Adjoint of `shift_tokens_right`.
pub(crate) fn shift_tokens_right_backward(dy: &[f64], tokens: usize, w: usize) -> Vec<f64> {
    let mut dx = vec![0.0; tokens * w];
    for t in 1..tokens {
        dx[(t - 1) * w..t * w].copy_from_slice(&dy[t * w..(t + 1) * w]);
    }
    dx
}

impl VisitParams for MixerWeights {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        match self {
            MixerWeights::Mv(m) => m.visit(prefix, f),
            MixerWeights::Vim(m) => m.visit(prefix, f),
            MixerWeights::Hydra(m) => m.visit(prefix, f),
            MixerWeights::Attention(m) => m.visit(prefix, f),
            MixerWeights::EinFft(m) => m.visit(prefix, f),
            MixerWeights::Mlp(m) => m.visit(prefix, f),
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        match self {
            MixerWeights::Mv(m) => m.visit_mut(prefix, f),
            MixerWeights::Vim(m) => m.visit_mut(prefix, f),
            MixerWeights::Hydra(m) => m.visit_mut(prefix, f),
            MixerWeights::Attention(m) => m.visit_mut(prefix, f),
            MixerWeights::EinFft(m) => m.visit_mut(prefix, f),
            MixerWeights::Mlp(m) => m.visit_mut(prefix, f),
        }
    }
}
