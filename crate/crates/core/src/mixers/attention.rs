//! Multi-head softmax self-attention.

use super::mv::init_linear;
use super::{batch_slab, Linear, MixerError, VisitParams};
use crate::tensor::{ShapeError, Tensor3};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct AttentionMixer {
    pub qkv: Linear, // C -> 3C
    pub out: Linear, // C -> C
    pub heads: usize,
}

struct AttentionSample {
    x: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<f64>, // heads x tokens x tokens
    ctx: Vec<f64>,   // tokens x C, pre-out-projection
}

pub struct AttentionCache {
    samples: Vec<AttentionSample>,
    tokens: usize,
}

impl AttentionMixer {
    pub fn zeros(channels: usize, heads: usize) -> Self {
        Self {
            qkv: Linear::zeros(channels, 3 * channels),
            out: Linear::zeros(channels, channels),
            heads,
        }
    }

    pub fn init(channels: usize, heads: usize, rng: &mut ChaCha12Rng) -> Self {
        let mut m = Self::zeros(channels, heads);
        init_linear(&mut m.qkv, rng);
        init_linear(&mut m.out, rng);
        m
    }

    fn check(&self, channels: usize) -> Result<usize, MixerError> {
        if self.qkv.in_dim != channels {
            return Err(ShapeError::Mismatch {
                expected: format!("{} channels", self.qkv.in_dim),
                got: format!("{channels}"),
            }
            .into());
        }
        if self.heads == 0 || channels % self.heads != 0 {
            return Err(MixerError::HeadsMismatch {
                heads: self.heads,
                channels,
            });
        }
        Ok(channels / self.heads)
    }

    pub fn forward_cached(&self, x: &Tensor3) -> Result<(Tensor3, AttentionCache), MixerError> {
        let (batch, tokens, channels) = x.shape();
        let d_head = self.check(channels)?;
        x.check_finite()?;
        let scale = 1.0 / (d_head as f64).sqrt();

        let mut y = Tensor3::zeros(batch, tokens, channels);
        let mut samples = Vec::with_capacity(batch);
        for b in 0..batch {
            let xs = batch_slab(x, b);
            let qkv = self.qkv.forward(xs, tokens);
            // qkv layout per token: [q (C) | k (C) | v (C)]
            let mut probs = vec![0.0; self.heads * tokens * tokens];
            let mut ctx = vec![0.0; tokens * channels];
            for h in 0..self.heads {
                let off = h * d_head;
                for t in 0..tokens {
                    // scores row with max-subtracted softmax
                    let mut row = vec![0.0; tokens];
                    let mut max = f64::NEG_INFINITY;
                    for m in 0..tokens {
                        let mut s = 0.0;
                        for j in 0..d_head {
                            let q = qkv[t * 3 * channels + off + j];
                            let k = qkv[m * 3 * channels + channels + off + j];
                            s += q * k;
                        }
                        let s = s * scale;
                        row[m] = s;
                        max = max.max(s);
                    }
                    let mut denom = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        denom += *v;
                    }
                    for (m, v) in row.iter().enumerate() {
                        let p = v / denom;
                        probs[(h * tokens + t) * tokens + m] = p;
                        for j in 0..d_head {
                            ctx[t * channels + off + j] +=
                                p * qkv[m * 3 * channels + 2 * channels + off + j];
                        }
                    }
                }
            }
            let out = self.out.forward(&ctx, tokens);
            let base = b * tokens * channels;
            y.data[base..base + tokens * channels].copy_from_slice(&out);
            samples.push(AttentionSample {
                x: xs.to_vec(),
                qkv,
                probs,
                ctx,
            });
        }
        Ok((y, AttentionCache { samples, tokens }))
    }

    pub fn backward(&self, cache: &AttentionCache, dy: &Tensor3) -> (Tensor3, AttentionMixer) {
        let tokens = cache.tokens;
        let channels = self.qkv.in_dim;
        let d_head = channels / self.heads;
        let scale = 1.0 / (d_head as f64).sqrt();
        let mut grads = AttentionMixer::zeros(channels, self.heads);
        let mut dx = Tensor3::zeros(dy.batch, tokens, channels);

        for (b, s) in cache.samples.iter().enumerate() {
            let dyb = batch_slab(dy, b);
            let mut d_ctx = vec![0.0; tokens * channels];
            self.out
                .backward(&s.ctx, dyb, tokens, &mut d_ctx, &mut grads.out);

            let mut d_qkv = vec![0.0; tokens * 3 * channels];
            for h in 0..self.heads {
                let off = h * d_head;
                for t in 0..tokens {
                    // dP[t][m] = d_ctx[t] . v[m];  dV[m] += P[t][m] d_ctx[t]
                    let mut d_row = vec![0.0; tokens];
                    for m in 0..tokens {
                        let p = s.probs[(h * tokens + t) * tokens + m];
                        let mut dp = 0.0;
                        for j in 0..d_head {
                            let dc = d_ctx[t * channels + off + j];
                            dp += dc * s.qkv[m * 3 * channels + 2 * channels + off + j];
                            d_qkv[m * 3 * channels + 2 * channels + off + j] += p * dc;
                        }
                        d_row[m] = dp;
                    }
                    // softmax jacobian: dS = P o (dP - sum_m dP P)
                    let dot: f64 = (0..tokens)
                        .map(|m| d_row[m] * s.probs[(h * tokens + t) * tokens + m])
                        .sum();
                    for m in 0..tokens {
                        let p = s.probs[(h * tokens + t) * tokens + m];
                        let ds = p * (d_row[m] - dot) * scale;
                        for j in 0..d_head {
                            d_qkv[t * 3 * channels + off + j] +=
                                ds * s.qkv[m * 3 * channels + channels + off + j];
                            d_qkv[m * 3 * channels + channels + off + j] +=
                                ds * s.qkv[t * 3 * channels + off + j];
                        }
                    }
                }
            }
            let base = b * tokens * channels;
            self.qkv.backward(
                &s.x,
                &d_qkv,
                tokens,
                &mut dx.data[base..base + tokens * channels],
                &mut grads.qkv,
            );
        }
        (dx, grads)
    }
}

impl VisitParams for AttentionMixer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.qkv.visit(&format!("{prefix}.qkv"), f);
        self.out.visit(&format!("{prefix}.out"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.qkv.visit_mut(&format!("{prefix}.qkv"), f);
        self.out.visit_mut(&format!("{prefix}.out"), f);
    }
}
