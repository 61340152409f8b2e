//! Gated bidirectional sequence mixers.
//!
//! `VimMixer` runs two full selective-scan paths, one over the token order
//! and one over the reversed order, each behind its own causal convolution;
//! the summed scan outputs are gated by the second projection half.
//!
//! `HydraMixer` shares one regular (non-causal) convolution, then combines
//! a strictly-causal forward scan, a strictly-anticausal backward scan, and
//! an explicit per-channel diagonal. Shifting each scan output by one token
//! makes the triangular parts strict, so the diagonal is counted exactly
//! once and the realized token mixing matrix is quasiseparable.

use super::mv::{init_conv, init_linear};
use super::ssm_branch::{SelectiveBranchCache, SelectiveProjections};
use super::{
    batch_slab, reverse_tokens, shift_tokens_right, shift_tokens_right_backward, split_half_cols,
    Conv1dDepthwise, Linear, MixerError, VisitParams,
};
use crate::act::{dsilu, silu};
use crate::spectral::InitScheme;
use crate::tensor::{ShapeError, Tensor3};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct VimMixer {
    pub in_proj: Linear,            // C -> 2E
    pub conv_fwd: Conv1dDepthwise,  // E, causal
    pub conv_bwd: Conv1dDepthwise,  // E, causal on the reversed sequence
    pub ssm_fwd: SelectiveProjections,
    pub ssm_bwd: SelectiveProjections,
    pub out_proj: Linear, // E -> C
}

struct VimSample {
    x: Vec<f64>,
    xb: Vec<f64>,
    z: Vec<f64>,
    f_conv: Vec<f64>,
    f_cache: SelectiveBranchCache,
    r_in: Vec<f64>,
    b_conv: Vec<f64>,
    b_cache: SelectiveBranchCache,
    h_sum: Vec<f64>,
    gated: Vec<f64>,
}

pub struct VimCache {
    samples: Vec<VimSample>,
    tokens: usize,
}

impl VimMixer {
    pub fn branch_width(&self) -> usize {
        self.conv_fwd.channels
    }

    pub fn zeros(channels: usize, expand: usize, state_dim: usize, rank: usize) -> Self {
        let e = expand * channels;
        Self {
            in_proj: Linear::zeros(channels, 2 * e),
            conv_fwd: Conv1dDepthwise::zeros(e, true),
            conv_bwd: Conv1dDepthwise::zeros(e, true),
            ssm_fwd: SelectiveProjections::zeros(e, state_dim, rank),
            ssm_bwd: SelectiveProjections::zeros(e, state_dim, rank),
            out_proj: Linear::zeros(e, channels),
        }
    }

    pub fn init(
        channels: usize,
        expand: usize,
        state_dim: usize,
        rank: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let e = expand * channels;
        let mut m = Self::zeros(channels, expand, state_dim, rank);
        init_linear(&mut m.in_proj, rng);
        init_linear(&mut m.out_proj, rng);
        init_conv(&mut m.conv_fwd, rng);
        init_conv(&mut m.conv_bwd, rng);
        m.ssm_fwd = SelectiveProjections::init(e, state_dim, rank, InitScheme::Cascaded, rng);
        m.ssm_bwd = SelectiveProjections::init(e, state_dim, rank, InitScheme::Cascaded, rng);
        m
    }

    pub fn forward_cached(&self, x: &Tensor3) -> Result<(Tensor3, VimCache), MixerError> {
        let (batch, tokens, channels) = x.shape();
        if self.in_proj.in_dim != channels {
            return Err(ShapeError::Mismatch {
                expected: format!("{} channels", self.in_proj.in_dim),
                got: format!("{channels}"),
            }
            .into());
        }
        x.check_finite()?;
        let e = self.branch_width();

        let mut y = Tensor3::zeros(batch, tokens, channels);
        let mut samples = Vec::with_capacity(batch);
        for b in 0..batch {
            let xs = batch_slab(x, b);
            let h = self.in_proj.forward(xs, tokens);
            let (xb, z) = split_half_cols(&h, tokens, e);

            let f_conv = self.conv_fwd.forward(&xb, tokens);
            let f_act: Vec<f64> = f_conv.iter().map(|&v| silu(v)).collect();
            let (f_out, f_cache) = self.ssm_fwd.forward(&f_act, tokens);

            let r_in = reverse_tokens(&xb, tokens, e);
            let b_conv = self.conv_bwd.forward(&r_in, tokens);
            let b_act: Vec<f64> = b_conv.iter().map(|&v| silu(v)).collect();
            let (b_out, b_cache) = self.ssm_bwd.forward(&b_act, tokens);
            let b_out_rev = reverse_tokens(&b_out, tokens, e);

            let h_sum: Vec<f64> = f_out
                .iter()
                .zip(&b_out_rev)
                .map(|(a, b)| a + b)
                .collect();
            let gated: Vec<f64> = h_sum.iter().zip(&z).map(|(h, &zv)| h * silu(zv)).collect();
            let out = self.out_proj.forward(&gated, tokens);
            let base = b * tokens * channels;
            y.data[base..base + tokens * channels].copy_from_slice(&out);

            samples.push(VimSample {
                x: xs.to_vec(),
                xb,
                z,
                f_conv,
                f_cache,
                r_in,
                b_conv,
                b_cache,
                h_sum,
                gated,
            });
        }
        Ok((y, VimCache { samples, tokens }))
    }

    pub fn backward(&self, cache: &VimCache, dy: &Tensor3) -> (Tensor3, VimMixer) {
        let tokens = cache.tokens;
        let e = self.branch_width();
        let channels = self.in_proj.in_dim;
        let expand = e / channels;
        let mut grads = VimMixer::zeros(
            channels,
            expand,
            self.ssm_fwd.state_dim(),
            self.ssm_fwd.w_dt1.out_dim,
        );
        let mut dx = Tensor3::zeros(dy.batch, tokens, channels);

        for (b, s) in cache.samples.iter().enumerate() {
            let dyb = batch_slab(dy, b);
            let mut d_gated = vec![0.0; tokens * e];
            self.out_proj
                .backward(&s.gated, dyb, tokens, &mut d_gated, &mut grads.out_proj);

            // gate: gated = h_sum * silu(z)
            let mut d_h_sum = vec![0.0; tokens * e];
            let mut d_z = vec![0.0; tokens * e];
            for i in 0..tokens * e {
                d_h_sum[i] = d_gated[i] * silu(s.z[i]);
                d_z[i] = d_gated[i] * s.h_sum[i] * dsilu(s.z[i]);
            }

            // forward direction
            let d_f_act = self.ssm_fwd.backward(&s.f_cache, &d_h_sum, &mut grads.ssm_fwd);
            let d_f_conv: Vec<f64> = d_f_act
                .iter()
                .zip(&s.f_conv)
                .map(|(g, &v)| g * dsilu(v))
                .collect();
            let mut d_xb = vec![0.0; tokens * e];
            self.conv_fwd
                .backward(&s.xb, &d_f_conv, tokens, &mut d_xb, &mut grads.conv_fwd);

            // backward direction (gradient reversed into the flipped frame)
            let d_b_out = reverse_tokens(&d_h_sum, tokens, e);
            let d_b_act = self.ssm_bwd.backward(&s.b_cache, &d_b_out, &mut grads.ssm_bwd);
            let d_b_conv: Vec<f64> = d_b_act
                .iter()
                .zip(&s.b_conv)
                .map(|(g, &v)| g * dsilu(v))
                .collect();
            let mut d_r_in = vec![0.0; tokens * e];
            self.conv_bwd
                .backward(&s.r_in, &d_b_conv, tokens, &mut d_r_in, &mut grads.conv_bwd);
            let d_xb_from_rev = reverse_tokens(&d_r_in, tokens, e);
            for (a, b) in d_xb.iter_mut().zip(&d_xb_from_rev) {
                *a += b;
            }

            let d_h = super::concat_cols(&d_xb, &d_z, tokens, e);
            let base = b * tokens * channels;
            self.in_proj.backward(
                &s.x,
                &d_h,
                tokens,
                &mut dx.data[base..base + tokens * channels],
                &mut grads.in_proj,
            );
        }
        (dx, grads)
    }
}

impl VisitParams for VimMixer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.in_proj.visit(&format!("{prefix}.in_proj"), f);
        self.conv_fwd.visit(&format!("{prefix}.conv_fwd"), f);
        self.conv_bwd.visit(&format!("{prefix}.conv_bwd"), f);
        self.ssm_fwd.visit(&format!("{prefix}.ssm_fwd"), f);
        self.ssm_bwd.visit(&format!("{prefix}.ssm_bwd"), f);
        self.out_proj.visit(&format!("{prefix}.out_proj"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.in_proj.visit_mut(&format!("{prefix}.in_proj"), f);
        self.conv_fwd.visit_mut(&format!("{prefix}.conv_fwd"), f);
        self.conv_bwd.visit_mut(&format!("{prefix}.conv_bwd"), f);
        self.ssm_fwd.visit_mut(&format!("{prefix}.ssm_fwd"), f);
        self.ssm_bwd.visit_mut(&format!("{prefix}.ssm_bwd"), f);
        self.out_proj.visit_mut(&format!("{prefix}.out_proj"), f);
    }
}

#[derive(Debug, Clone)]
pub struct HydraMixer {
    pub in_proj: Linear,       // C -> 2E
    pub conv: Conv1dDepthwise, // E, regular
    pub ssm_fwd: SelectiveProjections,
    pub ssm_bwd: SelectiveProjections,
    pub diag: Vec<f64>, // E, the single-counted diagonal
    pub out_proj: Linear, // E -> C
}

struct HydraSample {
    x: Vec<f64>,
    xb: Vec<f64>,
    z: Vec<f64>,
    c_conv: Vec<f64>,
    c_act: Vec<f64>,
    f_cache: SelectiveBranchCache,
    b_cache: SelectiveBranchCache,
    h_sum: Vec<f64>,
    gated: Vec<f64>,
}

pub struct HydraCache {
    samples: Vec<HydraSample>,
    tokens: usize,
}

impl HydraMixer {
    pub fn branch_width(&self) -> usize {
        self.conv.channels
    }

    pub fn zeros(channels: usize, expand: usize, state_dim: usize, rank: usize) -> Self {
        let e = expand * channels;
        Self {
            in_proj: Linear::zeros(channels, 2 * e),
            conv: Conv1dDepthwise::zeros(e, false),
            ssm_fwd: SelectiveProjections::zeros(e, state_dim, rank),
            ssm_bwd: SelectiveProjections::zeros(e, state_dim, rank),
            diag: vec![0.0; e],
            out_proj: Linear::zeros(e, channels),
        }
    }

    /// Random initialization; both scan directions use the uniform
    /// eigenvalue scheme (every eigenvalue -1).
    pub fn init(
        channels: usize,
        expand: usize,
        state_dim: usize,
        rank: usize,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let e = expand * channels;
        let mut m = Self::zeros(channels, expand, state_dim, rank);
        init_linear(&mut m.in_proj, rng);
        init_linear(&mut m.out_proj, rng);
        init_conv(&mut m.conv, rng);
        m.ssm_fwd = SelectiveProjections::init(e, state_dim, rank, InitScheme::Uniform, rng);
        m.ssm_bwd = SelectiveProjections::init(e, state_dim, rank, InitScheme::Uniform, rng);
        m.diag = vec![1.0; e];
        m
    }

    pub fn forward_cached(&self, x: &Tensor3) -> Result<(Tensor3, HydraCache), MixerError> {
        let (batch, tokens, channels) = x.shape();
        if self.in_proj.in_dim != channels {
            return Err(ShapeError::Mismatch {
                expected: format!("{} channels", self.in_proj.in_dim),
                got: format!("{channels}"),
            }
            .into());
        }
        x.check_finite()?;
        let e = self.branch_width();

        let mut y = Tensor3::zeros(batch, tokens, channels);
        let mut samples = Vec::with_capacity(batch);
        for b in 0..batch {
            let xs = batch_slab(x, b);
            let h = self.in_proj.forward(xs, tokens);
            let (xb, z) = split_half_cols(&h, tokens, e);

            let c_conv = self.conv.forward(&xb, tokens);
            let c_act: Vec<f64> = c_conv.iter().map(|&v| silu(v)).collect();

            // strictly-lower part: forward scan shifted one token later
            let (f_out, f_cache) = self.ssm_fwd.forward(&c_act, tokens);
            let f_shift = shift_tokens_right(&f_out, tokens, e);

            // strictly-upper part: reversed scan, shifted, flipped back
            let r_act = reverse_tokens(&c_act, tokens, e);
            let (b_out, b_cache) = self.ssm_bwd.forward(&r_act, tokens);
            let b_shift = shift_tokens_right(&b_out, tokens, e);
            let b_final = reverse_tokens(&b_shift, tokens, e);

            let mut h_sum = vec![0.0; tokens * e];
            for t in 0..tokens {
                for ch in 0..e {
                    let i = t * e + ch;
                    h_sum[i] = f_shift[i] + b_final[i] + self.diag[ch] * c_act[i];
                }
            }
            let gated: Vec<f64> = h_sum.iter().zip(&z).map(|(h, &zv)| h * silu(zv)).collect();
            let out = self.out_proj.forward(&gated, tokens);
            let base = b * tokens * channels;
            y.data[base..base + tokens * channels].copy_from_slice(&out);

            samples.push(HydraSample {
                x: xs.to_vec(),
                xb,
                z,
                c_conv,
                c_act,
                f_cache,
                b_cache,
                h_sum,
                gated,
            });
        }
        Ok((y, HydraCache { samples, tokens }))
    }

    pub fn backward(&self, cache: &HydraCache, dy: &Tensor3) -> (Tensor3, HydraMixer) {
        let tokens = cache.tokens;
        let e = self.branch_width();
        let channels = self.in_proj.in_dim;
        let expand = e / channels;
        let mut grads = HydraMixer::zeros(
            channels,
            expand,
            self.ssm_fwd.state_dim(),
            self.ssm_fwd.w_dt1.out_dim,
        );
        let mut dx = Tensor3::zeros(dy.batch, tokens, channels);

        for (b, s) in cache.samples.iter().enumerate() {
            let dyb = batch_slab(dy, b);
            let mut d_gated = vec![0.0; tokens * e];
            self.out_proj
                .backward(&s.gated, dyb, tokens, &mut d_gated, &mut grads.out_proj);

            let mut d_h_sum = vec![0.0; tokens * e];
            let mut d_z = vec![0.0; tokens * e];
            for i in 0..tokens * e {
                d_h_sum[i] = d_gated[i] * silu(s.z[i]);
                d_z[i] = d_gated[i] * s.h_sum[i] * dsilu(s.z[i]);
            }

            let mut d_c_act = vec![0.0; tokens * e];
            // diagonal path
            for t in 0..tokens {
                for ch in 0..e {
                    let i = t * e + ch;
                    grads.diag[ch] += d_h_sum[i] * s.c_act[i];
                    d_c_act[i] += d_h_sum[i] * self.diag[ch];
                }
            }

            // strictly-lower path
            let d_f_out = shift_tokens_right_backward(&d_h_sum, tokens, e);
            let d_from_fwd = self.ssm_fwd.backward(&s.f_cache, &d_f_out, &mut grads.ssm_fwd);
            for (a, b) in d_c_act.iter_mut().zip(&d_from_fwd) {
                *a += b;
            }

            // strictly-upper path
            let d_b_final = reverse_tokens(&d_h_sum, tokens, e);
            let d_b_out = shift_tokens_right_backward(&d_b_final, tokens, e);
            let d_r_act = self.ssm_bwd.backward(&s.b_cache, &d_b_out, &mut grads.ssm_bwd);
            let d_from_bwd = reverse_tokens(&d_r_act, tokens, e);
            for (a, b) in d_c_act.iter_mut().zip(&d_from_bwd) {
                *a += b;
            }

            let d_c_conv: Vec<f64> = d_c_act
                .iter()
                .zip(&s.c_conv)
                .map(|(g, &v)| g * dsilu(v))
                .collect();
            let mut d_xb = vec![0.0; tokens * e];
            self.conv
                .backward(&s.xb, &d_c_conv, tokens, &mut d_xb, &mut grads.conv);

            let d_h = super::concat_cols(&d_xb, &d_z, tokens, e);
            let base = b * tokens * channels;
            self.in_proj.backward(
                &s.x,
                &d_h,
                tokens,
                &mut dx.data[base..base + tokens * channels],
                &mut grads.in_proj,
            );
        }
        (dx, grads)
    }
}

impl VisitParams for HydraMixer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.in_proj.visit(&format!("{prefix}.in_proj"), f);
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.ssm_fwd.visit(&format!("{prefix}.ssm_fwd"), f);
        self.ssm_bwd.visit(&format!("{prefix}.ssm_bwd"), f);
        f(&format!("{prefix}.diag"), &[self.diag.len()], &self.diag);
        self.out_proj.visit(&format!("{prefix}.out_proj"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.in_proj.visit_mut(&format!("{prefix}.in_proj"), f);
        self.conv.visit_mut(&format!("{prefix}.conv"), f);
        self.ssm_fwd.visit_mut(&format!("{prefix}.ssm_fwd"), f);
        self.ssm_bwd.visit_mut(&format!("{prefix}.ssm_bwd"), f);
        let n = self.diag.len();
        f(&format!("{prefix}.diag"), &[n], &mut self.diag);
        self.out_proj.visit_mut(&format!("{prefix}.out_proj"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_input(batch: usize, tokens: usize, channels: usize) -> Tensor3 {
        let mut rng = crate::rng::stream(23, "vim-test-input");
        Tensor3::from_vec(
            crate::rng::normal_vec(&mut rng, batch * tokens * channels),
            batch,
            tokens,
            channels,
        )
        .unwrap()
    }

    #[test]
    fn vim_shape_preserved() {
        let mut rng = crate::rng::stream(2, "vim-init");
        let m = VimMixer::init(8, 2, 4, 2, &mut rng);
        let x = toy_input(2, 9, 8);
        let (y, _) = m.forward_cached(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn hydra_shape_preserved() {
        let mut rng = crate::rng::stream(2, "hydra-init");
        let m = HydraMixer::init(8, 2, 4, 2, &mut rng);
        let x = toy_input(2, 9, 8);
        let (y, _) = m.forward_cached(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn hydra_eigenvalues_sit_at_minus_one() {
        let mut rng = crate::rng::stream(6, "hydra-eigs");
        let m = HydraMixer::init(4, 2, 3, 2, &mut rng);
        for v in m.ssm_fwd.a_log.realize() {
            assert!((v + 1.0).abs() < 1e-15);
        }
    }
}
