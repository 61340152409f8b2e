//! Selective-scan branch shared by the MV, ViM, and Hydra sequence mixers.
//!
//! The branch derives per-token step sizes and state projections from its
//! own input (low-rank for the step size, shared across channels for the
//! state injection/readout) and runs one selective scan per channel.

use super::{Linear, VisitParams};
use crate::rng;
use crate::ssm::selective::{
    ddelta_from_raw, delta_from_raw, selective_scan_channel, selective_scan_channel_backward,
};
use crate::ssm::{grad_realized_to_log, ALogParam};
use crate::spectral::InitScheme;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct SelectiveProjections {
    pub a_log: ALogParam, // width x state_dim
    pub skip: Vec<f64>,   // per-channel feedthrough
    pub w_dt1: Linear,    // width -> rank
    pub w_dt2: Linear,    // rank -> width
    pub dt_bias: Vec<f64>,
    pub w_b: Linear, // width -> state_dim
    pub w_c: Linear, // width -> state_dim
}

#[derive(Debug, Clone)]
pub struct SelectiveBranchCache {
    u: Vec<f64>,
    tokens: usize,
    t1: Vec<f64>,
    dt_raw: Vec<f64>,
    delta: Vec<f64>,
    bmat: Vec<f64>,
    cmat: Vec<f64>,
    realized: Vec<f64>,
    states: Vec<f64>, // width x tokens x state_dim
}

impl SelectiveProjections {
    pub fn width(&self) -> usize {
        self.a_log.channels
    }

    pub fn state_dim(&self) -> usize {
        self.a_log.state_dim
    }

    pub fn zeros(width: usize, state_dim: usize, rank: usize) -> Self {
        Self {
            a_log: ALogParam::uniform(width, state_dim),
            skip: vec![0.0; width],
            w_dt1: Linear::zeros(width, rank),
            w_dt2: Linear::zeros(rank, width),
            dt_bias: vec![0.0; width],
            w_b: Linear::zeros(width, state_dim),
            w_c: Linear::zeros(width, state_dim),
        }
    }

    /// Random initialization with the given eigenvalue scheme.
    ///
    /// Step-size biases are set so the post-softplus steps land in
    /// [1e-3, 0.1], the usual stable range for selective scans.
    pub fn init(
        width: usize,
        state_dim: usize,
        rank: usize,
        scheme: InitScheme,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let mut s = Self::zeros(width, state_dim, rank);
        s.a_log = match scheme {
            InitScheme::Cascaded => ALogParam::cascaded(width, state_dim),
            InitScheme::Uniform => ALogParam::uniform(width, state_dim),
        };
        s.skip = vec![1.0; width];
        let init_linear = |l: &mut Linear, rng: &mut ChaCha12Rng| {
            let std = 1.0 / (l.in_dim as f64).sqrt();
            l.w = rng::scaled_normal_vec(rng, l.w.len(), std);
        };
        init_linear(&mut s.w_dt1, rng);
        init_linear(&mut s.w_dt2, rng);
        init_linear(&mut s.w_b, rng);
        init_linear(&mut s.w_c, rng);
        for b in s.dt_bias.iter_mut() {
            let dt = (rng.gen_range(0.001f64.ln()..0.1f64.ln())).exp();
            // inverse softplus so delta_from_raw(bias) == dt
            *b = (dt.exp() - 1.0).ln();
        }
        s
    }

    /// Branch forward over a (tokens x width) slab.
    pub fn forward(&self, u: &[f64], tokens: usize) -> (Vec<f64>, SelectiveBranchCache) {
        let width = self.width();
        let n = self.state_dim();
        debug_assert_eq!(u.len(), tokens * width);

        let t1 = self.w_dt1.forward(u, tokens);
        let mut dt_raw = self.w_dt2.forward(&t1, tokens);
        for t in 0..tokens {
            for ch in 0..width {
                dt_raw[t * width + ch] += self.dt_bias[ch];
            }
        }
        let delta: Vec<f64> = dt_raw.iter().map(|&r| delta_from_raw(r)).collect();
        let bmat = self.w_b.forward(u, tokens);
        let cmat = self.w_c.forward(u, tokens);
        let realized = self.a_log.realize();

        let mut y = vec![0.0; tokens * width];
        let mut states = vec![0.0; width * tokens * n];
        let mut delta_col = vec![0.0; tokens];
        let mut u_col = vec![0.0; tokens];
        for ch in 0..width {
            for t in 0..tokens {
                delta_col[t] = delta[t * width + ch];
                u_col[t] = u[t * width + ch];
            }
            let a_row = &realized[ch * n..(ch + 1) * n];
            let (y_col, st) =
                selective_scan_channel(&delta_col, &bmat, &cmat, a_row, self.skip[ch], &u_col);
            for t in 0..tokens {
                y[t * width + ch] = y_col[t];
            }
            states[ch * tokens * n..(ch + 1) * tokens * n].copy_from_slice(&st);
        }

        let cache = SelectiveBranchCache {
            u: u.to_vec(),
            tokens,
            t1,
            dt_raw,
            delta,
            bmat,
            cmat,
            realized,
            states,
        };
        (y, cache)
    }

    /// Reverse pass; returns the input gradient and accumulates parameter
    /// gradients into `grads`.
    pub fn backward(
        &self,
        cache: &SelectiveBranchCache,
        dy: &[f64],
        grads: &mut SelectiveProjections,
    ) -> Vec<f64> {
        let width = self.width();
        let n = self.state_dim();
        let tokens = cache.tokens;
        debug_assert_eq!(dy.len(), tokens * width);

        let mut du = vec![0.0; tokens * width];
        let mut d_dt_raw = vec![0.0; tokens * width];
        let mut d_bmat = vec![0.0; tokens * n];
        let mut d_cmat = vec![0.0; tokens * n];

        let mut delta_col = vec![0.0; tokens];
        let mut u_col = vec![0.0; tokens];
        let mut dy_col = vec![0.0; tokens];
        for ch in 0..width {
            for t in 0..tokens {
                delta_col[t] = cache.delta[t * width + ch];
                u_col[t] = cache.u[t * width + ch];
                dy_col[t] = dy[t * width + ch];
            }
            let a_row = &cache.realized[ch * n..(ch + 1) * n];
            let states = &cache.states[ch * tokens * n..(ch + 1) * tokens * n];
            let g = selective_scan_channel_backward(
                &delta_col,
                &cache.bmat,
                &cache.cmat,
                a_row,
                self.skip[ch],
                &u_col,
                states,
                &dy_col,
            );
            for t in 0..tokens {
                let raw = cache.dt_raw[t * width + ch];
                d_dt_raw[t * width + ch] += g.d_delta[t] * ddelta_from_raw(raw);
                du[t * width + ch] += g.d_u[t];
            }
            for (acc, v) in d_bmat.iter_mut().zip(&g.d_b) {
                *acc += v;
            }
            for (acc, v) in d_cmat.iter_mut().zip(&g.d_c) {
                *acc += v;
            }
            let d_log = grad_realized_to_log(a_row, &g.d_a);
            for (acc, v) in grads.a_log.a_log[ch * n..(ch + 1) * n]
                .iter_mut()
                .zip(&d_log)
            {
                *acc += v;
            }
            grads.skip[ch] += g.d_d;
        }

        // state projections
        self.w_b
            .backward(&cache.u, &d_bmat, tokens, &mut du, &mut grads.w_b);
        self.w_c
            .backward(&cache.u, &d_cmat, tokens, &mut du, &mut grads.w_c);

        // step-size path: bias, then the two low-rank projections
        for t in 0..tokens {
            for ch in 0..width {
                grads.dt_bias[ch] += d_dt_raw[t * width + ch];
            }
        }
        let mut d_t1 = vec![0.0; cache.t1.len()];
        self.w_dt2
            .backward(&cache.t1, &d_dt_raw, tokens, &mut d_t1, &mut grads.w_dt2);
        self.w_dt1
            .backward(&cache.u, &d_t1, tokens, &mut du, &mut grads.w_dt1);

        du
    }
}

impl VisitParams for SelectiveProjections {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        let (w, n) = (self.width(), self.state_dim());
        f(&format!("{prefix}.a_log"), &[w, n], &self.a_log.a_log);
        f(&format!("{prefix}.skip"), &[w], &self.skip);
        self.w_dt1.visit(&format!("{prefix}.w_dt1"), f);
        self.w_dt2.visit(&format!("{prefix}.w_dt2"), f);
        f(&format!("{prefix}.dt_bias"), &[w], &self.dt_bias);
        self.w_b.visit(&format!("{prefix}.w_b"), f);
        self.w_c.visit(&format!("{prefix}.w_c"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let (w, n) = (self.width(), self.state_dim());
        f(&format!("{prefix}.a_log"), &[w, n], &mut self.a_log.a_log);
        f(&format!("{prefix}.skip"), &[w], &mut self.skip);
        self.w_dt1.visit_mut(&format!("{prefix}.w_dt1"), f);
        self.w_dt2.visit_mut(&format!("{prefix}.w_dt2"), f);
        f(&format!("{prefix}.dt_bias"), &[w], &mut self.dt_bias);
        self.w_b.visit_mut(&format!("{prefix}.w_b"), f);
        self.w_c.visit_mut(&format!("{prefix}.w_c"), f);
    }
}
