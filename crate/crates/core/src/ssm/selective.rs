//! Input-dependent (selective) scan.
//!
//! Per token k the step size, input injection, and readout all vary:
//!
//! ```text
//! x_k[n] = exp(delta_k a_n) x_{k-1}[n] + b_bar_k[n] u_k
//! y_k    = sum_n c_k[n] x_k[n] + d u_k
//! ```
//!
//! with the exact ZOH injection b_bar_k[n] = ((exp(delta_k a_n) - 1) / a_n) b_k[n].
//! Step sizes are kept strictly positive by a softplus map with a small floor.

use super::SsmError;
use crate::act::{dsoftplus, softplus};

/// Smallest admissible step size after the softplus map.
pub const DELTA_FLOOR: f64 = 1e-4;

/// Positive step size from an unconstrained raw value.
pub fn delta_from_raw(raw: f64) -> f64 {
    softplus(raw).max(DELTA_FLOOR)
}

/// Derivative of `delta_from_raw`; zero inside the floor region.
pub fn ddelta_from_raw(raw: f64) -> f64 {
    if softplus(raw) > DELTA_FLOOR {
        dsoftplus(raw)
    } else {
        0.0
    }
}

/// Token-varying scan parameters for a bank of channels.
///
/// `delta` is (tokens x channels); `b` and `c` are (tokens x state_dim) and
/// are shared across channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveParams {
    pub delta: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub tokens: usize,
    pub channels: usize,
    pub state_dim: usize,
}

impl SelectiveParams {
    /// Build from raw (unconstrained) step values, mapping them through
    /// softplus + floor.
    pub fn from_raw_delta(
        raw_delta: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        tokens: usize,
        channels: usize,
        state_dim: usize,
    ) -> Result<Self, SsmError> {
        let delta = raw_delta.into_iter().map(delta_from_raw).collect();
        Self::new(delta, b, c, tokens, channels, state_dim)
    }

    pub fn new(
        delta: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        tokens: usize,
        channels: usize,
        state_dim: usize,
    ) -> Result<Self, SsmError> {
        if delta.len() != tokens * channels {
            return Err(SsmError::ShapeMismatch(format!(
                "delta has {} entries, expected {}x{}",
                delta.len(),
                tokens,
                channels
            )));
        }
        if b.len() != tokens * state_dim || c.len() != tokens * state_dim {
            return Err(SsmError::ShapeMismatch(format!(
                "b/c have {}/{} entries, expected {}x{}",
                b.len(),
                c.len(),
                tokens,
                state_dim
            )));
        }
        if let Some(bad) = delta.iter().find(|&&d| !(d > 0.0)) {
            return Err(SsmError::DomainError(format!(
                "step sizes must be strictly positive, got {bad}"
            )));
        }
        Ok(Self {
            delta,
            b,
            c,
            tokens,
            channels,
            state_dim,
        })
    }
}

/// Selective scan of one channel of the bank.
///
/// `a_row` holds the channel's realized eigenvalues (negative reals, length
/// state_dim); `u` is the channel's input sequence.
pub fn scan_selective(
    params: &SelectiveParams,
    channel: usize,
    a_row: &[f64],
    d: f64,
    u: &[f64],
) -> Result<Vec<f64>, SsmError> {
    if u.len() != params.tokens {
        return Err(SsmError::ShapeMismatch(format!(
            "input has {} tokens, params expect {}",
            u.len(),
            params.tokens
        )));
    }
    if a_row.len() != params.state_dim {
        return Err(SsmError::ShapeMismatch(format!(
            "a_row has {} entries, expected state_dim {}",
            a_row.len(),
            params.state_dim
        )));
    }
    if channel >= params.channels {
        return Err(SsmError::ShapeMismatch(format!(
            "channel {} out of range ({} channels)",
            channel, params.channels
        )));
    }
    let delta_col: Vec<f64> = (0..params.tokens)
        .map(|t| params.delta[t * params.channels + channel])
        .collect();
    let (y, _) = selective_scan_channel(&delta_col, &params.b, &params.c, a_row, d, u);
    Ok(y)
}

/// Low-level single-channel selective scan.
///
/// Returns the outputs and the per-token states (tokens x state_dim), which
/// the backward pass consumes.
pub fn selective_scan_channel(
    delta: &[f64],
    b: &[f64],
    c: &[f64],
    a: &[f64],
    d: f64,
    u: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let tokens = u.len();
    let n = a.len();
    debug_assert_eq!(delta.len(), tokens);
    debug_assert_eq!(b.len(), tokens * n);
    debug_assert_eq!(c.len(), tokens * n);

    let mut states = vec![0.0; tokens * n];
    let mut y = vec![0.0; tokens];
    let mut x = vec![0.0; n];
    for k in 0..tokens {
        let mut yk = d * u[k];
        for j in 0..n {
            let alpha = (delta[k] * a[j]).exp();
            let b_bar = ((alpha - 1.0) / a[j]) * b[k * n + j];
            x[j] = alpha * x[j] + b_bar * u[k];
            yk += c[k * n + j] * x[j];
            states[k * n + j] = x[j];
        }
        y[k] = yk;
    }
    (y, states)
}

/// Gradients of a scalar loss through one selective channel.
#[derive(Debug, Clone)]
pub struct SelectiveChannelGrads {
    pub d_delta: Vec<f64>,
    pub d_b: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_a: Vec<f64>,
    pub d_d: f64,
    pub d_u: Vec<f64>,
}

/// Reverse-mode pass matching `selective_scan_channel`.
///
/// `states` must be the forward states returned by the forward pass.
pub fn selective_scan_channel_backward(
    delta: &[f64],
    b: &[f64],
    c: &[f64],
    a: &[f64],
    d: f64,
    u: &[f64],
    states: &[f64],
    dy: &[f64],
) -> SelectiveChannelGrads {
    let tokens = u.len();
    let n = a.len();
    debug_assert_eq!(states.len(), tokens * n);
    debug_assert_eq!(dy.len(), tokens);

    let mut g = SelectiveChannelGrads {
        d_delta: vec![0.0; tokens],
        d_b: vec![0.0; tokens * n],
        d_c: vec![0.0; tokens * n],
        d_a: vec![0.0; n],
        d_d: 0.0,
        d_u: vec![0.0; tokens],
    };

    // lambda[j] = dL/dx_k[j], maintained right-to-left
    let mut lambda = vec![0.0; n];
    for k in (0..tokens).rev() {
        g.d_d += dy[k] * u[k];
        let mut du_k = d * dy[k];
        for j in 0..n {
            let idx = k * n + j;
            g.d_c[idx] = dy[k] * states[idx];
            // accumulate the readout into the state adjoint
            lambda[j] += c[idx] * dy[k];

            let alpha = (delta[k] * a[j]).exp();
            let zoh = (alpha - 1.0) / a[j];
            let b_bar = zoh * b[idx];
            let x_prev = if k == 0 { 0.0 } else { states[(k - 1) * n + j] };

            let d_beta = lambda[j] * u[k];
            du_k += lambda[j] * b_bar;
            g.d_b[idx] = d_beta * zoh;

            // alpha adjoint: recurrence term + injection term (beta = (alpha-1)/a * b)
            let d_alpha = lambda[j] * x_prev + d_beta * b[idx] / a[j];
            g.d_delta[k] += d_alpha * alpha * a[j];
            g.d_a[j] += d_alpha * alpha * delta[k] - d_beta * b[idx] * zoh / a[j];

            // propagate the adjoint to x_{k-1}
            lambda[j] *= alpha;
        }
        g.d_u[k] = du_k;
    }
    g
}
