//! Discrete-time state space scan kernels.
//!
//! Covers zero-order-hold discretization of scalar diagonal channels, the
//! sequential linear recurrence and its reverse-mode gradients, a chunked
//! parallel scan built on the associative affine-composition operator, the
//! input-dependent (selective) scan, and the bidirectional combination with
//! a single-counted diagonal.
//!
//! Eigenvalues are carried in log space (`ALogParam`): the realized state
//! matrix entries are `-exp(a_log)`, which keeps every eigenvalue strictly
//! negative for any finite parameter value.

mod bidirectional;
mod parallel;
pub mod selective;

pub use bidirectional::scan_bidirectional;
pub use parallel::scan_parallel;
pub use selective::{scan_selective, selective_scan_channel, SelectiveChannelGrads, SelectiveParams};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SsmError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Log-space eigenvalue parameters for a bank of channels.
///
/// `a_log` is (channels x state_dim) row-major; the realized eigenvalues are
/// `A = -exp(a_log)` elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ALogParam {
    pub a_log: Vec<f64>,
    pub channels: usize,
    pub state_dim: usize,
}

impl ALogParam {
    pub fn new(a_log: Vec<f64>, channels: usize, state_dim: usize) -> Result<Self, SsmError> {
        if a_log.len() != channels * state_dim {
            return Err(SsmError::ShapeMismatch(format!(
                "a_log has {} entries, expected {}x{}",
                a_log.len(),
                channels,
                state_dim
            )));
        }
        Ok(Self {
            a_log,
            channels,
            state_dim,
        })
    }

    /// Cascaded initialization: eigenvalues -1, -2, ..., -N in every channel.
    pub fn cascaded(channels: usize, state_dim: usize) -> Self {
        let mut a_log = Vec::with_capacity(channels * state_dim);
        for _ in 0..channels {
            for n in 0..state_dim {
                a_log.push(((n + 1) as f64).ln());
            }
        }
        Self {
            a_log,
            channels,
            state_dim,
        }
    }

    /// Uniform initialization: every eigenvalue -1.
    pub fn uniform(channels: usize, state_dim: usize) -> Self {
        Self {
            a_log: vec![0.0; channels * state_dim],
            channels,
            state_dim,
        }
    }

    /// Realized eigenvalues, -exp(a_log), strictly negative for finite input.
    pub fn realize(&self) -> Vec<f64> {
        self.a_log.iter().map(|&x| -x.exp()).collect()
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.a_log[channel * self.state_dim..(channel + 1) * self.state_dim]
    }
}

/// Chain gradients from realized eigenvalues back to log space.
///
/// With A = -exp(a_log), dA/da_log = A, so dL/da_log = dL/dA * A.
pub fn grad_realized_to_log(realized: &[f64], d_realized: &[f64]) -> Vec<f64> {
    realized
        .iter()
        .zip(d_realized)
        .map(|(&a, &da)| da * a)
        .collect()
}

/// Discretized parameters of one scalar SSM channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteSSM {
    pub a_bar: f64,
    pub b_bar: f64,
    pub c: f64,
    pub d: f64,
    pub delta: f64,
}

impl DiscreteSSM {
    pub fn new(a_bar: f64, b_bar: f64, c: f64, d: f64, delta: f64) -> Result<Self, SsmError> {
        if !(a_bar.abs() < 1.0) {
            return Err(SsmError::DomainError(format!(
                "|a_bar| = {} must be < 1 for stability",
                a_bar.abs()
            )));
        }
        if !(delta > 0.0) {
            return Err(SsmError::DomainError(format!("delta = {delta} must be > 0")));
        }
        Ok(Self {
            a_bar,
            b_bar,
            c,
            d,
            delta,
        })
    }

    /// Discretize a continuous channel (a < 0) by zero-order hold.
    pub fn from_continuous(a: f64, b: f64, c: f64, d: f64, delta: f64) -> Result<Self, SsmError> {
        let (a_bar, b_bar) = discretize_zoh(a, b, delta)?;
        Self::new(a_bar, b_bar, c, d, delta)
    }
}

/// Zero-order-hold discretization of a scalar channel:
/// a_bar = exp(delta a), b_bar = ((a_bar - 1) / a) b.
///
/// The b form is the exact integral of the matrix exponential, not the
/// first-order delta*b approximation, so discrete DC gain matches the
/// continuous transfer function exactly.
pub fn discretize_zoh(a: f64, b: f64, delta: f64) -> Result<(f64, f64), SsmError> {
    if !(a < 0.0) {
        return Err(SsmError::DomainError(format!("a = {a} must be < 0")));
    }
    if !(delta > 0.0) {
        return Err(SsmError::DomainError(format!("delta = {delta} must be > 0")));
    }
    let a_bar = (delta * a).exp();
    let b_bar = ((a_bar - 1.0) / a) * b;
    Ok((a_bar, b_bar))
}

/// Run the recurrence x_k = a_bar x_{k-1} + b_bar u_k, y_k = c x_k + d u_k
/// from x_0 = 0, returning y in order.
pub fn scan_sequential(ssm: &DiscreteSSM, u: &[f64]) -> Vec<f64> {
    let mut x = 0.0;
    u.iter()
        .map(|&uk| {
            x = ssm.a_bar * x + ssm.b_bar * uk;
            ssm.c * x + ssm.d * uk
        })
        .collect()
}

/// Gradients of a scalar loss through `scan_sequential`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGradients {
    pub d_a_bar: f64,
    pub d_b_bar: f64,
    pub d_c: f64,
    pub d_d: f64,
    pub d_u: Vec<f64>,
}

/// Exact reverse-mode gradients of the linear recurrence.
///
/// `dy` holds dL/dy_k; the state adjoint runs right-to-left with
/// multiplier a_bar.
pub fn scan_backward(ssm: &DiscreteSSM, u: &[f64], dy: &[f64]) -> Result<ScanGradients, SsmError> {
    if u.len() != dy.len() {
        return Err(SsmError::ShapeMismatch(format!(
            "u has {} tokens but dy has {}",
            u.len(),
            dy.len()
        )));
    }
    let n = u.len();
    // forward pass states
    let mut xs = Vec::with_capacity(n);
    let mut x = 0.0;
    for &uk in u {
        x = ssm.a_bar * x + ssm.b_bar * uk;
        xs.push(x);
    }

    let mut g = ScanGradients {
        d_a_bar: 0.0,
        d_b_bar: 0.0,
        d_c: 0.0,
        d_d: 0.0,
        d_u: vec![0.0; n],
    };
    let mut lambda = 0.0; // dL/dx_k
    for k in (0..n).rev() {
        g.d_c += dy[k] * xs[k];
        g.d_d += dy[k] * u[k];
        lambda = ssm.c * dy[k] + ssm.a_bar * lambda;
        g.d_b_bar += lambda * u[k];
        let x_prev = if k == 0 { 0.0 } else { xs[k - 1] };
        g.d_a_bar += lambda * x_prev;
        g.d_u[k] = lambda * ssm.b_bar + dy[k] * ssm.d;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoh_half_life() {
        let (a_bar, b_bar) = discretize_zoh(-1.0, 1.0, std::f64::consts::LN_2).unwrap();
        assert!((a_bar - 0.5).abs() < 1e-15);
        assert!((b_bar - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zoh_small_step_limit() {
        let delta = 1e-9;
        let (a_bar, b_bar) = discretize_zoh(-1.0, 1.0, delta).unwrap();
        assert!((a_bar - 1.0).abs() < 2e-9);
        assert!((b_bar - delta).abs() < 1e-15);
    }

    #[test]
    fn zoh_matches_ode_integration() {
        // drive x' = a x + b with u = 1 over one step from x(0) = 0 using RK4
        let (a, b, delta) = (-2.0, 3.0, 1.0);
        let steps = 20_000;
        let h = delta / steps as f64;
        let f = |x: f64| a * x + b;
        let mut x = 0.0;
        for _ in 0..steps {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let (a_bar, b_bar) = discretize_zoh(a, b, delta).unwrap();
        assert!((a_bar - (-2.0f64).exp()).abs() < 1e-12);
        // after one step from zero state, x_1 = b_bar
        assert!((b_bar - x).abs() < 1e-10);
        assert!((b_bar - 3.0 * (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zoh_rejects_bad_domain() {
        assert!(discretize_zoh(0.0, 1.0, 1.0).is_err());
        assert!(discretize_zoh(1.0, 1.0, 1.0).is_err());
        assert!(discretize_zoh(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn sequential_memoryless() {
        let ssm = DiscreteSSM::new(0.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(scan_sequential(&ssm, &[5.0, 7.0]), vec![5.0, 7.0]);
    }

    #[test]
    fn sequential_geometric_accumulation() {
        let ssm = DiscreteSSM::new(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
        let y = scan_sequential(&ssm, &[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![1.0, 1.5, 1.75]);
    }

    #[test]
    fn sequential_feedthrough_only() {
        let ssm = DiscreteSSM::new(0.5, 1.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(scan_sequential(&ssm, &[3.0, 4.0]), vec![6.0, 8.0]);
    }

    #[test]
    fn unstable_multiplier_rejected() {
        assert!(DiscreteSSM::new(1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(DiscreteSSM::new(-1.2, 1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn cascaded_init_realizes_integer_ladder() {
        let p = ALogParam::cascaded(2, 4);
        let a = p.realize();
        for ch in 0..2 {
            for n in 0..4 {
                assert!((a[ch * 4 + n] + (n + 1) as f64).abs() < 1e-12);
            }
        }
        let u = ALogParam::uniform(3, 2);
        assert!(u.realize().iter().all(|&x| (x + 1.0).abs() < 1e-15));
    }

    #[test]
    fn realized_eigenvalues_always_negative() {
        for &x in &[-700.0, -1.0, 0.0, 0.3, 5.0, 100.0] {
            let p = ALogParam::new(vec![x], 1, 1).unwrap();
            assert!(p.realize()[0] < 0.0);
        }
    }

    #[test]
    fn log_space_gradient_chain_matches_finite_differences() {
        let x = 0.3f64;
        let h = 1e-5;
        let fd = (-(x + h).exp() + (x - h).exp()) / (2.0 * h);
        let realized = [-x.exp()];
        let chained = grad_realized_to_log(&realized, &[1.0])[0];
        assert!((chained - fd).abs() < 1e-6);
        assert!((chained + x.exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_zero_upstream_gives_zero() {
        let ssm = DiscreteSSM::new(0.5, 0.7, 1.3, 0.2, 1.0).unwrap();
        let g = scan_backward(&ssm, &[1.0, -2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(g.d_a_bar, 0.0);
        assert_eq!(g.d_b_bar, 0.0);
        assert_eq!(g.d_c, 0.0);
        assert_eq!(g.d_d, 0.0);
        assert!(g.d_u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_single_token_chain_rule() {
        let ssm = DiscreteSSM::new(0.5, 0.7, 1.3, 0.0, 1.0).unwrap();
        let (u0, dy0) = (2.0, 0.25);
        let g = scan_backward(&ssm, &[u0], &[dy0]).unwrap();
        assert!((g.d_c - dy0 * ssm.b_bar * u0).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        use rand::Rng;
        let mut rng = crate::rng::stream(7, "scan-backward-test");
        let n = 32;
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ssm = DiscreteSSM::new(0.8, 0.6, 1.1, 0.4, 1.0).unwrap();

        let loss = |ssm: &DiscreteSSM, u: &[f64]| -> f64 {
            scan_sequential(ssm, u)
                .iter()
                .zip(&dy)
                .map(|(y, g)| y * g)
                .sum()
        };
        let g = scan_backward(&ssm, &u, &dy).unwrap();
        let h = 1e-5;

        let check = |analytic: f64, fd: f64| {
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                ((analytic - fd) / denom).abs() < 1e-4,
                "analytic {analytic} vs fd {fd}"
            );
        };

        let mut s = ssm;
        s.a_bar = ssm.a_bar + h;
        let up = loss(&s, &u);
        s.a_bar = ssm.a_bar - h;
        check(g.d_a_bar, (up - loss(&s, &u)) / (2.0 * h));

        s = ssm;
        s.b_bar += h;
        let up = loss(&s, &u);
        s.b_bar -= 2.0 * h;
        check(g.d_b_bar, (up - loss(&s, &u)) / (2.0 * h));

        s = ssm;
        s.c += h;
        let up = loss(&s, &u);
        s.c -= 2.0 * h;
        check(g.d_c, (up - loss(&s, &u)) / (2.0 * h));

        s = ssm;
        s.d += h;
        let up = loss(&s, &u);
        s.d -= 2.0 * h;
        check(g.d_d, (up - loss(&s, &u)) / (2.0 * h));

        for k in [0, 13, 31] {
            let mut up_u = u.clone();
            up_u[k] += h;
            let lo_u = {
                let mut v = u.clone();
                v[k] -= h;
                v
            };
            check(g.d_u[k], (loss(&ssm, &up_u) - loss(&ssm, &lo_u)) / (2.0 * h));
        }
    }
}
