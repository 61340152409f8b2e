//! Least-squares frequency-bias probe.
//!
//! Freezes a bank of negative real eigenvalues, drives each pole with a
//! unit impulse train (one unit impulse per sample step, i.e. the constant
//! sequence), and fits the readout residues to a synthetic target by exact
//! ridge-regularized least squares. Because the output is linear in the
//! residues, the fit error measures what the pole bank can represent with
//! no optimizer confounds: targets concentrated below the pole cutoffs fit
//! well, targets far above them cannot be tracked.

use crate::linalg::{self, LinalgError};
use crate::rng;
use crate::spectral::EigenInit;
use crate::ssm::discretize_zoh;
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid band [{lo}, {hi}]")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("band violates the Nyquist bound: hi*dt = {product} >= pi")]
    NyquistViolation { product: f64 },
    #[error("eigenvalue {0} is not strictly negative")]
    NonNegativeEigenvalue(f64),
    #[error("normal matrix is singular and ridge = 0")]
    SingularSystem,
    #[error("target is empty")]
    EmptyTarget,
}

/// Which side of the spectrum a synthetic target occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    LowBand,
    HighBand,
}

impl BandKind {
    pub fn name(&self) -> &'static str {
        match self {
            BandKind::LowBand => "low",
            BandKind::HighBand => "high",
        }
    }
}

/// A frequency band with its role in the low/high comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandSpec {
    pub kind: BandKind,
    pub lo: f64,
    pub hi: f64,
}

/// A sampled scalar target of controlled frequency content.
#[derive(Debug, Clone)]
pub struct FrequencyTarget {
    pub kind: BandKind,
    pub band: (f64, f64),
    pub samples: Vec<(f64, f64)>,
    pub seq_len: usize,
    pub dt: f64,
}

impl FrequencyTarget {
    /// Sum of `n_components` sinusoids with frequencies drawn uniformly in
    /// the band and uniform random phases, normalized to unit RMS.
    pub fn synth(
        band: BandSpec,
        seq_len: usize,
        dt: f64,
        n_components: usize,
        seed: u64,
    ) -> Result<Self, ProbeError> {
        if !(band.hi > band.lo) || !(band.lo >= 0.0) {
            return Err(ProbeError::InvalidBand {
                lo: band.lo,
                hi: band.hi,
            });
        }
        let product = band.hi * dt;
        if !(product < std::f64::consts::PI) {
            return Err(ProbeError::NyquistViolation { product });
        }
        let mut r = rng::stream(seed, "probe-target");
        let mut values = vec![0.0; seq_len];
        for _ in 0..n_components.max(1) {
            let omega = r.gen_range(band.lo..band.hi);
            let phase = r.gen_range(0.0..std::f64::consts::TAU);
            for (k, v) in values.iter_mut().enumerate() {
                *v += (omega * k as f64 * dt + phase).sin();
            }
        }
        let rms = (values.iter().map(|v| v * v).sum::<f64>() / seq_len as f64).sqrt();
        if rms > 0.0 {
            for v in values.iter_mut() {
                *v /= rms;
            }
        }
        let samples = values
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 * dt, v))
            .collect();
        Ok(Self {
            kind: band.kind,
            band: (band.lo, band.hi),
            samples,
            seq_len,
            dt,
        })
    }

    /// Wrap externally supplied samples (no normalization).
    pub fn from_samples(kind: BandKind, samples: Vec<(f64, f64)>, dt: f64) -> Self {
        let seq_len = samples.len();
        Self {
            kind,
            band: (0.0, 0.0),
            samples,
            seq_len,
            dt,
        }
    }
}

/// Per-pole step-response features: pole j driven by the unit impulse
/// train. Rows are time steps, columns poles.
pub fn feature_matrix(eigs: &[f64], seq_len: usize, dt: f64) -> Result<Array2<f64>, ProbeError> {
    let n = eigs.len();
    let mut h = Array2::<f64>::zeros((seq_len, n));
    for (j, &a) in eigs.iter().enumerate() {
        if !(a < 0.0) {
            return Err(ProbeError::NonNegativeEigenvalue(a));
        }
        let (a_bar, b_bar) = discretize_zoh(a, 1.0, dt).expect("validated domain");
        let mut x = 0.0;
        for k in 0..seq_len {
            x = a_bar * x + b_bar;
            h[[k, j]] = x;
        }
    }
    Ok(h)
}

/// Exact regularized least-squares fit of the readout residues.
///
/// Returns the residues and the in-band RMSE of the reconstruction.
pub fn fit_residues(
    eigs: &[f64],
    target: &FrequencyTarget,
    ridge: f64,
) -> Result<(Vec<f64>, f64), ProbeError> {
    if target.samples.is_empty() {
        return Err(ProbeError::EmptyTarget);
    }
    let h = feature_matrix(eigs, target.seq_len, target.dt)?;
    let y = Array1::from_iter(target.samples.iter().map(|&(_, v)| v));
    let mut normal = h.t().dot(&h);
    for i in 0..eigs.len() {
        normal[[i, i]] += ridge;
    }
    let rhs = h.t().dot(&y);
    let c = match linalg::spd_solve_vec(&normal, &rhs) {
        Ok(c) => c,
        Err(LinalgError::NotPositiveDefinite { .. }) if ridge == 0.0 => {
            return Err(ProbeError::SingularSystem)
        }
        Err(LinalgError::NotPositiveDefinite { .. }) => return Err(ProbeError::SingularSystem),
        Err(LinalgError::DimensionMismatch(m)) => unreachable!("shapes fixed here: {m}"),
    };
    let pred = h.dot(&c);
    let rmse = (pred
        .iter()
        .zip(y.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / target.seq_len as f64)
        .sqrt();
    Ok((c.to_vec(), rmse))
}

/// Sweep configuration; the defaults keep every band used by the tests
/// inside the Nyquist bound.
#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub seq_len: usize,
    pub dt: f64,
    pub n_components: usize,
    pub ridge: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seq_len: 256,
            dt: 0.04,
            n_components: 8,
            ridge: 1e-8,
        }
    }
}

/// One fitted cell of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub init: String,
    pub order: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    pub band_kind: BandKind,
    pub seed: u64,
    pub rmse: f64,
}

/// Aggregate over seeds for one (init, band) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub init: String,
    pub order: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    pub band_kind: BandKind,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub seeds: usize,
}

/// Low/high comparison for one (init, seed) pair.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub init: String,
    pub order: usize,
    pub seed: u64,
    pub low_err: Option<f64>,
    pub high_err: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<CellSummary>,
    pub results: Vec<ProbeResult>,
}

fn init_name(init: &EigenInit) -> String {
    match init.scheme {
        crate::spectral::InitScheme::Cascaded => "cascaded".to_string(),
        crate::spectral::InitScheme::Uniform => "uniform".to_string(),
    }
}

/// Full factorial fit over (init, band, seed).
pub fn bias_sweep(
    inits: &[EigenInit],
    bands: &[BandSpec],
    seeds: u64,
    cfg: &SweepConfig,
) -> Result<SweepOutput, ProbeError> {
    let mut rows = Vec::new();
    for init in inits {
        let eigs = init.eigenvalues();
        for band in bands {
            for seed in 0..seeds {
                let target = FrequencyTarget::synth(*band, cfg.seq_len, cfg.dt, cfg.n_components, seed)?;
                let (_, rmse) = fit_residues(&eigs, &target, cfg.ridge)?;
                rows.push(SweepRow {
                    init: init_name(init),
                    order: init.order,
                    band_lo: band.lo,
                    band_hi: band.hi,
                    band_kind: band.kind,
                    seed,
                    rmse,
                });
            }
        }
    }

    // per-cell aggregates
    let mut cells = Vec::new();
    for init in inits {
        for band in bands {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| {
                    r.init == init_name(init)
                        && r.order == init.order
                        && r.band_lo == band.lo
                        && r.band_hi == band.hi
                })
                .map(|r| r.rmse)
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / vals.len() as f64;
            cells.push(CellSummary {
                init: init_name(init),
                order: init.order,
                band_lo: band.lo,
                band_hi: band.hi,
                band_kind: band.kind,
                mean_rmse: mean,
                std_rmse: var.sqrt(),
                seeds: vals.len(),
            });
        }
    }

    // per (init, seed) low/high pairing; RMS-mean over bands of each kind
    let mut results = Vec::new();
    for init in inits {
        for seed in 0..seeds {
            let collect = |kind: BandKind| -> Option<f64> {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| {
                        r.init == init_name(init)
                            && r.order == init.order
                            && r.seed == seed
                            && r.band_kind == kind
                    })
                    .map(|r| r.rmse)
                    .collect();
                if vals.is_empty() {
                    None
                } else {
                    Some((vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64).sqrt())
                }
            };
            let low_err = collect(BandKind::LowBand);
            let high_err = collect(BandKind::HighBand);
            let ratio = match (low_err, high_err) {
                (Some(l), Some(h)) if l > 0.0 => Some(h / l),
                _ => None,
            };
            results.push(ProbeResult {
                init: init_name(init),
                order: init.order,
                seed,
                low_err,
                high_err,
                ratio,
            });
        }
    }

    Ok(SweepOutput {
        rows,
        cells,
        results,
    })
}
