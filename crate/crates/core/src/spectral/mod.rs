//! Frequency-domain analysis of diagonal state space models.
//!
//! A stable diagonal SSM has the partial-fraction transfer function
//!
//! ```text
//! G(is) = sum_j c_j / (i*s - a_j) + D,      Re(a_j) < 0
//! ```
//!
//! Each pole contributes a first-order low-pass response. The module
//! measures how fast the response changes over a frequency band via the
//! total variation (the integral of the per-pole derivative magnitude), and
//! provides the closed-form expressions for the high-frequency band: the
//! complex-eigenvalue upper bound, the arctan form that is exact for
//! negative real eigenvalues, and its asymptotic square-root approximation.

pub mod parse;
mod quad;

pub use quad::{QuadResult, DEFAULT_PANEL_BUDGET};

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("eigenvalue/residue length mismatch: {eigenvalues} eigenvalues, {residues} residues")]
    LengthMismatch { eigenvalues: usize, residues: usize },
    #[error("eigenvalue {index} has non-negative real part {re} (unstable)")]
    UnstableEigenvalue { index: usize, re: f64 },
    #[error("eigenvalue {index} is not finite")]
    NonFiniteEigenvalue { index: usize },
    #[error("invalid frequency interval [{lo}, {hi})")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("relative tolerance {0} outside (0, 1)")]
    InvalidTolerance(f64),
    #[error("quadrature failed to converge within {panels} panels (error {abs_error:.3e})")]
    NonConvergence { panels: usize, abs_error: f64 },
    #[error("threshold {omega0} does not exceed the largest |imag eigenvalue| {max_abs_imag}")]
    InvalidThreshold { omega0: f64, max_abs_imag: f64 },
    #[error("eigenvalue {index} has nonzero imaginary part {im}; a real spectrum is required")]
    NotRealSpectrum { index: usize, im: f64 },
}

/// Partial-fraction transfer function of a stable diagonal SSM.
#[derive(Debug, Clone)]
pub struct TransferFunction {
    eigenvalues: Vec<Complex64>,
    residues: Vec<Complex64>,
    feedthrough: f64,
}

/// A frequency band [lo, hi); `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FrequencyInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, SpectralError> {
        if !(lo >= 0.0) || !(hi > lo) {
            return Err(SpectralError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// The half-open band [lo, infinity).
    pub fn from_threshold(lo: f64) -> Result<Self, SpectralError> {
        Self::new(lo, f64::INFINITY)
    }
}

/// Eigenvalue initialization schemes for negative real spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// lambda_j = j for j = 1..N: cascaded low-pass cutoffs at 1, 2, ..., N.
    Cascaded,
    /// lambda_j = 1 for all j: N identical low-pass filters with cutoff 1.
    Uniform,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenInit {
    pub scheme: InitScheme,
    pub order: usize,
}

impl EigenInit {
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.scheme {
            InitScheme::Cascaded => (1..=self.order).map(|j| -(j as f64)).collect(),
            InitScheme::Uniform => vec![-1.0; self.order],
        }
    }
}

/// Build a transfer function from an initialization scheme and residues.
pub fn build_init(
    init: EigenInit,
    residues: Vec<Complex64>,
    feedthrough: f64,
) -> Result<TransferFunction, SpectralError> {
    if residues.len() != init.order {
        return Err(SpectralError::LengthMismatch {
            eigenvalues: init.order,
            residues: residues.len(),
        });
    }
    let eigs = init
        .eigenvalues()
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    TransferFunction::new(eigs, residues, feedthrough)
}

impl TransferFunction {
    pub fn new(
        eigenvalues: Vec<Complex64>,
        residues: Vec<Complex64>,
        feedthrough: f64,
    ) -> Result<Self, SpectralError> {
        if eigenvalues.len() != residues.len() {
            return Err(SpectralError::LengthMismatch {
                eigenvalues: eigenvalues.len(),
                residues: residues.len(),
            });
        }
        for (index, a) in eigenvalues.iter().enumerate() {
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(SpectralError::NonFiniteEigenvalue { index });
            }
            if a.re >= 0.0 {
                return Err(SpectralError::UnstableEigenvalue { index, re: a.re });
            }
        }
        Ok(Self {
            eigenvalues,
            residues,
            feedthrough,
        })
    }

    /// Negative real spectrum with the given pole magnitudes and unit residues.
    pub fn from_real_poles(lambdas: &[f64], residues: &[f64]) -> Result<Self, SpectralError> {
        let eigs = lambdas.iter().map(|&l| Complex64::new(-l.abs(), 0.0)).collect();
        let res = residues.iter().map(|&c| Complex64::new(c, 0.0)).collect();
        Self::new(eigs, res, 0.0)
    }

    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn residues(&self) -> &[Complex64] {
        &self.residues
    }

    pub fn feedthrough(&self) -> f64 {
        self.feedthrough
    }

    /// True when every eigenvalue lies on the negative real axis.
    pub fn is_real_spectrum(&self) -> bool {
        self.eigenvalues.iter().all(|a| a.im == 0.0)
    }

    fn require_real_spectrum(&self) -> Result<(), SpectralError> {
        for (index, a) in self.eigenvalues.iter().enumerate() {
            if a.im != 0.0 {
                return Err(SpectralError::NotRealSpectrum { index, im: a.im });
            }
        }
        Ok(())
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|a| a.im.abs())
            .fold(0.0, f64::max)
    }

    /// Largest pole magnitude |a_j|; 0 for a feedthrough-only system.
    pub fn max_pole_magnitude(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|a| a.norm())
            .fold(0.0, f64::max)
    }

    /// Evaluate G(is) at a real frequency s.
    pub fn eval(&self, s: f64) -> Complex64 {
        let is = Complex64::new(0.0, s);
        let mut g = Complex64::new(self.feedthrough, 0.0);
        for (a, c) in self.eigenvalues.iter().zip(&self.residues) {
            g += c / (is - a);
        }
        g
    }

    /// Magnitude of the frequency derivative, |dG(is)/ds| = |sum_j -i c_j / (is - a_j)^2|.
    pub fn derivative_magnitude(&self, s: f64) -> f64 {
        let is = Complex64::new(0.0, s);
        let mut d = Complex64::new(0.0, 0.0);
        for (a, c) in self.eigenvalues.iter().zip(&self.residues) {
            let den = is - a;
            d += -Complex64::i() * c / (den * den);
        }
        d.norm()
    }

    /// Per-pole derivative magnitude sum, sum_j |c_j| / |is - a_j|^2.
    ///
    /// This is the triangle-inequality envelope of `derivative_magnitude`
    /// (equal for single-pole systems) and the integrand for which the
    /// closed-form band variations below are exact.
    pub fn derivative_magnitude_bound(&self, s: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.residues)
            .map(|(a, c)| {
                let v = a.re;
                let w = a.im;
                c.norm() / (v * v + (s - w) * (s - w))
            })
            .sum()
    }

    /// |G(i omega)| on a frequency grid.
    pub fn magnitude_response(&self, omegas: &[f64]) -> Vec<f64> {
        omegas.iter().map(|&w| self.eval(w).norm()).collect()
    }

    /// Band variation of the response by adaptive quadrature of the per-pole
    /// derivative magnitude over `iv`.
    ///
    /// The feedthrough contributes nothing (its frequency derivative is
    /// zero). Infinite upper limits are mapped to [0, 1) by the rational
    /// substitution in `quad`.
    pub fn total_variation_quadrature(
        &self,
        iv: FrequencyInterval,
        rel_tol: f64,
    ) -> Result<f64, SpectralError> {
        self.quadrature_of(|s| self.derivative_magnitude_bound(s), iv, rel_tol)
    }

    /// Band variation integrating the strict derivative magnitude |dG/ds|.
    ///
    /// Never exceeds `total_variation_quadrature` (triangle inequality);
    /// coincides with it for single-pole systems.
    pub fn total_variation_strict(
        &self,
        iv: FrequencyInterval,
        rel_tol: f64,
    ) -> Result<f64, SpectralError> {
        self.quadrature_of(|s| self.derivative_magnitude(s), iv, rel_tol)
    }

    fn quadrature_of<F: Fn(f64) -> f64>(
        &self,
        f: F,
        iv: FrequencyInterval,
        rel_tol: f64,
    ) -> Result<f64, SpectralError> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(SpectralError::InvalidTolerance(rel_tol));
        }
        if !(iv.lo >= 0.0) || !(iv.hi > iv.lo) {
            return Err(SpectralError::InvalidInterval { lo: iv.lo, hi: iv.hi });
        }
        let budget = DEFAULT_PANEL_BUDGET;
        let res = if iv.hi.is_infinite() {
            quad::integrate_to_infinity(f, iv.lo, rel_tol, budget)
        } else {
            quad::integrate(f, iv.lo, iv.hi, rel_tol, budget)
        };
        match res {
            Ok(r) => Ok(r.value),
            Err(nc) => Err(SpectralError::NonConvergence {
                panels: nc.panels,
                abs_error: nc.abs_error,
            }),
        }
    }

    /// High-frequency variation bound for complex spectra:
    /// sum_j |c_j| / |w_j - omega0|, valid for omega0 above every |w_j|.
    pub fn tv_highfreq_bound_complex(&self, omega0: f64) -> Result<f64, SpectralError> {
        let max_abs_imag = self.max_abs_imag();
        if !(omega0 > max_abs_imag) {
            return Err(SpectralError::InvalidThreshold {
                omega0,
                max_abs_imag,
            });
        }
        Ok(self
            .eigenvalues
            .iter()
            .zip(&self.residues)
            .map(|(a, c)| c.norm() / (a.im - omega0).abs())
            .sum())
    }

    /// Exact high-frequency variation for negative real spectra:
    /// sum_j (|c_j| / lambda_j) (pi/2 - arctan(omega0 / lambda_j)).
    pub fn tv_highfreq_exact_real(&self, omega0: f64) -> Result<f64, SpectralError> {
        self.require_real_spectrum()?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(&self.residues)
            .map(|(a, c)| {
                let lambda = a.re.abs();
                (c.norm() / lambda) * (FRAC_PI_2 - (omega0 / lambda).atan())
            })
            .sum())
    }

    /// High-frequency approximation for negative real spectra:
    /// sum_j |c_j| / sqrt(lambda_j^2 + omega0^2).
    pub fn tv_highfreq_approx_real(&self, omega0: f64) -> Result<f64, SpectralError> {
        self.require_real_spectrum()?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(&self.residues)
            .map(|(a, c)| {
                let lambda = a.re.abs();
                c.norm() / (lambda * lambda + omega0 * omega0).sqrt()
            })
            .sum())
    }
}
