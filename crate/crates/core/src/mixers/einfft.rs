//! Channel mixing in the 2-D Fourier domain of the token grid.
//!
//! Per sample and channel the square token grid is transformed by a 2-D
//! DFT. In the frequency domain, channels are mixed within fixed blocks by
//! two complex matrices with a modReLU between them:
//!
//! ```text
//! Y(k) = modReLU(X(k) W1, bias) W2        (per block, per frequency bin)
//! ```
//!
//! The same weights act on every bin, but only bins in a canonical half of
//! the spectrum are mixed directly; their mirrors are filled with complex
//! conjugates, and self-conjugate bins (DC/Nyquist) are projected to their
//! real part. The mixed spectrum is therefore conjugate-symmetric by
//! construction and the inverse transform is real; the forward pass still
//! verifies the imaginary residual and rejects anything above 1e-6.
//!
//! modReLU(z; b) = relu(|z| + b) * z / |z|, defined as 0 at z = 0. It
//! rescales magnitudes and keeps phases, so it commutes with conjugation
//! and with the phase factors of cyclic shifts (bias 0), which preserves
//! the DFT shift theorem through the whole mixer.

use super::{batch_slab, MixerError, VisitParams};
use crate::tensor::{ShapeError, Tensor3};
use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rustfft::FftPlanner;

/// Largest tolerated imaginary residual after the inverse transform.
pub const IMAG_RESIDUAL_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EinFftMixer {
    /// Stage-1 complex weights, interleaved (block, row, col, re/im).
    pub w1: Vec<f64>,
    /// Stage-2 complex weights, same layout.
    pub w2: Vec<f64>,
    /// modReLU bias per channel.
    pub bias: Vec<f64>,
    pub block_count: usize,
    pub channels: usize,
}

pub struct EinFftCache {
    x: Vec<Vec<f64>>,              // per sample input slab
    spectra: Vec<Vec<Complex64>>,  // per sample: channels x side^2
    stage1: Vec<Vec<Complex64>>,   // per sample: channels x side^2 (canonical bins)
    side: usize,
    tokens: usize,
}

impl EinFftMixer {
    pub fn block_size(&self) -> usize {
        self.channels / self.block_count
    }

    #[inline]
    fn w_at(w: &[f64], block: usize, bs: usize, row: usize, col: usize) -> Complex64 {
        let base = 2 * ((block * bs + row) * bs + col);
        Complex64::new(w[base], w[base + 1])
    }

    pub fn zeros(channels: usize, block_count: usize) -> Self {
        let bs = channels / block_count;
        Self {
            w1: vec![0.0; 2 * block_count * bs * bs],
            w2: vec![0.0; 2 * block_count * bs * bs],
            bias: vec![0.0; channels],
            block_count,
            channels,
        }
    }

    /// Identity mixing: W1 = W2 = I per block, bias 0.
    pub fn identity(channels: usize, block_count: usize) -> Self {
        let bs = channels / block_count;
        let mut m = Self::zeros(channels, block_count);
        for bl in 0..block_count {
            for i in 0..bs {
                m.w1[2 * ((bl * bs + i) * bs + i)] = 1.0;
                m.w2[2 * ((bl * bs + i) * bs + i)] = 1.0;
            }
        }
        m
    }

    pub fn init(channels: usize, block_count: usize, rng: &mut ChaCha12Rng) -> Self {
        let bs = channels / block_count;
        let mut m = Self::zeros(channels, block_count);
        let std = 1.0 / (2.0 * bs as f64).sqrt();
        m.w1 = crate::rng::scaled_normal_vec(rng, 2 * block_count * bs * bs, std);
        m.w2 = crate::rng::scaled_normal_vec(rng, 2 * block_count * bs * bs, std);
        m
    }

    fn check(&self, x: &Tensor3) -> Result<usize, MixerError> {
        if self.channels != x.channels {
            return Err(ShapeError::Mismatch {
                expected: format!("{} channels", self.channels),
                got: format!("{}", x.channels),
            }
            .into());
        }
        if self.block_count == 0 || self.channels % self.block_count != 0 {
            return Err(MixerError::BlockMismatch {
                blocks: self.block_count,
                channels: self.channels,
            });
        }
        Ok(x.grid_side()?)
    }

    /// modReLU of one spectrum value for channel `ch`.
    fn modrelu(&self, z: Complex64, ch: usize) -> Complex64 {
        let m = z.norm();
        if m == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let g = (m + self.bias[ch]).max(0.0);
        z * (g / m)
    }

    /// Mix the channel vector at one frequency bin through both stages.
    /// Returns (stage1 values, output values).
    fn mix_bin(&self, u: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let bs = self.block_size();
        let mut t = vec![Complex64::new(0.0, 0.0); self.channels];
        let mut y = vec![Complex64::new(0.0, 0.0); self.channels];
        for bl in 0..self.block_count {
            for j in 0..bs {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..bs {
                    acc += u[bl * bs + i] * Self::w_at(&self.w1, bl, bs, i, j);
                }
                t[bl * bs + j] = acc;
            }
            for j in 0..bs {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..bs {
                    let m = self.modrelu(t[bl * bs + i], bl * bs + i);
                    acc += m * Self::w_at(&self.w2, bl, bs, i, j);
                }
                y[bl * bs + j] = acc;
            }
        }
        (t, y)
    }

    pub fn forward_cached(&self, x: &Tensor3) -> Result<(Tensor3, EinFftCache), MixerError> {
        let side = self.check(x)?;
        x.check_finite()?;
        let (batch, tokens, channels) = x.shape();
        let n_bins = side * side;
        let norm = 1.0 / n_bins as f64;

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(side);
        let inv = planner.plan_fft_inverse(side);

        let mut y = Tensor3::zeros(batch, tokens, channels);
        let mut cache = EinFftCache {
            x: Vec::with_capacity(batch),
            spectra: Vec::with_capacity(batch),
            stage1: Vec::with_capacity(batch),
            side,
            tokens,
        };

        for b in 0..batch {
            let xs = batch_slab(x, b);
            // per-channel forward 2-D DFT
            let mut spectra = vec![Complex64::new(0.0, 0.0); channels * n_bins];
            for c in 0..channels {
                let mut grid: Vec<Complex64> = (0..n_bins)
                    .map(|t| Complex64::new(xs[t * channels + c], 0.0))
                    .collect();
                fft2(&mut grid, side, fwd.as_ref());
                spectra[c * n_bins..(c + 1) * n_bins].copy_from_slice(&grid);
            }

            // frequency-domain mixing over the canonical half-spectrum
            let mut stage1 = vec![Complex64::new(0.0, 0.0); channels * n_bins];
            let mut mixed = vec![Complex64::new(0.0, 0.0); channels * n_bins];
            let mut u = vec![Complex64::new(0.0, 0.0); channels];
            for ky in 0..side {
                for kx in 0..side {
                    let bin = ky * side + kx;
                    let mbin = mirror_bin(ky, kx, side);
                    if bin > mbin {
                        continue; // filled from its mirror
                    }
                    for c in 0..channels {
                        u[c] = spectra[c * n_bins + bin];
                    }
                    let (t, mut out) = self.mix_bin(&u);
                    if bin == mbin {
                        // self-conjugate bin stays real
                        for v in out.iter_mut() {
                            *v = Complex64::new(v.re, 0.0);
                        }
                    }
                    for c in 0..channels {
                        stage1[c * n_bins + bin] = t[c];
                        mixed[c * n_bins + bin] = out[c];
                        if bin != mbin {
                            mixed[c * n_bins + mbin] = out[c].conj();
                        }
                    }
                }
            }

            // inverse transform and residual check
            let base = b * tokens * channels;
            let mut max_resid = 0.0f64;
            for c in 0..channels {
                let mut grid = mixed[c * n_bins..(c + 1) * n_bins].to_vec();
                fft2(&mut grid, side, inv.as_ref());
                for (t, v) in grid.iter().enumerate() {
                    let val = v * norm;
                    max_resid = max_resid.max(val.im.abs());
                    y.data[base + t * channels + c] = val.re;
                }
            }
            if max_resid > IMAG_RESIDUAL_LIMIT {
                return Err(MixerError::ConjugateSymmetryViolation {
                    residual: max_resid,
                    limit: IMAG_RESIDUAL_LIMIT,
                });
            }

            cache.x.push(xs.to_vec());
            cache.spectra.push(spectra);
            cache.stage1.push(stage1);
        }
        Ok((y, cache))
    }

    pub fn backward(&self, cache: &EinFftCache, dy: &Tensor3) -> (Tensor3, EinFftMixer) {
        let side = cache.side;
        let n_bins = side * side;
        let channels = self.channels;
        let bs = self.block_size();
        let tokens = cache.tokens;
        let norm = 1.0 / n_bins as f64;

        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(side);
        let inv = planner.plan_fft_inverse(side);

        let mut grads = EinFftMixer::zeros(channels, self.block_count);
        let mut dx = Tensor3::zeros(dy.batch, tokens, channels);

        for (b, xs) in cache.x.iter().enumerate() {
            let _ = xs;
            let dyb = batch_slab(dy, b);
            let spectra = &cache.spectra[b];
            let stage1 = &cache.stage1[b];

            // adjoint of the normalized inverse DFT is the forward DFT
            let mut d_mixed = vec![Complex64::new(0.0, 0.0); channels * n_bins];
            for c in 0..channels {
                let mut grid: Vec<Complex64> = (0..n_bins)
                    .map(|t| Complex64::new(dyb[t * channels + c] * norm, 0.0))
                    .collect();
                fft2(&mut grid, side, fwd.as_ref());
                d_mixed[c * n_bins..(c + 1) * n_bins].copy_from_slice(&grid);
            }

            let mut d_spectra = vec![Complex64::new(0.0, 0.0); channels * n_bins];
            let mut u = vec![Complex64::new(0.0, 0.0); channels];
            let mut g_out = vec![Complex64::new(0.0, 0.0); channels];
            for ky in 0..side {
                for kx in 0..side {
                    let bin = ky * side + kx;
                    let mbin = mirror_bin(ky, kx, side);
                    if bin > mbin {
                        continue;
                    }
                    for c in 0..channels {
                        u[c] = spectra[c * n_bins + bin];
                        g_out[c] = if bin == mbin {
                            // only the real part of a self-conjugate bin flows on
                            Complex64::new(d_mixed[c * n_bins + bin].re, 0.0)
                        } else {
                            d_mixed[c * n_bins + bin] + d_mixed[c * n_bins + mbin].conj()
                        };
                    }

                    for bl in 0..self.block_count {
                        // stage 2: y = m W2
                        let mut d_m = vec![Complex64::new(0.0, 0.0); bs];
                        for i in 0..bs {
                            let t = stage1[(bl * bs + i) * n_bins + bin];
                            let m = self.modrelu(t, bl * bs + i);
                            for j in 0..bs {
                                let g = g_out[bl * bs + j];
                                let widx = 2 * ((bl * bs + i) * bs + j);
                                let dw = g * m.conj();
                                grads.w2[widx] += dw.re;
                                grads.w2[widx + 1] += dw.im;
                                d_m[i] += g * Self::w_at(&self.w2, bl, bs, i, j).conj();
                            }
                        }
                        // modReLU
                        let mut d_t = vec![Complex64::new(0.0, 0.0); bs];
                        for i in 0..bs {
                            let ch = bl * bs + i;
                            let z = stage1[ch * n_bins + bin];
                            let mag = z.norm();
                            if mag == 0.0 || mag + self.bias[ch] <= 0.0 {
                                continue; // output clamped at zero
                            }
                            let rho = (mag + self.bias[ch]) / mag;
                            let drho_dm = -self.bias[ch] / (mag * mag);
                            let proj = (d_m[i].conj() * z).re; // Re(conj(u) z)
                            d_t[i] = d_m[i] * rho + z * (drho_dm / mag * proj);
                            grads.bias[ch] += proj / mag;
                        }
                        // stage 1: t = u W1
                        for i in 0..bs {
                            let ui = u[bl * bs + i];
                            let mut acc = Complex64::new(0.0, 0.0);
                            for j in 0..bs {
                                let widx = 2 * ((bl * bs + i) * bs + j);
                                let dw = d_t[j] * ui.conj();
                                grads.w1[widx] += dw.re;
                                grads.w1[widx + 1] += dw.im;
                                acc += d_t[j] * Self::w_at(&self.w1, bl, bs, i, j).conj();
                            }
                            d_spectra[(bl * bs + i) * n_bins + bin] = acc;
                        }
                    }
                }
            }

            // adjoint of the forward DFT is the unnormalized inverse; the
            // input was real so only the real part survives
            let base = b * tokens * channels;
            for c in 0..channels {
                let mut grid = d_spectra[c * n_bins..(c + 1) * n_bins].to_vec();
                fft2(&mut grid, side, inv.as_ref());
                for (t, v) in grid.iter().enumerate() {
                    dx.data[base + t * channels + c] = v.re;
                }
            }
        }
        (dx, grads)
    }
}

/// In-place 2-D FFT of a side x side grid: rows, transpose, rows, transpose.
fn fft2(grid: &mut [Complex64], side: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in grid.chunks_mut(side) {
        fft.process(row);
    }
    transpose(grid, side);
    for row in grid.chunks_mut(side) {
        fft.process(row);
    }
    transpose(grid, side);
}

fn transpose(grid: &mut [Complex64], side: usize) {
    for r in 0..side {
        for c in r + 1..side {
            grid.swap(r * side + c, c * side + r);
        }
    }
}

/// Conjugate-mirror bin of (ky, kx) on a side x side spectrum.
fn mirror_bin(ky: usize, kx: usize, side: usize) -> usize {
    let my = (side - ky) % side;
    let mx = (side - kx) % side;
    my * side + mx
}

impl VisitParams for EinFftMixer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        let bs = self.block_size();
        f(
            &format!("{prefix}.w1"),
            &[self.block_count, bs, bs, 2],
            &self.w1,
        );
        f(
            &format!("{prefix}.w2"),
            &[self.block_count, bs, bs, 2],
            &self.w2,
        );
        f(&format!("{prefix}.bias"), &[self.channels], &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let bs = self.block_size();
        f(
            &format!("{prefix}.w1"),
            &[self.block_count, bs, bs, 2],
            &mut self.w1,
        );
        f(
            &format!("{prefix}.w2"),
            &[self.block_count, bs, bs, 2],
            &mut self.w2,
        );
        f(&format!("{prefix}.bias"), &[self.channels], &mut self.bias);
    }
}
