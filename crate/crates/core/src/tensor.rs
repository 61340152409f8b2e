//! Flat activation tensors for the mixer and backbone forward passes.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Mismatch { expected: String, got: String },
    #[error("token count {tokens} is not a perfect square")]
    NonSquareGrid { tokens: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

/// A (batch, tokens, channels) activation tensor stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub data: Vec<f64>,
    pub batch: usize,
    pub tokens: usize,
    pub channels: usize,
}

impl Tensor3 {
    pub fn zeros(batch: usize, tokens: usize, channels: usize) -> Self {
        Self {
            data: vec![0.0; batch * tokens * channels],
            batch,
            tokens,
            channels,
        }
    }

    pub fn from_vec(
        data: Vec<f64>,
        batch: usize,
        tokens: usize,
        channels: usize,
    ) -> Result<Self, ShapeError> {
        if data.len() != batch * tokens * channels {
            return Err(ShapeError::Mismatch {
                expected: format!("{}x{}x{} = {}", batch, tokens, channels, batch * tokens * channels),
                got: format!("{} elements", data.len()),
            });
        }
        Ok(Self {
            data,
            batch,
            tokens,
            channels,
        })
    }

    #[inline]
    pub fn idx(&self, b: usize, t: usize, c: usize) -> usize {
        (b * self.tokens + t) * self.channels + c
    }

    #[inline]
    pub fn get(&self, b: usize, t: usize, c: usize) -> f64 {
        self.data[self.idx(b, t, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, t: usize, c: usize, v: f64) {
        let i = self.idx(b, t, c);
        self.data[i] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.tokens, self.channels)
    }

    /// Side length of the square token grid; error when tokens is not square.
    pub fn grid_side(&self) -> Result<usize, ShapeError> {
        let side = (self.tokens as f64).sqrt().round() as usize;
        if side * side != self.tokens {
            return Err(ShapeError::NonSquareGrid {
                tokens: self.tokens,
            });
        }
        Ok(side)
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_finite(&self) -> Result<(), ShapeError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(ShapeError::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Elementwise a + s*b, consuming neither input.
    pub fn add_scaled(&self, other: &Tensor3, s: f64) -> Tensor3 {
        assert!(self.same_shape(other));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + s * b)
            .collect();
        Tensor3 {
            data,
            ..self.clone()
        }
    }

    /// Token permutation applied per batch sample: out[t] = in[perm[t]].
    pub fn permute_tokens(&self, perm: &[usize]) -> Tensor3 {
        assert_eq!(perm.len(), self.tokens);
        let mut out = Tensor3::zeros(self.batch, self.tokens, self.channels);
        for b in 0..self.batch {
            for (t, &src) in perm.iter().enumerate() {
                for c in 0..self.channels {
                    out.set(b, t, c, self.get(b, src, c));
                }
            }
        }
        out
    }
}

/// Dense y = x W for a (rows x inner) slice and (inner x cols) row-major weight.
pub fn matmul(x: &[f64], w: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows * inner);
    debug_assert_eq!(w.len(), inner * cols);
    let mut y = vec![0.0; rows * cols];
    for r in 0..rows {
        for k in 0..inner {
            let xv = x[r * inner + k];
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[k * cols..(k + 1) * cols];
            let yrow = &mut y[r * cols..(r + 1) * cols];
            for (yv, wv) in yrow.iter_mut().zip(wrow) {
                *yv += xv * wv;
            }
        }
    }
    y
}

/// Accumulate gradients of `matmul` into dx and dw given upstream dy.
pub fn matmul_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    rows: usize,
    inner: usize,
    cols: usize,
    dx: &mut [f64],
    dw: &mut [f64],
) {
    for r in 0..rows {
        for k in 0..inner {
            let mut acc = 0.0;
            let wrow = &w[k * cols..(k + 1) * cols];
            let dyrow = &dy[r * cols..(r + 1) * cols];
            for (wv, dyv) in wrow.iter().zip(dyrow) {
                acc += wv * dyv;
            }
            dx[r * inner + k] += acc;
            let xv = x[r * inner + k];
            let dwrow = &mut dw[k * cols..(k + 1) * cols];
            for (dwv, dyv) in dwrow.iter_mut().zip(dyrow) {
                *dwv += xv * dyv;
            }
        }
    }
}
