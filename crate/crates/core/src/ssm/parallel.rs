//! Chunked parallel scan for the linear recurrence.
//!
//! Each token contributes the affine map x -> a_bar x + b_bar u_k. Affine
//! maps compose associatively:
//!
//! ```text
//! (a1, b1) ∘ (a2, b2) = (a1 a2, a2 b1 + b2)      (pair 1 applied first)
//! ```
//!
//! The scan runs in two passes over fixed-size chunks: an up-sweep reduces
//! every chunk to its total map, a sequential prefix over the (few) chunk
//! totals yields each chunk's carry-in, and a down-sweep expands states
//! within chunks. Both sweeps parallelize across chunks; the combine order
//! is fixed by the chunk size, so results are identical for any worker
//! count.

use super::{DiscreteSSM, SsmError};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
struct AffinePair {
    a: f64,
    b: f64,
}

const IDENTITY: AffinePair = AffinePair { a: 1.0, b: 0.0 };

#[inline]
fn combine(first: AffinePair, second: AffinePair) -> AffinePair {
    AffinePair {
        a: first.a * second.a,
        b: second.a * first.b + second.b,
    }
}

/// Parallel scan with the same contract as `scan_sequential`.
pub fn scan_parallel(ssm: &DiscreteSSM, u: &[f64], chunk: usize) -> Result<Vec<f64>, SsmError> {
    if chunk == 0 {
        return Err(SsmError::DomainError("chunk size must be >= 1".into()));
    }
    if u.is_empty() {
        return Ok(Vec::new());
    }
    let n = u.len();
    let n_chunks = n.div_ceil(chunk);

    // up-sweep: total affine map of each chunk
    let totals: Vec<AffinePair> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = (lo + chunk).min(n);
            let mut acc = IDENTITY;
            for &uk in &u[lo..hi] {
                acc = combine(
                    acc,
                    AffinePair {
                        a: ssm.a_bar,
                        b: ssm.b_bar * uk,
                    },
                );
            }
            acc
        })
        .collect();

    // exclusive prefix over chunk totals (cheap, sequential)
    let mut carries = Vec::with_capacity(n_chunks);
    let mut acc = IDENTITY;
    for t in &totals {
        carries.push(acc);
        acc = combine(acc, *t);
    }

    // down-sweep: expand states inside each chunk from its carry-in
    let mut y = vec![0.0; n];
    y.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(ci, out)| {
            let lo = ci * chunk;
            let mut state = carries[ci].b; // x_{lo-1} starting from x_0 = 0
            for (k, out_k) in out.iter_mut().enumerate() {
                let uk = u[lo + k];
                state = ssm.a_bar * state + ssm.b_bar * uk;
                *out_k = ssm.c * state + ssm.d * uk;
            }
        });

    Ok(y)
}
