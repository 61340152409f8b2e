//! Bidirectional scan with a single-counted diagonal.
//!
//! A forward scan realizes a lower-triangular token-mixing matrix and a
//! reversed scan an upper-triangular one; both include the token's own
//! contribution. Summing them and subtracting the backward self-term leaves
//! a quasiseparable mixing matrix
//!
//! ```text
//! T[k][m] = c_f a_f^(k-m) b_f   (m < k)
//! T[k][k] = c_f b_f + d
//! T[k][m] = c_b a_b^(m-k) b_b   (m > k)
//! ```
//!
//! so y = T u with each token's self-contribution counted exactly once. The
//! feedthrough of the forward system supplies the diagonal offset; the
//! backward system's feedthrough is unused.

use super::{scan_sequential, DiscreteSSM, SsmError};

/// Bidirectional scan; both systems must be given over the same sequence.
pub fn scan_bidirectional(
    fwd: &DiscreteSSM,
    bwd: &DiscreteSSM,
    u: &[f64],
) -> Result<Vec<f64>, SsmError> {
    if u.is_empty() {
        return Ok(Vec::new());
    }
    // feedthrough is applied once on the diagonal below; scan both
    // directions without it
    let fwd_pure = DiscreteSSM { d: 0.0, ..*fwd };
    let bwd_pure = DiscreteSSM { d: 0.0, ..*bwd };

    let forward = scan_sequential(&fwd_pure, u);
    let reversed: Vec<f64> = u.iter().rev().copied().collect();
    let mut backward = scan_sequential(&bwd_pure, &reversed);
    backward.reverse();

    let bwd_self = bwd.c * bwd.b_bar;
    Ok(forward
        .iter()
        .zip(&backward)
        .zip(u)
        .map(|((f, b), &uk)| f + b - bwd_self * uk + fwd.d * uk)
        .collect())
}
