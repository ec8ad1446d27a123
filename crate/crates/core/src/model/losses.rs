//! Selector losses: cross-entropy against gold chunks plus the chunk-order
//! regularizer.
//!
//! With `s[j][c]` the cumulative probability row `j` assigns to chunks up to
//! `c`, the regularizer averages the positive increments of `s` between
//! consecutive segments. It is zero exactly when every row's CDF dominates
//! its successor's, the chronological-order case, and it penalizes mass that
//! moves back to earlier chunks while still permitting zigzags.

use serde::{Deserialize, Serialize};

use crate::diffkernel::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Selector forward output: `p[j][c]` is the probability of chunk `c` for
/// segment `j`; `s` holds the row-wise cumulative sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorOutput {
    pub p: Tensor,
    pub s: Tensor,
}

impl SelectorOutput {
    pub fn from_probabilities(p: Tensor) -> SelectorOutput {
        let (n, m) = p.shape();
        let mut s = Tensor::zeros(n, m);
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..m {
                acc += p.get(r, c);
                s.set(r, c, acc);
            }
        }
        SelectorOutput { p, s }
    }

    /// Rows sum to one and cumulative rows are non-decreasing ending at one.
    pub fn check_invariants(&self, tol: f64) -> bool {
        let (n, m) = self.p.shape();
        for r in 0..n {
            let sum: f64 = self.p.row_slice(r).iter().sum();
            if (sum - 1.0).abs() > tol {
                return false;
            }
            let mut prev = 0.0;
            for c in 0..m {
                let v = self.s.get(r, c);
                if v + tol < prev {
                    return false;
                }
                prev = v;
            }
            if (self.s.get(r, m - 1) - 1.0).abs() > tol {
                return false;
            }
        }
        true
    }
}

/// Loss components of one training step. `total` combines them as
/// `lambda_gen * generation + lambda_sel * (selector_ce + alpha * regularizer)
/// + lambda_switch * switch_bce`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub generation: f64,
    pub selector_ce: f64,
    pub regularizer: f64,
    pub switch_bce: f64,
}

/// Chunk-order regularizer over a matrix of selector rows.
pub fn regularizer(p: &Tensor) -> f64 {
    let (n, m) = p.shape();
    if n < 2 {
        return 0.0;
    }
    let out = SelectorOutput::from_probabilities(p.clone());
    let mut total = 0.0;
    for j in 0..n - 1 {
        for c in 0..m {
            total += (out.s.get(j + 1, c) - out.s.get(j, c)).max(0.0);
        }
    }
    total / n as f64
}

/// Selector loss: `-sum_j log p[j][gold_j] + alpha * regularizer`.
pub fn selector_loss(output: &SelectorOutput, gold: &[usize], alpha: f64) -> Result<f64> {
    let (n, m) = output.p.shape();
    if gold.len() != n {
        return Err(Error::LengthMismatch {
            detail: format!("{} gold labels for {n} selector rows", gold.len()),
        });
    }
    if let Some(&bad) = gold.iter().find(|&&g| g >= m) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            chunks: m,
        });
    }
    let ce: f64 = gold
        .iter()
        .enumerate()
        .map(|(j, &g)| -output.p.get(j, g).max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(ce + alpha * regularizer(&output.p))
}

/// Tape version of the regularizer for training; `probs` is the `(n, m)`
/// row-stochastic selector matrix on the tape.
pub fn regularizer_var(tape: &Tape, probs: Var) -> Result<Var> {
    let n = tape.value(probs).rows();
    if n < 2 {
        return Ok(tape.constant(&Tensor::scalar(0.0)));
    }
    let s = tape.cumsum_rows(probs)?;
    let later = tape.slice_rows(s, 1, n)?;
    let earlier = tape.slice_rows(s, 0, n - 1)?;
    let increments = tape.hinge_pos(tape.sub(later, earlier)?)?;
    tape.scale(tape.sum_all(increments)?, 1.0 / n as f64)
}
