//! Sherman-Morrison updates for maintained inverses.
//!
//! With `W = E^-1` maintained and the argument perturbed by a rank-1 outer
//! product `u v'`, the inverse moves by
//!
//! ```text
//! d(W) = -(W u v' W) / (1 + v' W u) = p q'
//! p = lambda * W u,  lambda = -1 / (1 + v' W u),  q = W' v
//! ```
//!
//! which costs O(n^2) instead of a fresh O(n^3) inversion. Rank-k argument
//! deltas apply the formula once per outer product, each step against the
//! inverse updated by the previous steps.

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::matrix::{add_assign, mat_mul, mat_scale, Matrix};
use crate::scalar::{cast, Scalar};

/// Denominators at or below `1e-12 * max(1, |v' W u|)` count as singular.
fn denominator_threshold(correction: f64) -> f64 {
    1e-12 * correction.abs().max(1.0)
}

/// Rank-1 factored delta `(p, q)` of a maintained inverse `w` under an
/// argument update `u v'`. Fails with [`Error::UpdateSingular`] (step 0)
/// when the denominator vanishes, meaning the updated argument is singular.
pub fn sherman_morrison_delta<T: Scalar>(
    w: &Matrix<T>,
    u: &Matrix<T>,
    v: &Matrix<T>,
    ledger: &mut CostLedger,
) -> Result<(Matrix<T>, Matrix<T>)> {
    sm_step(w, u, v, 0, ledger)
}

fn sm_step<T: Scalar>(
    w: &Matrix<T>,
    u: &Matrix<T>,
    v: &Matrix<T>,
    step: usize,
    ledger: &mut CostLedger,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let n = w.rows();
    if w.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "sherman_morrison",
            left: w.shape(),
            right: w.shape(),
        });
    }
    if u.shape() != (n, 1) || v.shape() != (n, 1) {
        return Err(Error::ShapeMismatch {
            op: "sherman_morrison",
            left: u.shape(),
            right: v.shape(),
        });
    }
    let wu = mat_mul(w, u, ledger)?; // n^2
    let vwu = mat_mul(&v.t(), &wu, ledger)?; // n
    let correction = vwu.get(0, 0).to_f64().unwrap();
    let denom = 1.0 + correction;
    ledger.charge_adds(1);
    if denom.abs() <= denominator_threshold(correction) {
        return Err(Error::UpdateSingular { step });
    }
    let lambda = cast::<T>(-1.0 / denom);
    let p = mat_scale(lambda, &wu, ledger)?; // n
    let q = mat_mul(&w.t(), v, ledger)?; // n^2
    Ok((p, q))
}

/// Result of a sequential Sherman-Morrison chain: the factored inverse delta
/// `r * s'` (width = number of outer products) and the updated inverse.
#[derive(Debug, Clone)]
pub struct SmChain<T> {
    pub r: Matrix<T>,
    pub s: Matrix<T>,
    pub updated: Matrix<T>,
}

/// Applies the formula once per `(u_i, v_i)` outer product, each against the
/// inverse already updated by steps `0..i`. Errors carry the failing step
/// index; the input `w` is never modified.
pub fn apply_sequential_sm<T: Scalar>(
    w: &Matrix<T>,
    updates: &[(Matrix<T>, Matrix<T>)],
    ledger: &mut CostLedger,
) -> Result<SmChain<T>> {
    let n = w.rows();
    let mut running = w.clone();
    let mut r_cols: Vec<Matrix<T>> = Vec::with_capacity(updates.len());
    let mut s_cols: Vec<Matrix<T>> = Vec::with_capacity(updates.len());
    for (i, (u, v)) in updates.iter().enumerate() {
        let (p, q) = sm_step(&running, u, v, i, ledger)?;
        let delta = mat_mul(&p, &q.t(), ledger)?; // n^2
        add_assign(&mut running, &delta, ledger)?; // n^2
        r_cols.push(p);
        s_cols.push(q);
    }
    let r = Matrix::hstack(&r_cols.iter().collect::<Vec<_>>())
        .unwrap_or_else(|_| Matrix::zeros(n, 0));
    let s = Matrix::hstack(&s_cols.iter().collect::<Vec<_>>())
        .unwrap_or_else(|_| Matrix::zeros(n, 0));
    let (r, s) = if updates.is_empty() {
        (Matrix::zeros(n, 0), Matrix::zeros(n, 0))
    } else {
        (r, s)
    };
    Ok(SmChain {
        r,
        s,
        updated: running,
    })
}
