//! Iterative workload engines and their cost predictor.
//!
//! The workloads are matrix powers P_k = A^k, sums of powers
//! S_k = I + A + ... + A^(k-1), the general recurrence T_{i+1} = A*T_i + B,
//! and ordinary least squares. Each runs under one of three iterative models
//! (linear, exponential, skip-s) and is maintained under re-evaluation,
//! incremental maintenance of factored deltas, or (general form only) hybrid
//! maintenance where the per-iteration delta stays a single dense matrix.
//!
//! Charge discipline shared by every engine, which the predictor mirrors:
//! * `init`   - building the initial view chain,
//! * `delta`  - per-update delta computation, including materializing each
//!              stored view's delta as a full matrix,
//! * `apply`  - the elementwise `+=` installing deltas into stored views,
//! * `reeval` - chain recomputation under the re-evaluation strategy.
//!
//! Multiplication by the identity is never charged: S_1 = I is kept symbolic,
//! so e.g. S_2 = A*S_1 + I costs only the n diagonal additions.

pub mod general;
pub mod ols;
pub mod powers;
pub mod predict;
pub mod sums;
pub mod zipf;

pub use general::{general_iteration, reevaluate_general, GeneralEngine};
pub use ols::{ols, OlsEngine};
pub use powers::{matrix_powers, reevaluate_powers, PowersEngine};
pub use predict::{predict_cost, CostPrediction, Workload};
pub use sums::{reevaluate_sums, sums_of_powers, SumsEngine};
pub use zipf::{zipf_batch_stream, ZipfStream};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::matrix::{mat_add, mat_mul, Matrix};
use crate::scalar::Scalar;

/// How the k-th iterate is reached: k steps, log2(k) doublings, or an
/// exponential prefix to s followed by stride-s jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterativeModel {
    Linear,
    Exponential,
    Skip(usize),
}

impl IterativeModel {
    /// Checks the integrality assumptions: exponential needs k a power of
    /// two, skip-s needs s a power of two with s <= k and s | k.
    pub fn validate(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Config { msg: "iteration count k must be at least 1".into() });
        }
        match *self {
            IterativeModel::Linear => Ok(()),
            IterativeModel::Exponential => {
                if k.is_power_of_two() {
                    Ok(())
                } else {
                    Err(Error::Config {
                        msg: format!("exponential model requires k a power of two, got k={k}"),
                    })
                }
            }
            IterativeModel::Skip(s) => {
                if s == 0 || !s.is_power_of_two() {
                    Err(Error::Config {
                        msg: format!("skip model requires s a power of two, got s={s}"),
                    })
                } else if s > k || k % s != 0 {
                    Err(Error::Config {
                        msg: format!("skip model requires s <= k and s | k, got s={s}, k={k}"),
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Iteration indices whose views the incremental strategies store:
    /// {1..k}, {1,2,4,..,k}, or {1,2,4,..,s} followed by {2s,3s,..,k}.
    pub fn index_set(&self, k: usize) -> Vec<usize> {
        match *self {
            IterativeModel::Linear => (1..=k).collect(),
            IterativeModel::Exponential => {
                let mut out = vec![1];
                let mut i = 2;
                while i <= k {
                    out.push(i);
                    i *= 2;
                }
                out
            }
            IterativeModel::Skip(s) => {
                let mut out = IterativeModel::Exponential.index_set(s);
                let mut i = 2 * s;
                while i <= k {
                    out.push(i);
                    i += s;
                }
                out
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            IterativeModel::Linear => "lin",
            IterativeModel::Exponential => "exp",
            IterativeModel::Skip(_) => "skip",
        }
    }

    pub fn skip_stride(&self) -> Option<usize> {
        match self {
            IterativeModel::Skip(s) => Some(*s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Reevaluation,
    Incremental,
    Hybrid,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Reevaluation => "reeval",
            Strategy::Incremental => "incr",
            Strategy::Hybrid => "hybrid",
        }
    }
}

/// A factored delta U*V' together with its materialized full form. The full
/// form is produced during the compute phase (and charged there); the apply
/// phase only performs the elementwise `+=`.
#[derive(Debug, Clone)]
pub struct AppliedDelta<T> {
    pub u: Matrix<T>,
    pub v: Matrix<T>,
    pub full: Matrix<T>,
}

/// Per-update record of every delta an engine produced, keyed by iteration
/// index. `p[1]` is the base update to A itself. Hybrid runs fill `t_dense`
/// instead of `t`.
#[derive(Debug, Clone)]
pub struct DeltaLog<T> {
    pub p: BTreeMap<usize, AppliedDelta<T>>,
    pub s: BTreeMap<usize, AppliedDelta<T>>,
    pub t: BTreeMap<usize, AppliedDelta<T>>,
    pub t_dense: BTreeMap<usize, Matrix<T>>,
}

impl<T> Default for DeltaLog<T> {
    fn default() -> Self {
        DeltaLog {
            p: BTreeMap::new(),
            s: BTreeMap::new(),
            t: BTreeMap::new(),
            t_dense: BTreeMap::new(),
        }
    }
}

/// Materialized views held by an engine. P_1 is the input A itself and S_1
/// is the identity, so the maps only hold indices where a separate matrix
/// exists: `p` from 2 up, `s` from 2 up, `t` from 1 up.
#[derive(Debug, Clone)]
pub struct ViewState<T: Scalar> {
    pub a: Matrix<T>,
    pub b: Option<Matrix<T>>,
    pub t0: Option<Matrix<T>>,
    pub p: BTreeMap<usize, Matrix<T>>,
    pub s: BTreeMap<usize, Matrix<T>>,
    pub t: BTreeMap<usize, Matrix<T>>,
    pub last_deltas: DeltaLog<T>,
}

impl<T: Scalar> ViewState<T> {
    pub fn new(a: Matrix<T>) -> Self {
        ViewState {
            a,
            b: None,
            t0: None,
            p: BTreeMap::new(),
            s: BTreeMap::new(),
            t: BTreeMap::new(),
            last_deltas: DeltaLog::default(),
        }
    }

    /// P_i view, resolving index 1 to A.
    pub fn power(&self, i: usize) -> &Matrix<T> {
        if i == 1 {
            &self.a
        } else {
            &self.p[&i]
        }
    }
}

/// ΔA as a full matrix, paired with the update factors.
pub(crate) fn base_delta<T: Scalar>(
    u: &Matrix<T>,
    v: &Matrix<T>,
    ledger: &mut CostLedger,
) -> Result<AppliedDelta<T>> {
    let full = mat_mul(u, &v.t(), ledger)?;
    Ok(AppliedDelta { u: u.clone(), v: v.clone(), full })
}

/// The recurring update block M*U + Q*(R'*U), evaluated in exactly that
/// association so the operation counts match the published per-step costs.
pub(crate) fn mul_update_block<T: Scalar>(
    m: &Matrix<T>,
    q: &Matrix<T>,
    r: &Matrix<T>,
    u_prev: &Matrix<T>,
    ledger: &mut CostLedger,
) -> Result<Matrix<T>> {
    let mu = mat_mul(m, u_prev, ledger)?;
    let ru = mat_mul(&r.t(), u_prev, ledger)?;
    let qru = mat_mul(q, &ru, ledger)?;
    mat_add(&mu, &qru, ledger)
}

/// target += I, charging one addition per diagonal entry.
pub(crate) fn add_identity<T: Scalar>(target: &mut Matrix<T>, ledger: &mut CostLedger) {
    let n = target.rows().min(target.cols());
    for i in 0..n {
        let x = target.get(i, i);
        target.set(i, i, x + T::one());
    }
    ledger.charge_adds(n as u64);
}

/// Runs `body` with the ledger scoped to `label`, restoring the previous
/// scope on exit even when `body` fails.
pub(crate) fn scoped<T>(
    ledger: &mut CostLedger,
    label: &str,
    body: impl FnOnce(&mut CostLedger) -> Result<T>,
) -> Result<T> {
    let prev = ledger.scope().to_string();
    ledger.set_scope(label);
    let out = body(ledger);
    ledger.set_scope(prev);
    out
}
