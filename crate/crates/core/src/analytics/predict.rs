//! Analytic cost prediction: exact closed-form operation counts where the
//! derivations pin them down, and the asymptotic class for every cell.
//!
//! Exact counts exist for incremental matrix powers (linear and exponential
//! models), the incremental linear general form, and the hybrid linear
//! general form. They count the per-update delta work under the kernel cost
//! convention: one mul_add per scalar product term, one add per elementwise
//! add, deltas of stored views materialized. For the general form the
//! published totals leave out fixed base terms the engine also performs (the
//! n^2 materialization of ΔA, and the 2np base delta under hybrid); tests pin
//! the engine to `exact` plus those offsets. Cells without a stated closed
//! form report only the class.
//!
//! Classes substitute the naive-multiplication exponent 3 for the generic
//! inner-product exponent, so a dense n x n product reads n^3.

use super::{IterativeModel, Strategy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    Powers,
    Sums,
    General,
}

impl Workload {
    pub fn label(&self) -> &'static str {
        match self {
            Workload::Powers => "powers",
            Workload::Sums => "sums",
            Workload::General => "general",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CostPrediction {
    pub workload: Workload,
    pub model: IterativeModel,
    pub strategy: Strategy,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Skip stride, 0 for the other models.
    pub s: usize,
    /// Exact per-update operation count where a closed form is published.
    pub exact: Option<u64>,
    /// Asymptotic per-update class.
    pub class: String,
}

/// Predicted per-update refresh cost for one (workload, model, strategy)
/// cell. `p` is ignored for powers and sums. Unsupported combinations
/// (hybrid outside the general form) are config errors.
pub fn predict_cost(
    workload: Workload,
    model: IterativeModel,
    strategy: Strategy,
    n: usize,
    p: usize,
    k: usize,
) -> Result<CostPrediction> {
    model.validate(k)?;
    if strategy == Strategy::Hybrid && workload != Workload::General {
        return Err(Error::config(format!(
            "hybrid applies only to the general form; valid cells are \
             powers/sums x (reevaluation | incremental) and general x any strategy, \
             got {} x hybrid",
            workload.label()
        )));
    }
    let exact = exact_count(workload, model, strategy, n, p, k);
    let class = class_string(workload, model, strategy);
    Ok(CostPrediction {
        workload,
        model,
        strategy,
        n,
        p,
        k,
        s: model.skip_stride().unwrap_or(0),
        exact,
        class,
    })
}

fn exact_count(
    workload: Workload,
    model: IterativeModel,
    strategy: Strategy,
    n: usize,
    p: usize,
    k: usize,
) -> Option<u64> {
    let (n64, p64, k64) = (n as u64, p as u64, k as u64);
    match (workload, model, strategy) {
        // n^2(k^2 + k - 1) + (3/2) n k (k-1); k(k-1) is even.
        (Workload::Powers, IterativeModel::Linear, Strategy::Incremental) => {
            Some(n64 * n64 * (k64 * k64 + k64 - 1) + 3 * n64 * k64 * (k64 - 1) / 2)
        }
        // n^2(4k - 3) + n(k - 1)(2k + 5)/3; (k-1)(2k+5) is divisible by 3
        // for every power-of-two k.
        (Workload::Powers, IterativeModel::Exponential, Strategy::Incremental) => {
            Some(n64 * n64 * (4 * k64 - 3) + n64 * (k64 - 1) * (2 * k64 + 5) / 3)
        }
        // Base 2np plus per-step n^2(i-1) + 3n(i-1) + np(i+1).
        (Workload::General, IterativeModel::Linear, Strategy::Incremental) => {
            let steps: u64 = (2..=k64)
                .map(|i| n64 * n64 * (i - 1) + 3 * n64 * (i - 1) + n64 * p64 * (i + 1))
                .sum();
            Some(2 * n64 * p64 + steps)
        }
        // n^2 for ΔA plus per-step pn^2 + 6np.
        (Workload::General, IterativeModel::Linear, Strategy::Hybrid) => {
            Some(n64 * n64 + (k64 - 1) * (p64 * n64 * n64 + 6 * n64 * p64))
        }
        _ => None,
    }
}

fn class_string(workload: Workload, model: IterativeModel, strategy: Strategy) -> String {
    use IterativeModel::*;
    use Strategy::*;
    let cell = match workload {
        Workload::Powers | Workload::Sums => match (model, strategy) {
            (Linear, Reevaluation) => "O(n^3 k)",
            (Exponential, Reevaluation) => "O(n^3 log k)",
            (Skip(_), Reevaluation) => "O(n^3 (log s + k/s))",
            (Linear, Incremental) => "O(n^2 k^2)",
            (Exponential, Incremental) => "O(n^2 k)",
            (Skip(_), Incremental) => "O(n^2 k^2/s)",
            (_, Hybrid) => unreachable!("rejected before classification"),
        },
        Workload::General => match (model, strategy) {
            (Linear, Reevaluation) => "O(p n^2 k)",
            (Exponential, Reevaluation) => "O((n^3 + p n^2) log k)",
            (Skip(_), Reevaluation) => "O(n^3 log s + p n^2 (log s + k/s))",
            (Linear, Incremental) => "O((n^2 + np) k^2)",
            (Exponential, Incremental) => "O((n^2 + np) k)",
            (Skip(_), Incremental) => "O((n^2 + np) k^2/s)",
            (Linear, Hybrid) => "O(p n^2 k)",
            (Exponential, Hybrid) => "O(p n^2 log k + n^2 k)",
            (Skip(_), Hybrid) => "O(p n^2 (log s + k/s) + n^2 s)",
        },
    };
    cell.to_string()
}
