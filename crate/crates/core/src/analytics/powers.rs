//! Matrix powers P_i = A^i.
//!
//! Re-evaluation recomputes the chain after each update. Incremental
//! maintenance keeps every view of the model's index set and propagates the
//! factored delta of A through the chain recurrences. Each chain step is a
//! single multiplication P = P_lead * P_trail (lead = A, P_i, or P_s
//! depending on the model), whose delta in factored form is
//!
//!   U = [U_lead | P_lead*U_trail + U_lead*(V_lead'*U_trail)]
//!   V = [P_trail'*V_lead | V_trail]
//!
//! For a rank-r update the width at index i is r*i. Every stored view's
//! delta is materialized in the `delta` scope; the `apply` scope holds only
//! the elementwise `+=`.

use std::collections::BTreeMap;

use super::{
    base_delta, mul_update_block, scoped, AppliedDelta, DeltaLog, IterativeModel, Strategy,
    ViewState,
};
use crate::delta::RankKUpdate;
use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::matrix::{add_assign, mat_mul, Matrix};
use crate::scalar::Scalar;

pub struct PowersEngine<T: Scalar> {
    model: IterativeModel,
    strategy: Strategy,
    k: usize,
    st: ViewState<T>,
    reeval_current: Option<Matrix<T>>,
}

impl<T: Scalar> PowersEngine<T> {
    pub fn new(
        a: &Matrix<T>,
        k: usize,
        model: IterativeModel,
        strategy: Strategy,
        ledger: &mut CostLedger,
    ) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::config(format!(
                "matrix powers needs a square input, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if strategy == Strategy::Hybrid {
            return Err(Error::config(
                "hybrid strategy applies only to the general form T_{i+1} = A*T_i + B",
            ));
        }
        model.validate(k)?;
        let mut st = ViewState::new(a.clone());
        let mut reeval_current = None;
        scoped(ledger, "init", |l| {
            match strategy {
                Strategy::Incremental => build_power_views(&st.a, k, model, &mut st.p, l)?,
                Strategy::Reevaluation => {
                    reeval_current = Some(reevaluate_powers(&st.a, k, model, l)?)
                }
                Strategy::Hybrid => unreachable!(),
            }
            Ok(())
        })?;
        Ok(PowersEngine { model, strategy, k, st, reeval_current })
    }

    /// The maintained P_k.
    pub fn current(&self) -> &Matrix<T> {
        match self.strategy {
            Strategy::Reevaluation => self.reeval_current.as_ref().unwrap(),
            _ => self.st.power(self.k),
        }
    }

    pub fn state(&self) -> &ViewState<T> {
        &self.st
    }

    pub fn model(&self) -> IterativeModel {
        self.model
    }

    /// Matrices retained between updates: the index-set views for the
    /// incremental strategy (A itself standing in for P_1), or just the
    /// current result under re-evaluation.
    pub fn stored_view_count(&self) -> usize {
        match self.strategy {
            Strategy::Incremental => 1 + self.st.p.len(),
            _ => 1,
        }
    }

    pub fn apply_update(
        &mut self,
        upd: &RankKUpdate<T>,
        ledger: &mut CostLedger,
    ) -> Result<&Matrix<T>> {
        validate_update(upd, "A", self.st.a.shape())?;
        match self.strategy {
            Strategy::Incremental => {
                let mut log = DeltaLog::default();
                scoped(ledger, "delta", |l| {
                    log.p.insert(1, base_delta(&upd.u, &upd.v, l)?);
                    propagate_power_deltas(self.model, self.k, &self.st, &mut log, l)
                })?;
                scoped(ledger, "apply", |l| {
                    add_assign(&mut self.st.a, &log.p[&1].full, l)?;
                    for (i, view) in self.st.p.iter_mut() {
                        add_assign(view, &log.p[i].full, l)?;
                    }
                    Ok(())
                })?;
                self.st.last_deltas = log;
            }
            Strategy::Reevaluation => {
                let full = scoped(ledger, "delta", |l| mat_mul(&upd.u, &upd.v.t(), l))?;
                scoped(ledger, "apply", |l| add_assign(&mut self.st.a, &full, l))?;
                let cur = scoped(ledger, "reeval", |l| {
                    reevaluate_powers(&self.st.a, self.k, self.model, l)
                })?;
                self.reeval_current = Some(cur);
            }
            Strategy::Hybrid => unreachable!(),
        }
        Ok(self.current())
    }
}

/// Runs the whole update stream, returning P_k after each update.
pub fn matrix_powers<T: Scalar>(
    a: &Matrix<T>,
    k: usize,
    model: IterativeModel,
    strategy: Strategy,
    updates: &[RankKUpdate<T>],
    ledger: &mut CostLedger,
) -> Result<Vec<Matrix<T>>> {
    let mut engine = PowersEngine::new(a, k, model, strategy, ledger)?;
    updates
        .iter()
        .map(|u| engine.apply_update(u, ledger).map(Matrix::clone))
        .collect()
}

pub(crate) fn validate_update<T: Scalar>(
    upd: &RankKUpdate<T>,
    expected_name: &str,
    expected_shape: (usize, usize),
) -> Result<()> {
    if upd.name != expected_name {
        return Err(Error::config(format!(
            "update targets `{}` but this workload updates `{expected_name}`",
            upd.name
        )));
    }
    if upd.target_shape() != expected_shape {
        return Err(Error::data(format!(
            "update shape {}x{} does not match target {}x{}",
            upd.target_shape().0,
            upd.target_shape().1,
            expected_shape.0,
            expected_shape.1
        )));
    }
    Ok(())
}

/// Builds the stored views P_i for the model's index set (indices above 1).
pub(crate) fn build_power_views<T: Scalar>(
    a: &Matrix<T>,
    k: usize,
    model: IterativeModel,
    out: &mut BTreeMap<usize, Matrix<T>>,
    ledger: &mut CostLedger,
) -> Result<()> {
    match model {
        IterativeModel::Linear => {
            let mut prev = a.clone();
            for i in 2..=k {
                let next = mat_mul(a, &prev, ledger)?;
                out.insert(i, next.clone());
                prev = next;
            }
        }
        IterativeModel::Exponential => {
            let mut i = 2;
            while i <= k {
                let half = if i == 2 { a } else { &out[&(i / 2)] };
                let next = mat_mul(half, half, ledger)?;
                out.insert(i, next);
                i *= 2;
            }
        }
        IterativeModel::Skip(s) => {
            build_power_views(a, s, IterativeModel::Exponential, out, ledger)?;
            let mut i = 2 * s;
            while i <= k {
                let ps = if s == 1 { a } else { &out[&s] };
                let prev = if i - s == 1 { a } else { &out[&(i - s)] };
                let next = mat_mul(ps, prev, ledger)?;
                out.insert(i, next);
                i += s;
            }
        }
    }
    Ok(())
}

/// One full recomputation of P_k, used by the re-evaluation strategy and as
/// the verification oracle (with a scratch ledger).
pub fn reevaluate_powers<T: Scalar>(
    a: &Matrix<T>,
    k: usize,
    model: IterativeModel,
    ledger: &mut CostLedger,
) -> Result<Matrix<T>> {
    match model {
        IterativeModel::Linear => {
            let mut cur = a.clone();
            for _ in 2..=k {
                cur = mat_mul(a, &cur, ledger)?;
            }
            Ok(cur)
        }
        IterativeModel::Exponential => {
            let mut cur = a.clone();
            for _ in 0..k.trailing_zeros() {
                cur = mat_mul(&cur, &cur, ledger)?;
            }
            Ok(cur)
        }
        IterativeModel::Skip(s) => {
            let mut ps = a.clone();
            for _ in 0..s.trailing_zeros() {
                ps = mat_mul(&ps, &ps, ledger)?;
            }
            let mut cur = ps.clone();
            for _ in 2..=k / s {
                cur = mat_mul(&ps, &cur, ledger)?;
            }
            Ok(cur)
        }
    }
}

/// Propagates the base pair in `log.p[1]` through the chain recurrences,
/// filling `log.p` for every index of `model`'s set. Views are read from
/// `st` pre-update.
pub(crate) fn propagate_power_deltas<T: Scalar>(
    model: IterativeModel,
    k: usize,
    st: &ViewState<T>,
    log: &mut DeltaLog<T>,
    ledger: &mut CostLedger,
) -> Result<()> {
    match model {
        IterativeModel::Linear => {
            for i in 2..=k {
                let step =
                    power_delta_step(st, &log.p[&1], &log.p[&(i - 1)], 1, i - 1, ledger)?;
                log.p.insert(i, step);
            }
        }
        IterativeModel::Exponential => {
            let mut i = 2;
            while i <= k {
                let prev = &log.p[&(i / 2)];
                let step = power_delta_step(st, prev, prev, i / 2, i / 2, ledger)?;
                log.p.insert(i, step);
                i *= 2;
            }
        }
        IterativeModel::Skip(s) => {
            propagate_power_deltas(IterativeModel::Exponential, s, st, log, ledger)?;
            let mut i = 2 * s;
            while i <= k {
                let step =
                    power_delta_step(st, &log.p[&s], &log.p[&(i - s)], s, i - s, ledger)?;
                log.p.insert(i, step);
                i += s;
            }
        }
    }
    Ok(())
}

/// Delta of one chain multiplication P_{lead+trail} = P_lead * P_trail.
fn power_delta_step<T: Scalar>(
    st: &ViewState<T>,
    lead: &AppliedDelta<T>,
    trail: &AppliedDelta<T>,
    lead_index: usize,
    trail_index: usize,
    ledger: &mut CostLedger,
) -> Result<AppliedDelta<T>> {
    let mixed = mul_update_block(st.power(lead_index), &lead.u, &lead.v, &trail.u, ledger)?;
    let u = Matrix::hstack(&[&lead.u, &mixed])?;
    let pv = mat_mul(&st.power(trail_index).t(), &lead.v, ledger)?;
    let v = Matrix::hstack(&[&pv, &trail.v])?;
    let full = mat_mul(&u, &v.t(), ledger)?;
    Ok(AppliedDelta { u, v, full })
}
