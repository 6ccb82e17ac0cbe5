//! Sums of matrix powers S_k = I + A + ... + A^(k-1).
//!
//! Chain recurrences (Table-style, identity factors elided):
//!
//! * linear       S_i = A*S_{i-1} + I
//! * exponential  S_2i = P_i*S_i + S_i
//! * skip         S_i = P_s*S_{i-s} + S_s
//!
//! The exponential and skip models maintain the auxiliary P chain with the
//! matrix-powers machinery (up to k/2 and s respectively). S_1 = I is kept
//! symbolic: it is never materialized, its delta is zero, and products with
//! it are never charged. Factored S deltas (Z_i, W_i) start at index 2 with
//! ΔS_2 = ΔA.

use super::powers::{build_power_views, propagate_power_deltas, validate_update};
use super::{
    add_identity, base_delta, mul_update_block, scoped, AppliedDelta, DeltaLog, IterativeModel,
    Strategy, ViewState,
};
use crate::delta::RankKUpdate;
use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::matrix::{add_assign, mat_add, mat_mul, Matrix};
use crate::scalar::Scalar;

pub struct SumsEngine<T: Scalar> {
    model: IterativeModel,
    strategy: Strategy,
    k: usize,
    st: ViewState<T>,
    identity: Matrix<T>,
    reeval_current: Option<Matrix<T>>,
}

impl<T: Scalar> SumsEngine<T> {
    pub fn new(
        a: &Matrix<T>,
        k: usize,
        model: IterativeModel,
        strategy: Strategy,
        ledger: &mut CostLedger,
    ) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::config(format!(
                "sums of powers needs a square input, got {}x{}",
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
        let identity = Matrix::identity(a.rows());
        let mut reeval_current = None;
        scoped(ledger, "init", |l| {
            match strategy {
                Strategy::Incremental => {
                    if let Some((chain_model, chain_k)) = aux_chain(model, k) {
                        build_power_views(&st.a, chain_k, chain_model, &mut st.p, l)?;
                    }
                    build_sum_views(&mut st, k, model, l)?;
                }
                Strategy::Reevaluation => {
                    reeval_current = Some(reevaluate_sums(&st.a, k, model, l)?)
                }
                Strategy::Hybrid => unreachable!(),
            }
            Ok(())
        })?;
        Ok(SumsEngine { model, strategy, k, st, identity, reeval_current })
    }

    /// The maintained S_k (the identity when k = 1).
    pub fn current(&self) -> &Matrix<T> {
        if self.k == 1 {
            return &self.identity;
        }
        match self.strategy {
            Strategy::Reevaluation => self.reeval_current.as_ref().unwrap(),
            _ => &self.st.s[&self.k],
        }
    }

    pub fn state(&self) -> &ViewState<T> {
        &self.st
    }

    pub fn stored_view_count(&self) -> usize {
        match self.strategy {
            Strategy::Incremental => 1 + self.st.p.len() + self.st.s.len(),
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
                    if let Some((chain_model, chain_k)) = aux_chain(self.model, self.k) {
                        propagate_power_deltas(chain_model, chain_k, &self.st, &mut log, l)?;
                    }
                    propagate_sum_deltas(self.model, self.k, &self.st, &mut log, l)
                })?;
                scoped(ledger, "apply", |l| {
                    add_assign(&mut self.st.a, &log.p[&1].full, l)?;
                    for (i, view) in self.st.p.iter_mut() {
                        add_assign(view, &log.p[i].full, l)?;
                    }
                    for (i, view) in self.st.s.iter_mut() {
                        add_assign(view, &log.s[i].full, l)?;
                    }
                    Ok(())
                })?;
                self.st.last_deltas = log;
            }
            Strategy::Reevaluation => {
                let full = scoped(ledger, "delta", |l| mat_mul(&upd.u, &upd.v.t(), l))?;
                scoped(ledger, "apply", |l| add_assign(&mut self.st.a, &full, l))?;
                let cur = scoped(ledger, "reeval", |l| {
                    reevaluate_sums(&self.st.a, self.k, self.model, l)
                })?;
                self.reeval_current = Some(cur);
            }
            Strategy::Hybrid => unreachable!(),
        }
        Ok(self.current())
    }
}

/// Runs the whole update stream, returning S_k after each update.
pub fn sums_of_powers<T: Scalar>(
    a: &Matrix<T>,
    k: usize,
    model: IterativeModel,
    strategy: Strategy,
    updates: &[RankKUpdate<T>],
    ledger: &mut CostLedger,
) -> Result<Vec<Matrix<T>>> {
    let mut engine = SumsEngine::new(a, k, model, strategy, ledger)?;
    updates
        .iter()
        .map(|u| engine.apply_update(u, ledger).map(Matrix::clone))
        .collect()
}

/// Which P chain the sums recurrences consult: exponential up to k/2, skip
/// up to s. Linear (and skip with s = 1) needs only A itself.
fn aux_chain(model: IterativeModel, k: usize) -> Option<(IterativeModel, usize)> {
    match model {
        IterativeModel::Linear => None,
        IterativeModel::Exponential => {
            if k >= 4 {
                Some((IterativeModel::Exponential, k / 2))
            } else {
                None
            }
        }
        IterativeModel::Skip(s) => {
            if s >= 2 {
                Some((IterativeModel::Exponential, s))
            } else {
                None
            }
        }
    }
}

fn build_sum_views<T: Scalar>(
    st: &mut ViewState<T>,
    k: usize,
    model: IterativeModel,
    ledger: &mut CostLedger,
) -> Result<()> {
    if k == 1 {
        return Ok(());
    }
    // S_2 = A*S_1 + I with the identity product elided.
    let mut s2 = st.a.clone();
    add_identity(&mut s2, ledger);
    st.s.insert(2, s2);
    match model {
        IterativeModel::Linear => {
            for i in 3..=k {
                let mut next = mat_mul(&st.a, &st.s[&(i - 1)], ledger)?;
                add_identity(&mut next, ledger);
                st.s.insert(i, next);
            }
        }
        IterativeModel::Exponential => {
            let mut i = 4;
            while i <= k {
                let prod = mat_mul(st.power(i / 2), &st.s[&(i / 2)], ledger)?;
                let next = mat_add(&prod, &st.s[&(i / 2)], ledger)?;
                st.s.insert(i, next);
                i *= 2;
            }
        }
        IterativeModel::Skip(s) => {
            if s == 1 {
                return build_sum_views(st, k, IterativeModel::Linear, ledger);
            }
            build_sum_views_prefix(st, s, ledger)?;
            let mut i = 2 * s;
            while i <= k {
                let prod = mat_mul(st.power(s), &st.s[&(i - s)], ledger)?;
                let next = mat_add(&prod, &st.s[&s], ledger)?;
                st.s.insert(i, next);
                i += s;
            }
        }
    }
    Ok(())
}

/// Exponential build of S_4 .. S_s on top of the already-inserted S_2.
fn build_sum_views_prefix<T: Scalar>(
    st: &mut ViewState<T>,
    s: usize,
    ledger: &mut CostLedger,
) -> Result<()> {
    let mut i = 4;
    while i <= s {
        let prod = mat_mul(st.power(i / 2), &st.s[&(i / 2)], ledger)?;
        let next = mat_add(&prod, &st.s[&(i / 2)], ledger)?;
        st.s.insert(i, next);
        i *= 2;
    }
    Ok(())
}

/// One full recomputation of S_k; the re-evaluation strategy and the
/// verification oracle.
pub fn reevaluate_sums<T: Scalar>(
    a: &Matrix<T>,
    k: usize,
    model: IterativeModel,
    ledger: &mut CostLedger,
) -> Result<Matrix<T>> {
    if k == 1 {
        return Ok(Matrix::identity(a.rows()));
    }
    let mut s2 = a.clone();
    add_identity(&mut s2, ledger);
    match model {
        IterativeModel::Linear => {
            let mut cur = s2;
            for _ in 3..=k {
                cur = mat_mul(a, &cur, ledger)?;
                add_identity(&mut cur, ledger);
            }
            Ok(cur)
        }
        IterativeModel::Exponential => {
            let mut p = a.clone();
            let mut cur = s2;
            let mut i = 4;
            while i <= k {
                p = mat_mul(&p, &p, ledger)?;
                let prod = mat_mul(&p, &cur, ledger)?;
                cur = mat_add(&prod, &cur, ledger)?;
                i *= 2;
            }
            Ok(cur)
        }
        IterativeModel::Skip(s) => {
            if s == 1 {
                return reevaluate_sums(a, k, IterativeModel::Linear, ledger);
            }
            let mut p = a.clone();
            let mut cur = s2;
            let mut i = 4;
            while i <= s {
                p = mat_mul(&p, &p, ledger)?;
                let prod = mat_mul(&p, &cur, ledger)?;
                cur = mat_add(&prod, &cur, ledger)?;
                i *= 2;
            }
            let ss = cur.clone();
            if k / s >= 2 {
                // The doubling prefix leaves p = A^(s/2); the skip steps
                // need P_s.
                p = mat_mul(&p, &p, ledger)?;
                for _ in 2..=k / s {
                    let prod = mat_mul(&p, &cur, ledger)?;
                    cur = mat_add(&prod, &ss, ledger)?;
                }
            }
            Ok(cur)
        }
    }
}

/// Fills `log.s` for every sum level. Requires `log.p` to already cover the
/// auxiliary chain (base pair at least). Views are read pre-update.
pub(crate) fn propagate_sum_deltas<T: Scalar>(
    model: IterativeModel,
    k: usize,
    st: &ViewState<T>,
    log: &mut DeltaLog<T>,
    ledger: &mut CostLedger,
) -> Result<()> {
    if k == 1 {
        return Ok(());
    }
    // ΔS_2 = ΔA, no arithmetic beyond its materialization.
    let base = &log.p[&1];
    let full = mat_mul(&base.u, &base.v.t(), ledger)?;
    log.s.insert(2, AppliedDelta { u: base.u.clone(), v: base.v.clone(), full });
    match model {
        IterativeModel::Linear => {
            for i in 3..=k {
                let step = linear_sum_step(st, log, i, ledger)?;
                log.s.insert(i, step);
            }
        }
        IterativeModel::Exponential => {
            let mut i = 4;
            while i <= k {
                let step = doubling_sum_step(st, log, i / 2, ledger)?;
                log.s.insert(i, step);
                i *= 2;
            }
        }
        IterativeModel::Skip(s) => {
            if s == 1 {
                return propagate_sum_deltas(IterativeModel::Linear, k, st, log, ledger);
            }
            let mut i = 4;
            while i <= s {
                let step = doubling_sum_step(st, log, i / 2, ledger)?;
                log.s.insert(i, step);
                i *= 2;
            }
            let mut i = 2 * s;
            while i <= k {
                let step = skip_sum_step(st, log, s, i - s, ledger)?;
                log.s.insert(i, step);
                i += s;
            }
        }
    }
    Ok(())
}

/// ΔS_i for S_i = A*S_{i-1} + I:
/// Z = [U | A*Z_{i-1} + U*(V'*Z_{i-1})], W = [S_{i-1}'*V | W_{i-1}].
fn linear_sum_step<T: Scalar>(
    st: &ViewState<T>,
    log: &DeltaLog<T>,
    i: usize,
    ledger: &mut CostLedger,
) -> Result<AppliedDelta<T>> {
    let base = &log.p[&1];
    let prev = &log.s[&(i - 1)];
    let mixed = mul_update_block(&st.a, &base.u, &base.v, &prev.u, ledger)?;
    let z = Matrix::hstack(&[&base.u, &mixed])?;
    let sv = mat_mul(&st.s[&(i - 1)].t(), &base.v, ledger)?;
    let w = Matrix::hstack(&[&sv, &prev.v])?;
    let full = mat_mul(&z, &w.t(), ledger)?;
    Ok(AppliedDelta { u: z, v: w, full })
}

/// ΔS_2j for S_2j = P_j*S_j + S_j:
/// Z = [Q_j | P_j*Z_j + Q_j*(R_j'*Z_j) + Z_j], W = [S_j'*R_j | W_j].
fn doubling_sum_step<T: Scalar>(
    st: &ViewState<T>,
    log: &DeltaLog<T>,
    j: usize,
    ledger: &mut CostLedger,
) -> Result<AppliedDelta<T>> {
    let q = &log.p[&j];
    let zs = &log.s[&j];
    let mixed = mul_update_block(st.power(j), &q.u, &q.v, &zs.u, ledger)?;
    let mixed = mat_add(&mixed, &zs.u, ledger)?;
    let z = Matrix::hstack(&[&q.u, &mixed])?;
    let sr = mat_mul(&st.s[&j].t(), &q.v, ledger)?;
    let w = Matrix::hstack(&[&sr, &zs.v])?;
    let full = mat_mul(&z, &w.t(), ledger)?;
    Ok(AppliedDelta { u: z, v: w, full })
}

/// ΔS_i for S_i = P_s*S_{i-s} + S_s:
/// Z = [Q_s | P_s*Z_prev + Q_s*(R_s'*Z_prev) | Z_s],
/// W = [S_prev'*R_s | W_prev | W_s].
fn skip_sum_step<T: Scalar>(
    st: &ViewState<T>,
    log: &DeltaLog<T>,
    s: usize,
    prev_index: usize,
    ledger: &mut CostLedger,
) -> Result<AppliedDelta<T>> {
    let q = &log.p[&s];
    let prev = &log.s[&prev_index];
    let zs = &log.s[&s];
    let mixed = mul_update_block(st.power(s), &q.u, &q.v, &prev.u, ledger)?;
    let z = Matrix::hstack(&[&q.u, &mixed, &zs.u])?;
    let sr = mat_mul(&st.s[&prev_index].t(), &q.v, ledger)?;
    let w = Matrix::hstack(&[&sr, &prev.v, &zs.v])?;
    let full = mat_mul(&z, &w.t(), ledger)?;
    Ok(AppliedDelta { u: z, v: w, full })
}
