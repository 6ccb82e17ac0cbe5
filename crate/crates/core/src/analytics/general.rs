//! The general iteration T_{i+1} = A*T_i + B with T_i of shape n x p.
//!
//! Via the unrolling identity T_{i+j} = A^j*T_i + (A^{j-1}+...+I)*B the three
//! models step as
//!
//! * linear       T_i  = A*T_{i-1} + B
//! * exponential  T_2i = P_i*T_i + S_i*B
//! * skip         T_i  = P_s*T_{i-s} + S_s*B
//!
//! so the exponential and skip models maintain auxiliary P and S chains with
//! the powers/sums machinery. All three strategies exist here: re-evaluation,
//! incremental (factored ΔT_i = U_i*V_i' whose width grows by
//! w(2i) = w_P(i) + w(i) + w_S(i)), and hybrid, which keeps each ΔT_i as a
//! single dense n x p matrix while still maintaining the chains in factored
//! form. Every delta step reads pre-update views; the same single function
//! serves all three models since a linear step is a lead-index-1 step.

use super::powers::{build_power_views, propagate_power_deltas, validate_update};
use super::sums::propagate_sum_deltas;
use super::{
    add_identity, base_delta, mul_update_block, scoped, AppliedDelta, DeltaLog, IterativeModel,
    Strategy, ViewState,
};
use crate::delta::RankKUpdate;
use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::matrix::{add_assign, mat_add, mat_mul, Matrix};
use crate::scalar::Scalar;

pub struct GeneralEngine<T: Scalar> {
    model: IterativeModel,
    strategy: Strategy,
    k: usize,
    st: ViewState<T>,
    reeval_current: Option<Matrix<T>>,
}

impl<T: Scalar> GeneralEngine<T> {
    pub fn new(
        a: &Matrix<T>,
        b: &Matrix<T>,
        t0: &Matrix<T>,
        k: usize,
        model: IterativeModel,
        strategy: Strategy,
        ledger: &mut CostLedger,
    ) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::config(format!(
                "general form needs a square A, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if b.rows() != n || t0.rows() != n || b.cols() != t0.cols() {
            return Err(Error::config(format!(
                "B ({}x{}) and T0 ({}x{}) must both be n x p with n = {n}",
                b.rows(),
                b.cols(),
                t0.rows(),
                t0.cols()
            )));
        }
        model.validate(k)?;
        let mut st = ViewState::new(a.clone());
        st.b = Some(b.clone());
        st.t0 = Some(t0.clone());
        let mut reeval_current = None;
        scoped(ledger, "init", |l| {
            match strategy {
                Strategy::Reevaluation => {
                    reeval_current = Some(reevaluate_general(&st.a, b, t0, k, model, l)?)
                }
                Strategy::Incremental | Strategy::Hybrid => {
                    if let Some((chain_model, chain_k)) = aux_chain(model, k) {
                        build_power_views(&st.a, chain_k, chain_model, &mut st.p, l)?;
                        build_sum_chain(&mut st, chain_k, l)?;
                    }
                    build_t_views(&mut st, k, model, l)?;
                }
            }
            Ok(())
        })?;
        Ok(GeneralEngine { model, strategy, k, st, reeval_current })
    }

    /// The maintained T_k.
    pub fn current(&self) -> &Matrix<T> {
        match self.strategy {
            Strategy::Reevaluation => self.reeval_current.as_ref().unwrap(),
            _ => &self.st.t[&self.k],
        }
    }

    pub fn state(&self) -> &ViewState<T> {
        &self.st
    }

    pub fn stored_view_count(&self) -> usize {
        match self.strategy {
            Strategy::Reevaluation => 1,
            _ => 1 + self.st.p.len() + self.st.s.len() + self.st.t.len(),
        }
    }

    pub fn apply_update(
        &mut self,
        upd: &RankKUpdate<T>,
        ledger: &mut CostLedger,
    ) -> Result<&Matrix<T>> {
        validate_update(upd, "A", self.st.a.shape())?;
        match self.strategy {
            Strategy::Reevaluation => {
                let full = scoped(ledger, "delta", |l| mat_mul(&upd.u, &upd.v.t(), l))?;
                scoped(ledger, "apply", |l| add_assign(&mut self.st.a, &full, l))?;
                let (b, t0) = (self.st.b.clone().unwrap(), self.st.t0.clone().unwrap());
                let cur = scoped(ledger, "reeval", |l| {
                    reevaluate_general(&self.st.a, &b, &t0, self.k, self.model, l)
                })?;
                self.reeval_current = Some(cur);
            }
            Strategy::Incremental | Strategy::Hybrid => {
                let hybrid = self.strategy == Strategy::Hybrid;
                let mut log = DeltaLog::default();
                scoped(ledger, "delta", |l| {
                    log.p.insert(1, base_delta(&upd.u, &upd.v, l)?);
                    if let Some((chain_model, chain_k)) = aux_chain(self.model, self.k) {
                        propagate_power_deltas(chain_model, chain_k, &self.st, &mut log, l)?;
                        propagate_sum_deltas(chain_model, chain_k, &self.st, &mut log, l)?;
                    }
                    if hybrid {
                        propagate_t_dense(self.model, self.k, &self.st, &mut log, l)
                    } else {
                        propagate_t_deltas(self.model, self.k, &self.st, &mut log, l)
                    }
                })?;
                scoped(ledger, "apply", |l| {
                    add_assign(&mut self.st.a, &log.p[&1].full, l)?;
                    for (i, view) in self.st.p.iter_mut() {
                        add_assign(view, &log.p[i].full, l)?;
                    }
                    for (i, view) in self.st.s.iter_mut() {
                        add_assign(view, &log.s[i].full, l)?;
                    }
                    for (i, view) in self.st.t.iter_mut() {
                        let delta = if hybrid { &log.t_dense[i] } else { &log.t[i].full };
                        add_assign(view, delta, l)?;
                    }
                    Ok(())
                })?;
                self.st.last_deltas = log;
            }
        }
        Ok(self.current())
    }
}

/// Runs the whole update stream, returning T_k after each update.
pub fn general_iteration<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    t0: &Matrix<T>,
    k: usize,
    model: IterativeModel,
    strategy: Strategy,
    updates: &[RankKUpdate<T>],
    ledger: &mut CostLedger,
) -> Result<Vec<Matrix<T>>> {
    let mut engine = GeneralEngine::new(a, b, t0, k, model, strategy, ledger)?;
    updates
        .iter()
        .map(|u| engine.apply_update(u, ledger).map(Matrix::clone))
        .collect()
}

/// P and S chains consulted by the step recurrences: exponential up to k/2,
/// skip up to s. Linear needs only A.
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

/// Exponential S chain S_2 .. S_upto. S_2 = A + I with the identity product
/// elided; S_2j = P_j*S_j + S_j.
fn build_sum_chain<T: Scalar>(
    st: &mut ViewState<T>,
    upto: usize,
    ledger: &mut CostLedger,
) -> Result<()> {
    if upto < 2 {
        return Ok(());
    }
    let mut s2 = st.a.clone();
    add_identity(&mut s2, ledger);
    st.s.insert(2, s2);
    let mut i = 4;
    while i <= upto {
        let prod = mat_mul(st.power(i / 2), &st.s[&(i / 2)], ledger)?;
        let next = mat_add(&prod, &st.s[&(i / 2)], ledger)?;
        st.s.insert(i, next);
        i *= 2;
    }
    Ok(())
}

/// S_lead * B with the S_1 = I case elided to B itself.
fn sb_term<T: Scalar>(
    st: &ViewState<T>,
    lead: usize,
    ledger: &mut CostLedger,
) -> Result<Matrix<T>> {
    let b = st.b.as_ref().unwrap();
    if lead == 1 {
        Ok(b.clone())
    } else {
        mat_mul(&st.s[&lead], b, ledger)
    }
}

fn build_t_views<T: Scalar>(
    st: &mut ViewState<T>,
    k: usize,
    model: IterativeModel,
    ledger: &mut CostLedger,
) -> Result<()> {
    let t0 = st.t0.clone().unwrap();
    let b = st.b.clone().unwrap();
    let first = mat_add(&mat_mul(&st.a, &t0, ledger)?, &b, ledger)?;
    st.t.insert(1, first);
    match model {
        IterativeModel::Linear => {
            for i in 2..=k {
                let next = mat_add(&mat_mul(&st.a, &st.t[&(i - 1)], ledger)?, &b, ledger)?;
                st.t.insert(i, next);
            }
        }
        IterativeModel::Exponential => {
            let mut i = 2;
            while i <= k {
                let sb = sb_term(st, i / 2, ledger)?;
                let next = mat_add(&mat_mul(st.power(i / 2), &st.t[&(i / 2)], ledger)?, &sb, ledger)?;
                st.t.insert(i, next);
                i *= 2;
            }
        }
        IterativeModel::Skip(s) => {
            if s == 1 {
                return build_t_views(st, k, IterativeModel::Linear, ledger);
            }
            let mut i = 2;
            while i <= s {
                let sb = sb_term(st, i / 2, ledger)?;
                let next = mat_add(&mat_mul(st.power(i / 2), &st.t[&(i / 2)], ledger)?, &sb, ledger)?;
                st.t.insert(i, next);
                i *= 2;
            }
            let sb = sb_term(st, s, ledger)?;
            let mut i = 2 * s;
            while i <= k {
                let next = mat_add(&mat_mul(st.power(s), &st.t[&(i - s)], ledger)?, &sb, ledger)?;
                st.t.insert(i, next);
                i += s;
            }
        }
    }
    Ok(())
}

/// One full recomputation of T_k; the re-evaluation strategy and the
/// verification oracle.
pub fn reevaluate_general<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    t0: &Matrix<T>,
    k: usize,
    model: IterativeModel,
    ledger: &mut CostLedger,
) -> Result<Matrix<T>> {
    match model {
        IterativeModel::Linear => {
            let mut t = t0.clone();
            for _ in 1..=k {
                t = mat_add(&mat_mul(a, &t, ledger)?, b, ledger)?;
            }
            Ok(t)
        }
        IterativeModel::Exponential => {
            let mut t = mat_add(&mat_mul(a, t0, ledger)?, b, ledger)?;
            let mut p = a.clone();
            let mut s: Option<Matrix<T>> = None;
            let mut j = 1;
            while 2 * j <= k {
                let sb = match &s {
                    None => b.clone(),
                    Some(s) => mat_mul(s, b, ledger)?,
                };
                t = mat_add(&mat_mul(&p, &t, ledger)?, &sb, ledger)?;
                if 4 * j <= k {
                    s = Some(match s {
                        None => {
                            let mut s2 = a.clone();
                            add_identity(&mut s2, ledger);
                            s2
                        }
                        Some(prev) => mat_add(&mat_mul(&p, &prev, ledger)?, &prev, ledger)?,
                    });
                    p = mat_mul(&p, &p, ledger)?;
                }
                j *= 2;
            }
            Ok(t)
        }
        IterativeModel::Skip(s_len) => {
            if s_len == 1 {
                return reevaluate_general(a, b, t0, k, IterativeModel::Linear, ledger);
            }
            // exponential prefix to T_s, keeping P_s and S_s for the jumps
            let mut t = mat_add(&mat_mul(a, t0, ledger)?, b, ledger)?;
            let mut p = a.clone();
            let mut s: Option<Matrix<T>> = None;
            let mut j = 1;
            while 2 * j <= s_len {
                let sb = match &s {
                    None => b.clone(),
                    Some(s) => mat_mul(s, b, ledger)?,
                };
                t = mat_add(&mat_mul(&p, &t, ledger)?, &sb, ledger)?;
                s = Some(match s {
                    None => {
                        let mut s2 = a.clone();
                        add_identity(&mut s2, ledger);
                        s2
                    }
                    Some(prev) => mat_add(&mat_mul(&p, &prev, ledger)?, &prev, ledger)?,
                });
                p = mat_mul(&p, &p, ledger)?;
                j *= 2;
            }
            let sb = match &s {
                None => b.clone(),
                Some(s) => mat_mul(s, b, ledger)?,
            };
            for _ in 2..=k / s_len {
                t = mat_add(&mat_mul(&p, &t, ledger)?, &sb, ledger)?;
            }
            Ok(t)
        }
    }
}

/// ΔT for one step T = P_lead * T_trail + S_lead * B given the chain deltas.
/// With ΔP_lead = Q*R', ΔT_trail = U*V', ΔS_lead = Z*W':
///
///   U_next = [Q | P_lead*U + Q*(R'*U) | Z]
///   V_next = [T_trail'*R | V | B'*W]
///
/// The Z/W blocks drop out when lead = 1 since ΔS_1 = 0; that case is
/// exactly the linear recurrence.
fn general_t_step<T: Scalar>(
    st: &ViewState<T>,
    log: &DeltaLog<T>,
    lead: usize,
    trail: usize,
    ledger: &mut CostLedger,
) -> Result<AppliedDelta<T>> {
    let q = &log.p[&lead];
    let ut = &log.t[&trail];
    let mixed = mul_update_block(st.power(lead), &q.u, &q.v, &ut.u, ledger)?;
    let tv = mat_mul(&st.t[&trail].t(), &q.v, ledger)?;
    let (u, v) = if lead == 1 {
        (
            Matrix::hstack(&[&q.u, &mixed])?,
            Matrix::hstack(&[&tv, &ut.v])?,
        )
    } else {
        let z = &log.s[&lead];
        let bw = mat_mul(&st.b.as_ref().unwrap().t(), &z.v, ledger)?;
        (
            Matrix::hstack(&[&q.u, &mixed, &z.u])?,
            Matrix::hstack(&[&tv, &ut.v, &bw])?,
        )
    };
    let full = mat_mul(&u, &v.t(), ledger)?;
    Ok(AppliedDelta { u, v, full })
}

fn propagate_t_deltas<T: Scalar>(
    model: IterativeModel,
    k: usize,
    st: &ViewState<T>,
    log: &mut DeltaLog<T>,
    ledger: &mut CostLedger,
) -> Result<()> {
    let base = &log.p[&1];
    let v1 = mat_mul(&st.t0.as_ref().unwrap().t(), &base.v, ledger)?;
    let u1 = base.u.clone();
    let full = mat_mul(&u1, &v1.t(), ledger)?;
    log.t.insert(1, AppliedDelta { u: u1, v: v1, full });
    match model {
        IterativeModel::Linear => {
            for i in 2..=k {
                let step = general_t_step(st, log, 1, i - 1, ledger)?;
                log.t.insert(i, step);
            }
        }
        IterativeModel::Exponential => {
            let mut i = 2;
            while i <= k {
                let step = general_t_step(st, log, i / 2, i / 2, ledger)?;
                log.t.insert(i, step);
                i *= 2;
            }
        }
        IterativeModel::Skip(s) => {
            if s == 1 {
                return propagate_t_deltas(IterativeModel::Linear, k, st, log, ledger);
            }
            let mut i = 2;
            while i <= s {
                let step = general_t_step(st, log, i / 2, i / 2, ledger)?;
                log.t.insert(i, step);
                i *= 2;
            }
            let mut i = 2 * s;
            while i <= k {
                let step = general_t_step(st, log, s, i - s, ledger)?;
                log.t.insert(i, step);
                i += s;
            }
        }
    }
    Ok(())
}

/// Hybrid ΔT for one step, kept dense:
/// D_next = Q*(R'*T_trail) + P_lead*D_trail + Q*(R'*D_trail) [+ Z*(W'*B)].
fn general_t_dense_step<T: Scalar>(
    st: &ViewState<T>,
    log: &DeltaLog<T>,
    lead: usize,
    trail: usize,
    ledger: &mut CostLedger,
) -> Result<Matrix<T>> {
    let q = &log.p[&lead];
    let d = &log.t_dense[&trail];
    let rt = mat_mul(&q.v.t(), &st.t[&trail], ledger)?;
    let term1 = mat_mul(&q.u, &rt, ledger)?;
    let term2 = mat_mul(st.power(lead), d, ledger)?;
    let rd = mat_mul(&q.v.t(), d, ledger)?;
    let term3 = mat_mul(&q.u, &rd, ledger)?;
    let mut acc = mat_add(&mat_add(&term1, &term2, ledger)?, &term3, ledger)?;
    if lead > 1 {
        let z = &log.s[&lead];
        let wb = mat_mul(&z.v.t(), st.b.as_ref().unwrap(), ledger)?;
        let term4 = mat_mul(&z.u, &wb, ledger)?;
        acc = mat_add(&acc, &term4, ledger)?;
    }
    Ok(acc)
}

fn propagate_t_dense<T: Scalar>(
    model: IterativeModel,
    k: usize,
    st: &ViewState<T>,
    log: &mut DeltaLog<T>,
    ledger: &mut CostLedger,
) -> Result<()> {
    let base = &log.p[&1];
    let vt = mat_mul(&base.v.t(), st.t0.as_ref().unwrap(), ledger)?;
    let d1 = mat_mul(&base.u, &vt, ledger)?;
    log.t_dense.insert(1, d1);
    match model {
        IterativeModel::Linear => {
            for i in 2..=k {
                let step = general_t_dense_step(st, log, 1, i - 1, ledger)?;
                log.t_dense.insert(i, step);
            }
        }
        IterativeModel::Exponential => {
            let mut i = 2;
            while i <= k {
                let step = general_t_dense_step(st, log, i / 2, i / 2, ledger)?;
                log.t_dense.insert(i, step);
                i *= 2;
            }
        }
        IterativeModel::Skip(s) => {
            if s == 1 {
                return propagate_t_dense(IterativeModel::Linear, k, st, log, ledger);
            }
            let mut i = 2;
            while i <= s {
                let step = general_t_dense_step(st, log, i / 2, i / 2, ledger)?;
                log.t_dense.insert(i, step);
                i *= 2;
            }
            let mut i = 2 * s;
            while i <= k {
                let step = general_t_dense_step(st, log, s, i - s, ledger)?;
                log.t_dense.insert(i, step);
                i += s;
            }
        }
    }
    Ok(())
}
