//! Ordinary least squares β* = (X'X)^-1 X'Y under rank-k updates to X.
//!
//! Maintained views: Z = X'X, its inverse W, G = X'Y, and β* = W*G. A rank-r
//! change ΔX = U*V' moves the Gram matrix by
//!
//!   ΔZ = (X'U)V' + V(U'X) + V(U'U)V' = [V | X'U + V(U'U)] * [X'U | V]'
//!
//! a factored width-2r delta. The inverse follows by a sequential
//! Sherman-Morrison chain over those 2r outer products, G moves by V(U'Y),
//! and β* by W*ΔG + ΔW*G_new, associated so no product ever reaches
//! n x n times n x n. The chain's per-step n^2 materialize-and-add work is
//! part of computing the delta and is charged in the delta scope; the apply
//! scope only installs results and adds deltas into views.
//!
//! A vanishing Sherman-Morrison denominator means the updated X'X is
//! singular; the error carries the failing step and no view is modified.

use super::powers::validate_update;
use super::{scoped, Strategy};
use crate::delta::{apply_sequential_sm, RankKUpdate};
use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::matrix::{add_assign, mat_add, mat_inverse, mat_mul, Matrix};
use crate::scalar::Scalar;

pub struct OlsEngine<T: Scalar> {
    strategy: Strategy,
    x: Matrix<T>,
    y: Matrix<T>,
    z: Matrix<T>,
    w: Matrix<T>,
    g: Matrix<T>,
    beta: Matrix<T>,
}

impl<T: Scalar> OlsEngine<T> {
    pub fn new(
        x: &Matrix<T>,
        y: &Matrix<T>,
        strategy: Strategy,
        ledger: &mut CostLedger,
    ) -> Result<Self> {
        if strategy == Strategy::Hybrid {
            return Err(Error::config(
                "OLS supports Reevaluation and Incremental only; Hybrid applies to the general iteration",
            ));
        }
        if x.rows() != y.rows() {
            return Err(Error::config(format!(
                "X has {} rows but Y has {}",
                x.rows(),
                y.rows()
            )));
        }
        let (z, w, g, beta) = scoped(ledger, "init", |l| {
            let z = mat_mul(&x.t(), x, l)?;
            let w = mat_inverse(&z, l)?;
            let g = mat_mul(&x.t(), y, l)?;
            let beta = mat_mul(&w, &g, l)?;
            Ok((z, w, g, beta))
        })?;
        Ok(OlsEngine { strategy, x: x.clone(), y: y.clone(), z, w, g, beta })
    }

    /// The maintained β*.
    pub fn current(&self) -> &Matrix<T> {
        &self.beta
    }

    pub fn gram(&self) -> &Matrix<T> {
        &self.z
    }

    pub fn inverse(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn design(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn apply_update(
        &mut self,
        upd: &RankKUpdate<T>,
        ledger: &mut CostLedger,
    ) -> Result<&Matrix<T>> {
        validate_update(upd, "X", self.x.shape())?;
        match self.strategy {
            Strategy::Reevaluation => {
                let dx = scoped(ledger, "delta", |l| mat_mul(&upd.u, &upd.v.t(), l))?;
                scoped(ledger, "apply", |l| add_assign(&mut self.x, &dx, l))?;
                let (z, w, g, beta) = scoped(ledger, "reeval", |l| {
                    let z = mat_mul(&self.x.t(), &self.x, l)?;
                    let w = mat_inverse(&z, l)?;
                    let g = mat_mul(&self.x.t(), &self.y, l)?;
                    let beta = mat_mul(&w, &g, l)?;
                    Ok((z, w, g, beta))
                })?;
                self.z = z;
                self.w = w;
                self.g = g;
                self.beta = beta;
            }
            Strategy::Incremental => {
                // Everything below reads pre-update views; nothing is
                // installed until the whole delta computation, including the
                // singularity-prone inverse chain, has succeeded.
                let (dx, dz, chain, g_new, dbeta) = scoped(ledger, "delta", |l| {
                    let xtu = mat_mul(&self.x.t(), &upd.u, l)?;
                    let utu = mat_mul(&upd.u.t(), &upd.u, l)?;
                    let vutu = mat_mul(&upd.v, &utu, l)?;
                    let second = mat_add(&xtu, &vutu, l)?;
                    let u_z = Matrix::hstack(&[&upd.v, &second])?;
                    let v_z = Matrix::hstack(&[&xtu, &upd.v])?;
                    let dz = mat_mul(&u_z, &v_z.t(), l)?;

                    let pairs: Vec<_> = (0..u_z.cols())
                        .map(|j| (u_z.column(j), v_z.column(j)))
                        .collect();
                    let chain = apply_sequential_sm(&self.w, &pairs, l)?;

                    let uty = mat_mul(&upd.u.t(), &self.y, l)?;
                    let dg = mat_mul(&upd.v, &uty, l)?;
                    let g_new = mat_add(&self.g, &dg, l)?;
                    let wdg = mat_mul(&self.w, &dg, l)?;
                    let sg = mat_mul(&chain.s.t(), &g_new, l)?;
                    let rsg = mat_mul(&chain.r, &sg, l)?;
                    let dbeta = mat_add(&wdg, &rsg, l)?;

                    let dx = mat_mul(&upd.u, &upd.v.t(), l)?;
                    Ok((dx, dz, chain, g_new, dbeta))
                })?;
                scoped(ledger, "apply", |l| {
                    add_assign(&mut self.x, &dx, l)?;
                    add_assign(&mut self.z, &dz, l)?;
                    add_assign(&mut self.beta, &dbeta, l)
                })?;
                self.w = chain.updated;
                self.g = g_new;
            }
            Strategy::Hybrid => unreachable!("rejected in new"),
        }
        Ok(&self.beta)
    }
}

/// Runs the whole update stream, returning β* after each update.
pub fn ols<T: Scalar>(
    x: &Matrix<T>,
    y: &Matrix<T>,
    strategy: Strategy,
    updates: &[RankKUpdate<T>],
    ledger: &mut CostLedger,
) -> Result<Vec<Matrix<T>>> {
    let mut engine = OlsEngine::new(x, y, strategy, ledger)?;
    updates
        .iter()
        .map(|u| engine.apply_update(u, ledger).map(Matrix::clone))
        .collect()
}
