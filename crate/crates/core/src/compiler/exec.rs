//! Trigger execution against a live view state.
//!
//! A firing has two phases. The compute phase evaluates every step against
//! pre-update values (trigger locals shadow the state but never mutate it);
//! the apply phase then installs all `+=` results at once. An error anywhere
//! leaves the state exactly as it was.

use std::collections::BTreeMap;

use crate::delta::{apply_sequential_sm, RankKUpdate};
use crate::error::{Error, Result};
use crate::eval::{eval_expr_layers, Bindings};
use crate::ledger::CostLedger;
use crate::matrix::{mat_add, mat_mul, Matrix};
use crate::scalar::Scalar;

use super::{TriggerProgram, TriggerStep, UpdateStep};

fn local<'a, T>(locals: &'a Bindings<T>, name: &str) -> Result<&'a Matrix<T>> {
    locals
        .get(name)
        .ok_or_else(|| Error::internal(format!("trigger step references unbound `{name}`")))
}

fn view<'a, T>(state: &'a Bindings<T>, name: &str) -> Result<&'a Matrix<T>> {
    state
        .get(name)
        .ok_or_else(|| Error::data(format!("state holds no matrix named `{name}`")))
}

/// Fires `trigger` for one rank-k update, maintaining every affected view in
/// `state`. Charges land in scopes `delta:<name>` and `apply:<name>`.
pub fn apply_trigger<T: Scalar>(
    trigger: &TriggerProgram,
    state: &mut Bindings<T>,
    update: &RankKUpdate<T>,
    ledger: &mut CostLedger,
) -> Result<()> {
    if update.name != trigger.trigger_on {
        return Err(Error::config(format!(
            "trigger fires on `{}` but the update targets `{}`",
            trigger.trigger_on, update.name
        )));
    }
    let current = view(state, &update.name)?;
    if update.target_shape() != current.shape() {
        return Err(Error::data(format!(
            "update factors imply {}x{} but `{}` is {}x{}",
            update.target_shape().0,
            update.target_shape().1,
            update.name,
            current.shape().0,
            current.shape().1
        )));
    }
    let prev_scope = ledger.scope().to_string();
    let result = fire(trigger, state, update, ledger);
    ledger.set_scope(prev_scope);
    result
}

fn fire<T: Scalar>(
    trigger: &TriggerProgram,
    state: &mut Bindings<T>,
    update: &RankKUpdate<T>,
    ledger: &mut CostLedger,
) -> Result<()> {
    let mut locals: Bindings<T> = Bindings::new();
    locals.insert(trigger.u_param.clone(), update.u.clone());
    locals.insert(trigger.v_param.clone(), update.v.clone());
    // A Sherman-Morrison chain necessarily materializes the updated inverse
    // while stepping; the apply phase installs it without paying again.
    let mut pending: BTreeMap<String, Matrix<T>> = BTreeMap::new();

    for step in &trigger.steps {
        match step {
            TriggerStep::AssignBlocks { name, blocks } => {
                ledger.set_scope(format!("delta:{name}"));
                let vals = blocks
                    .iter()
                    .map(|b| eval_expr_layers(b, &[&locals, state], ledger))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&Matrix<T>> = vals.iter().collect();
                locals.insert(name.clone(), Matrix::hstack(&refs)?);
            }
            TriggerStep::Assign { name, expr } => {
                ledger.set_scope(format!("delta:{name}"));
                let val = eval_expr_layers(expr, &[&locals, state], ledger)?;
                locals.insert(name.clone(), val);
            }
            TriggerStep::ShermanMorrison {
                target,
                u_name,
                v_name,
                r_name,
                s_name,
            } => {
                ledger.set_scope(format!("delta:{target}"));
                let w = view(state, target)?;
                let u = local(&locals, u_name)?;
                let v = local(&locals, v_name)?;
                let cols: Vec<(Matrix<T>, Matrix<T>)> = (0..u.cols())
                    .map(|i| (u.column(i), v.column(i)))
                    .collect();
                let chain = apply_sequential_sm(w, &cols, ledger)?;
                locals.insert(r_name.clone(), chain.r);
                locals.insert(s_name.clone(), chain.s);
                pending.insert(target.clone(), chain.updated);
            }
        }
    }

    // Compute every `+=` result before touching the state.
    let mut staged: Vec<(String, Matrix<T>)> = Vec::new();
    for up in &trigger.updates {
        match up {
            UpdateStep::Outer {
                target,
                u_name,
                v_name,
            } => {
                if let Some(m) = pending.remove(target) {
                    staged.push((target.clone(), m));
                    continue;
                }
                ledger.set_scope(format!("apply:{target}"));
                let u = local(&locals, u_name)?;
                let v = local(&locals, v_name)?;
                let outer = mat_mul(u, &v.t(), ledger)?;
                staged.push((target.clone(), mat_add(view(state, target)?, &outer, ledger)?));
            }
            UpdateStep::Full { target, delta_name } => {
                ledger.set_scope(format!("apply:{target}"));
                let d = local(&locals, delta_name)?;
                staged.push((target.clone(), mat_add(view(state, target)?, d, ledger)?));
            }
        }
    }
    for (name, m) in staged {
        state.insert(name, m);
    }
    Ok(())
}
