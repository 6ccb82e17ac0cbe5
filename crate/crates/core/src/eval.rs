//! Numeric evaluation of expressions against a name -> matrix binding,
//! charging every kernel to the ledger.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ir::Expr;
use crate::ledger::CostLedger;
use crate::matrix::{mat_add, mat_inverse, mat_mul, mat_scale, mat_sub, Matrix};
use crate::scalar::{cast, Scalar};

pub type Bindings<T> = BTreeMap<String, Matrix<T>>;

pub fn eval_expr<T: Scalar>(e: &Expr, env: &Bindings<T>, ledger: &mut CostLedger) -> Result<Matrix<T>> {
    eval_expr_layers(e, &[env], ledger)
}

/// Evaluates against a stack of binding layers; earlier layers shadow later
/// ones. Triggers use this to let step-local names shadow the view state.
pub fn eval_expr_layers<T: Scalar>(
    e: &Expr,
    layers: &[&Bindings<T>],
    ledger: &mut CostLedger,
) -> Result<Matrix<T>> {
    match e {
        Expr::Var(n) => layers
            .iter()
            .find_map(|b| b.get(n))
            .cloned()
            .ok_or_else(|| Error::internal(format!("unbound matrix `{n}` during evaluation"))),
        Expr::Add(a, b) => {
            let x = eval_expr_layers(a, layers, ledger)?;
            let y = eval_expr_layers(b, layers, ledger)?;
            mat_add(&x, &y, ledger)
        }
        Expr::Sub(a, b) => {
            let x = eval_expr_layers(a, layers, ledger)?;
            let y = eval_expr_layers(b, layers, ledger)?;
            mat_sub(&x, &y, ledger)
        }
        Expr::Mul(a, b) => {
            let x = eval_expr_layers(a, layers, ledger)?;
            let y = eval_expr_layers(b, layers, ledger)?;
            mat_mul(&x, &y, ledger)
        }
        Expr::Scale(c, inner) => {
            let x = eval_expr_layers(inner, layers, ledger)?;
            mat_scale(cast(*c), &x, ledger)
        }
        Expr::Transpose(inner) => Ok(eval_expr_layers(inner, layers, ledger)?.t()),
        Expr::Inverse(inner) => {
            let x = eval_expr_layers(inner, layers, ledger)?;
            mat_inverse(&x, ledger)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Expr;
    use crate::matrix::max_abs_diff;

    #[test]
    fn evaluates_composite_expression_with_exact_charges() {
        let mut env: Bindings<f64> = BTreeMap::new();
        env.insert(
            "A".into(),
            Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
        );
        // 2*(A + A')*A
        let e = Expr::mul(
            Expr::scale(2.0, Expr::add(Expr::var("A"), Expr::transpose(Expr::var("A")))),
            Expr::var("A"),
        );
        let mut ledger = CostLedger::new();
        let out = eval_expr(&e, &env, &mut ledger).unwrap();
        // A + A' = [[2,5],[5,8]]; doubled [[4,10],[10,16]]; times A = [[34,48],[58,84]]
        let expect = Matrix::from_rows(vec![vec![34.0, 48.0], vec![58.0, 84.0]]).unwrap();
        assert!(max_abs_diff(&out, &expect) < 1e-12);
        // 4 adds + 4 scale mul_adds + 8 product mul_adds
        assert_eq!(ledger.adds(), 4);
        assert_eq!(ledger.mul_adds(), 12);
    }

    #[test]
    fn earlier_layers_shadow_later_ones() {
        let mut base: Bindings<f64> = BTreeMap::new();
        base.insert("A".into(), Matrix::identity(2));
        base.insert("B".into(), Matrix::identity(2));
        let mut locals: Bindings<f64> = BTreeMap::new();
        locals.insert(
            "A".into(),
            Matrix::from_rows(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap(),
        );
        let e = Expr::mul(Expr::var("A"), Expr::var("B"));
        let mut ledger = CostLedger::new();
        let out = eval_expr_layers(&e, &[&locals, &base], &mut ledger).unwrap();
        assert_eq!(out.get(0, 0), 2.0);
    }

    #[test]
    fn unbound_name_is_an_internal_error() {
        let env: Bindings<f64> = BTreeMap::new();
        let mut ledger = CostLedger::new();
        assert!(matches!(
            eval_expr(&Expr::var("Z"), &env, &mut ledger),
            Err(Error::Internal { .. })
        ));
    }
}
