//! Product re-association by matrix-chain dynamic programming.
//!
//! Factored trigger blocks multiply thin matrices against square ones; the
//! parse tree's association can force an O(n^3) product where an O(n^2)
//! ordering exists (e.g. `(A*B)*c` versus `A*(B*c)` for a column `c`). The
//! classic chain DP finds the cheapest parenthesization under the exact
//! mul_add cost `rows * inner * cols` per product.

use crate::ir::{expr_shape, Expr, ShapeMap};

/// Minimum chain cost and split table for factor dimensions `d` (length
/// m + 1 for m factors). `split[i][j]` is the last top-level split point of
/// the optimal product over factors `i..=j`; ties resolve to the smallest
/// split for determinism.
pub fn chain_order(d: &[usize]) -> (u64, Vec<Vec<usize>>) {
    let m = d.len() - 1;
    let mut cost = vec![vec![0u64; m]; m];
    let mut split = vec![vec![0usize; m]; m];
    for len in 2..=m {
        for i in 0..=m - len {
            let j = i + len - 1;
            cost[i][j] = u64::MAX;
            for s in i..j {
                let c = cost[i][s]
                    + cost[s + 1][j]
                    + (d[i] * d[s + 1] * d[j + 1]) as u64;
                if c < cost[i][j] {
                    cost[i][j] = c;
                    split[i][j] = s;
                }
            }
        }
    }
    (if m == 0 { 0 } else { cost[0][m - 1] }, split)
}

fn flatten_mul(e: &Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Mul(a, b) => {
            flatten_mul(a, out);
            flatten_mul(b, out);
        }
        other => out.push(other.clone()),
    }
}

fn rebuild(factors: &[Expr], split: &[Vec<usize>], i: usize, j: usize) -> Expr {
    if i == j {
        return factors[i].clone();
    }
    let s = split[i][j];
    Expr::mul(
        rebuild(factors, split, i, s),
        rebuild(factors, split, s + 1, j),
    )
}

/// Rewrites every product chain in `e` to its cheapest association. Factors
/// whose shapes cannot be resolved from `shapes` are left alone.
pub fn reassociate_expr(e: &Expr, shapes: &ShapeMap) -> Expr {
    match e {
        Expr::Mul(_, _) => {
            let mut raw = Vec::new();
            flatten_mul(e, &mut raw);
            let factors: Vec<Expr> = raw.iter().map(|f| reassociate_expr(f, shapes)).collect();
            let resolved: Option<Vec<(usize, usize)>> = factors
                .iter()
                .map(|f| expr_shape(f, shapes).ok())
                .collect();
            match resolved {
                Some(sh) => {
                    let mut dims: Vec<usize> = Vec::with_capacity(sh.len() + 1);
                    dims.push(sh[0].0);
                    for (_, c) in &sh {
                        dims.push(*c);
                    }
                    let (_, split) = chain_order(&dims);
                    rebuild(&factors, &split, 0, factors.len() - 1)
                }
                None => factors
                    .into_iter()
                    .reduce(Expr::mul)
                    .expect("a product chain has at least one factor"),
            }
        }
        Expr::Add(a, b) => Expr::add(reassociate_expr(a, shapes), reassociate_expr(b, shapes)),
        Expr::Sub(a, b) => Expr::sub(reassociate_expr(a, shapes), reassociate_expr(b, shapes)),
        Expr::Scale(c, inner) => Expr::scale(*c, reassociate_expr(inner, shapes)),
        Expr::Transpose(inner) => Expr::transpose(reassociate_expr(inner, shapes)),
        Expr::Inverse(inner) => Expr::inverse(reassociate_expr(inner, shapes)),
        Expr::Var(_) => e.clone(),
    }
}

/// Exact chain cost of `e`'s products as written (association respected);
/// used by tests to compare orderings.
pub fn chain_cost_as_written(e: &Expr, shapes: &ShapeMap) -> Option<u64> {
    match e {
        Expr::Mul(a, b) => {
            let ca = chain_cost_as_written(a, shapes)?;
            let cb = chain_cost_as_written(b, shapes)?;
            let (ra, ka) = expr_shape(a, shapes).ok()?;
            let (_, cb2) = expr_shape(b, shapes).ok()?;
            Some(ca + cb + (ra * ka * cb2) as u64)
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            Some(chain_cost_as_written(a, shapes)? + chain_cost_as_written(b, shapes)?)
        }
        Expr::Scale(_, inner) | Expr::Transpose(inner) | Expr::Inverse(inner) => {
            chain_cost_as_written(inner, shapes)
        }
        Expr::Var(_) => Some(0),
    }
}
