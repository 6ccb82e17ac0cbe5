//! Delta derivation and factorization.
//!
//! For a view `V = E(A, ...)` and an update `A += U V'`, the delta of the
//! view is `E(A + dA, ...) - E(A, ...)`. The derivation rules:
//!
//! * `d(E1*E2) = dE1*E2 + E1*dE2 + dE1*dE2`
//! * `d(E1 +/- E2) = dE1 +/- dE2`
//! * `d(c*E) = c*dE`
//! * `d(E') = (dE)'`
//! * `d(inv(E)) = inv(E + dE) - inv(E)` (generic; statement-level inverses
//!   are intercepted by the Sherman-Morrison chain in the compiler)
//! * `d(A) = dA` for an affected matrix, `0` otherwise
//!
//! All affected matrices are differentiated simultaneously: the product rule
//! above holds verbatim when `dE` denotes the total delta, which equals the
//! one-input-at-a-time sequential expansion in any order. Deltas are constants
//! (independent of every matrix), so the rules nest freely.
//!
//! Factorization rewrites a derived delta, a sum of monomials each holding
//! at least one factored pair `U_X*V_X'`, into one tall-skinny pair per
//! statement: each monomial `L*(U_X*V_X')*R` splits at its last pair into
//! the column block `L*U_X` and row block `V_X'*R`; blocks with syntactically
//! identical right (then left) sides merge by summing the other side.

mod sherman;

pub use sherman::{apply_sequential_sm, sherman_morrison_delta, SmChain};

use crate::error::{Error, Result};
use crate::ir::{canonicalize, expr_transpose, structural_key, Expr};
use crate::matrix::{mat_mul, Matrix};
use crate::scalar::Scalar;
use crate::CostLedger;

/// A rank-k additive update `name += u * v'`, with `u` of shape rows x k and
/// `v` of shape cols x k.
#[derive(Debug, Clone)]
pub struct RankKUpdate<T> {
    pub name: String,
    pub u: Matrix<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> RankKUpdate<T> {
    pub fn new(name: impl Into<String>, u: Matrix<T>, v: Matrix<T>) -> Result<Self> {
        let k = u.cols();
        if k == 0 || k != v.cols() {
            return Err(Error::data(format!(
                "rank-k update factors disagree: u has {} columns, v has {}",
                u.cols(),
                v.cols()
            )));
        }
        if k > u.rows().min(v.rows()) {
            return Err(Error::data(format!(
                "update rank {k} exceeds min dimension {} of the {}x{} target",
                u.rows().min(v.rows()),
                u.rows(),
                v.rows()
            )));
        }
        Ok(RankKUpdate {
            name: name.into(),
            u,
            v,
        })
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    /// Target shape implied by the factors.
    pub fn target_shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }

    /// Materializes `u * v'`; charges rows * k * cols mul_adds.
    pub fn delta_matrix(&self, ledger: &mut CostLedger) -> Result<Matrix<T>> {
        mat_mul(&self.u, &self.v.t(), ledger)
    }
}

/// Symbolic factored delta of one matrix: `dM = [u1|u2|...] * [v1|v2|...]'`
/// with per-block widths. Zero deltas have no blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredDelta {
    pub u_blocks: Vec<Expr>,
    pub v_blocks: Vec<Expr>,
    pub widths: Vec<usize>,
}

impl FactoredDelta {
    pub fn zero() -> Self {
        FactoredDelta {
            u_blocks: Vec::new(),
            v_blocks: Vec::new(),
            widths: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.u_blocks.is_empty()
    }
}

/// How one matrix is currently perturbed.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaKind {
    /// Factored pair referenced by block names: `d(owner) = u_name * v_name'`.
    Pair {
        u_name: String,
        v_name: String,
        width: usize,
    },
    /// Unfactored full-matrix delta referenced by name (hybrid fallback).
    Full { delta_name: String },
}

#[derive(Debug, Clone)]
pub struct EnvEntry {
    pub owner: String,
    pub kind: DeltaKind,
}

/// Ordered set of affected matrices with their delta representations.
#[derive(Debug, Clone, Default)]
pub struct DeltaEnv {
    entries: Vec<EnvEntry>,
}

impl DeltaEnv {
    pub fn new() -> Self {
        DeltaEnv::default()
    }

    pub fn push(&mut self, owner: impl Into<String>, kind: DeltaKind) {
        self.entries.push(EnvEntry {
            owner: owner.into(),
            kind,
        });
    }

    pub fn push_pair(&mut self, owner: &str, u_name: &str, v_name: &str, width: usize) {
        self.push(
            owner,
            DeltaKind::Pair {
                u_name: u_name.into(),
                v_name: v_name.into(),
                width,
            },
        );
    }

    pub fn lookup(&self, owner: &str) -> Option<&DeltaKind> {
        self.entries
            .iter()
            .find(|e| e.owner == owner)
            .map(|e| &e.kind)
    }

    pub fn entries(&self) -> &[EnvEntry] {
        &self.entries
    }

    pub fn affected_names(&self) -> std::collections::BTreeSet<String> {
        self.entries.iter().map(|e| e.owner.clone()).collect()
    }

    /// Finds the pair entry whose block names are exactly (`a`, `b`) in
    /// either orientation; returns (owner index, transposed?).
    fn match_pair(&self, a: &str, b: &str) -> Option<(usize, bool)> {
        for (i, e) in self.entries.iter().enumerate() {
            if let DeltaKind::Pair { u_name, v_name, .. } = &e.kind {
                if u_name == a && v_name == b {
                    return Some((i, false));
                }
                if v_name == a && u_name == b {
                    return Some((i, true));
                }
            }
        }
        None
    }
}

/// Total delta of `e` under the environment; `None` means identically zero.
pub fn derive_delta(e: &Expr, env: &DeltaEnv) -> Option<Expr> {
    match e {
        Expr::Var(name) => match env.lookup(name) {
            Some(DeltaKind::Pair { u_name, v_name, .. }) => Some(Expr::mul(
                Expr::var(u_name.clone()),
                Expr::transpose(Expr::var(v_name.clone())),
            )),
            Some(DeltaKind::Full { delta_name }) => Some(Expr::var(delta_name.clone())),
            None => None,
        },
        Expr::Add(a, b) => match (derive_delta(a, env), derive_delta(b, env)) {
            (None, None) => None,
            (Some(da), None) => Some(da),
            (None, Some(db)) => Some(db),
            (Some(da), Some(db)) => Some(Expr::add(da, db)),
        },
        Expr::Sub(a, b) => match (derive_delta(a, env), derive_delta(b, env)) {
            (None, None) => None,
            (Some(da), None) => Some(da),
            (None, Some(db)) => Some(Expr::scale(-1.0, db)),
            (Some(da), Some(db)) => Some(Expr::sub(da, db)),
        },
        Expr::Mul(a, b) => {
            let da = derive_delta(a, env);
            let db = derive_delta(b, env);
            let mut terms: Vec<Expr> = Vec::new();
            if let Some(da) = &da {
                terms.push(Expr::mul(da.clone(), (**b).clone()));
            }
            if let Some(db) = &db {
                terms.push(Expr::mul((**a).clone(), db.clone()));
            }
            if let (Some(da), Some(db)) = (da, db) {
                terms.push(Expr::mul(da, db));
            }
            let mut it = terms.into_iter();
            let first = it.next()?;
            Some(it.fold(first, Expr::add))
        }
        Expr::Scale(c, inner) => derive_delta(inner, env).map(|d| Expr::scale(*c, d)),
        Expr::Transpose(inner) => derive_delta(inner, env).map(|d| expr_transpose(&d)),
        Expr::Inverse(inner) => {
            let d = derive_delta(inner, env)?;
            Some(Expr::sub(
                Expr::inverse(Expr::add((**inner).clone(), d)),
                Expr::inverse((**inner).clone()),
            ))
        }
    }
}

/// One distributed product: `coeff * f1 * f2 * ... * fm` with atomic factors
/// (variables, transposed variables, opaque inverses).
#[derive(Debug, Clone)]
struct Monomial {
    coeff: f64,
    factors: Vec<Expr>,
}

/// Pushes transposes to leaves everywhere in the tree.
fn push_transposes(e: &Expr) -> Expr {
    match e {
        Expr::Var(_) => e.clone(),
        Expr::Add(a, b) => Expr::add(push_transposes(a), push_transposes(b)),
        Expr::Sub(a, b) => Expr::sub(push_transposes(a), push_transposes(b)),
        Expr::Mul(a, b) => Expr::mul(push_transposes(a), push_transposes(b)),
        Expr::Scale(c, inner) => Expr::scale(*c, push_transposes(inner)),
        Expr::Transpose(inner) => expr_transpose(&push_transposes(inner)),
        Expr::Inverse(inner) => Expr::inverse(push_transposes(inner)),
    }
}

fn distribute(e: &Expr, out: &mut Vec<Monomial>) {
    match e {
        Expr::Add(a, b) => {
            distribute(a, out);
            distribute(b, out);
        }
        Expr::Sub(a, b) => {
            distribute(a, out);
            let mut rhs = Vec::new();
            distribute(b, &mut rhs);
            for mut m in rhs {
                m.coeff = -m.coeff;
                out.push(m);
            }
        }
        Expr::Scale(c, inner) => {
            let mut inner_monomials = Vec::new();
            distribute(inner, &mut inner_monomials);
            for mut m in inner_monomials {
                m.coeff *= c;
                out.push(m);
            }
        }
        Expr::Mul(a, b) => {
            let mut lhs = Vec::new();
            let mut rhs = Vec::new();
            distribute(a, &mut lhs);
            distribute(b, &mut rhs);
            for l in &lhs {
                for r in &rhs {
                    let mut factors = l.factors.clone();
                    factors.extend(r.factors.iter().cloned());
                    out.push(Monomial {
                        coeff: l.coeff * r.coeff,
                        factors,
                    });
                }
            }
        }
        atom => out.push(Monomial {
            coeff: 1.0,
            factors: vec![atom.clone()],
        }),
    }
}

/// Expands a delta expression into monomials over atomic factors.
fn normalize(e: &Expr) -> Vec<Monomial> {
    let mut out = Vec::new();
    distribute(&push_transposes(e), &mut out);
    out
}

fn factor_var_name(e: &Expr) -> Option<(&str, bool)> {
    match e {
        Expr::Var(n) => Some((n, false)),
        Expr::Transpose(inner) => match &**inner {
            Expr::Var(n) => Some((n, true)),
            _ => None,
        },
        _ => None,
    }
}

/// Positions of factored pairs in a factor list: a `Var(x)` immediately
/// followed by `Var(y)'` where (x, y) names an environment pair.
fn find_pairs(factors: &[Expr], env: &DeltaEnv) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < factors.len() {
        if let (Some((a, false)), Some((b, true))) =
            (factor_var_name(&factors[i]), factor_var_name(&factors[i + 1]))
        {
            if let Some((entry, transposed)) = env.match_pair(a, b) {
                out.push((i, entry, transposed));
                i += 2;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// True when the monomial references an affected matrix inside an opaque
/// inverse, which blocks factorization.
fn has_dirty_inverse(factors: &[Expr], env: &DeltaEnv) -> bool {
    let affected = env.affected_names();
    factors.iter().any(|f| match f {
        Expr::Inverse(inner) => inner.references_any(&affected),
        _ => false,
    })
}

/// True when every monomial of the (normalized) delta contains at least one
/// factored pair, i.e. the delta admits the tall-skinny block form.
pub fn is_factorable(d: &Expr, env: &DeltaEnv) -> bool {
    normalize(d)
        .iter()
        .all(|m| !has_dirty_inverse(&m.factors, env) && !find_pairs(&m.factors, env).is_empty())
}

fn mul_chain_ending_in(factors: &[Expr], last: Expr) -> Expr {
    factors
        .iter()
        .rev()
        .fold(last, |acc, f| Expr::mul(f.clone(), acc))
}

/// Splits one monomial at its last pair into `(u_block, v_block, width)`.
fn split_monomial(m: &Monomial, env: &DeltaEnv) -> Result<(Expr, Expr, usize)> {
    if has_dirty_inverse(&m.factors, env) {
        return Err(Error::internal(
            "cannot factor a monomial containing an inverse of an affected matrix".to_string(),
        ));
    }
    let pairs = find_pairs(&m.factors, env);
    let &(pos, entry_idx, _transposed) = pairs.last().ok_or_else(|| {
        Error::internal("cannot factor a monomial without a delta factor".to_string())
    })?;
    let width = match &env.entries()[entry_idx].kind {
        DeltaKind::Pair { width, .. } => *width,
        DeltaKind::Full { .. } => unreachable!("pairs index only pair entries"),
    };
    // Monomial = L * (X * Y') * R with X = factors[pos], Y' = factors[pos+1].
    let x = m.factors[pos].clone();
    let y = match &m.factors[pos + 1] {
        Expr::Transpose(inner) => (**inner).clone(),
        _ => unreachable!("pair right half is a transposed variable"),
    };
    let left = &m.factors[..pos];
    let right = &m.factors[pos + 2..];
    // u = coeff * L * X, right-associated so thin factors multiply first.
    let mut u = mul_chain_ending_in(left, x);
    if m.coeff != 1.0 {
        u = Expr::scale(m.coeff, u);
    }
    // v = R' * Y = Fm' * ... * F1' * Y, right-associated; reversal because
    // (F1 * ... * Fm)' = Fm' * ... * F1'.
    let transposed_right: Vec<Expr> = right.iter().rev().map(expr_transpose).collect();
    let v = mul_chain_ending_in(&transposed_right, y);
    Ok((u, v, width))
}

/// Debug serialization of a factored delta, one line:
/// `Δname = [u1 | u2] · [v1 | v2]ᵀ`.
pub fn dump_factored(name: &str, fd: &FactoredDelta) -> String {
    use crate::ir::print_expr;
    if fd.is_zero() {
        return format!("Δ{name} = 0");
    }
    let join = |blocks: &[Expr]| {
        blocks
            .iter()
            .map(print_expr)
            .collect::<Vec<_>>()
            .join(" | ")
    };
    format!(
        "Δ{name} = [{}] · [{}]ᵀ",
        join(&fd.u_blocks),
        join(&fd.v_blocks)
    )
}

/// Factors a derived delta into the block outer-product form.
///
/// Merging is purely syntactic: after canonical ordering of sum terms,
/// monomials whose v-blocks are structurally equal share one column group
/// (their u-blocks add), then the same merge runs on the u-side.
pub fn factor_delta(d: &Expr, env: &DeltaEnv) -> Result<FactoredDelta> {
    let monomials = normalize(d);
    let mut split: Vec<(Expr, Expr, usize)> = Vec::new();
    for m in &monomials {
        if m.coeff == 0.0 {
            continue;
        }
        split.push(split_monomial(m, env)?);
    }

    // Merge monomials with identical right blocks (first occurrence order).
    let mut groups: Vec<(String, Expr, Expr, usize)> = Vec::new();
    for (u, v, w) in split {
        let key = structural_key(&canonicalize(&v));
        match groups.iter_mut().find(|(k, _, _, _)| *k == key) {
            Some((_, gu, _, gw)) => {
                debug_assert_eq!(*gw, w, "merged blocks must share a width");
                *gu = Expr::add(gu.clone(), u);
            }
            None => groups.push((key, u, v, w)),
        }
    }

    // Then merge identical left blocks.
    let mut merged: Vec<(String, Expr, Expr, usize)> = Vec::new();
    for (_, u, v, w) in groups {
        let ukey = structural_key(&canonicalize(&u));
        match merged.iter_mut().find(|(k, _, _, _)| *k == ukey) {
            Some((_, _, gv, gw)) => {
                debug_assert_eq!(*gw, w);
                *gv = Expr::add(gv.clone(), v);
            }
            None => merged.push((ukey, u, v, w)),
        }
    }

    let mut out = FactoredDelta::zero();
    for (_, u, v, w) in merged {
        out.u_blocks.push(canonicalize(&u));
        out.v_blocks.push(canonicalize(&v));
        out.widths.push(w);
    }
    Ok(out)
}
