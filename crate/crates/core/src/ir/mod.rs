//! Program representation: expression AST, statements, shape checking.
//!
//! Programs are straight-line (no loops or branches): a list of `input`
//! declarations with symbolic dimensions, single-assignment statements
//! `name := expr;`, and `output` markers.

mod parse;
mod print;

pub use parse::parse_program;
pub use print::{print_expr, print_program};

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Matrix-valued expression. Scalars appear only as `Scale` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Scale(f64, Box<Expr>),
    Transpose(Box<Expr>),
    Inverse(Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn scale(c: f64, e: Expr) -> Expr {
        Expr::Scale(c, Box::new(e))
    }

    pub fn transpose(e: Expr) -> Expr {
        Expr::Transpose(Box::new(e))
    }

    pub fn inverse(e: Expr) -> Expr {
        Expr::Inverse(Box::new(e))
    }

    /// Names of all matrices referenced.
    pub fn names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
            Expr::Scale(_, e) | Expr::Transpose(e) | Expr::Inverse(e) => e.collect_names(out),
        }
    }

    pub fn references_any(&self, names: &BTreeSet<String>) -> bool {
        match self {
            Expr::Var(n) => names.contains(n),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.references_any(names) || b.references_any(names)
            }
            Expr::Scale(_, e) | Expr::Transpose(e) | Expr::Inverse(e) => e.references_any(names),
        }
    }

    /// Replaces every `Var(name)` with `subst(name)` when it returns `Some`.
    pub fn substitute(&self, subst: &impl Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Var(n) => subst(n).unwrap_or_else(|| self.clone()),
            Expr::Add(a, b) => Expr::add(a.substitute(subst), b.substitute(subst)),
            Expr::Sub(a, b) => Expr::sub(a.substitute(subst), b.substitute(subst)),
            Expr::Mul(a, b) => Expr::mul(a.substitute(subst), b.substitute(subst)),
            Expr::Scale(c, e) => Expr::scale(*c, e.substitute(subst)),
            Expr::Transpose(e) => Expr::transpose(e.substitute(subst)),
            Expr::Inverse(e) => Expr::inverse(e.substitute(subst)),
        }
    }
}

/// Symbolic transpose with the adjoint pushed down to leaves:
/// `(E1 E2)' = E2' E1'`, `(E1 + E2)' = E1' + E2'`, `(E')' = E`,
/// `(E^-1)' = (E')^-1`.
pub fn expr_transpose(e: &Expr) -> Expr {
    match e {
        Expr::Var(_) => Expr::transpose(e.clone()),
        Expr::Add(a, b) => Expr::add(expr_transpose(a), expr_transpose(b)),
        Expr::Sub(a, b) => Expr::sub(expr_transpose(a), expr_transpose(b)),
        Expr::Mul(a, b) => Expr::mul(expr_transpose(b), expr_transpose(a)),
        Expr::Scale(c, inner) => Expr::scale(*c, expr_transpose(inner)),
        Expr::Transpose(inner) => (**inner).clone(),
        Expr::Inverse(inner) => Expr::inverse(expr_transpose(inner)),
    }
}

/// Canonical form used for structural equality: nested `Add` chains are
/// flattened and re-ordered by a stable structural key (ties keep source
/// order), `Scale(1, e)` collapses, nested scales merge, and double
/// transposes cancel. `Mul` order is never touched (non-commutative).
pub fn canonicalize(e: &Expr) -> Expr {
    match e {
        Expr::Var(_) => e.clone(),
        Expr::Add(_, _) | Expr::Sub(_, _) => {
            let mut terms = Vec::new();
            flatten_sum(e, 1.0, &mut terms);
            let mut canon: Vec<Expr> = terms
                .into_iter()
                .map(|(c, t)| {
                    let t = canonicalize(&t);
                    if c == 1.0 {
                        t
                    } else {
                        match t {
                            Expr::Scale(c2, inner) => Expr::Scale(c * c2, inner),
                            other => Expr::scale(c, other),
                        }
                    }
                })
                .collect();
            canon.sort_by(|a, b| structural_key(a).cmp(&structural_key(b)));
            let mut it = canon.into_iter();
            let first = it.next().expect("sum has at least one term");
            it.fold(first, Expr::add)
        }
        Expr::Mul(a, b) => Expr::mul(canonicalize(a), canonicalize(b)),
        Expr::Scale(c, inner) => {
            let inner = canonicalize(inner);
            if *c == 1.0 {
                inner
            } else {
                match inner {
                    Expr::Scale(c2, e2) => Expr::Scale(c * c2, e2),
                    other => Expr::scale(*c, other),
                }
            }
        }
        Expr::Transpose(inner) => match &**inner {
            Expr::Transpose(e2) => canonicalize(e2),
            _ => Expr::transpose(canonicalize(inner)),
        },
        Expr::Inverse(inner) => Expr::inverse(canonicalize(inner)),
    }
}

fn flatten_sum(e: &Expr, sign: f64, out: &mut Vec<(f64, Expr)>) {
    match e {
        Expr::Add(a, b) => {
            flatten_sum(a, sign, out);
            flatten_sum(b, sign, out);
        }
        Expr::Sub(a, b) => {
            flatten_sum(a, sign, out);
            flatten_sum(b, -sign, out);
        }
        other => out.push((sign, other.clone())),
    }
}

/// Stable total order on expressions; the debug rendering of the tree is
/// deterministic and distinguishes structure, which is all sorting needs.
pub fn structural_key(e: &Expr) -> String {
    format!("{e:?}")
}

/// Structural equality after canonicalization.
pub fn structurally_equal(a: &Expr, b: &Expr) -> bool {
    canonicalize(a) == canonicalize(b)
}

/// A dimension in a declaration: symbolic (`n`) or literal (`64`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dim {
    Sym(String),
    Lit(usize),
}

impl Dim {
    pub fn resolve(&self, dims: &BTreeMap<String, usize>) -> Result<usize> {
        match self {
            Dim::Lit(n) => Ok(*n),
            Dim::Sym(s) => dims
                .get(s)
                .copied()
                .ok_or_else(|| Error::UnboundDim { symbol: s.clone() }),
        }
    }
}

impl std::fmt::Display for Dim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dim::Sym(s) => write!(f, "{s}"),
            Dim::Lit(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputDecl {
    pub name: String,
    pub rows: Dim,
    pub cols: Dim,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Statement {
    pub target: String,
    pub expr: Expr,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Program {
    pub inputs: Vec<InputDecl>,
    pub statements: Vec<Statement>,
    pub outputs: Vec<String>,
}

/// Concrete shapes for every input and statement target.
pub type ShapeMap = BTreeMap<String, (usize, usize)>;

impl Program {
    pub fn parse(src: &str) -> Result<Program> {
        parse_program(src)
    }

    pub fn input_names(&self) -> BTreeSet<String> {
        self.inputs.iter().map(|i| i.name.clone()).collect()
    }

    pub fn statement(&self, target: &str) -> Option<&Statement> {
        self.statements.iter().find(|s| s.target == target)
    }

    /// Resolves symbolic dimensions and checks conformance of every
    /// statement, returning the shape of each name.
    pub fn shape_check(&self, dims: &BTreeMap<String, usize>) -> Result<ShapeMap> {
        let mut shapes = ShapeMap::new();
        for input in &self.inputs {
            let r = input.rows.resolve(dims)?;
            let c = input.cols.resolve(dims)?;
            if r == 0 || c == 0 {
                return Err(Error::config(format!(
                    "input {} has a zero dimension ({r}x{c})",
                    input.name
                )));
            }
            shapes.insert(input.name.clone(), (r, c));
        }
        for st in &self.statements {
            let shape = expr_shape(&st.expr, &shapes).map_err(|e| match e {
                Error::ShapeCheck { detail, .. } => Error::ShapeCheck {
                    statement: st.target.clone(),
                    detail,
                },
                other => other,
            })?;
            shapes.insert(st.target.clone(), shape);
        }
        Ok(shapes)
    }
}

/// Shape of an expression given shapes for all referenced names.
pub fn expr_shape(e: &Expr, shapes: &ShapeMap) -> Result<(usize, usize)> {
    match e {
        Expr::Var(n) => shapes.get(n).copied().ok_or_else(|| Error::ShapeCheck {
            statement: String::new(),
            detail: format!("unknown name `{n}`"),
        }),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let sa = expr_shape(a, shapes)?;
            let sb = expr_shape(b, shapes)?;
            if sa != sb {
                return Err(Error::ShapeCheck {
                    statement: String::new(),
                    detail: format!(
                        "cannot add {}x{} and {}x{} in `{}`",
                        sa.0,
                        sa.1,
                        sb.0,
                        sb.1,
                        print_expr(e)
                    ),
                });
            }
            Ok(sa)
        }
        Expr::Mul(a, b) => {
            let sa = expr_shape(a, shapes)?;
            let sb = expr_shape(b, shapes)?;
            if sa.1 != sb.0 {
                return Err(Error::ShapeCheck {
                    statement: String::new(),
                    detail: format!(
                        "cannot multiply {}x{} by {}x{} in `{}`",
                        sa.0,
                        sa.1,
                        sb.0,
                        sb.1,
                        print_expr(e)
                    ),
                });
            }
            Ok((sa.0, sb.1))
        }
        Expr::Scale(_, inner) => expr_shape(inner, shapes),
        Expr::Transpose(inner) => {
            let s = expr_shape(inner, shapes)?;
            Ok((s.1, s.0))
        }
        Expr::Inverse(inner) => {
            let s = expr_shape(inner, shapes)?;
            if s.0 != s.1 {
                return Err(Error::ShapeCheck {
                    statement: String::new(),
                    detail: format!("inverse of non-square {}x{} in `{}`", s.0, s.1, print_expr(e)),
                });
            }
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn power_chain_shapes() {
        let p = Program::parse("input A:n x n;\nB := A*A;\nC := B*B;\noutput C;\n").unwrap();
        let shapes = p.shape_check(&dims(&[("n", 4)])).unwrap();
        assert_eq!(shapes["A"], (4, 4));
        assert_eq!(shapes["B"], (4, 4));
        assert_eq!(shapes["C"], (4, 4));
    }

    #[test]
    fn regression_shapes() {
        let src = "input X:m x n;\ninput Y:m x p;\nW := inv(X' * X);\nbeta := W * X' * Y;\noutput beta;\n";
        let p = Program::parse(src).unwrap();
        let shapes = p.shape_check(&dims(&[("m", 6), ("n", 3), ("p", 2)])).unwrap();
        assert_eq!(shapes["W"], (3, 3));
        assert_eq!(shapes["beta"], (3, 2));
    }

    #[test]
    fn conformance_violation_names_statement_and_subexpression() {
        let p = Program::parse("input A:n x m;\nB := A*A;\noutput B;\n").unwrap();
        match p.shape_check(&dims(&[("n", 2), ("m", 3)])) {
            Err(Error::ShapeCheck { statement, detail }) => {
                assert_eq!(statement, "B");
                assert!(detail.contains("2x3"), "detail: {detail}");
                assert!(detail.contains("A*A"), "detail: {detail}");
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn unbound_dimension_symbol_is_reported() {
        let p = Program::parse("input A:n x q;\nB := A';\noutput B;\n").unwrap();
        match p.shape_check(&dims(&[("n", 2)])) {
            Err(Error::UnboundDim { symbol }) => assert_eq!(symbol, "q"),
            other => panic!("expected unbound dim, got {other:?}"),
        }
    }

    #[test]
    fn canonicalization_sorts_sum_terms_and_cancels_double_transpose() {
        let e1 = Expr::add(Expr::var("B"), Expr::var("A"));
        let e2 = Expr::add(Expr::var("A"), Expr::var("B"));
        assert!(structurally_equal(&e1, &e2));
        let t = Expr::transpose(Expr::transpose(Expr::var("A")));
        assert_eq!(canonicalize(&t), Expr::var("A"));
        let s = Expr::scale(2.0, Expr::scale(3.0, Expr::var("A")));
        assert_eq!(canonicalize(&s), Expr::scale(6.0, Expr::var("A")));
    }

    #[test]
    fn transpose_pushdown_reverses_products() {
        let e = Expr::mul(Expr::var("A"), Expr::var("B"));
        let t = expr_transpose(&e);
        assert_eq!(
            t,
            Expr::mul(Expr::transpose(Expr::var("B")), Expr::transpose(Expr::var("A")))
        );
        // (A')' = A
        let tt = expr_transpose(&Expr::transpose(Expr::var("A")));
        assert_eq!(tt, Expr::var("A"));
    }
}
