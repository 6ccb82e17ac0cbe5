//! Pretty printer. Printed programs and expressions re-parse to the same
//! tree, including non-left-associated products produced by the optimizer.

use super::{Expr, Program};

/// Binding strength used to decide parenthesization.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(_, _) | Expr::Sub(_, _) => 1,
        Expr::Mul(_, _) | Expr::Scale(_, _) => 2,
        Expr::Transpose(_) => 3,
        Expr::Var(_) | Expr::Inverse(_) => 4,
    }
}

fn fmt_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Var(n) => out.push_str(n),
        Expr::Add(a, b) => {
            child(a, 1, false, out);
            out.push_str(" + ");
            child(b, 1, true, out);
        }
        Expr::Sub(a, b) => {
            child(a, 1, false, out);
            out.push_str(" - ");
            child(b, 1, true, out);
        }
        Expr::Mul(a, b) => {
            child(a, 2, false, out);
            out.push('*');
            child(b, 2, true, out);
        }
        Expr::Scale(c, inner) => {
            if *c == -1.0 {
                out.push('-');
            } else {
                out.push_str(&format!("{c}*"));
            }
            child(inner, 2, true, out);
        }
        Expr::Transpose(inner) => {
            child(inner, 4, false, out);
            out.push('\'');
        }
        Expr::Inverse(inner) => {
            out.push_str("inv(");
            fmt_expr(inner, out);
            out.push(')');
        }
    }
}

/// Prints a child of an operator with precedence `parent`. Right operands at
/// equal precedence are parenthesized so associativity survives re-parsing.
fn child(e: &Expr, parent: u8, is_right: bool, out: &mut String) {
    let p = prec(e);
    let needs_parens = p < parent || (is_right && p == parent);
    if needs_parens {
        out.push('(');
        fmt_expr(e, out);
        out.push(')');
    } else {
        fmt_expr(e, out);
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    fmt_expr(e, &mut s);
    s
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for input in &p.inputs {
        out.push_str(&format!("input {}:{} x {};\n", input.name, input.rows, input.cols));
    }
    for st in &p.statements {
        out.push_str(&format!("{} := {};\n", st.target, print_expr(&st.expr)));
    }
    for o in &p.outputs {
        out.push_str(&format!("output {o};\n"));
    }
    out
}
