//! Trigger optimization.
//!
//! Three passes, all meaning-preserving on pre-update state:
//!
//! 1. product chains re-associate to their cheapest parenthesization;
//! 2. repeated non-leaf subexpressions hoist into `t1, t2, ...` temps,
//!    smallest candidates first so larger expressions then share the temps;
//! 3. temps left with a single use (possible once a larger hoist swallowed
//!    the other occurrences) inline back and disappear.
//!
//! The pipeline is idempotent: a second run finds no duplicated candidates
//! and no single-use temps, and re-association is deterministic.

use crate::ir::{expr_shape, structural_key, Expr};

use super::chain::reassociate_expr;
use super::{TriggerProgram, TriggerStep, UpdateStep};

fn map_exprs(steps: &mut [TriggerStep], f: &mut impl FnMut(&Expr) -> Expr) {
    for s in steps.iter_mut() {
        match s {
            TriggerStep::AssignBlocks { blocks, .. } => {
                for b in blocks.iter_mut() {
                    *b = f(b);
                }
            }
            TriggerStep::Assign { expr, .. } => *expr = f(expr),
            TriggerStep::ShermanMorrison { .. } => {}
        }
    }
}

fn step_exprs(step: &TriggerStep) -> Vec<&Expr> {
    match step {
        TriggerStep::AssignBlocks { blocks, .. } => blocks.iter().collect(),
        TriggerStep::Assign { expr, .. } => vec![expr],
        TriggerStep::ShermanMorrison { .. } => Vec::new(),
    }
}

fn node_count(e: &Expr) -> usize {
    match e {
        Expr::Var(_) => 1,
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => 1 + node_count(a) + node_count(b),
        Expr::Scale(_, inner) | Expr::Transpose(inner) | Expr::Inverse(inner) => {
            1 + node_count(inner)
        }
    }
}

/// Cost-bearing interior nodes are hoistable; leaves and bare transposes or
/// scales of leaves are not worth a temp.
fn hoistable(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Mul(_, _) | Expr::Add(_, _) | Expr::Sub(_, _) | Expr::Inverse(_)
    )
}

struct Candidate {
    expr: Expr,
    nodes: usize,
    count: usize,
    first: usize,
}

fn collect(e: &Expr, pos: &mut usize, out: &mut Vec<(String, Candidate)>) {
    *pos += 1;
    if hoistable(e) {
        let key = structural_key(e);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, c)) => c.count += 1,
            None => out.push((
                key,
                Candidate {
                    expr: e.clone(),
                    nodes: node_count(e),
                    count: 1,
                    first: *pos,
                },
            )),
        }
    }
    match e {
        Expr::Var(_) => {}
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            collect(a, pos, out);
            collect(b, pos, out);
        }
        Expr::Scale(_, inner) | Expr::Transpose(inner) | Expr::Inverse(inner) => {
            collect(inner, pos, out)
        }
    }
}

fn replace_key(e: &Expr, key: &str, name: &str) -> Expr {
    if structural_key(e) == key {
        return Expr::var(name);
    }
    match e {
        Expr::Var(_) => e.clone(),
        Expr::Add(a, b) => Expr::add(replace_key(a, key, name), replace_key(b, key, name)),
        Expr::Sub(a, b) => Expr::sub(replace_key(a, key, name), replace_key(b, key, name)),
        Expr::Mul(a, b) => Expr::mul(replace_key(a, key, name), replace_key(b, key, name)),
        Expr::Scale(c, inner) => Expr::scale(*c, replace_key(inner, key, name)),
        Expr::Transpose(inner) => Expr::transpose(replace_key(inner, key, name)),
        Expr::Inverse(inner) => Expr::inverse(replace_key(inner, key, name)),
    }
}

fn contains_key(e: &Expr, key: &str) -> bool {
    if structural_key(e) == key {
        return true;
    }
    match e {
        Expr::Var(_) => false,
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            contains_key(a, key) || contains_key(b, key)
        }
        Expr::Scale(_, inner) | Expr::Transpose(inner) | Expr::Inverse(inner) => {
            contains_key(inner, key)
        }
    }
}

fn hoist_common_subexpressions(t: &mut TriggerProgram) {
    let mut temp_index = 1usize;
    loop {
        let mut pos = 0usize;
        let mut cands: Vec<(String, Candidate)> = Vec::new();
        for step in &t.steps {
            for e in step_exprs(step) {
                collect(e, &mut pos, &mut cands);
            }
        }
        let Some((key, cand)) = cands
            .into_iter()
            .filter(|(_, c)| c.count >= 2)
            .min_by_key(|(_, c)| (c.nodes, c.first))
        else {
            break;
        };
        let Ok(shape) = expr_shape(&cand.expr, &t.shapes) else {
            break;
        };
        let name = loop {
            let n = format!("t{temp_index}");
            temp_index += 1;
            if !t.shapes.contains_key(&n) {
                break n;
            }
        };
        let insert_at = t
            .steps
            .iter()
            .position(|s| step_exprs(s).iter().any(|e| contains_key(e, &key)))
            .expect("a counted candidate occurs in some step");
        map_exprs(&mut t.steps, &mut |e| replace_key(e, &key, &name));
        t.steps.insert(
            insert_at,
            TriggerStep::Assign {
                name: name.clone(),
                expr: cand.expr,
            },
        );
        t.shapes.insert(name, shape);
    }
}

fn protected_names(t: &TriggerProgram) -> Vec<String> {
    let mut out = vec![t.u_param.clone(), t.v_param.clone()];
    for up in &t.updates {
        match up {
            UpdateStep::Outer {
                target,
                u_name,
                v_name,
            } => out.extend([target.clone(), u_name.clone(), v_name.clone()]),
            UpdateStep::Full { target, delta_name } => {
                out.extend([target.clone(), delta_name.clone()])
            }
        }
    }
    for s in &t.steps {
        if let TriggerStep::ShermanMorrison {
            target,
            u_name,
            v_name,
            r_name,
            s_name,
        } = s
        {
            out.extend([
                target.clone(),
                u_name.clone(),
                v_name.clone(),
                r_name.clone(),
                s_name.clone(),
            ]);
        }
    }
    out
}

fn var_uses(e: &Expr, name: &str) -> usize {
    match e {
        Expr::Var(n) => usize::from(n == name),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
            var_uses(a, name) + var_uses(b, name)
        }
        Expr::Scale(_, inner) | Expr::Transpose(inner) | Expr::Inverse(inner) => {
            var_uses(inner, name)
        }
    }
}

fn inline_single_use_temps(t: &mut TriggerProgram) {
    loop {
        let protected = protected_names(t);
        let mut inlined = None;
        for (i, step) in t.steps.iter().enumerate() {
            let TriggerStep::Assign { name, expr } = step else {
                continue;
            };
            if protected.contains(name) {
                continue;
            }
            let uses: usize = t
                .steps
                .iter()
                .flat_map(|s| step_exprs(s))
                .map(|e| var_uses(e, name))
                .sum();
            if uses == 1 {
                inlined = Some((i, name.clone(), expr.clone()));
                break;
            }
        }
        let Some((i, name, def)) = inlined else { break };
        t.steps.remove(i);
        map_exprs(&mut t.steps, &mut |e| {
            e.substitute(&|n| (n == name).then(|| def.clone()))
        });
        t.shapes.remove(&name);
    }
}

/// Returns an equivalent trigger with re-associated products, shared
/// subexpressions hoisted, and single-use temps inlined. `updates` are
/// untouched.
pub fn optimize_trigger(t: &TriggerProgram) -> TriggerProgram {
    let mut out = t.clone();
    let shapes = out.shapes.clone();
    map_exprs(&mut out.steps, &mut |e| reassociate_expr(e, &shapes));
    hoist_common_subexpressions(&mut out);
    inline_single_use_temps(&mut out);
    let shapes = out.shapes.clone();
    map_exprs(&mut out.steps, &mut |e| reassociate_expr(e, &shapes));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{apply_trigger, compile, dump_trigger};
    use crate::delta::RankKUpdate;
    use crate::eval::{eval_expr, Bindings};
    use crate::fixtures::{rng_from_seed, seeded_matrix};
    use crate::ir::{print_expr, Program, ShapeMap};
    use crate::ledger::CostLedger;
    use std::collections::BTreeMap;

    fn ols_trigger() -> TriggerProgram {
        let p = Program::parse(
            "input X : m x n;\ninput y : m x 1;\nZ := X'*X;\nW := inv(Z);\nbeta := W*(X'*y);\n",
        )
        .unwrap();
        let dims = BTreeMap::from([("m".to_string(), 40), ("n".to_string(), 10)]);
        compile(&p, &dims, &["X".to_string()], 1)
            .unwrap()
            .trigger_for("X")
            .unwrap()
            .clone()
    }

    #[test]
    fn repeated_projection_is_hoisted_once() {
        let opt = optimize_trigger(&ols_trigger());
        let dump = dump_trigger(&opt);
        assert!(dump.contains("t1 := X'*u;"), "{dump}");
        // The definition is now the only occurrence of the product.
        assert_eq!(dump.matches("X'*u").count(), 1, "{dump}");
        assert!(opt.shapes["t1"] == (10, 1));
    }

    #[test]
    fn power_trigger_survives_optimization_verbatim() {
        let p = Program::parse("input A : n x n;\nB := A*A;\nC := B*B;\n").unwrap();
        let dims = BTreeMap::from([("n".to_string(), 64)]);
        let ts = compile(&p, &dims, &["A".to_string()], 1).unwrap();
        let raw = ts.trigger_for("A").unwrap();
        let opt = optimize_trigger(raw);
        assert_eq!(dump_trigger(&opt), dump_trigger(raw));
    }

    #[test]
    fn optimization_is_idempotent() {
        let once = optimize_trigger(&ols_trigger());
        let twice = optimize_trigger(&once);
        assert_eq!(dump_trigger(&once), dump_trigger(&twice));
    }

    #[test]
    fn left_leaning_chain_reassociates() {
        let mut shapes = ShapeMap::new();
        shapes.insert("A".into(), (64, 64));
        shapes.insert("B".into(), (64, 64));
        shapes.insert("c".into(), (64, 1));
        let t = TriggerProgram {
            trigger_on: "A".into(),
            u_param: "u".into(),
            v_param: "v".into(),
            rank: 1,
            steps: vec![TriggerStep::Assign {
                name: "D".into(),
                expr: Expr::mul(Expr::mul(Expr::var("A"), Expr::var("B")), Expr::var("c")),
            }],
            updates: vec![],
            shapes,
        };
        let opt = optimize_trigger(&t);
        let TriggerStep::Assign { expr, .. } = &opt.steps[0] else {
            panic!("assign survives");
        };
        assert_eq!(print_expr(expr), "A*(B*c)");
    }

    #[test]
    fn optimization_never_raises_measured_cost() {
        let p = Program::parse(
            "input X : m x n;\ninput y : m x 1;\nZ := X'*X;\nW := inv(Z);\nbeta := W*(X'*y);\n",
        )
        .unwrap();
        let dims = BTreeMap::from([("m".to_string(), 40), ("n".to_string(), 10)]);
        let ts = compile(&p, &dims, &["X".to_string()], 1).unwrap();
        let raw = ts.trigger_for("X").unwrap();
        let opt = optimize_trigger(raw);

        let shapes = ts.shapes.clone();
        let mut rng = rng_from_seed(42);
        let mut state: Bindings<f64> = Bindings::new();
        for input in &ts.program.inputs {
            let (r, c) = shapes[&input.name];
            state.insert(input.name.clone(), seeded_matrix::<f64>(r, c, &mut rng));
        }
        let mut scratch = CostLedger::new();
        for st in &ts.program.statements {
            let v = eval_expr(&st.expr, &state, &mut scratch).unwrap();
            state.insert(st.target.clone(), v);
        }

        let up = RankKUpdate::new(
            "X",
            seeded_matrix::<f64>(40, 1, &mut rng),
            seeded_matrix::<f64>(10, 1, &mut rng),
        )
        .unwrap();
        let mut raw_ledger = CostLedger::new();
        let mut opt_ledger = CostLedger::new();
        apply_trigger(raw, &mut state.clone(), &up, &mut raw_ledger).unwrap();
        apply_trigger(&opt, &mut state.clone(), &up, &mut opt_ledger).unwrap();
        assert!(
            opt_ledger.totals().total() <= raw_ledger.totals().total(),
            "optimized {} vs raw {}",
            opt_ledger.totals().total(),
            raw_ledger.totals().total()
        );
        assert!(opt_ledger.totals().total() < raw_ledger.totals().total());
    }
}
