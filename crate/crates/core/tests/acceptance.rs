//! The acceptance gate: ten criteria, one test per criterion. Each test
//! prints `criterion N: PASS - ...` on success and panics with the matching
//! `criterion N: FAIL - ...` line otherwise, so a log scrape (or
//! `cargo test --test acceptance -- --nocapture`) shows the verdict per
//! criterion.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ivla_core::analytics::general::reevaluate_general;
use ivla_core::analytics::{
    predict_cost, GeneralEngine, IterativeModel, OlsEngine, PowersEngine, Strategy, SumsEngine,
    Workload,
};
use ivla_core::compiler::{apply_trigger, compile, dump_trigger};
use ivla_core::delta::{apply_sequential_sm, sherman_morrison_delta, RankKUpdate};
use ivla_core::eval::{eval_expr, Bindings};
use ivla_core::fixtures::{
    log_log_slope, rng_from_seed, scale_to_spectral_radius, scale_to_unit_frobenius, seeded_matrix,
    seeded_vector,
};
use ivla_core::harness::{run_builtin, BuiltinWorkload, RunConfig, StreamSource};
use ivla_core::ir::Program;
use ivla_core::{mat_add, mat_inverse, mat_mul, mat_sub, rel_frobenius, CostLedger, Error, Mat};

macro_rules! require {
    ($n:expr, $cond:expr, $($why:tt)+) => {
        assert!($cond, "criterion {}: FAIL - {}", $n, format!($($why)+))
    };
}

fn pass(n: u32, what: &str) {
    println!("criterion {n}: PASS - {what}");
}

/// `I + scale * R` with `R` uniform in [-1, 1): comfortably invertible at
/// the sizes used here.
fn near_identity(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Mat {
    let r = seeded_matrix::<f64>(n, n, rng);
    Mat::from_fn(n, n, |i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        base + scale * r.get(i, j)
    })
}

fn frob_dist(a: &Mat, b: &Mat) -> f64 {
    let mut scratch = CostLedger::new();
    mat_sub(a, b, &mut scratch).unwrap().frobenius()
}

fn rank_update(
    name: &str,
    rows: usize,
    cols: usize,
    rank: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> RankKUpdate<f64> {
    let u = seeded_matrix::<f64>(rows, rank, rng).map(|x| scale * x);
    let v = seeded_matrix::<f64>(cols, rank, rng).map(|x| scale * x);
    RankKUpdate::new(name, u, v).unwrap()
}

/// Random shape-valid programs for the delta-rule oracle test: a square
/// input `A`, an optional rectangular input `X`, and up to four statements
/// built from products, sums, scalings, transposes, and whole-statement
/// inversion of `A`.
mod progen {
    use super::*;

    pub struct Generated {
        pub source: String,
        pub dims: BTreeMap<String, usize>,
    }

    fn operand(
        rng: &mut ChaCha8Rng,
        scope: &[(String, (usize, usize))],
    ) -> (String, (usize, usize)) {
        let (name, (r, c)) = scope[rng.gen_range(0..scope.len())].clone();
        if rng.gen_bool(0.4) {
            (format!("{name}'"), (c, r))
        } else {
            (name, (r, c))
        }
    }

    /// A factor whose row count matches `rows`, possibly transposed, if any
    /// name in scope fits.
    fn factor_with_rows(
        rng: &mut ChaCha8Rng,
        scope: &[(String, (usize, usize))],
        rows: usize,
    ) -> Option<(String, (usize, usize))> {
        let mut fits = Vec::new();
        for (name, (r, c)) in scope {
            if *r == rows {
                fits.push((name.clone(), (*r, *c)));
            }
            if *c == rows {
                fits.push((format!("{name}'"), (*c, *r)));
            }
        }
        if fits.is_empty() {
            None
        } else {
            Some(fits[rng.gen_range(0..fits.len())].clone())
        }
    }

    /// A product of one to three conformable operands with an optional
    /// numeric coefficient.
    fn term(
        rng: &mut ChaCha8Rng,
        scope: &[(String, (usize, usize))],
    ) -> (String, (usize, usize)) {
        let coeff = if rng.gen_bool(0.3) {
            ["0.5*", "2*", "1.5*", "0.25*"][rng.gen_range(0..4)]
        } else {
            ""
        };
        let (mut txt, mut shape) = operand(rng, scope);
        for _ in 0..rng.gen_range(0..=2usize) {
            match factor_with_rows(rng, scope, shape.1) {
                Some((f, fs)) => {
                    txt.push('*');
                    txt.push_str(&f);
                    shape = (shape.0, fs.1);
                }
                None => break,
            }
        }
        (format!("{coeff}{txt}"), shape)
    }

    pub fn random_program(rng: &mut ChaCha8Rng) -> Generated {
        let n = rng.gen_range(4..=32usize);
        let m = rng.gen_range(4..=32usize);

        let mut scope: Vec<(String, (usize, usize))> = vec![("A".to_string(), (n, n))];
        let mut src = String::from("input A : n x n;\n");
        if rng.gen_bool(0.5) {
            scope.push(("X".to_string(), (n, m)));
            src.push_str("input X : n x m;\n");
        }

        for si in 0..rng.gen_range(1..=4usize) {
            let target = format!("T{}", si + 1);
            if rng.gen_bool(0.15) {
                src.push_str(&format!("{target} := inv(A);\n"));
                scope.push((target, (n, n)));
                continue;
            }
            let (first, shape) = term(rng, &scope);
            let mut rhs = String::new();
            if rng.gen_bool(0.15) {
                rhs.push('-');
            }
            rhs.push_str(&first);
            for _ in 1..rng.gen_range(1..=3usize) {
                // extra terms must share the head term's shape; give up
                // after a few draws rather than forcing one
                let extra = (0..8).find_map(|_| {
                    let (t, s) = term(rng, &scope);
                    (s == shape).then_some(t)
                });
                if let Some(t) = extra {
                    rhs.push_str(if rng.gen_bool(0.5) { " + " } else { " - " });
                    rhs.push_str(&t);
                }
            }
            src.push_str(&format!("{target} := {rhs};\n"));
            scope.push((target, shape));
        }

        let mut dims = BTreeMap::new();
        dims.insert("n".to_string(), n);
        dims.insert("m".to_string(), m);
        Generated { source: src, dims }
    }
}

#[test]
fn criterion_01_delta_rules_match_reevaluation() {
    let started = Instant::now();
    let mut rng = rng_from_seed(0xC1);
    let mut scratch = CostLedger::new();
    for pi in 0..500usize {
        let g = progen::random_program(&mut rng);
        let program = Program::parse(&g.source).unwrap_or_else(|e| {
            panic!("criterion 1: FAIL - program {pi} failed to parse ({e})\n{}", g.source)
        });
        let shapes = program.shape_check(&g.dims).unwrap_or_else(|e| {
            panic!("criterion 1: FAIL - program {pi} failed shape check ({e})\n{}", g.source)
        });
        let rank = rng.gen_range(1..=2usize);
        let dynamic: Vec<String> = program.input_names().into_iter().collect();
        let ts = compile(&program, &g.dims, &dynamic, rank).unwrap_or_else(|e| {
            panic!("criterion 1: FAIL - program {pi} failed to compile ({e})\n{}", g.source)
        });

        let mut inputs: Bindings<f64> = BTreeMap::new();
        for decl in &program.inputs {
            let (r, c) = shapes[&decl.name];
            let val = if r == c {
                near_identity(r, 0.1, &mut rng)
            } else {
                seeded_matrix::<f64>(r, c, &mut rng).map(|x| 0.5 * x)
            };
            inputs.insert(decl.name.clone(), val);
        }
        let mut state = inputs.clone();
        for st in &program.statements {
            let val = eval_expr(&st.expr, &state, &mut scratch).unwrap_or_else(|e| {
                panic!("criterion 1: FAIL - program {pi} initial evaluation ({e})\n{}", g.source)
            });
            state.insert(st.target.clone(), val);
        }

        for ui in 0..2usize {
            let name = dynamic[rng.gen_range(0..dynamic.len())].clone();
            let (r, c) = shapes[&name];
            let upd = rank_update(&name, r, c, rank, 0.1, &mut rng);
            let trigger = ts.trigger_for(&name).unwrap_or_else(|| {
                panic!("criterion 1: FAIL - program {pi} has no trigger for {name}\n{}", g.source)
            });
            let mut ledger = CostLedger::new();
            if let Err(e) = apply_trigger(trigger, &mut state, &upd, &mut ledger) {
                panic!(
                    "criterion 1: FAIL - program {pi} update {ui} on {name} errored ({e})\n{}",
                    g.source
                );
            }

            let delta = upd.delta_matrix(&mut scratch).unwrap();
            let cur = inputs.get_mut(&name).unwrap();
            *cur = mat_add(cur, &delta, &mut scratch).unwrap();
            let mut reference = inputs.clone();
            for st in &program.statements {
                let val = eval_expr(&st.expr, &reference, &mut scratch).unwrap_or_else(|e| {
                    panic!(
                        "criterion 1: FAIL - program {pi} reference evaluation ({e})\n{}",
                        g.source
                    )
                });
                reference.insert(st.target.clone(), val);
            }
            for st in &program.statements {
                let err = rel_frobenius(&state[&st.target], &reference[&st.target]);
                require!(
                    1,
                    err < 1e-6,
                    "program {pi} update {ui}: {} differs from re-evaluation by {err:.3e}\n{}",
                    st.target,
                    g.source
                );
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    require!(1, secs < 60.0, "500 programs took {secs:.1}s, budget is 60s");
    pass(
        1,
        &format!("500 random programs, two updates each, matched re-evaluation within 1e-6 ({secs:.1}s)"),
    );
}

#[test]
fn criterion_02_sherman_morrison_inverse_maintenance() {
    let mut rng = rng_from_seed(0xC2);
    let mut scratch = CostLedger::new();
    for case in 0..200usize {
        let n = rng.gen_range(2..=100usize);
        let e = near_identity(n, 0.1, &mut rng);
        let w = mat_inverse(&e, &mut scratch).unwrap();
        let u = seeded_vector::<f64>(n, 0.1, &mut rng);
        let v = seeded_vector::<f64>(n, 0.1, &mut rng);
        let (p, q) = sherman_morrison_delta(&w, &u, &v, &mut scratch).unwrap_or_else(|err| {
            panic!("criterion 2: FAIL - case {case} (n={n}) unexpectedly singular: {err}")
        });
        let delta = mat_mul(&p, &q.t(), &mut scratch).unwrap();
        let w_new = mat_add(&w, &delta, &mut scratch).unwrap();
        let uv = mat_mul(&u, &v.t(), &mut scratch).unwrap();
        let oracle =
            mat_inverse(&mat_add(&e, &uv, &mut scratch).unwrap(), &mut scratch).unwrap();
        let dist = frob_dist(&w_new, &oracle);
        require!(2, dist <= 1e-8, "case {case} (n={n}): Frobenius distance {dist:.3e}");
    }

    // Least-squares Gram update: when X gains u v' on one row, Z = X'X
    // moves by two rank-1 terms, applied here as a sequential chain.
    let (m, n) = (30usize, 12usize);
    let x = seeded_matrix::<f64>(m, n, &mut rng);
    let z = mat_mul(&x.t(), &x, &mut scratch).unwrap();
    let w = mat_inverse(&z, &mut scratch).unwrap();
    let mut u = Mat::zeros(m, 1);
    u.set(4, 0, 1.0);
    let v = seeded_vector::<f64>(n, 0.5, &mut rng);
    let a = mat_mul(&x.t(), &u, &mut scratch).unwrap();
    // Z + a v' + v (a + v)'  ==  (X + u v')'(X + u v')  for unit-norm u
    let second = mat_add(&a, &v, &mut scratch).unwrap();
    let chain = apply_sequential_sm(&w, &[(a.clone(), v.clone()), (v.clone(), second)], &mut scratch)
        .unwrap();
    let uv = mat_mul(&u, &v.t(), &mut scratch).unwrap();
    let x2 = mat_add(&x, &uv, &mut scratch).unwrap();
    let z2 = mat_mul(&x2.t(), &x2, &mut scratch).unwrap();
    let oracle = mat_inverse(&z2, &mut scratch).unwrap();
    let dist = frob_dist(&chain.updated, &oracle);
    require!(2, dist <= 1e-8, "two-step Gram chain: Frobenius distance {dist:.3e}");
    let rs = mat_mul(&chain.r, &chain.s.t(), &mut scratch).unwrap();
    let rebuilt = mat_add(&w, &rs, &mut scratch).unwrap();
    let drift = frob_dist(&rebuilt, &chain.updated);
    require!(2, drift <= 1e-10, "factored W + R S' drifts from the running inverse by {drift:.3e}");

    // vanishing denominator: 1 + v' W u = 0 exactly
    let w = Mat::identity(3);
    let u = Mat::col_vec(&[1.0, 0.0, 0.0]);
    let v = Mat::col_vec(&[-1.0, 0.0, 0.0]);
    match apply_sequential_sm(&w, &[(u, v)], &mut scratch) {
        Err(Error::UpdateSingular { step }) => {
            require!(2, step == 0, "singular step reported as {step}, want 0")
        }
        Err(e) => require!(2, false, "singular update raised the wrong error: {e}"),
        Ok(_) => require!(2, false, "singular update produced a matrix instead of an error"),
    }
    pass(
        2,
        "200 rank-1 inverse updates within 1e-8, the sequential Gram chain matches, and the vanishing denominator is a reported error",
    );
}

const A4_SRC: &str = "input A : n x n;\nB := A*A;\nC := B*B;\n";
const A4_GOLDEN: &str = "ON UPDATE A BY (u,v):\n  U_B := [u | A*u + u*(v'*u)];\n  V_B := [A'*v | v];\n  U_C := [U_B | B*U_B + U_B*(V_B'*U_B)];\n  V_C := [B'*V_B | V_B];\n  A += u*v';\n  B += U_B*V_B';\n  C += U_C*V_C';\n";

#[test]
fn criterion_03_quartic_power_trigger() {
    let program = Program::parse(A4_SRC).unwrap();
    let mut ratios: Vec<(usize, f64)> = Vec::new();
    for &n in &[256usize, 512] {
        let mut dims = BTreeMap::new();
        dims.insert("n".to_string(), n);
        let ts = compile(&program, &dims, &["A".to_string()], 1).unwrap();
        let trigger = ts.trigger_for("A").unwrap();
        if n == 256 {
            let dump = dump_trigger(trigger);
            require!(
                3,
                dump == A4_GOLDEN,
                "trigger dump differs\n--- got ---\n{dump}--- want ---\n{A4_GOLDEN}"
            );
            for (name, want) in [("U_B", 2usize), ("V_B", 2), ("U_C", 4), ("V_C", 4)] {
                let got = trigger.shapes[name];
                require!(3, got == (n, want), "{name} has shape {got:?}, want ({n}, {want})");
            }
        }

        let mut rng = rng_from_seed(3);
        let a = near_identity(n, 0.1, &mut rng);
        let mut scratch = CostLedger::new();
        let b = mat_mul(&a, &a, &mut scratch).unwrap();
        let c = mat_mul(&b, &b, &mut scratch).unwrap();
        let mut state: Bindings<f64> = BTreeMap::new();
        state.insert("A".to_string(), a);
        state.insert("B".to_string(), b);
        state.insert("C".to_string(), c);

        let upd = RankKUpdate::new(
            "A",
            seeded_vector::<f64>(n, 0.1, &mut rng),
            seeded_vector::<f64>(n, 0.1, &mut rng),
        )
        .unwrap();
        let mut trig_ledger = CostLedger::new();
        apply_trigger(trigger, &mut state, &upd, &mut trig_ledger).unwrap();

        let mut reeval_ledger = CostLedger::new();
        let b2 = mat_mul(&state["A"], &state["A"], &mut reeval_ledger).unwrap();
        let c2 = mat_mul(&b2, &b2, &mut reeval_ledger).unwrap();
        let (eb, ec) = (rel_frobenius(&state["B"], &b2), rel_frobenius(&state["C"], &c2));
        require!(
            3,
            eb < 1e-6 && ec < 1e-6,
            "n={n}: trigger state differs from re-evaluation (B {eb:.2e}, C {ec:.2e})"
        );

        let (t, r) = (trig_ledger.mul_adds(), reeval_ledger.mul_adds());
        let ratio = t as f64 / r as f64;
        require!(
            3,
            ratio < 0.2,
            "n={n}: mul_add ratio trigger/re-evaluation is {ratio:.4} (trigger {t}, re-evaluation {r})"
        );
        ratios.push((n, ratio));
    }
    require!(
        3,
        ratios[1].1 < ratios[0].1,
        "ratio should fall as n doubles: {:.4} at n=256, {:.4} at n=512",
        ratios[0].1,
        ratios[1].1
    );
    pass(
        3,
        &format!(
            "golden trigger matches; mul_add ratios {:.4} (n=256) -> {:.4} (n=512)",
            ratios[0].1, ratios[1].1
        ),
    );
}

#[test]
fn criterion_04_closed_forms_exact() {
    let mut cells = 0u32;
    for &n in &[32usize, 64] {
        for &k in &[4usize, 8, 16] {
            for model in [IterativeModel::Linear, IterativeModel::Exponential] {
                let mut rng = rng_from_seed(4);
                let a = scale_to_unit_frobenius(&seeded_matrix::<f64>(n, n, &mut rng));
                let mut init = CostLedger::new();
                let mut engine =
                    PowersEngine::new(&a, k, model, Strategy::Incremental, &mut init).unwrap();
                let want = predict_cost(Workload::Powers, model, Strategy::Incremental, n, 1, k)
                    .unwrap()
                    .exact
                    .unwrap();
                for step in 0..3usize {
                    let upd = RankKUpdate::new(
                        "A",
                        seeded_vector::<f64>(n, 0.1, &mut rng),
                        seeded_vector::<f64>(n, 0.1, &mut rng),
                    )
                    .unwrap();
                    let mut ledger = CostLedger::new();
                    engine.apply_update(&upd, &mut ledger).unwrap();
                    let got = ledger.label_counts("delta").total();
                    require!(
                        4,
                        got == want,
                        "{model:?} n={n} k={k} update {step}: measured {got}, closed form {want}"
                    );
                    cells += 1;
                }
            }
        }
    }
    pass(4, &format!("{cells} measurements equal the closed forms with zero deviation"));
}

fn powers_update_total(n: usize, k: usize, strategy: Strategy) -> u64 {
    let mut rng = rng_from_seed(5);
    let a = scale_to_unit_frobenius(&seeded_matrix::<f64>(n, n, &mut rng));
    let mut init = CostLedger::new();
    let mut engine =
        PowersEngine::new(&a, k, IterativeModel::Exponential, strategy, &mut init).unwrap();
    let upd = RankKUpdate::new(
        "A",
        seeded_vector::<f64>(n, 0.1, &mut rng),
        seeded_vector::<f64>(n, 0.1, &mut rng),
    )
    .unwrap();
    let mut ledger = CostLedger::new();
    engine.apply_update(&upd, &mut ledger).unwrap();
    ledger.totals().total()
}

#[test]
fn criterion_05_scaling_slopes() {
    let started = Instant::now();
    let ns = [64usize, 128, 256];
    let incr: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            ((n as f64).ln(), (powers_update_total(n, 16, Strategy::Incremental) as f64).ln())
        })
        .collect();
    let reeval: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            ((n as f64).ln(), (powers_update_total(n, 16, Strategy::Reevaluation) as f64).ln())
        })
        .collect();
    let si = log_log_slope(&incr);
    let sr = log_log_slope(&reeval);
    require!(5, (si - 2.0).abs() <= 0.1, "incremental exponential slope vs n is {si:.3}, want 2.0 +/- 0.1");
    require!(5, (sr - 3.0).abs() <= 0.1, "re-evaluation exponential slope vs n is {sr:.3}, want 3.0 +/- 0.1");

    let ks = [4usize, 8, 16, 32];
    let costs: Vec<u64> =
        ks.iter().map(|&k| powers_update_total(128, k, Strategy::Incremental)).collect();
    for w in costs.windows(2) {
        let ratio = w[1] as f64 / w[0] as f64;
        require!(
            5,
            (ratio - 2.0).abs() <= 0.3,
            "doubling k multiplied the count by {ratio:.3}, outside 2.0 +/- 0.3 (counts {costs:?})"
        );
    }
    let secs = started.elapsed().as_secs_f64();
    require!(5, secs < 300.0, "slope suite took {secs:.1}s, budget is 300s");
    pass(
        5,
        &format!(
            "slopes {si:.3} (incremental) and {sr:.3} (re-evaluation) vs n; k-doubling within 2.0 +/- 0.3 ({secs:.1}s)"
        ),
    );
}

#[test]
fn criterion_06_least_squares_dominance() {
    let (m, n) = (200usize, 100usize);
    let mut rng = rng_from_seed(6);
    let x = seeded_matrix::<f64>(m, n, &mut rng);
    let y = seeded_vector::<f64>(m, 1.0, &mut rng);
    let mut li = CostLedger::new();
    let mut lr = CostLedger::new();
    let mut incr = OlsEngine::new(&x, &y, Strategy::Incremental, &mut li).unwrap();
    let mut reev = OlsEngine::new(&x, &y, Strategy::Reevaluation, &mut lr).unwrap();
    let mut x_cur = x.clone();
    let mut scratch = CostLedger::new();
    for step in 0..50usize {
        let row = rng.gen_range(0..m);
        let mut u = Mat::zeros(m, 1);
        u.set(row, 0, 1.0);
        let v = seeded_vector::<f64>(n, 0.1, &mut rng);
        let upd = RankKUpdate::new("X", u, v).unwrap();

        let mut ci = CostLedger::new();
        let beta_incr = incr.apply_update(&upd, &mut ci).unwrap().clone();
        let mut cr = CostLedger::new();
        let beta_reev = reev.apply_update(&upd, &mut cr).unwrap().clone();

        let delta = upd.delta_matrix(&mut scratch).unwrap();
        x_cur = mat_add(&x_cur, &delta, &mut scratch).unwrap();
        let xt = x_cur.t();
        let gram = mat_mul(&xt, &x_cur, &mut scratch).unwrap();
        let w = mat_inverse(&gram, &mut scratch).unwrap();
        let xty = mat_mul(&xt, &y, &mut scratch).unwrap();
        let beta = mat_mul(&w, &xty, &mut scratch).unwrap();

        let ei = rel_frobenius(&beta_incr, &beta);
        let er = rel_frobenius(&beta_reev, &beta);
        require!(
            6,
            ei < 1e-6 && er < 1e-6,
            "update {step}: beta error {ei:.2e} (incremental), {er:.2e} (re-evaluation)"
        );
        let (ti, tr) = (ci.totals().total(), cr.totals().total());
        require!(
            6,
            ti < tr,
            "update {step}: incremental count {ti} is not strictly below re-evaluation count {tr}"
        );
    }
    pass(
        6,
        "50 row updates: both strategies within 1e-6 of the direct solve, incremental strictly cheaper on every update",
    );
}

fn general_update_total(
    n: usize,
    p: usize,
    k: usize,
    model: IterativeModel,
    strategy: Strategy,
) -> u64 {
    let mut rng = rng_from_seed(7);
    let a = scale_to_spectral_radius(&seeded_matrix::<f64>(n, n, &mut rng), 0.9, 7);
    let b = seeded_matrix::<f64>(n, p, &mut rng);
    let t0 = seeded_matrix::<f64>(n, p, &mut rng);
    let mut init = CostLedger::new();
    let mut engine = GeneralEngine::new(&a, &b, &t0, k, model, strategy, &mut init).unwrap();
    let upd = RankKUpdate::new(
        "A",
        seeded_vector::<f64>(n, 0.1, &mut rng),
        seeded_vector::<f64>(n, 0.1, &mut rng),
    )
    .unwrap();
    let mut ledger = CostLedger::new();
    engine.apply_update(&upd, &mut ledger).unwrap();
    ledger.totals().total()
}

#[test]
fn criterion_07_strategy_agreement_and_crossover() {
    let models = [IterativeModel::Linear, IterativeModel::Exponential, IterativeModel::Skip(4)];
    let strategies = [Strategy::Reevaluation, Strategy::Incremental, Strategy::Hybrid];
    let (n, k) = (128usize, 16usize);
    for &p in &[1usize, 8, 64] {
        let mut rng = rng_from_seed(7_000 + p as u64);
        let a = scale_to_spectral_radius(&seeded_matrix::<f64>(n, n, &mut rng), 0.9, 7);
        let b = seeded_matrix::<f64>(n, p, &mut rng);
        let t0 = seeded_matrix::<f64>(n, p, &mut rng);
        let u = seeded_vector::<f64>(n, 0.1, &mut rng);
        let v = seeded_vector::<f64>(n, 0.1, &mut rng);

        let mut scratch = CostLedger::new();
        let uv = mat_mul(&u, &v.t(), &mut scratch).unwrap();
        let a2 = mat_add(&a, &uv, &mut scratch).unwrap();
        let want =
            reevaluate_general(&a2, &b, &t0, k, IterativeModel::Linear, &mut scratch).unwrap();

        for model in models {
            for strategy in strategies {
                let mut init = CostLedger::new();
                let mut engine =
                    GeneralEngine::new(&a, &b, &t0, k, model, strategy, &mut init).unwrap();
                let upd = RankKUpdate::new("A", u.clone(), v.clone()).unwrap();
                let mut ledger = CostLedger::new();
                let got = engine.apply_update(&upd, &mut ledger).unwrap();
                let err = rel_frobenius(got, &want);
                require!(
                    7,
                    err < 1e-6,
                    "p={p} {model:?}/{strategy:?}: T_16 differs from the oracle by {err:.2e}"
                );
            }
        }
    }

    let hybrid_p1 = general_update_total(256, 1, 16, IterativeModel::Linear, Strategy::Hybrid);
    let incr_p1 = general_update_total(256, 1, 16, IterativeModel::Linear, Strategy::Incremental);
    require!(
        7,
        hybrid_p1 < incr_p1,
        "p=1, n=256: hybrid linear count {hybrid_p1} is not below incremental linear {incr_p1}"
    );
    let incr_exp_p64 =
        general_update_total(256, 64, 16, IterativeModel::Exponential, Strategy::Incremental);
    let hybrid_p64 = general_update_total(256, 64, 16, IterativeModel::Linear, Strategy::Hybrid);
    require!(
        7,
        incr_exp_p64 < hybrid_p64,
        "p=64, n=256: incremental exponential count {incr_exp_p64} is not below hybrid linear {hybrid_p64}"
    );
    pass(
        7,
        &format!(
            "nine model/strategy cells agree within 1e-6 at p in {{1,8,64}}; crossovers hold ({hybrid_p1} < {incr_p1} at p=1, {incr_exp_p64} < {hybrid_p64} at p=64)"
        ),
    );
}

#[test]
fn criterion_08_space_audit() {
    let (n, k, p) = (16usize, 16usize, 3usize);
    let mut rng = rng_from_seed(8);
    let a = scale_to_unit_frobenius(&seeded_matrix::<f64>(n, n, &mut rng));
    let b = seeded_matrix::<f64>(n, p, &mut rng);
    let t0 = seeded_matrix::<f64>(n, p, &mut rng);
    let mut l = CostLedger::new();
    let models = [IterativeModel::Linear, IterativeModel::Exponential, IterativeModel::Skip(4)];

    // linear keeps the whole chain (k), exponential the doubling ladder
    // (log2 k + 1), skip-s the ladder to s plus the strided chain
    // (log2 s + k/s); re-evaluation keeps one view
    for (model, want) in models.iter().copied().zip([16usize, 5, 6]) {
        let eng = PowersEngine::new(&a, k, model, Strategy::Incremental, &mut l).unwrap();
        let got = eng.stored_view_count();
        require!(8, got == want, "powers {model:?} incremental stores {got}, want {want}");
        let eng = PowersEngine::new(&a, k, model, Strategy::Reevaluation, &mut l).unwrap();
        let got = eng.stored_view_count();
        require!(8, got == 1, "powers {model:?} re-evaluation stores {got}, want 1");
    }
    for (model, want) in models.iter().copied().zip([16usize, 8, 8]) {
        let eng = SumsEngine::new(&a, k, model, Strategy::Incremental, &mut l).unwrap();
        let got = eng.stored_view_count();
        require!(8, got == want, "sums {model:?} incremental stores {got}, want {want}");
        let eng = SumsEngine::new(&a, k, model, Strategy::Reevaluation, &mut l).unwrap();
        let got = eng.stored_view_count();
        require!(8, got == 1, "sums {model:?} re-evaluation stores {got}, want 1");
    }
    for (model, want) in models.iter().copied().zip([17usize, 12, 11]) {
        for strategy in [Strategy::Incremental, Strategy::Hybrid] {
            let eng = GeneralEngine::new(&a, &b, &t0, k, model, strategy, &mut l).unwrap();
            let got = eng.stored_view_count();
            require!(8, got == want, "general {model:?} {strategy:?} stores {got}, want {want}");
        }
        let eng = GeneralEngine::new(&a, &b, &t0, k, model, Strategy::Reevaluation, &mut l).unwrap();
        let got = eng.stored_view_count();
        require!(8, got == 1, "general {model:?} re-evaluation stores {got}, want 1");
    }
    pass(8, "stored view counts follow the space law for every workload, model, and strategy");
}

#[test]
fn criterion_09_skew_trend() {
    let mut means: Vec<(f64, f64)> = Vec::new();
    for &zipf in &[4.0f64, 2.0, 1.0, 0.0] {
        let mut cfg = RunConfig::builtin(BuiltinWorkload::Powers, 128, 8);
        cfg.model = IterativeModel::Exponential;
        cfg.strategy = Strategy::Incremental;
        cfg.source = StreamSource::Generated { count: 8, rank: 64, zipf, seed: Some(9) };
        cfg.verify = Some(false);
        let report = run_builtin(&cfg).unwrap();
        require!(9, report.failure.is_none(), "zipf {zipf}: run aborted ({:?})", report.failure);
        require!(9, report.rows.len() == 8, "zipf {zipf}: {} rows, want 8", report.rows.len());
        let mean = report.rows.iter().map(|r| (r.mul_adds + r.adds) as f64).sum::<f64>() / 8.0;
        means.push((zipf, mean));
    }
    for w in means.windows(2) {
        require!(
            9,
            w[0].1 <= w[1].1,
            "mean per-batch count fell as skew flattened: zipf {} -> {:.0}, zipf {} -> {:.0}",
            w[0].0,
            w[0].1,
            w[1].0,
            w[1].1
        );
    }
    let shown: Vec<String> = means.iter().map(|(z, c)| format!("{z}:{c:.0}")).collect();
    pass(9, &format!("per-batch counts non-decreasing as skew flattens ({})", shown.join(", ")));
}

#[test]
fn criterion_10_deterministic_output() {
    for workload in [BuiltinWorkload::Powers, BuiltinWorkload::General] {
        let mut cfg = RunConfig::builtin(workload, 32, 4);
        cfg.source = StreamSource::Generated { count: 5, rank: 2, zipf: 1.0, seed: None };
        let first = run_builtin(&cfg).unwrap().to_csv();
        let second = run_builtin(&cfg).unwrap().to_csv();
        require!(
            10,
            first == second,
            "{} runs with the same seed produced different CSVs",
            cfg.workload.label()
        );
    }
    pass(10, "identical seeds produce byte-identical CSVs");
}
