//! Trigger compilation.
//!
//! For each dynamic input `X` of a program, `compile` builds an update
//! trigger: a straight-line sequence of block assignments that propagate the
//! factored delta of `X` through every affected statement, followed by the
//! in-place `+=` applications. Routing per statement:
//!
//! * delta factorable and thin: assign `U_t`/`V_t` block pairs;
//! * top-level `inv(...)` whose argument delta is thin: a sequential
//!   Sherman-Morrison chain yielding the inverse's own factored pair;
//! * otherwise (rank too large, or an affected matrix trapped inside a
//!   nested inverse): fall back to evaluating the delta as one full matrix,
//!   recomputing inverses in the trigger where required.
//!
//! Once a statement falls back to a full delta, every downstream statement
//! that reads it inherits an unfactorable delta, so the fallback is sticky
//! along dependency chains but leaves independent chains factored.

pub mod chain;
mod exec;
mod optimize;

pub use exec::apply_trigger;
pub use optimize::optimize_trigger;

use std::collections::{BTreeMap, BTreeSet};

use crate::delta::{
    derive_delta, factor_delta, is_factorable, DeltaEnv, DeltaKind, FactoredDelta,
};
use crate::error::{Error, Result};
use crate::ir::{
    canonicalize, expr_shape, print_expr, structural_key, Expr, Program, ShapeMap,
};

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerStep {
    /// `name := [b1 | b2 | ...]`, the horizontal stack of block expressions.
    AssignBlocks { name: String, blocks: Vec<Expr> },
    /// `name := expr`, a full-matrix assignment (hybrid deltas, CSE temps).
    Assign { name: String, expr: Expr },
    /// `(r, s) := sherman_morrison(target, u, v)`: sequential rank-1 updates
    /// of the maintained inverse `target` for the argument delta `u v'`.
    ShermanMorrison {
        target: String,
        u_name: String,
        v_name: String,
        r_name: String,
        s_name: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateStep {
    /// `target += u * v'`
    Outer {
        target: String,
        u_name: String,
        v_name: String,
    },
    /// `target += delta`
    Full { target: String, delta_name: String },
}

impl UpdateStep {
    pub fn target(&self) -> &str {
        match self {
            UpdateStep::Outer { target, .. } | UpdateStep::Full { target, .. } => target,
        }
    }
}

/// Executable trigger for one dynamic input. All assignments read pre-update
/// values; the `updates` list applies atomically afterwards.
#[derive(Debug, Clone)]
pub struct TriggerProgram {
    pub trigger_on: String,
    pub u_param: String,
    pub v_param: String,
    /// Update rank the width thresholds were decided for; execution accepts
    /// any rank (the block shapes scale with the incoming update).
    pub rank: usize,
    pub steps: Vec<TriggerStep>,
    pub updates: Vec<UpdateStep>,
    /// Shapes of program names plus every trigger-local name, at the
    /// compiled rank.
    pub shapes: ShapeMap,
}

/// Compilation result: one trigger per dynamic input plus shared auxiliary
/// views (expressions over static inputs only, evaluated once at load time;
/// empty unless an optimizer pass introduces them).
#[derive(Debug, Clone)]
pub struct TriggerSet {
    pub program: Program,
    pub shapes: ShapeMap,
    pub triggers: Vec<TriggerProgram>,
    pub auxiliary: Vec<(String, Expr)>,
}

impl TriggerSet {
    pub fn trigger_for(&self, input: &str) -> Option<&TriggerProgram> {
        self.triggers.iter().find(|t| t.trigger_on == input)
    }
}

/// Fresh-name allocator seeded with every name already in scope.
struct NameGen {
    used: BTreeSet<String>,
}

impl NameGen {
    fn new(used: BTreeSet<String>) -> Self {
        NameGen { used }
    }

    /// Claims the first free candidate, or the last one with a numeric
    /// suffix when all collide.
    fn claim_pref(&mut self, candidates: &[String]) -> String {
        for c in candidates {
            if self.used.insert(c.clone()) {
                return c.clone();
            }
        }
        let base = candidates.last().expect("at least one candidate");
        let mut i = 2;
        loop {
            let cand = format!("{base}{i}");
            if self.used.insert(cand.clone()) {
                return cand;
            }
            i += 1;
        }
    }

    fn claim(&mut self, base: &str) -> String {
        self.claim_pref(&[base.to_string()])
    }
}

/// Factored delta of one statement under the environment: `None` when the
/// statement is unaffected, an error when the delta exists but cannot be
/// put in block form (an affected matrix inside an opaque inverse).
pub fn compute_delta(e: &Expr, env: &DeltaEnv) -> Result<Option<FactoredDelta>> {
    match derive_delta(e, env) {
        None => Ok(None),
        Some(d) => factor_delta(&d, env).map(Some),
    }
}

/// Replaces any subexpression structurally equal to a maintained view's
/// defining expression with the view name; triggers read pre-update state,
/// so the substitution is exact.
fn reuse_views(e: &Expr, views: &BTreeMap<String, String>) -> Expr {
    if let Some(t) = views.get(&structural_key(&canonicalize(e))) {
        return Expr::var(t.clone());
    }
    match e {
        Expr::Var(_) => e.clone(),
        Expr::Add(a, b) => Expr::add(reuse_views(a, views), reuse_views(b, views)),
        Expr::Sub(a, b) => Expr::sub(reuse_views(a, views), reuse_views(b, views)),
        Expr::Mul(a, b) => Expr::mul(reuse_views(a, views), reuse_views(b, views)),
        Expr::Scale(c, inner) => Expr::scale(*c, reuse_views(inner, views)),
        Expr::Transpose(inner) => Expr::transpose(reuse_views(inner, views)),
        Expr::Inverse(inner) => Expr::inverse(reuse_views(inner, views)),
    }
}

/// The factored delta reduced to an already-bound pair, in either
/// orientation (`a b'` equals the registered `u v'` or `v u'`).
fn existing_pair(fd: &FactoredDelta, env: &DeltaEnv) -> Option<(String, String)> {
    if fd.u_blocks.len() != 1 {
        return None;
    }
    if let (Expr::Var(a), Expr::Var(b)) = (&fd.u_blocks[0], &fd.v_blocks[0]) {
        for e in env.entries() {
            if let DeltaKind::Pair { u_name, v_name, .. } = &e.kind {
                let straight = u_name == a && v_name == b;
                let flipped = v_name == a && u_name == b;
                if straight || flipped {
                    return Some((a.clone(), b.clone()));
                }
            }
        }
    }
    None
}

/// Compiles one trigger per dynamic input for rank-`rank` updates.
pub fn compile(
    program: &Program,
    dims: &BTreeMap<String, usize>,
    dynamic_inputs: &[String],
    rank: usize,
) -> Result<TriggerSet> {
    if rank == 0 {
        return Err(Error::config("update rank must be at least 1".to_string()));
    }
    if dynamic_inputs.is_empty() {
        return Err(Error::config(
            "at least one dynamic input is required".to_string(),
        ));
    }
    let shapes = program.shape_check(dims)?;
    let input_names = program.input_names();
    let mut seen = BTreeSet::new();
    for d in dynamic_inputs {
        if !input_names.contains(d) {
            return Err(Error::config(format!(
                "dynamic input `{d}` is not declared as an input"
            )));
        }
        if !seen.insert(d.clone()) {
            return Err(Error::config(format!("dynamic input `{d}` listed twice")));
        }
        let (r, c) = shapes[d];
        if rank > r.min(c) {
            return Err(Error::config(format!(
                "update rank {rank} exceeds the min dimension of `{d}` ({r}x{c})"
            )));
        }
    }
    let mut triggers = Vec::new();
    for d in dynamic_inputs {
        triggers.push(compile_trigger(program, &shapes, d, rank)?);
    }
    Ok(TriggerSet {
        program: program.clone(),
        shapes,
        triggers,
        auxiliary: Vec::new(),
    })
}

fn compile_trigger(
    program: &Program,
    shapes: &ShapeMap,
    input: &str,
    rank: usize,
) -> Result<TriggerProgram> {
    let mut names = NameGen::new(shapes.keys().cloned().collect());
    let (u_base, v_base) = if rank == 1 { ("u", "v") } else { ("U", "V") };
    let u_param = names.claim_pref(&[u_base.to_string(), format!("{u_base}_{input}")]);
    let v_param = names.claim_pref(&[v_base.to_string(), format!("{v_base}_{input}")]);

    let mut local_shapes = shapes.clone();
    let (in_r, in_c) = shapes[input];
    local_shapes.insert(u_param.clone(), (in_r, rank));
    local_shapes.insert(v_param.clone(), (in_c, rank));

    // First statement defining each expression wins for view reuse.
    let mut views: BTreeMap<String, String> = BTreeMap::new();
    for st in &program.statements {
        views
            .entry(structural_key(&canonicalize(&st.expr)))
            .or_insert_with(|| st.target.clone());
    }

    let mut env = DeltaEnv::new();
    env.push_pair(input, &u_param, &v_param, rank);
    let mut steps: Vec<TriggerStep> = Vec::new();
    let mut updates = vec![UpdateStep::Outer {
        target: input.to_string(),
        u_name: u_param.clone(),
        v_name: v_param.clone(),
    }];

    for st in &program.statements {
        let Some(d) = derive_delta(&st.expr, &env) else {
            continue;
        };
        let t = st.target.clone();
        let (tr, tc) = shapes[&t];

        // Maintained inverse with a thin argument delta: Sherman-Morrison.
        if let Expr::Inverse(inner) = &st.expr {
            let d_arg = derive_delta(inner, &env)
                .ok_or_else(|| Error::internal(format!("inverse `{t}` affected without an argument delta")))?;
            if is_factorable(&d_arg, &env) {
                let fd = factor_delta(&d_arg, &env)?;
                let w = fd.width();
                if 2 * w <= tr.min(tc) {
                    let (u_name, v_name) = match existing_pair(&fd, &env) {
                        Some(pair) => pair,
                        None => emit_blocks(&mut steps, &mut names, &mut local_shapes, &t, &fd, (tr, tc))?,
                    };
                    let r_name = names.claim(&format!("R_{t}"));
                    let s_name = names.claim(&format!("S_{t}"));
                    steps.push(TriggerStep::ShermanMorrison {
                        target: t.clone(),
                        u_name,
                        v_name,
                        r_name: r_name.clone(),
                        s_name: s_name.clone(),
                    });
                    local_shapes.insert(r_name.clone(), (tr, w));
                    local_shapes.insert(s_name.clone(), (tc, w));
                    env.push_pair(&t, &r_name, &s_name, w);
                    updates.push(UpdateStep::Outer {
                        target: t,
                        u_name: r_name,
                        v_name: s_name,
                    });
                    continue;
                }
            }
        }

        // Thin factored delta: block pair propagation.
        if is_factorable(&d, &env) {
            let fd = factor_delta(&d, &env)?;
            let w = fd.width();
            if 2 * w <= tr.max(tc) {
                let (u_name, v_name) = match existing_pair(&fd, &env) {
                    Some(pair) => pair,
                    None => emit_blocks(&mut steps, &mut names, &mut local_shapes, &t, &fd, (tr, tc))?,
                };
                env.push_pair(&t, &u_name, &v_name, w);
                updates.push(UpdateStep::Outer {
                    target: t,
                    u_name,
                    v_name,
                });
                continue;
            }
        }

        // Hybrid fallback: one full-matrix delta, inverses recomputed here.
        let d_name = names.claim(&format!("D_{t}"));
        let d_expr = reuse_views(&d, &views);
        steps.push(TriggerStep::Assign {
            name: d_name.clone(),
            expr: d_expr,
        });
        local_shapes.insert(d_name.clone(), (tr, tc));
        env.push(
            &t,
            DeltaKind::Full {
                delta_name: d_name.clone(),
            },
        );
        updates.push(UpdateStep::Full {
            target: t,
            delta_name: d_name,
        });
    }

    Ok(TriggerProgram {
        trigger_on: input.to_string(),
        u_param,
        v_param,
        rank,
        steps,
        updates,
        shapes: local_shapes,
    })
}

/// Emits the `U_t`/`V_t` block assignments for a factored delta, checking
/// block shapes against the target.
fn emit_blocks(
    steps: &mut Vec<TriggerStep>,
    names: &mut NameGen,
    local_shapes: &mut ShapeMap,
    target: &str,
    fd: &FactoredDelta,
    (tr, tc): (usize, usize),
) -> Result<(String, String)> {
    for (i, (b, wi)) in fd.u_blocks.iter().zip(&fd.widths).enumerate() {
        let s = expr_shape(b, local_shapes)?;
        if s != (tr, *wi) {
            return Err(Error::internal(format!(
                "u-block {i} of `{target}` has shape {}x{}, expected {}x{}",
                s.0, s.1, tr, wi
            )));
        }
    }
    for (i, (b, wi)) in fd.v_blocks.iter().zip(&fd.widths).enumerate() {
        let s = expr_shape(b, local_shapes)?;
        if s != (tc, *wi) {
            return Err(Error::internal(format!(
                "v-block {i} of `{target}` has shape {}x{}, expected {}x{}",
                s.0, s.1, tc, wi
            )));
        }
    }
    let w = fd.width();
    let u_name = names.claim(&format!("U_{target}"));
    let v_name = names.claim(&format!("V_{target}"));
    steps.push(TriggerStep::AssignBlocks {
        name: u_name.clone(),
        blocks: fd.u_blocks.clone(),
    });
    steps.push(TriggerStep::AssignBlocks {
        name: v_name.clone(),
        blocks: fd.v_blocks.clone(),
    });
    local_shapes.insert(u_name.clone(), (tr, w));
    local_shapes.insert(v_name.clone(), (tc, w));
    Ok((u_name, v_name))
}

/// Textual trigger listing:
///
/// ```text
/// ON UPDATE A BY (u,v):
///   U_B := [u | A*u + u*(v'*u)];
///   ...
///   A += u*v';
/// ```
pub fn dump_trigger(t: &TriggerProgram) -> String {
    let mut out = format!("ON UPDATE {} BY ({},{}):\n", t.trigger_on, t.u_param, t.v_param);
    for step in &t.steps {
        match step {
            TriggerStep::AssignBlocks { name, blocks } => {
                let joined = blocks.iter().map(print_expr).collect::<Vec<_>>().join(" | ");
                out.push_str(&format!("  {name} := [{joined}];\n"));
            }
            TriggerStep::Assign { name, expr } => {
                out.push_str(&format!("  {name} := {};\n", print_expr(expr)));
            }
            TriggerStep::ShermanMorrison {
                target,
                u_name,
                v_name,
                r_name,
                s_name,
            } => {
                out.push_str(&format!(
                    "  ({r_name}, {s_name}) := sherman_morrison({target}, {u_name}, {v_name});\n"
                ));
            }
        }
    }
    for up in &t.updates {
        match up {
            UpdateStep::Outer {
                target,
                u_name,
                v_name,
            } => out.push_str(&format!("  {target} += {u_name}*{v_name}';\n")),
            UpdateStep::Full { target, delta_name } => {
                out.push_str(&format!("  {target} += {delta_name};\n"))
            }
        }
    }
    out
}

pub fn dump_trigger_set(ts: &TriggerSet) -> String {
    ts.triggers
        .iter()
        .map(dump_trigger)
        .collect::<Vec<_>>()
        .join("\n")
}
