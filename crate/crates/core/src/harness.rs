//! Run and benchmark drivers over the builtin workloads and compiled
//! programs, emitting the ledger CSV.
//!
//! `run_builtin` and `run_program` are the correctness artifacts: one CSV row
//! per update with exact operation counts and, when verification is on, the
//! absolute error against a from-scratch oracle. Their `wall_ns` column is
//! always 0 so that identical configurations produce byte-identical files.
//! `bench_cell` is the timing artifact: it repeats the update loop over
//! fresh engines, reports mean and standard deviation of per-update wall
//! time, and pairs every cell with its re-evaluation twin for the speedup
//! column. Operation counts never vary across repeat runs; wall time does,
//! which is exactly why the two artifacts are separate.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use crate::analytics::{
    reevaluate_general, reevaluate_powers, reevaluate_sums, zipf_batch_stream, GeneralEngine,
    IterativeModel, OlsEngine, PowersEngine, Strategy, SumsEngine,
};
use crate::compiler::{apply_trigger, compile, TriggerSet};
use crate::delta::RankKUpdate;
use crate::error::{Error, Result};
use crate::eval::{eval_expr, Bindings};
use crate::fixtures::{
    rng_from_seed, scale_to_spectral_radius, scale_to_unit_frobenius, seeded_matrix, DEFAULT_SEED,
};
use crate::io::read_update_stream_file;
use crate::ir::Program;
use crate::ledger::CostLedger;
use crate::matrix::{add_assign, mat_inverse, mat_mul, max_abs_diff, Matrix};
use crate::Mat;

pub const CSV_HEADER: &str =
    "workload,model,strategy,n,p,k,s,update_index,mul_adds,adds,wall_ns,max_abs_error_vs_oracle";

pub const BENCH_HEADER: &str = "workload,model,strategy,n,p,k,s,runs,updates,\
mul_adds_per_update,adds_per_update,mean_wall_ns,stddev_wall_ns,speedup_vs_reeval";

/// One per-update ledger record.
#[derive(Debug, Clone)]
pub struct LedgerRow {
    pub workload: String,
    pub model: String,
    pub strategy: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub s: usize,
    pub update_index: usize,
    pub mul_adds: u64,
    pub adds: u64,
    pub wall_ns: u64,
    pub max_abs_error_vs_oracle: Option<f64>,
}

impl LedgerRow {
    pub fn to_csv(&self) -> String {
        let err = match self.max_abs_error_vs_oracle {
            Some(e) => format!("{e:e}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.workload,
            self.model,
            self.strategy,
            self.n,
            self.p,
            self.k,
            self.s,
            self.update_index,
            self.mul_adds,
            self.adds,
            self.wall_ns,
            err
        )
    }
}

/// Header plus one line per row, trailing newline included.
pub fn rows_to_csv(rows: &[LedgerRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinWorkload {
    Powers,
    Sums,
    General,
    Ols,
}

impl BuiltinWorkload {
    pub fn label(&self) -> &'static str {
        match self {
            BuiltinWorkload::Powers => "powers",
            BuiltinWorkload::Sums => "sums",
            BuiltinWorkload::General => "general",
            BuiltinWorkload::Ols => "ols",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "powers" => Ok(BuiltinWorkload::Powers),
            "sums" => Ok(BuiltinWorkload::Sums),
            "general" => Ok(BuiltinWorkload::General),
            "ols" => Ok(BuiltinWorkload::Ols),
            other => Err(Error::config(format!(
                "unknown workload `{other}`; builtins are powers, sums, general, ols"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum StreamSource {
    File(PathBuf),
    /// Zipf-batched updates: `count` batches of `rank` draws each.
    Generated {
        count: usize,
        rank: usize,
        zipf: f64,
        seed: Option<u64>,
    },
    /// Pre-built updates, used by tests and the library API.
    Direct(Vec<RankKUpdate<f64>>),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub workload: BuiltinWorkload,
    pub model: IterativeModel,
    pub strategy: Strategy,
    pub n: usize,
    /// Row count of the OLS design matrix; unused elsewhere.
    pub m: usize,
    pub p: usize,
    pub k: usize,
    pub source: StreamSource,
    /// None applies the default rule: verify when n <= 256.
    pub verify: Option<bool>,
    pub seed: u64,
}

impl RunConfig {
    pub fn builtin(workload: BuiltinWorkload, n: usize, k: usize) -> Self {
        RunConfig {
            workload,
            model: IterativeModel::Linear,
            strategy: Strategy::Incremental,
            n,
            m: 2 * n,
            p: 1,
            k,
            source: StreamSource::Generated {
                count: 10,
                rank: 1,
                zipf: 1.0,
                seed: None,
            },
            verify: None,
            seed: DEFAULT_SEED,
        }
    }

    pub fn verify_on(&self) -> bool {
        self.verify.unwrap_or(self.n <= 256)
    }
}

/// Outcome of a run: rows for every completed update, plus the failing
/// update index when the stream aborted (singularity, bad record shape).
/// Rows before the failure are always preserved.
#[derive(Debug)]
pub struct RunReport {
    pub rows: Vec<LedgerRow>,
    pub failure: Option<(usize, Error)>,
    pub final_view: Option<Mat>,
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

enum Driver {
    Powers(PowersEngine<f64>),
    Sums(SumsEngine<f64>),
    General(GeneralEngine<f64>),
    Ols(OlsEngine<f64>),
}

impl Driver {
    fn apply(&mut self, upd: &RankKUpdate<f64>, ledger: &mut CostLedger) -> Result<()> {
        match self {
            Driver::Powers(e) => e.apply_update(upd, ledger).map(|_| ()),
            Driver::Sums(e) => e.apply_update(upd, ledger).map(|_| ()),
            Driver::General(e) => e.apply_update(upd, ledger).map(|_| ()),
            Driver::Ols(e) => e.apply_update(upd, ledger).map(|_| ()),
        }
    }

    fn current(&self) -> &Mat {
        match self {
            Driver::Powers(e) => e.current(),
            Driver::Sums(e) => e.current(),
            Driver::General(e) => e.current(),
            Driver::Ols(e) => e.current(),
        }
    }
}

/// Inputs mirrored densely for the verification oracle.
struct OracleState {
    primary: Mat,
    b: Option<Mat>,
    t0: Option<Mat>,
    y: Option<Mat>,
}

impl OracleState {
    fn error_after(
        &mut self,
        cfg: &RunConfig,
        upd: &RankKUpdate<f64>,
        current: &Mat,
    ) -> Result<f64> {
        let scratch = &mut CostLedger::new();
        let delta = upd.delta_matrix(scratch)?;
        add_assign(&mut self.primary, &delta, scratch)?;
        let view = match cfg.workload {
            BuiltinWorkload::Powers => {
                reevaluate_powers(&self.primary, cfg.k, cfg.model, scratch)?
            }
            BuiltinWorkload::Sums => reevaluate_sums(&self.primary, cfg.k, cfg.model, scratch)?,
            BuiltinWorkload::General => reevaluate_general(
                &self.primary,
                self.b.as_ref().unwrap(),
                self.t0.as_ref().unwrap(),
                cfg.k,
                cfg.model,
                scratch,
            )?,
            BuiltinWorkload::Ols => {
                let x = &self.primary;
                let z = mat_mul(&x.t(), x, scratch)?;
                let w = mat_inverse(&z, scratch)?;
                let g = mat_mul(&x.t(), self.y.as_ref().unwrap(), scratch)?;
                mat_mul(&w, &g, scratch)?
            }
        };
        Ok(max_abs_diff(current, &view))
    }
}

fn seeded_inputs(cfg: &RunConfig) -> (Mat, Option<Mat>, Option<Mat>, Option<Mat>) {
    let mut rng = rng_from_seed(cfg.seed);
    match cfg.workload {
        BuiltinWorkload::Powers | BuiltinWorkload::Sums => {
            let a = scale_to_unit_frobenius(&seeded_matrix::<f64>(cfg.n, cfg.n, &mut rng));
            (a, None, None, None)
        }
        BuiltinWorkload::General => {
            let a = scale_to_spectral_radius(
                &seeded_matrix::<f64>(cfg.n, cfg.n, &mut rng),
                0.9,
                cfg.seed,
            );
            let b = seeded_matrix::<f64>(cfg.n, cfg.p, &mut rng);
            let t0 = seeded_matrix::<f64>(cfg.n, cfg.p, &mut rng);
            (a, Some(b), Some(t0), None)
        }
        BuiltinWorkload::Ols => {
            let x = seeded_matrix::<f64>(cfg.m, cfg.n, &mut rng);
            let y = seeded_matrix::<f64>(cfg.m, cfg.p, &mut rng);
            (x, None, None, Some(y))
        }
    }
}

fn load_updates(cfg: &RunConfig) -> Result<Vec<RankKUpdate<f64>>> {
    match &cfg.source {
        StreamSource::File(path) => read_update_stream_file(path),
        StreamSource::Direct(list) => Ok(list.clone()),
        StreamSource::Generated {
            count,
            rank,
            zipf,
            seed,
        } => {
            let (rows, cols, name) = match cfg.workload {
                BuiltinWorkload::Ols => (cfg.m, cfg.n, "X"),
                _ => (cfg.n, cfg.n, "A"),
            };
            let mut stream = zipf_batch_stream(rows, *rank, *zipf, seed.unwrap_or(cfg.seed))?
                .with_name(name)
                .with_value_len(cols);
            Ok((0..*count).map(|_| stream.next_batch::<f64>()).collect())
        }
    }
}

fn validate_config(cfg: &RunConfig) -> Result<()> {
    if cfg.n == 0 {
        return Err(Error::config("n must be at least 1"));
    }
    match cfg.workload {
        BuiltinWorkload::Ols => {
            if cfg.m == 0 || cfg.p == 0 {
                return Err(Error::config("ols needs m >= 1 and p >= 1"));
            }
        }
        BuiltinWorkload::General => {
            if cfg.p == 0 {
                return Err(Error::config("general form needs p >= 1"));
            }
        }
        _ => {}
    }
    Ok(())
}

fn build_driver(
    cfg: &RunConfig,
    inputs: &(Mat, Option<Mat>, Option<Mat>, Option<Mat>),
    ledger: &mut CostLedger,
) -> Result<Driver> {
    let (primary, b, t0, y) = inputs;
    Ok(match cfg.workload {
        BuiltinWorkload::Powers => Driver::Powers(PowersEngine::new(
            primary,
            cfg.k,
            cfg.model,
            cfg.strategy,
            ledger,
        )?),
        BuiltinWorkload::Sums => Driver::Sums(SumsEngine::new(
            primary,
            cfg.k,
            cfg.model,
            cfg.strategy,
            ledger,
        )?),
        BuiltinWorkload::General => Driver::General(GeneralEngine::new(
            primary,
            b.as_ref().unwrap(),
            t0.as_ref().unwrap(),
            cfg.k,
            cfg.model,
            cfg.strategy,
            ledger,
        )?),
        BuiltinWorkload::Ols => Driver::Ols(OlsEngine::new(
            primary,
            y.as_ref().unwrap(),
            cfg.strategy,
            ledger,
        )?),
    })
}

fn row_meta(cfg: &RunConfig) -> (String, String, usize, usize) {
    let (model, s, k) = match cfg.workload {
        BuiltinWorkload::Ols => ("-".to_string(), 0, 0),
        _ => (
            cfg.model.label().to_string(),
            cfg.model.skip_stride().unwrap_or(0),
            cfg.k,
        ),
    };
    (model, cfg.strategy.label().to_string(), s, k)
}

/// Runs one builtin workload over its update stream. Configuration and
/// stream-loading problems fail the call; a failing update mid-stream ends
/// the run early with its index recorded and earlier rows intact.
pub fn run_builtin(cfg: &RunConfig) -> Result<RunReport> {
    validate_config(cfg)?;
    let updates = load_updates(cfg)?;
    let inputs = seeded_inputs(cfg);
    let mut ledger = CostLedger::new();
    let mut driver = build_driver(cfg, &inputs, &mut ledger)?;
    let verify = cfg.verify_on();
    let mut oracle = verify.then(|| OracleState {
        primary: inputs.0.clone(),
        b: inputs.1.clone(),
        t0: inputs.2.clone(),
        y: inputs.3.clone(),
    });

    let (model, strategy, s, k) = row_meta(cfg);
    let p = match cfg.workload {
        BuiltinWorkload::Powers | BuiltinWorkload::Sums => 0,
        _ => cfg.p,
    };
    let mut rows = Vec::with_capacity(updates.len());
    for (i, upd) in updates.iter().enumerate() {
        let before = ledger.totals();
        if let Err(e) = driver.apply(upd, &mut ledger) {
            return Ok(RunReport {
                rows,
                failure: Some((i, e)),
                final_view: None,
            });
        }
        let used = ledger.totals() - before;
        let err = match &mut oracle {
            Some(o) => Some(o.error_after(cfg, upd, driver.current())?),
            None => None,
        };
        rows.push(LedgerRow {
            workload: cfg.workload.label().to_string(),
            model: model.clone(),
            strategy: strategy.clone(),
            n: cfg.n,
            p,
            k,
            s,
            update_index: i,
            mul_adds: used.mul_adds,
            adds: used.adds,
            wall_ns: 0,
            max_abs_error_vs_oracle: err,
        });
    }
    Ok(RunReport {
        rows,
        failure: None,
        final_view: Some(driver.current().clone()),
    })
}

/// One benchmark cell: mean and standard deviation of per-update wall time
/// over `runs` repetitions, exact per-update operation counts, and the
/// speedup against the same cell under re-evaluation.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub workload: String,
    pub model: String,
    pub strategy: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub s: usize,
    pub runs: usize,
    pub updates: usize,
    pub mul_adds_per_update: u64,
    pub adds_per_update: u64,
    pub mean_wall_ns: f64,
    pub stddev_wall_ns: f64,
    pub speedup_vs_reeval: f64,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.0},{:.0},{:.3}",
            self.workload,
            self.model,
            self.strategy,
            self.n,
            self.p,
            self.k,
            self.s,
            self.runs,
            self.updates,
            self.mul_adds_per_update,
            self.adds_per_update,
            self.mean_wall_ns,
            self.stddev_wall_ns,
            self.speedup_vs_reeval
        )
    }
}

pub fn bench_rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Wall time per update and total non-init operation counts for one pass.
fn timed_pass(cfg: &RunConfig) -> Result<(f64, u64, u64, usize)> {
    let updates = load_updates(cfg)?;
    let inputs = seeded_inputs(cfg);
    let mut ledger = CostLedger::new();
    let mut driver = build_driver(cfg, &inputs, &mut ledger)?;
    let start = Instant::now();
    for upd in &updates {
        driver.apply(upd, &mut ledger)?;
    }
    let elapsed = start.elapsed().as_nanos() as f64;
    let counted = ledger.counts_where(|l| l != "init");
    let count = updates.len().max(1);
    Ok((
        elapsed / count as f64,
        counted.mul_adds / count as u64,
        counted.adds / count as u64,
        updates.len(),
    ))
}

pub fn bench_cell(cfg: &RunConfig, runs: usize) -> Result<BenchRow> {
    validate_config(cfg)?;
    let runs = runs.max(1);
    let mut cfg = cfg.clone();
    // Benchmarks time the engine, not the oracle.
    cfg.verify = Some(false);
    let mut walls = Vec::with_capacity(runs);
    let mut counts = (0u64, 0u64, 0usize);
    for r in 0..runs {
        let (wall, mul_adds, adds, updates) = timed_pass(&cfg)?;
        walls.push(wall);
        if r == 0 {
            counts = (mul_adds, adds, updates);
        } else {
            debug_assert_eq!(counts.0, mul_adds, "operation counts must not vary across runs");
        }
    }
    let mean = walls.iter().sum::<f64>() / runs as f64;
    let stddev = if runs > 1 {
        (walls.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / (runs - 1) as f64).sqrt()
    } else {
        0.0
    };
    let speedup = if cfg.strategy == Strategy::Reevaluation {
        1.0
    } else {
        let mut reeval_cfg = cfg.clone();
        reeval_cfg.strategy = Strategy::Reevaluation;
        let mut reeval_walls = Vec::with_capacity(runs);
        for _ in 0..runs {
            reeval_walls.push(timed_pass(&reeval_cfg)?.0);
        }
        (reeval_walls.iter().sum::<f64>() / runs as f64) / mean
    };
    let (model, strategy, s, k) = row_meta(&cfg);
    Ok(BenchRow {
        workload: cfg.workload.label().to_string(),
        model,
        strategy,
        n: cfg.n,
        p: match cfg.workload {
            BuiltinWorkload::Powers | BuiltinWorkload::Sums => 0,
            _ => cfg.p,
        },
        k,
        s,
        runs,
        updates: counts.2,
        mul_adds_per_update: counts.0,
        adds_per_update: counts.1,
        mean_wall_ns: mean,
        stddev_wall_ns: stddev,
        speedup_vs_reeval: speedup,
    })
}

/// Program-based run configuration: maintain a compiled program's views
/// under an update stream to one dynamic input.
#[derive(Debug, Clone)]
pub struct ProgramRunConfig {
    pub source: String,
    /// Workload column value in the CSV.
    pub label: String,
    pub dims: BTreeMap<String, usize>,
    /// Defaults to the first declared input (alphabetically).
    pub dynamic_input: Option<String>,
    /// Reevaluation recomputes every statement per update; Incremental fires
    /// the compiled trigger. Hybrid is not a program-level strategy.
    pub strategy: Strategy,
    /// Compile-time update rank; generated streams draw this many rows.
    pub rank: usize,
    pub source_updates: StreamSource,
    pub verify: Option<bool>,
    pub seed: u64,
}

/// Seeded initial bindings for a program's inputs. Square inputs become
/// I + 0.1 R so maintained inverses exist; others are 0.5-scaled uniform.
fn seeded_program_inputs(
    program: &Program,
    shapes: &BTreeMap<String, (usize, usize)>,
    seed: u64,
) -> Bindings<f64> {
    let mut rng = rng_from_seed(seed);
    let mut state = Bindings::new();
    for name in program.input_names() {
        let (r, c) = shapes[&name];
        let raw = seeded_matrix::<f64>(r, c, &mut rng);
        let m = if r == c {
            Matrix::from_fn(r, c, |i, j| {
                let base = if i == j { 1.0 } else { 0.0 };
                base + 0.1 * raw.get(i, j)
            })
        } else {
            raw.map(|x| 0.5 * x)
        };
        state.insert(name, m);
    }
    state
}

fn eval_program(
    program: &Program,
    state: &mut Bindings<f64>,
    ledger: &mut CostLedger,
) -> Result<()> {
    for st in &program.statements {
        let val = eval_expr(&st.expr, state, ledger)?;
        state.insert(st.target.clone(), val);
    }
    Ok(())
}

pub fn run_program(cfg: &ProgramRunConfig) -> Result<RunReport> {
    if cfg.strategy == Strategy::Hybrid {
        return Err(Error::config(
            "program runs use Reevaluation or Incremental; unfactorable deltas fall back per statement automatically",
        ));
    }
    let program = Program::parse(&cfg.source)?;
    let shapes = program.shape_check(&cfg.dims)?;
    let dynamic = match &cfg.dynamic_input {
        Some(d) => d.clone(),
        None => program
            .input_names()
            .into_iter()
            .next()
            .ok_or_else(|| Error::config("program declares no inputs"))?,
    };
    let last_target = program
        .statements
        .last()
        .map(|s| s.target.clone())
        .ok_or_else(|| Error::config("program has no statements"))?;

    let triggers: Option<TriggerSet> = match cfg.strategy {
        Strategy::Incremental => Some(compile(
            &program,
            &cfg.dims,
            std::slice::from_ref(&dynamic),
            cfg.rank,
        )?),
        _ => None,
    };

    let updates = {
        let (rows, cols) = shapes[&dynamic];
        match &cfg.source_updates {
            StreamSource::File(path) => read_update_stream_file(path)?,
            StreamSource::Direct(list) => list.clone(),
            StreamSource::Generated {
                count,
                rank,
                zipf,
                seed,
            } => {
                let mut stream = zipf_batch_stream(rows, *rank, *zipf, seed.unwrap_or(cfg.seed))?
                    .with_name(dynamic.clone())
                    .with_value_len(cols);
                (0..*count).map(|_| stream.next_batch::<f64>()).collect()
            }
        }
    };

    let mut ledger = CostLedger::new();
    let mut state = seeded_program_inputs(&program, &shapes, cfg.seed);
    ledger.set_scope("init");
    eval_program(&program, &mut state, &mut ledger)?;
    ledger.set_scope("");

    let (rows_dim, cols_dim) = shapes[&dynamic];
    let n_col = *cfg.dims.get("n").unwrap_or(&rows_dim);
    let p_col = *cfg.dims.get("p").unwrap_or(&0);
    let verify = cfg.verify.unwrap_or(n_col <= 256);

    let mut rows = Vec::with_capacity(updates.len());
    for (i, upd) in updates.iter().enumerate() {
        let before = ledger.totals();
        let mut step = || -> Result<()> {
            match &triggers {
                Some(ts) => {
                    let t = ts
                        .trigger_for(&dynamic)
                        .ok_or_else(|| Error::internal("missing compiled trigger"))?;
                    apply_trigger(t, &mut state, upd, &mut ledger)
                }
                None => {
                    if upd.name != dynamic {
                        return Err(Error::config(format!(
                            "update {i} targets `{}` but the dynamic input is `{dynamic}`",
                            upd.name
                        )));
                    }
                    if upd.target_shape() != (rows_dim, cols_dim) {
                        return Err(Error::data(format!(
                            "update {i} implies {:?}, input is {}x{}",
                            upd.target_shape(),
                            rows_dim,
                            cols_dim
                        )));
                    }
                    ledger.set_scope("delta");
                    let delta = upd.delta_matrix(&mut ledger)?;
                    ledger.set_scope("apply");
                    add_assign(state.get_mut(&dynamic).unwrap(), &delta, &mut ledger)?;
                    ledger.set_scope("reeval");
                    let r = eval_program(&program, &mut state, &mut ledger);
                    ledger.set_scope("");
                    r
                }
            }
        };
        if let Err(e) = step() {
            return Ok(RunReport {
                rows,
                failure: Some((i, e)),
                final_view: None,
            });
        }
        let used = ledger.totals() - before;
        let err = if verify {
            let scratch = &mut CostLedger::new();
            let mut fresh: Bindings<f64> = program
                .input_names()
                .into_iter()
                .map(|name| (name.clone(), state[&name].clone()))
                .collect();
            eval_program(&program, &mut fresh, scratch)?;
            Some(max_abs_diff(&state[&last_target], &fresh[&last_target]))
        } else {
            None
        };
        rows.push(LedgerRow {
            workload: cfg.label.clone(),
            model: "-".to_string(),
            strategy: cfg.strategy.label().to_string(),
            n: n_col,
            p: p_col,
            k: cfg.rank,
            s: 0,
            update_index: i,
            mul_adds: used.mul_adds,
            adds: used.adds,
            wall_ns: 0,
            max_abs_error_vs_oracle: err,
        });
    }
    Ok(RunReport {
        rows,
        failure: None,
        final_view: Some(state[&last_target].clone()),
    })
}
