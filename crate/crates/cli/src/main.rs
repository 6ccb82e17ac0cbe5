//! `ivla`: compile update triggers, run update streams, benchmark
//! strategies, and query the cost predictor.
//!
//! Exit codes: 0 ok, 1 internal error, 2 configuration or parse error,
//! 3 data error, 4 numerical singularity.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use ivla_core::analytics::{predict_cost, IterativeModel, Strategy, Workload};
use ivla_core::compiler::{compile, dump_trigger_set};
use ivla_core::error::{Error, Result};
use ivla_core::fixtures::DEFAULT_SEED;
use ivla_core::harness::{
    bench_cell, bench_rows_to_csv, run_builtin, run_program, BuiltinWorkload, ProgramRunConfig,
    RunConfig, StreamSource,
};
use ivla_core::ir::Program;

#[derive(Parser)]
#[command(
    name = "ivla",
    version,
    about = "Incremental view maintenance for linear algebra programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a program's update triggers and print the listing.
    Compile(CompileArgs),
    /// Run an update stream, emitting one ledger CSV row per update.
    Run(RunArgs),
    /// Time strategy cells over repeated runs and report speedups.
    Bench(BenchArgs),
    /// Predicted per-update cost for a workload cell.
    Predict(PredictArgs),
}

#[derive(Args)]
struct CompileArgs {
    /// Program file.
    program: PathBuf,
    /// Dimension bindings, e.g. n=64,m=128.
    #[arg(long, default_value = "")]
    dims: String,
    /// Comma-separated dynamic inputs (default: every declared input).
    #[arg(long)]
    dynamic: Option<String>,
    /// Update rank the triggers are specialized for.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Builtin workload (powers | sums | general | ols) or a program file.
    target: String,
    /// Dimension bindings: n always, m for ols, p for general/ols.
    #[arg(long, default_value = "")]
    dims: String,
    /// Iteration count.
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Skip-model stride.
    #[arg(long)]
    s: Option<usize>,
    /// Iterative model: lin | exp | skip.
    #[arg(long, default_value = "lin")]
    model: String,
    /// Evaluation strategy: reeval | incr | hybrid.
    #[arg(long, default_value = "incr")]
    strategy: String,
    /// Update stream file.
    #[arg(long, conflicts_with = "gen_spec")]
    stream: Option<PathBuf>,
    /// Generated stream: count=..,rank=..,zipf=..,seed=..
    #[arg(long = "gen")]
    gen_spec: Option<String>,
    /// Force per-update oracle verification (default: on when n <= 256).
    #[arg(long)]
    verify: bool,
    /// Write the CSV to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dynamic input for program targets (default: first declared).
    #[arg(long)]
    dynamic: Option<String>,
    /// Compiled update rank for program targets.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Seed override; IVLA_SEED is consulted next, then 42.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Builtin workload: powers | sums | general | ols.
    workload: String,
    #[arg(long, default_value = "")]
    dims: String,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, default_value = "lin")]
    model: String,
    #[arg(long, default_value = "incr")]
    strategy: String,
    #[arg(long, conflicts_with = "gen_spec")]
    stream: Option<PathBuf>,
    #[arg(long = "gen")]
    gen_spec: Option<String>,
    /// Repetitions per cell.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Comma-separated n values to sweep (default: the single --dims n).
    #[arg(long)]
    sweep_n: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Workload: powers | sums | general.
    workload: String,
    /// Dimension bindings: n, and p for the general form.
    #[arg(long, default_value = "")]
    dims: String,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, default_value = "lin")]
    model: String,
    #[arg(long, default_value = "incr")]
    strategy: String,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Compile(a) => cmd_compile(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Predict(a) => cmd_predict(a),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::Parse { .. }
        | Error::ShapeCheck { .. }
        | Error::UnboundDim { .. }
        | Error::Redefinition { .. }
        | Error::UndefinedName { .. } => 2,
        Error::Data { .. } | Error::Io(_) | Error::ShapeMismatch { .. } | Error::NonFinite { .. } => 3,
        Error::UpdateSingular { .. } | Error::Singular { .. } => 4,
        Error::Internal { .. } => 1,
    }
}

fn parse_dims(s: &str) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| Error::config(format!("bad dims entry `{part}`, expected name=value")))?;
        let v: usize = val
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad dims value `{}`", val.trim())))?;
        out.insert(key.trim().to_string(), v);
    }
    Ok(out)
}

fn parse_gen(s: &str) -> Result<StreamSource> {
    let (mut count, mut rank, mut zipf, mut seed) = (10usize, 1usize, 1.0f64, None);
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| Error::config(format!("bad gen entry `{part}`, expected name=value")))?;
        let val = val.trim();
        let bad = || Error::config(format!("bad gen value `{val}` for `{}`", key.trim()));
        match key.trim() {
            "count" => count = val.parse().map_err(|_| bad())?,
            "rank" => rank = val.parse().map_err(|_| bad())?,
            "zipf" => zipf = val.parse().map_err(|_| bad())?,
            "seed" => seed = Some(val.parse().map_err(|_| bad())?),
            other => {
                return Err(Error::config(format!(
                    "unknown gen key `{other}`; expected count, rank, zipf, seed"
                )))
            }
        }
    }
    Ok(StreamSource::Generated {
        count,
        rank,
        zipf,
        seed,
    })
}

fn parse_model(model: &str, s: Option<usize>) -> Result<IterativeModel> {
    match model {
        "lin" | "linear" => Ok(IterativeModel::Linear),
        "exp" | "exponential" => Ok(IterativeModel::Exponential),
        "skip" => {
            let s = s.ok_or_else(|| Error::config("the skip model needs --s"))?;
            Ok(IterativeModel::Skip(s))
        }
        other => Err(Error::config(format!(
            "unknown model `{other}`; expected lin, exp, or skip"
        ))),
    }
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    match s {
        "reeval" | "reevaluation" => Ok(Strategy::Reevaluation),
        "incr" | "incremental" => Ok(Strategy::Incremental),
        "hybrid" => Ok(Strategy::Hybrid),
        other => Err(Error::config(format!(
            "unknown strategy `{other}`; expected reeval, incr, or hybrid"
        ))),
    }
}

fn seed_value(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("IVLA_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("IVLA_SEED must be a 64-bit integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn stream_source(stream: &Option<PathBuf>, gen_spec: &Option<String>) -> Result<StreamSource> {
    match (stream, gen_spec) {
        (Some(p), _) => Ok(StreamSource::File(p.clone())),
        (None, Some(g)) => parse_gen(g),
        (None, None) => Ok(StreamSource::Generated {
            count: 10,
            rank: 1,
            zipf: 1.0,
            seed: None,
        }),
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, content).map_err(Error::from),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_compile(args: CompileArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.program)?;
    let program = Program::parse(&text)?;
    let dims = parse_dims(&args.dims)?;
    let dynamic: Vec<String> = match &args.dynamic {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => program.input_names().into_iter().collect(),
    };
    let ts = compile(&program, &dims, &dynamic, args.rank)?;
    emit(&args.out, &dump_trigger_set(&ts))?;
    Ok(0)
}

fn builtin_config(
    workload: BuiltinWorkload,
    dims: &BTreeMap<String, usize>,
    model: IterativeModel,
    strategy: Strategy,
    k: usize,
    source: StreamSource,
    verify: Option<bool>,
    seed: u64,
) -> Result<RunConfig> {
    let n = *dims
        .get("n")
        .ok_or_else(|| Error::config("builtin workloads need --dims n=..."))?;
    Ok(RunConfig {
        workload,
        model,
        strategy,
        n,
        m: dims.get("m").copied().unwrap_or(2 * n),
        p: dims.get("p").copied().unwrap_or(1),
        k,
        source,
        verify,
        seed,
    })
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let seed = seed_value(args.seed)?;
    let dims = parse_dims(&args.dims)?;
    let source = stream_source(&args.stream, &args.gen_spec)?;
    let strategy = parse_strategy(&args.strategy)?;
    let verify = args.verify.then_some(true);

    let report = match BuiltinWorkload::parse(&args.target) {
        Ok(workload) => {
            let model = parse_model(&args.model, args.s)?;
            let cfg = builtin_config(workload, &dims, model, strategy, args.k, source, verify, seed)?;
            run_builtin(&cfg)?
        }
        Err(_) if Path::new(&args.target).is_file() => {
            let text = std::fs::read_to_string(&args.target)?;
            let label = Path::new(&args.target)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "program".to_string());
            run_program(&ProgramRunConfig {
                source: text,
                label,
                dims,
                dynamic_input: args.dynamic.clone(),
                strategy,
                rank: args.rank,
                source_updates: source,
                verify,
                seed,
            })?
        }
        Err(_) => {
            return Err(Error::config(format!(
                "`{}` is neither a builtin workload (powers, sums, general, ols) nor a program file",
                args.target
            )))
        }
    };

    emit(&args.out, &report.to_csv())?;
    if let Some((idx, err)) = report.failure {
        eprintln!("update {idx} failed: {err}");
        return Ok(exit_code(&err));
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let seed = seed_value(args.seed)?;
    let dims = parse_dims(&args.dims)?;
    let workload = BuiltinWorkload::parse(&args.workload)?;
    let model = parse_model(&args.model, args.s)?;
    let strategy = parse_strategy(&args.strategy)?;
    let source = stream_source(&args.stream, &args.gen_spec)?;

    let ns: Vec<usize> = match &args.sweep_n {
        Some(list) => list
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad sweep value `{}`", p.trim())))
            })
            .collect::<Result<_>>()?,
        None => vec![*dims
            .get("n")
            .ok_or_else(|| Error::config("bench needs --dims n=... or --sweep-n"))?],
    };

    let mut rows = Vec::new();
    for n in ns {
        let mut cell_dims = dims.clone();
        cell_dims.insert("n".to_string(), n);
        let cfg = builtin_config(
            workload,
            &cell_dims,
            model,
            strategy,
            args.k,
            source.clone(),
            Some(false),
            seed,
        )?;
        match bench_cell(&cfg, args.runs) {
            Ok(row) => rows.push(row),
            Err(e) => eprintln!("cell n={n}: skipped: {e}"),
        }
    }
    emit(&args.out, &bench_rows_to_csv(&rows))?;
    Ok(0)
}

fn cmd_predict(args: PredictArgs) -> Result<i32> {
    let workload = match args.workload.as_str() {
        "powers" => Workload::Powers,
        "sums" => Workload::Sums,
        "general" => Workload::General,
        other => {
            return Err(Error::config(format!(
                "unknown workload `{other}`; the predictor covers powers, sums, general"
            )))
        }
    };
    let model = parse_model(&args.model, args.s)?;
    let strategy = parse_strategy(&args.strategy)?;
    let dims = parse_dims(&args.dims)?;
    let n = *dims
        .get("n")
        .ok_or_else(|| Error::config("predict needs --dims n=..."))?;
    let p = dims.get("p").copied().unwrap_or(1);
    let pred = predict_cost(workload, model, strategy, n, p, args.k)?;
    let exact = pred
        .exact
        .map(|e| e.to_string())
        .unwrap_or_else(|| "n/a".to_string());
    println!(
        "{}/{}/{} n={} p={} k={} s={} exact={} class={}",
        pred.workload.label(),
        pred.model.label(),
        pred.strategy.label(),
        pred.n,
        pred.p,
        pred.k,
        pred.s,
        exact,
        pred.class
    );
    Ok(0)
}
