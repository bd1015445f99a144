//! Command-line front end: solve benchmark problems, verify traces against
//! the properties they must satisfy, compare linearization errors, and list
//! the zoo.
//!
//! Exit codes: 0 success, 1 check failure or runtime error, 2 usage error.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use prox_convex::driver::trace::trace_to_csv;
use prox_convex::theory::{
    self, check_complexity, check_finite_rejections, check_gradient_inequality, check_model_error,
    check_spectral_bounds, check_sufficient_decrease, fit_qlinear_rate, CheckReport, FStar,
};
use prox_convex::zoo::{describe, ZOO_NAMES};
use prox_convex::{
    export_summary, instantiate, run, run_streamed, write_trace, BenchmarkInstance, ExecMode,
    RunMeta, SolverConfig, Trace,
};

#[derive(Parser)]
#[command(
    name = "proxcvx",
    version,
    about = "Composite-objective solver and verification harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver on a benchmark problem and write the trace.
    Solve(SolveArgs),
    /// Run verification checks on a trace (or on a fresh solve).
    Verify(VerifyArgs),
    /// Compare full/inner/outer linearization errors on a smooth-channel problem.
    Compare(CompareArgs),
    /// List benchmark problems and their tags.
    Zoo,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TraceFormat {
    Jsonl,
    Csv,
}

#[derive(Args)]
struct SolveArgs {
    /// Benchmark problem name (see `zoo`).
    #[arg(long)]
    problem: String,
    /// Instance parameters: inline JSON or `@path/to/file.json`.
    #[arg(long)]
    params: Option<String>,
    /// Solver configuration: inline JSON or `@path`.
    #[arg(long)]
    config: Option<String>,
    /// One or more seeds (comma separated); each seed is an independent run.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,
    /// Trace output path; multiple seeds get a `-s<seed>` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: TraceFormat,
    /// Fan independent (problem, seed) runs across this many workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write a one-row-per-run CSV summary.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    config: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Existing trace to verify; omitted means solve first, then verify.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Comma list of checks; default runs all applicable checks.
    #[arg(long, value_delimiter = ',')]
    check: Vec<String>,
    /// Report output path (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sample count per sampled check.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    params: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

const ALL_CHECKS: [&str; 7] = [
    "sufficient-decrease",
    "spectral",
    "finite-rejections",
    "complexity",
    "model-error",
    "gradient-inequality",
    "qlinear-rate",
];

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Zoo => cmd_zoo(),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let usage = err
                .downcast_ref::<prox_convex::Error>()
                .map(|e| {
                    matches!(
                        e,
                        prox_convex::Error::Config(_)
                            | prox_convex::Error::UnknownProblem(_)
                            | prox_convex::Error::UnknownCheck(_)
                    )
                })
                .unwrap_or(false);
            if usage {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn json_arg(arg: &Option<String>) -> anyhow::Result<Option<serde_json::Value>> {
    let Some(raw) = arg else { return Ok(None) };
    let text = if let Some(path) = raw.strip_prefix('@') {
        std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?
    } else {
        raw.clone()
    };
    Ok(Some(
        serde_json::from_str(&text).context("parsing JSON argument")?,
    ))
}

fn load_config(arg: &Option<String>) -> anyhow::Result<SolverConfig> {
    match json_arg(arg)? {
        None => Ok(SolverConfig::default()),
        Some(v) => {
            let config: SolverConfig = serde_json::from_value(v)
                .map_err(|e| anyhow!(prox_convex::Error::Config(format!("bad config: {e}"))))?;
            config.validate()?;
            Ok(config)
        }
    }
}

fn solve_instance(
    name: &str,
    params: Option<&serde_json::Value>,
    config: &SolverConfig,
    seed: u64,
    stream_to: Option<&Path>,
) -> anyhow::Result<(BenchmarkInstance, Trace)> {
    let instance = instantiate(name, params, seed)?;
    let mut config = config.clone();
    config.rng_seed = seed;
    let meta = RunMeta {
        problem: instance.name.clone(),
        seed,
        f_star: instance.f_star,
    };
    let trace = match stream_to {
        Some(path) => {
            // the trace hits disk step by step, so interrupted runs keep a
            // parseable prefix
            let mut file =
                File::create(path).with_context(|| format!("creating {}", path.display()))?;
            run_streamed(
                &instance.problem,
                &instance.registry,
                &instance.x0,
                &config,
                meta,
                &mut file,
            )?
        }
        None => run(
            &instance.problem,
            &instance.registry,
            &instance.x0,
            &config,
            meta,
        )?,
    };
    Ok((instance, trace))
}

fn out_path_for_seed(base: &Path, seed: u64, multi: bool) -> PathBuf {
    if !multi {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("jsonl");
    base.with_file_name(format!("{stem}-s{seed}.{ext}"))
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<ExitCode> {
    let params = json_arg(&args.params)?;
    let config = load_config(&args.config)?;
    if args.seed.is_empty() {
        return Err(anyhow!(prox_convex::Error::Config(
            "need at least one seed".into()
        )));
    }
    if args.seed.len() > 1 && args.out.is_none() {
        return Err(anyhow!(prox_convex::Error::Config(
            "multiple seeds need --out to derive per-seed file names".into()
        )));
    }

    let multi = args.seed.len() > 1;
    // jsonl file targets are streamed step by step; csv and stdout render
    // from the finished trace
    let run_one = |seed: &u64| -> anyhow::Result<Trace> {
        let stream_to = match (&args.out, args.format) {
            (Some(base), TraceFormat::Jsonl) => Some(out_path_for_seed(base, *seed, multi)),
            _ => None,
        };
        let (_, trace) = solve_instance(
            &args.problem,
            params.as_ref(),
            &config,
            *seed,
            stream_to.as_deref(),
        )?;
        Ok(trace)
    };
    let traces: Vec<Trace> = if args.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .context("building worker pool")?;
        pool.install(|| {
            args.seed
                .par_iter()
                .map(run_one)
                .collect::<anyhow::Result<_>>()
        })?
    } else {
        args.seed
            .iter()
            .map(run_one)
            .collect::<anyhow::Result<_>>()?
    };

    for (seed, trace) in args.seed.iter().zip(&traces) {
        match (&args.out, args.format) {
            (Some(base), TraceFormat::Jsonl) => {
                let path = out_path_for_seed(base, *seed, multi);
                eprintln!(
                    "{}: seed {} -> {} ({} accepted steps, {})",
                    args.problem,
                    seed,
                    path.display(),
                    trace.accepted_steps(),
                    trace.termination.as_str(),
                );
            }
            (Some(base), TraceFormat::Csv) => {
                let path = out_path_for_seed(base, *seed, multi);
                std::fs::write(&path, trace_to_csv(trace))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            (None, TraceFormat::Jsonl) => {
                let mut buf = Vec::new();
                write_trace(trace, &mut buf)?;
                std::io::stdout().write_all(&buf)?;
            }
            (None, TraceFormat::Csv) => {
                std::io::stdout().write_all(trace_to_csv(trace).as_bytes())?;
            }
        }
    }
    if let Some(path) = &args.summary_out {
        std::fs::write(path, export_summary(&traces))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let params = json_arg(&args.params)?;
    let config = load_config(&args.config)?;
    let (instance, trace) = match &args.trace {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let trace = prox_convex::read_trace(BufReader::new(file))?;
            let instance = instantiate(&args.problem, params.as_ref(), trace.meta.seed)?;
            (instance, trace)
        }
        None => solve_instance(&args.problem, params.as_ref(), &config, args.seed, None)?,
    };

    let selected: Vec<String> = if args.check.is_empty() {
        ALL_CHECKS.iter().map(|s| s.to_string()).collect()
    } else {
        args.check.clone()
    };
    for name in &selected {
        if !ALL_CHECKS.contains(&name.as_str()) {
            return Err(anyhow!(prox_convex::Error::UnknownCheck(name.clone())));
        }
    }

    let f_star = instance
        .f_star
        .map(FStar::Analytic)
        .unwrap_or(FStar::BestObserved);
    let problem = Arc::clone(&instance.problem);
    let mode = ExecMode::default();
    let mut reports: Vec<CheckReport> = Vec::new();
    for name in &selected {
        let report = match name.as_str() {
            "sufficient-decrease" => check_sufficient_decrease(&trace),
            "spectral" => check_spectral_bounds(&trace),
            "finite-rejections" => check_finite_rejections(&trace),
            "complexity" => check_complexity(&trace, f_star),
            "model-error" => check_model_error(
                &problem,
                &trace,
                &instance.region,
                12,
                args.samples,
                trace.meta.seed,
                mode,
            )?,
            "gradient-inequality" => check_gradient_inequality(
                &problem,
                &trace,
                &instance.region,
                args.samples.min(100),
                10,
                trace.meta.seed,
                mode,
            )?,
            "qlinear-rate" => fit_qlinear_rate(&trace, f_star).1,
            _ => unreachable!(),
        };
        reports.push(report);
    }

    let rendered = serde_json::to_string_pretty(&reports)?;
    match &args.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => println!("{rendered}"),
    }
    for report in &reports {
        eprintln!(
            "{:22} {:?} (max violation {:.3e}, {} samples)",
            report.check, report.verdict, report.max_violation, report.samples
        );
    }
    let failed = reports.iter().any(|r| !r.passed());
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    let params = json_arg(&args.params)?;
    let instance = instantiate(&args.problem, params.as_ref(), args.seed)?;
    let samples: Vec<nalgebra::DVector<f64>> = (0..args.samples)
        .map(|i| {
            let mut rng = prox_convex::sampling::rng_for(args.seed, i as u64);
            instance.region.sample(&mut rng)
        })
        .collect();
    let comparison = theory::compare_linearizations(
        &instance.problem,
        &instance.x0,
        &samples,
        ExecMode::default(),
    )?;

    let mut csv = String::from("step_norm,e_all,e_in,e_out,bound_all,bound_in,bound_out\n");
    for s in &comparison.samples {
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s.step_norm, s.e_all, s.e_in, s.e_out, s.bound_all, s.bound_in, s.bound_out
        ));
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    eprintln!(
        "{} samples, {} bound violations (max {:.3e})",
        comparison.samples.len(),
        comparison.violations,
        comparison.max_violation
    );
    Ok(if comparison.violations == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_zoo() -> anyhow::Result<ExitCode> {
    for name in ZOO_NAMES {
        let instance = instantiate(name, None, 0)?;
        let tags: Vec<String> = instance
            .tags
            .iter()
            .map(|t| format!("{t:?}").to_lowercase())
            .collect();
        println!("{:10} [{}] {}", name, tags.join(", "), describe(name));
    }
    Ok(ExitCode::SUCCESS)
}
