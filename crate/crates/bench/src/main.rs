use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use issapl_bench::error::{BenchError, Result};
use issapl_bench::experiment::{run_experiment, ExperimentPlan};
use issapl_bench::presets;
use issapl_bench::results::{emit_results, encode, Format, ResultRow};
use issapl_bench::verify::prox_suites;
use issapl_core::datagen::{gen_problem, GenSpec, NoiseKind};
use issapl_core::io::{read_problem, write_problem, write_solution};
use issapl_core::issapl::{solve, SolverConfig};
use issapl_core::model::{group_support, objective, Exponent};

#[derive(Debug, Parser)]
#[command(name = "issapl", version, about = "Group-sparse recovery by iterative support shrinking")]
struct Cli {
    /// Base seed; replaces the seed stored in a plan or preset.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path. Results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Result encoding; defaults to the extension of --out, else CSV.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write zero in the time column so that output depends on the plan and seed only.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic problem and write it as a manifest plus binary files.
    Gen {
        #[arg(long, default_value_t = 256)]
        rows: usize,
        #[arg(long, default_value_t = 1024)]
        cols: usize,
        #[arg(long, default_value_t = 8)]
        group_size: usize,
        #[arg(long, default_value_t = 8)]
        active_groups: usize,
        #[arg(long, default_value_t = 0.001)]
        sigma: f64,
        #[arg(long, default_value = "gaussian", value_parser = parse_noise)]
        noise: NoiseKind,
        #[arg(long, default_value_t = 0.003)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        /// Fidelity exponent, a number at least 1 or `inf`.
        #[arg(long, default_value = "2", value_parser = parse_exponent)]
        r: Exponent,
    },
    /// Solve one problem file; writes the solution and a run record next to it.
    Solve {
        problem: PathBuf,
        /// Solver settings as JSON; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run an experiment plan.
    Experiment {
        plan: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Check every proximal operator against its slow reference.
    Verify {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
    },
    /// Fidelity exponents r = 1, 2, inf under Laplace, Gaussian and uniform noise.
    CompareR {
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Relative errors at M=256, N=1024, n=8, s in {8, 16}.
    Table1 {
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Relative errors and timings over the two problem sizes.
    Table3Self {
        #[command(flatten)]
        report: ReportArgs,
    },
}

fn parse_noise(s: &str) -> std::result::Result<NoiseKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown noise kind {s:?}; expected gaussian, laplace or uniform"))
}

fn parse_exponent(s: &str) -> std::result::Result<Exponent, String> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(Exponent::Infinity);
    }
    let value: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
    if value < 1.0 || !value.is_finite() {
        return Err(format!("exponent must be at least 1 or inf, got {s}"));
    }
    Ok(Exponent::Finite(value))
}

fn report(rows: &[ResultRow], args: &ReportArgs, out: Option<&Path>) -> Result<()> {
    let format = args
        .format
        .or_else(|| out.map(Format::from_path))
        .unwrap_or(Format::Csv);
    match out {
        Some(path) => emit_results(rows, format, path),
        None => {
            print!("{}", encode(rows, format)?);
            Ok(())
        }
    }
}

fn with_extension(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen {
            rows,
            cols,
            group_size,
            active_groups,
            sigma,
            noise,
            alpha,
            p,
            q,
            r,
        } => {
            let spec = GenSpec {
                rows,
                cols,
                group_size,
                active_groups,
                sigma,
                noise,
                seed: cli.seed.unwrap_or(0),
            };
            let manifest = out.unwrap_or(Path::new("problem.json"));
            let (problem, truth) = gen_problem(&spec, alpha, p, q, r)?;
            write_problem(manifest, &problem)?;
            let truth_path = with_extension(manifest, "truth.json");
            let support = group_support(&truth, 0.0);
            write_solution(&truth_path, &truth, support.as_slice(), objective(&problem, &truth)?)?;
            eprintln!("wrote {} and {}", manifest.display(), truth_path.display());
        }
        Command::Solve { problem, config } => {
            let spec = read_problem(&problem)?;
            let config: SolverConfig = match config {
                Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
                None => SolverConfig::default(),
            };
            let (x, record) = solve(&spec, &config)?;
            let sidecar = out.map(Path::to_path_buf).unwrap_or_else(|| with_extension(&problem, "solution.json"));
            let support = group_support(&x, 0.0);
            write_solution(&sidecar, &x, support.as_slice(), record.final_objective())?;
            let run_path = with_extension(&sidecar, "run.json");
            fs::write(&run_path, serde_json::to_string_pretty(&record)?)?;
            eprintln!(
                "{} outer iterations, stop: {:?}, objective {:.6e}",
                record.outer_iterations(),
                record.stop_reason,
                record.final_objective()
            );
        }
        Command::Experiment { plan, report: args } => {
            let mut plan: ExperimentPlan = serde_json::from_str(&fs::read_to_string(plan)?)?;
            if let Some(seed) = cli.seed {
                plan.gen.seed = seed;
            }
            report(&run_experiment(&plan, !args.no_timing)?, &args, out)?;
        }
        Command::Verify { instances } => {
            let suites = prox_suites(instances, cli.seed.unwrap_or(0));
            let mut failed = 0;
            for s in &suites {
                let status = if s.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{status} {:<14} instances={} max_dev={:.3e} tol={:.0e} errors={}",
                    s.name, s.instances, s.max_deviation, s.tolerance, s.errors
                );
                failed += usize::from(!s.passed());
            }
            if let Some(path) = out {
                fs::write(path, serde_json::to_string_pretty(&suites)?)?;
            }
            if failed > 0 {
                return Err(BenchError::Plan(format!("{failed} verification suite(s) failed")));
            }
        }
        Command::CompareR { report: args } => {
            let mut suite = presets::compare_r()?;
            if let Some(seed) = cli.seed {
                suite.set_seed(seed);
            }
            let cells = suite.run(!args.no_timing)?;
            let wins = cells.iter().filter(|c| c.matched_is_best()).count();
            eprintln!("matched exponent best in {wins} of {} cells", cells.len());
            let rows: Vec<ResultRow> = cells.into_iter().flat_map(|c| c.rows).collect();
            report(&rows, &args, out)?;
        }
        Command::Table1 { report: args } => {
            let mut plan = presets::table1()?;
            if let Some(seed) = cli.seed {
                plan.gen.seed = seed;
            }
            report(&run_experiment(&plan, !args.no_timing)?, &args, out)?;
        }
        Command::Table3Self { report: args } => {
            let mut suite = presets::table3_self()?;
            if let Some(seed) = cli.seed {
                suite.set_seed(seed);
            }
            report(&suite.run(!args.no_timing)?, &args, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
