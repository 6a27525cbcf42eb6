use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scrp::bay::Geometry;
use scrp::bounds::BoundKind;
use scrp::error::Error;
use scrp::experiments::{
    compare_models, conjecture, difference_histogram, load_instances, run_all, single_batch_sweep, summarize,
    write_comparisons, write_conjecture, write_rows, write_summary, EpsilonRule, Method, RunConfig,
};
use scrp::heuristics::{Policy, DEFAULT_SAMPLES};
use scrp::instance::Model;
use scrp::io::{generate, merge_batches, read_instance, write_instance, write_instance_file, BatchLaw, GenRecipe};
use scrp::solver::DeltaRule;

const EXIT_USAGE: u8 = 2;
const EXIT_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "scrp", version, about = "Container relocation with batch-revealed retrieval orders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve instance files with one method and print CSV rows.
    Solve {
        #[arg(long, value_enum, default_value_t = MethodArg::Pbfs)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = PolicyArg::Em)]
        policy: PolicyArg,
        #[command(flatten)]
        run: RunArgs,
        /// Instance files or directories of `*.scrp` files.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Run every bound, solver and heuristic over a directory.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Where to write the per-method summary (default: stderr).
        #[arg(long)]
        summary: Option<PathBuf>,
        dir: PathBuf,
    },
    /// Optimal values under the batch and the online model.
    CompareModels {
        #[command(flatten)]
        run: RunArgs,
        /// Histogram bin width in percent.
        #[arg(long, default_value_t = 0.5)]
        bin: f64,
        path: PathBuf,
    },
    /// Compare leveling with the online optimum on single-batch instances.
    Conjecture {
        #[command(flatten)]
        run: RunArgs,
        /// Check every single-batch instance of the bay up to this many containers.
        #[arg(long, conflicts_with = "path", requires_all = ["tiers", "stacks"])]
        sweep: Option<usize>,
        #[arg(long)]
        tiers: Option<usize>,
        #[arg(long)]
        stacks: Option<usize>,
        path: Option<PathBuf>,
    },
    /// Write random instances.
    Generate {
        #[arg(long)]
        tiers: usize,
        #[arg(long)]
        stacks: usize,
        /// Share of slots filled.
        #[arg(long)]
        fill: f64,
        #[arg(long, default_value_t = 30)]
        count: usize,
        /// Fixed batch size instead of the uniform law.
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, default_value_t = 1)]
        batch_min: usize,
        #[arg(long, default_value_t = 3)]
        batch_max: usize,
        #[arg(long, env = "SCRP_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "inst")]
        prefix: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge consecutive batches `gamma` at a time.
    Merge {
        #[arg(long)]
        gamma: usize,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        input: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Batch)]
    model: ModelArg,
    #[arg(long, default_value = "b1", value_parser = parse_bound)]
    bound: BoundKind,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Absolute error budget of pbfsa.
    #[arg(long, conflicts_with = "epsilon_frac")]
    epsilon: Option<f64>,
    /// Error budget as a fraction of the root's blocking bound.
    #[arg(long, default_value_t = 0.5)]
    epsilon_frac: f64,
    /// Divide the error budget by stages left instead of the batch index.
    #[arg(long)]
    stage_delta: bool,
    #[arg(long, env = "SCRP_SEED", default_value_t = 0)]
    seed: u64,
    /// Per-solve time limit in seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Score heuristics exactly instead of by simulation.
    #[arg(long)]
    exact_policy: bool,
    /// Fill the `seconds` column.
    #[arg(long)]
    timing: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum MethodArg {
    Pbfs,
    Pbfsa,
    Heuristic,
    Bounds,
    Oracle,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModelArg {
    Batch,
    Online,
}

#[derive(Copy, Clone, ValueEnum)]
enum PolicyArg {
    Random,
    Leveling,
    Eri,
    Em,
    Eg,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Random => Policy::Random,
            PolicyArg::Leveling => Policy::Leveling,
            PolicyArg::Eri => Policy::ExpectedReshuffleIndex,
            PolicyArg::Em => Policy::ExpectedMinMax,
            PolicyArg::Eg => Policy::ExpectedGroup,
        }
    }
}

fn parse_bound(s: &str) -> Result<BoundKind, String> {
    match s.parse::<BoundKind>() {
        Ok(k @ (BoundKind::Blocking | BoundKind::LookAhead(1 | 2))) => Ok(k),
        _ => Err(format!("`{s}` is not one of b, b1, b2")),
    }
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Failure> {
        if self.samples == 0 {
            return Err(Failure::Usage("--samples must be at least 1".into()));
        }
        let epsilon = match self.epsilon {
            Some(e) if e > 0.0 && e.is_finite() => EpsilonRule::Absolute(e),
            Some(e) => return Err(Failure::Usage(format!("--epsilon must be positive, got {e}"))),
            None if self.epsilon_frac > 0.0 && self.epsilon_frac.is_finite() => {
                EpsilonRule::FractionOfBlocking(self.epsilon_frac)
            }
            None => {
                return Err(Failure::Usage(format!(
                    "--epsilon-frac must be positive, got {}",
                    self.epsilon_frac
                )))
            }
        };
        if !(self.time_limit > 0.0) || !self.time_limit.is_finite() {
            return Err(Failure::Usage(format!("--time-limit must be positive, got {}", self.time_limit)));
        }
        Ok(RunConfig {
            model: match self.model {
                ModelArg::Batch => Model::Batch,
                ModelArg::Online => Model::Online,
            },
            bound: self.bound,
            epsilon,
            samples: self.samples,
            seed: self.seed,
            time_limit: Some(Duration::from_secs_f64(self.time_limit)),
            jobs: self.jobs,
            timing: self.timing,
            exact_policies: self.exact_policy,
            delta: if self.stage_delta { DeltaRule::StageCount } else { DeltaRule::BatchIndex },
        })
    }

    fn output(&self) -> Result<Box<dyn Write>, Failure> {
        output(self.out.as_deref())
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<(String, scrp::instance::Instance)>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_instances(p).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?);
    }
    Ok(out)
}

fn report_failures(rows: &[scrp::experiments::Row]) -> bool {
    let mut failed = false;
    for r in rows.iter().filter(|r| r.failed()) {
        failed = true;
        let why = r.message.as_deref().unwrap_or(&r.status);
        eprintln!("{} ({} {}): {why}", r.instance, r.method, r.model.name());
    }
    failed
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Solve {
            method,
            policy,
            run,
            paths,
        } => {
            let cfg = run.config()?;
            let method = match method {
                MethodArg::Pbfs => Method::Pbfs,
                MethodArg::Pbfsa => Method::Pbfsa,
                MethodArg::Heuristic => Method::Heuristic(policy.into()),
                MethodArg::Bounds => Method::Bound(run.bound),
                MethodArg::Oracle => Method::Oracle,
            };
            let instances = load_all(&paths)?;
            let rows = run_all(&instances, &[method], &cfg);
            write_rows(run.output()?, &rows, cfg.timing)?;
            Ok(!report_failures(&rows))
        }
        Command::Bench { run, summary, dir } => {
            let cfg = run.config()?;
            if !dir.is_dir() {
                return Err(Failure::Usage(format!("{} is not a directory", dir.display())));
            }
            let instances = load_instances(&dir)?;
            let rows = run_all(&instances, &Method::bench_set(), &cfg);
            write_rows(run.output()?, &rows, cfg.timing)?;
            let table = summarize(&rows);
            match summary {
                Some(p) => write_summary(output(Some(&p))?, &table, cfg.timing)?,
                None => write_summary(io::stderr().lock(), &table, cfg.timing)?,
            }
            Ok(!report_failures(&rows))
        }
        Command::CompareModels { run, bin, path } => {
            let cfg = run.config()?;
            if !(bin > 0.0) {
                return Err(Failure::Usage(format!("--bin must be positive, got {bin}")));
            }
            let instances = load_instances(&path)?;
            let rows = compare_models(&instances, &cfg);
            write_comparisons(run.output()?, &rows)?;
            let diffs: Vec<f64> = rows.iter().filter_map(|r| r.difference_pct).filter(|d| d.is_finite()).collect();
            let mut err = io::stderr().lock();
            if !diffs.is_empty() {
                let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
                let max = diffs.iter().copied().fold(f64::MIN, f64::max);
                writeln!(err, "instances {} mean_difference_pct {mean:.6} max_difference_pct {max:.6}", diffs.len())?;
                for (lo, n) in difference_histogram(&rows, bin) {
                    writeln!(err, "[{lo:.2}, {:.2}) {n}", lo + bin)?;
                }
            }
            let bad: Vec<&str> = rows.iter().filter(|r| r.status != "ok").map(|r| r.instance.as_str()).collect();
            for name in &bad {
                writeln!(err, "{name}: flagged")?;
            }
            Ok(bad.is_empty())
        }
        Command::Conjecture {
            run,
            sweep,
            tiers,
            stacks,
            path,
        } => {
            let cfg = run.config()?;
            let instances = match (sweep, path) {
                (Some(max), _) => {
                    let g = Geometry::new(tiers.unwrap_or(0), stacks.unwrap_or(0))
                        .map_err(|e| Failure::Usage(e.to_string()))?;
                    single_batch_sweep(g, max)
                }
                (None, Some(p)) => load_instances(&p)?,
                (None, None) => return Err(Failure::Usage("give a path or --sweep".into())),
            };
            let rows = conjecture(&instances, &cfg).map_err(|e| Failure::Usage(e.to_string()))?;
            write_conjecture(run.output()?, &rows)?;
            let max_gap = rows.iter().filter_map(|r| r.gap).fold(0.0, f64::max);
            let counter = rows.iter().filter(|r| r.status == "counterexample").count();
            eprintln!("instances {} max_gap {max_gap:e} counterexamples {counter}", rows.len());
            Ok(rows.iter().all(|r| r.status == "ok" || r.status == "counterexample"))
        }
        Command::Generate {
            tiers,
            stacks,
            fill,
            count,
            batch_size,
            batch_min,
            batch_max,
            seed,
            prefix,
            out,
        } => {
            let recipe = GenRecipe {
                tiers,
                stacks,
                fill,
                batch_law: match batch_size {
                    Some(n) => BatchLaw::Fixed(n),
                    None => BatchLaw::Uniform {
                        lo: batch_min,
                        hi: batch_max,
                    },
                },
                count,
                seed,
            };
            let instances = generate(&recipe).map_err(|e| Failure::Usage(e.to_string()))?;
            fs::create_dir_all(&out)?;
            let width = count.saturating_sub(1).to_string().len().max(3);
            for (i, inst) in instances.iter().enumerate() {
                write_instance_file(&out.join(format!("{prefix}-{i:0width$}.scrp")), inst)?;
            }
            Ok(true)
        }
        Command::Merge { gamma, out, input } => {
            if gamma == 0 {
                return Err(Failure::Usage("--gamma must be at least 1".into()));
            }
            let merged = merge_batches(&read_instance(&input)?, gamma);
            output(out.as_deref())?.write_all(write_instance(&merged).as_bytes())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
