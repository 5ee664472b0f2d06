use std::path::PathBuf;
use std::process::ExitCode;

use automl::bench::{run_bench, BenchManifest, BenchOptions};
use automl::config::Mode;
use automl::portfolio::{run_zeroshot, Solver, ZeroShotOptions};
use automl::predict::predict_file;
use automl::{analyze, rerun, run_fit, run_generate, JobConfig, JobError, JobReport, JobStatus};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "automl", version, about = "Two-phase AutoML for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile a dataset and write the data analysis report.
    Analyze(JobArgs),
    /// Write candidate definitions without training anything.
    Generate(JobArgs),
    /// Generate candidates and explore them.
    Fit(JobArgs),
    /// Explore an existing, possibly edited, set of definitions.
    Rerun {
        #[arg(long)]
        definitions: PathBuf,
        #[command(flatten)]
        job: JobArgs,
    },
    /// Score a CSV with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Select per-algorithm seed configurations over a dataset collection.
    Zeroshot {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 24)]
        candidates: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
        solver: SolverArg,
    },
    /// Compare full jobs against the default-configuration baseline.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
        #[command(flatten)]
        tuner: TunerArgs,
    },
    /// Write the bundled synthetic datasets and their manifest.
    Synth {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 3000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Auto,
    Exact,
    Greedy,
}

#[derive(Args, Default)]
struct TunerArgs {
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds.
    #[arg(long)]
    max_runtime: Option<f64>,
}

#[derive(Args)]
struct JobArgs {
    /// Job configuration TOML; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    problem_type: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    portfolio: Option<PathBuf>,
    #[command(flatten)]
    tuner: TunerArgs,
}

impl TunerArgs {
    fn apply(&self, t: &mut automl_core::tuner::TunerConfig) {
        if let Some(v) = self.budget {
            t.total_budget = v;
        }
        if let Some(v) = self.epsilon {
            t.epsilon = v;
        }
        if let Some(v) = self.parallelism {
            t.parallelism = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if self.max_runtime.is_some() {
            t.max_runtime = self.max_runtime;
        }
    }
}

impl JobArgs {
    fn config(&self) -> Result<JobConfig, JobError> {
        let mut cfg = match &self.config {
            Some(p) => JobConfig::from_toml(p)?,
            None => {
                let missing = |f: &str| JobError::Usage(format!("--{f} is required without --config"));
                JobConfig::new(
                    self.input.clone().ok_or_else(|| missing("input"))?,
                    self.target.as_deref().ok_or_else(|| missing("target"))?,
                    self.output_dir.clone().ok_or_else(|| missing("output-dir"))?,
                )
            }
        };
        if let Some(v) = &self.input {
            cfg.input = v.clone();
        }
        if let Some(v) = &self.target {
            cfg.target = v.clone();
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if self.problem_type.is_some() {
            cfg.problem_type = self.problem_type.clone();
        }
        if self.test_fraction.is_some() {
            cfg.test_fraction = self.test_fraction;
        }
        if self.portfolio.is_some() {
            cfg.portfolio = self.portfolio.clone();
        }
        self.tuner.apply(&mut cfg.tuner);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn finish(report: JobReport) -> Result<(), JobError> {
    println!("status: {}", serde_json::to_string(&report.status).unwrap_or_default().trim_matches('"'));
    if let Some(b) = report.leaderboard.as_ref().and_then(|b| b.best()) {
        println!("best: trial {} on {} with loss {:.6}", b.trial, b.pipeline, b.loss.value);
    }
    match report.status {
        JobStatus::Failed => Err(JobError::Failed(report.message.unwrap_or_else(|| "job failed".into()))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), JobError> {
    match cli.command {
        Command::Analyze(args) => {
            let cfg = args.config()?;
            let a = analyze(&cfg)?;
            println!(
                "{} rows, problem type {}; report in {}",
                a.n_rows,
                a.problem_type,
                cfg.output_dir.join("report").display()
            );
            Ok(())
        }
        Command::Generate(args) => {
            let mut cfg = args.config()?;
            cfg.mode = Mode::GenerateOnly;
            finish(run_generate(&cfg))
        }
        Command::Fit(args) => {
            let cfg = args.config()?;
            finish(match cfg.mode {
                Mode::GenerateOnly => run_generate(&cfg),
                Mode::Full => run_fit(&cfg),
            })
        }
        Command::Rerun { definitions, job } => {
            let cfg = job.config()?;
            if !definitions.is_dir() {
                return Err(JobError::Usage(format!("{} is not a directory", definitions.display())));
            }
            finish(rerun(&definitions, &cfg))
        }
        Command::Predict { model, input, output } => {
            let n = predict_file(&model, &input, &output)?;
            println!("{n} predictions written to {}", output.display());
            Ok(())
        }
        Command::Zeroshot {
            manifest,
            output_dir,
            candidates,
            k,
            seed,
            solver,
        } => {
            let manifest = BenchManifest::load(&manifest)?;
            let opts = ZeroShotOptions {
                output_dir,
                n_candidates: candidates,
                k,
                seed,
                solver: match solver {
                    SolverArg::Auto => Solver::Auto,
                    SolverArg::Exact => Solver::Exact,
                    SolverArg::Greedy => Solver::Greedy,
                },
            };
            let s = run_zeroshot(&manifest, &opts)?;
            for sel in &s.selections {
                println!(
                    "{}: configs {:?}, objective {:.4} ({:?})",
                    sel.algorithm.name(),
                    sel.selected,
                    sel.objective,
                    sel.solver
                );
            }
            println!("portfolio written to {}", s.portfolio_path.display());
            Ok(())
        }
        Command::Bench {
            manifest,
            output_dir,
            jobs,
            test_fraction,
            tuner,
        } => {
            let manifest = BenchManifest::load(&manifest)?;
            let mut opts = BenchOptions::new(output_dir);
            opts.jobs = jobs.max(1);
            opts.test_fraction = test_fraction;
            tuner.apply(&mut opts.tuner);
            opts.tuner.validate(1).map_err(|e| JobError::Usage(e.to_string()))?;
            let r = run_bench(&manifest, &opts)?;
            print!("{}", r.render_markdown());
            Ok(())
        }
        Command::Synth { output_dir, rows, seed } => {
            let path = automl::synth::write_bundled(&output_dir, rows, seed).map_err(|e| JobError::Failed(e.to_string()))?;
            println!("manifest written to {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
