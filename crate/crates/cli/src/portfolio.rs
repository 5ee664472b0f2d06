//! Offline zero-shot selection: evaluates candidate configurations across a
//! dataset collection and keeps the `k` whose best-of losses are lowest.

use std::path::PathBuf;

use automl_core::learners::{default_config, default_hp_space, Algorithm, HpConfig};
use automl_core::strategy::{builtin_portfolio, execute_preprocessing, realize, RealizeContext, StrategyPortfolio};
use automl_core::zeroshot::{
    build_performance_table, n_choose_k, normalize, select_portfolio_exact, select_portfolio_greedy, Portfolio,
    EXACT_MAX_SUBSETS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::BenchManifest;
use crate::job::{load_analysis, train_pipeline};
use crate::{failed, JobConfig, JobError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Exact when `C(B, k)` is small enough, greedy otherwise.
    Auto,
    Exact,
    Greedy,
}

#[derive(Debug, Clone)]
pub struct ZeroShotOptions {
    pub output_dir: PathBuf,
    /// Candidate configurations per algorithm, the library default included.
    pub n_candidates: usize,
    pub k: usize,
    pub seed: u64,
    pub solver: Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSelection {
    pub algorithm: Algorithm,
    pub table_fingerprint: String,
    pub selected: Vec<usize>,
    pub objective: f64,
    pub solver: Solver,
    pub seeds: Vec<HpConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotSummary {
    pub datasets: Vec<String>,
    pub selections: Vec<AlgorithmSelection>,
    pub portfolio_path: PathBuf,
}

fn solve(losses: &[Vec<f64>], k: usize, solver: Solver) -> Result<(Portfolio, Solver), JobError> {
    let exact_ok = n_choose_k(losses.len(), k) <= EXACT_MAX_SUBSETS;
    match solver {
        Solver::Exact => Ok((select_portfolio_exact(losses, k).map_err(failed)?, Solver::Exact)),
        Solver::Auto if exact_ok => Ok((select_portfolio_exact(losses, k).map_err(failed)?, Solver::Exact)),
        _ => Ok((select_portfolio_greedy(losses, k).map_err(failed)?, Solver::Greedy)),
    }
}

/// Builds one performance table per algorithm over the manifest's datasets
/// and writes `portfolio.json`: the built-in strategies with their seeds
/// replaced by the selected configurations.
pub fn run_zeroshot(manifest: &BenchManifest, opts: &ZeroShotOptions) -> Result<ZeroShotSummary, JobError> {
    if opts.k == 0 || opts.k > automl_core::strategy::MAX_SEEDS {
        return Err(JobError::Usage(format!(
            "k must be in 1..={}",
            automl_core::strategy::MAX_SEEDS
        )));
    }
    if opts.n_candidates < opts.k {
        return Err(JobError::Usage("need at least k candidate configurations".into()));
    }
    std::fs::create_dir_all(&opts.output_dir).map_err(failed)?;
    let mut analyses = Vec::new();
    for d in &manifest.datasets {
        let mut cfg = JobConfig::new(&d.path, &d.target, opts.output_dir.join("scratch"));
        cfg.problem_type = d.problem_type.clone();
        cfg.tuner.seed = opts.seed;
        analyses.push(load_analysis(&cfg)?);
    }
    let names: Vec<String> = manifest.datasets.iter().map(|d| d.name.clone()).collect();
    let max_rows = analyses.iter().map(|a| a.train.n_rows()).max().unwrap_or(10);
    let mut portfolio: StrategyPortfolio = builtin_portfolio();
    let mut selections = Vec::new();

    for algorithm in [Algorithm::Gbt, Algorithm::Linear] {
        let strategy = portfolio
            .strategies
            .iter()
            .find(|s| s.algorithm == algorithm && s.id.ends_with("default"))
            .cloned()
            .expect("built-in default strategy");
        let mut prepared = Vec::new();
        for a in &analyses {
            let ctx = RealizeContext {
                schema: &a.schema,
                profiles: &a.profiles,
                meta: &a.meta,
                problem: a.problem,
                imbalance: a.imbalance.as_ref(),
                n_train_rows: a.train.n_rows(),
            };
            let def = realize(&strategy, &ctx, 0).map_err(failed)?;
            let data = execute_preprocessing(&def, &a.train, &a.valid).map_err(failed)?;
            prepared.push((def, data));
        }
        let space = default_hp_space(algorithm, analyses[0].problem, max_rows, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ algorithm as u64);
        let mut configs = vec![default_config(algorithm)];
        configs.extend((1..opts.n_candidates).map(|_| space.sample(&mut rng)));
        let descriptors = configs
            .iter()
            .map(|c| serde_json::to_value(c).expect("configs serialize"))
            .collect();
        let table = build_performance_table(&configs, descriptors, &prepared, names.clone(), opts.seed, |c, (def, data), seed| {
            train_pipeline(def, data, &def.space.project(c), seed).map(|(_, l)| l.value)
        })
        .map_err(failed)?;
        table
            .save(&opts.output_dir, &format!("performance_{}", algorithm.name()))
            .map_err(failed)?;
        let scaled = normalize(&table);
        let (chosen, used) = solve(&scaled.losses, opts.k, opts.solver)?;
        let seeds: Vec<HpConfig> = chosen.indices.iter().map(|&i| configs[i].clone()).collect();
        for s in portfolio.strategies.iter_mut().filter(|s| s.algorithm == algorithm) {
            s.seeds = seeds.clone();
        }
        selections.push(AlgorithmSelection {
            algorithm,
            table_fingerprint: table.fingerprint(),
            selected: chosen.indices,
            objective: chosen.objective,
            solver: used,
            seeds,
        });
    }
    portfolio.metadata.source_table = Some(
        selections
            .iter()
            .map(|s| s.table_fingerprint.clone())
            .collect::<Vec<_>>()
            .join("+"),
    );
    portfolio.metadata.objective = Some(selections.iter().map(|s| s.objective).sum());
    portfolio.metadata.note = Some(format!("zero-shot selection over {} datasets", names.len()));
    let portfolio_path = opts.output_dir.join("portfolio.json");
    std::fs::write(&portfolio_path, portfolio.to_json()).map_err(failed)?;
    let _ = std::fs::remove_dir_all(opts.output_dir.join("scratch"));
    Ok(ZeroShotSummary {
        datasets: names,
        selections,
        portfolio_path,
    })
}
