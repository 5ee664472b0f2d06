//! Benchmarking against a single default-configuration GBT baseline that uses
//! the default per-type preprocessing.

use std::path::{Path, PathBuf};

use automl_core::learners::{default_config, Algorithm};
use automl_core::strategy::{builtin_portfolio, execute_preprocessing, realize, RealizeContext};
use automl_core::tuner::TunerConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::job::{fit_job, train_pipeline, Analysis, Candidates};
use crate::{failed, JobConfig, JobError, JobStatus};

/// `(a - b) / max(a, b)`, 0 when both are 0. Negative favours `a`.
pub fn relative_error_difference(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m <= 0.0 {
        return 0.0;
    }
    ((a - b) / m).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchDataset {
    pub name: String,
    pub path: PathBuf,
    pub target: String,
    #[serde(default)]
    pub problem_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    pub datasets: Vec<BenchDataset>,
}

impl BenchManifest {
    /// Reads a TOML manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, JobError> {
        let text = std::fs::read_to_string(path).map_err(|e| JobError::Usage(format!("{}: {e}", path.display())))?;
        let mut m: Self = toml::from_str(&text).map_err(|e| JobError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut m.datasets {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
        }
        if m.datasets.is_empty() {
            return Err(JobError::Usage("manifest lists no datasets".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub output_dir: PathBuf,
    pub tuner: TunerConfig,
    pub test_fraction: f64,
    /// Datasets processed concurrently.
    pub jobs: usize,
}

impl BenchOptions {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            output_dir: output_dir.into(),
            tuner: TunerConfig::default(),
            test_fraction: 0.1,
            jobs: 1,
        }
    }
}

/// Test losses of both methods on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    #[serde(default)]
    pub metric: Option<String>,
    #[serde(default)]
    pub method: Option<f64>,
    #[serde(default)]
    pub baseline: Option<f64>,
    #[serde(default)]
    pub method_error: Option<String>,
    #[serde(default)]
    pub baseline_error: Option<String>,
}

impl DatasetRow {
    pub fn red(&self) -> Option<f64> {
        Some(relative_error_difference(self.method?, self.baseline?))
    }

    /// The method matched or improved on the baseline.
    pub fn matches_baseline(&self) -> bool {
        match (self.method, self.baseline) {
            (Some(a), Some(b)) => a <= b,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchAggregates {
    pub datasets: usize,
    pub success_rate: f64,
    pub matching_baseline: f64,
    pub mean_red: Option<f64>,
    pub red_std_error: Option<f64>,
    pub best_method: usize,
    pub best_baseline: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<DatasetRow>,
    pub aggregates: BenchAggregates,
}

impl BenchResult {
    pub fn from_rows(rows: Vec<DatasetRow>) -> Self {
        let n = rows.len();
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let reds: Vec<f64> = rows.iter().filter_map(DatasetRow::red).collect();
        let (mean_red, red_std_error) = if reds.is_empty() {
            (None, None)
        } else {
            let m = reds.iter().sum::<f64>() / reds.len() as f64;
            let se = if reds.len() > 1 {
                let var = reds.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (reds.len() - 1) as f64;
                (var / reds.len() as f64).sqrt()
            } else {
                0.0
            };
            (Some(m), Some(se))
        };
        let mut best = (0, 0);
        for r in &rows {
            let min = [r.method, r.baseline].into_iter().flatten().fold(f64::INFINITY, f64::min);
            if r.method == Some(min) {
                best.0 += 1;
            }
            if r.baseline == Some(min) {
                best.1 += 1;
            }
        }
        let aggregates = BenchAggregates {
            datasets: n,
            success_rate: frac(rows.iter().filter(|r| r.method.is_some()).count()),
            matching_baseline: frac(rows.iter().filter(|r| r.matches_baseline()).count()),
            mean_red,
            red_std_error,
            best_method: best.0,
            best_baseline: best.1,
        };
        Self { rows, aggregates }
    }

    pub fn render_markdown(&self) -> String {
        let mut s = String::from("# Benchmark\n\n| dataset | metric | automl | baseline | RED |\n|---|---|---|---|---|\n");
        let cell = |v: Option<f64>| v.map_or("failed".to_string(), |v| format!("{v:.6}"));
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                r.dataset,
                r.metric.as_deref().unwrap_or("-"),
                cell(r.method),
                cell(r.baseline),
                r.red().map_or("-".to_string(), |v| format!("{v:+.4}"))
            ));
        }
        let a = &self.aggregates;
        s.push_str(&format!(
            "\nJob success rate: {:.3}\n\nMatching the baseline: {:.1}%\n\nMean RED: {}\n\nBest models: automl {}, baseline {}\n",
            a.success_rate,
            100.0 * a.matching_baseline,
            match (a.mean_red, a.red_std_error) {
                (Some(m), Some(se)) => format!("{m:+.4} ± {se:.4}"),
                _ => "-".into(),
            },
            a.best_method,
            a.best_baseline
        ));
        s
    }
}

/// Default preprocessing plus GBT at its library defaults, scored on the test split.
pub fn baseline_test_loss(a: &Analysis) -> Result<f64, JobError> {
    let test = a.test.as_ref().ok_or_else(|| failed("no test split"))?;
    let strategy = builtin_portfolio()
        .strategies
        .into_iter()
        .find(|s| s.id == "gbt-default")
        .expect("built-in default strategy");
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
    let (model, _) = train_pipeline(&def, &data, &default_config(Algorithm::Gbt), 0).map_err(failed)?;
    let x = data.fitted.transform(test).map_err(failed)?;
    let y = data.fitted.encode_target(test).map_err(failed)?;
    let pred = model.predict(&x).map_err(failed)?;
    Ok(automl_core::learners::evaluate(&pred, &y).value)
}

fn bench_one(d: &BenchDataset, opts: &BenchOptions) -> DatasetRow {
    let mut cfg = JobConfig::new(&d.path, &d.target, opts.output_dir.join(&d.name));
    cfg.problem_type = d.problem_type.clone();
    cfg.tuner = opts.tuner.clone();
    cfg.test_fraction = Some(opts.test_fraction);
    let mut row = DatasetRow {
        dataset: d.name.clone(),
        metric: None,
        method: None,
        baseline: None,
        method_error: None,
        baseline_error: None,
    };
    let outcome = match fit_job(&cfg, Candidates::Generate) {
        Ok(o) => o,
        Err(e) => {
            row.method_error = Some(e.to_string());
            row.baseline_error = Some("no analysis".into());
            return row;
        }
    };
    match (&outcome.report.status, &outcome.report.test_loss) {
        (JobStatus::Completed, Some(l)) => {
            row.method = Some(l.value);
            row.metric = serde_json::to_value(l.metric).ok().and_then(|v| v.as_str().map(String::from));
        }
        _ => {
            row.method_error = Some(
                outcome
                    .report
                    .message
                    .clone()
                    .unwrap_or_else(|| "job did not complete".into()),
            )
        }
    }
    match outcome.analysis.as_ref().map(baseline_test_loss) {
        Some(Ok(v)) => row.baseline = Some(v),
        Some(Err(e)) => row.baseline_error = Some(e.to_string()),
        None => row.baseline_error = Some("no analysis".into()),
    }
    row
}

/// Runs both methods on every dataset. A failing dataset lowers the success
/// rate and never aborts the run.
pub fn run_bench(manifest: &BenchManifest, opts: &BenchOptions) -> Result<BenchResult, JobError> {
    std::fs::create_dir_all(&opts.output_dir).map_err(failed)?;
    let rows: Vec<DatasetRow> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(failed)?;
        pool.install(|| manifest.datasets.par_iter().map(|d| bench_one(d, opts)).collect())
    } else {
        manifest.datasets.iter().map(|d| bench_one(d, opts)).collect()
    };
    let result = BenchResult::from_rows(rows);
    std::fs::write(
        opts.output_dir.join("bench.json"),
        serde_json::to_string_pretty(&result).map_err(failed)?,
    )
    .map_err(failed)?;
    std::fs::write(opts.output_dir.join("bench.md"), result.render_markdown()).map_err(failed)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(a: Option<f64>, b: Option<f64>) -> DatasetRow {
        DatasetRow {
            dataset: "d".into(),
            metric: None,
            method: a,
            baseline: b,
            method_error: None,
            baseline_error: None,
        }
    }

    #[test]
    fn red_hand_values() {
        assert!((relative_error_difference(9.0, 10.0) + 0.1).abs() < 1e-12);
        assert_eq!(relative_error_difference(3.0, 3.0), 0.0);
        assert_eq!(relative_error_difference(0.0, 0.0), 0.0);
    }

    #[test]
    fn one_crash_in_four() {
        let r = BenchResult::from_rows(vec![
            row(Some(1.0), Some(1.0)),
            row(Some(1.0), Some(2.0)),
            row(Some(3.0), Some(2.0)),
            row(None, Some(2.0)),
        ]);
        assert_eq!(r.aggregates.success_rate, 0.75);
        assert_eq!(r.aggregates.matching_baseline, 0.5);
        assert_eq!(r.aggregates.best_method, 2);
        assert_eq!(r.aggregates.best_baseline, 3);
    }

    #[test]
    fn identical_losses() {
        let r = BenchResult::from_rows(vec![row(Some(0.5), Some(0.5)), row(Some(2.0), Some(2.0))]);
        assert_eq!(r.aggregates.mean_red, Some(0.0));
        assert_eq!(r.aggregates.matching_baseline, 1.0);
    }
}
