//! The two job phases: candidate generation and candidate exploration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use automl_core::data::{
    compute_meta_features, detect_imbalance, infer_problem_type, load_csv, profile_table, stratified_split,
    validate_problem_override, ColumnProfile, ImbalanceInfo, MetaFeatures, MissingValues, ProblemType, RawTable,
};
use automl_core::learners::{evaluate, train, Loss};
use automl_core::resources::{estimate_memory, recommend, InstanceCatalog, MemoryModel};
use automl_core::schema::{build_schema, SchemaReport};
use automl_core::strategy::{
    builtin_portfolio, execute_preprocessing, read_definitions, realize, recommend_strategies, write_definitions,
    PipelineDefinition, PreparedData, RealizeContext, StrategyPortfolio,
};
use automl_core::tuner::{self, trial_seed, Arm, Leaderboard, TunerError, TunerState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_problem_type, JobConfig, Mode};
use crate::predict::SavedModel;
use crate::report::{CandidateSummary, DataAnalysis, JobReport, JobStatus, NamedProfile, PhaseTiming};
use crate::{failed, JobError};

/// Everything learned about the dataset during candidate generation.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub train: RawTable,
    pub valid: RawTable,
    pub test: Option<RawTable>,
    pub profiles: Vec<ColumnProfile>,
    pub schema: SchemaReport,
    pub problem: ProblemType,
    pub imbalance: Option<ImbalanceInfo>,
    pub meta: MetaFeatures,
    pub report: DataAnalysis,
}

struct Timer {
    timings: Vec<PhaseTiming>,
    last: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            timings: vec![],
            last: Instant::now(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        self.timings.push(PhaseTiming {
            phase: phase.to_string(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

fn missing_values(cfg: &JobConfig) -> MissingValues {
    cfg.missing_values
        .as_ref()
        .map_or_else(MissingValues::default, MissingValues::new)
}

fn write_table(t: &RawTable, path: &Path) -> Result<(), JobError> {
    let f = File::create(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    t.write_csv(BufWriter::new(f)).map_err(failed)
}

/// Load, split, profile, schema, problem type, imbalance and meta-features.
fn analyze_data(cfg: &JobConfig, timer: &mut Timer) -> Result<Analysis, JobError> {
    let mut table = load_csv(&cfg.input, &cfg.target, &missing_values(cfg)).map_err(failed)?;
    let dropped = table.drop_missing_target();
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("dropped {dropped} rows with a missing target"));
    }
    timer.lap("load");

    let target_values = table.target();
    let problem = match &cfg.problem_type {
        Some(p) => validate_problem_override(parse_problem_type(p)?, &target_values).map_err(failed)?,
        None => infer_problem_type(&target_values).map_err(failed)?,
    };
    let seed = cfg.tuner.seed;
    let (rest, test) = match cfg.test_fraction {
        Some(f) => {
            let s = stratified_split(&table, f, problem, seed ^ 0x7e57).map_err(failed)?;
            warnings.extend(s.warnings);
            (s.train, Some(s.valid))
        }
        None => (table.clone(), None),
    };
    let split = stratified_split(&rest, cfg.valid_fraction, problem, seed).map_err(failed)?;
    warnings.extend(split.warnings);
    let (train, valid) = (split.train, split.valid);
    timer.lap("split");

    let profiles = profile_table(&train);
    let schema = build_schema(train.column_names(), &profiles, train.target_index()).map_err(failed)?;
    let imbalance = if problem == ProblemType::BinaryClassification {
        Some(detect_imbalance(&train.target(), problem, cfg.imbalance_threshold).map_err(failed)?)
    } else {
        None
    };
    let meta = compute_meta_features(&train, &profiles, &schema, problem, seed);
    for c in schema.columns.iter().filter(|c| c.ambiguous) {
        warnings.push(format!(
            "column {} has ambiguous type; using {}",
            c.name,
            c.primary().name()
        ));
    }
    timer.lap("analyze");

    let report = DataAnalysis {
        target: cfg.target.clone(),
        problem_type: problem.name().to_string(),
        n_classes: problem.n_classes(),
        n_rows: table.n_rows(),
        n_train: train.n_rows(),
        n_valid: valid.n_rows(),
        n_test: test.as_ref().map_or(0, RawTable::n_rows),
        dropped_missing_target: dropped,
        profiles: train
            .column_names()
            .iter()
            .zip(&profiles)
            .map(|(c, p)| NamedProfile {
                column: c.clone(),
                profile: p.clone(),
            })
            .collect(),
        schema: schema.clone(),
        meta_features: meta.clone(),
        imbalance,
        warnings,
    };
    Ok(Analysis {
        train,
        valid,
        test,
        profiles,
        schema,
        problem,
        imbalance,
        meta,
        report,
    })
}

fn write_folds(a: &Analysis, out: &Path) -> Result<(), JobError> {
    let dir = out.join("folds");
    std::fs::create_dir_all(&dir).map_err(failed)?;
    write_table(&a.train, &dir.join("train.csv"))?;
    write_table(&a.valid, &dir.join("valid.csv"))?;
    if let Some(t) = &a.test {
        write_table(t, &dir.join("test.csv"))?;
    }
    Ok(())
}

fn load_portfolio(cfg: &JobConfig) -> Result<StrategyPortfolio, JobError> {
    match &cfg.portfolio {
        None => Ok(builtin_portfolio()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| JobError::Usage(format!("{}: {e}", p.display())))?;
            StrategyPortfolio::from_json(&text).map_err(|e| JobError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

/// Realizes the recommended strategies and attaches resource plans.
pub fn generate_definitions(
    a: &Analysis,
    portfolio: &StrategyPortfolio,
    catalog: &InstanceCatalog,
    memory: &MemoryModel,
) -> Result<Vec<PipelineDefinition>, JobError> {
    let strategies = recommend_strategies(&a.meta, &a.schema, portfolio).map_err(failed)?;
    let ctx = RealizeContext {
        schema: &a.schema,
        profiles: &a.profiles,
        meta: &a.meta,
        problem: a.problem,
        imbalance: a.imbalance.as_ref(),
        n_train_rows: a.train.n_rows(),
    };
    strategies
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut def = realize(s, &ctx, i).map_err(failed)?;
            let bytes = estimate_memory(
                def.algorithm,
                a.meta.n_rows,
                a.meta.n_cols,
                a.meta.density,
                &def.space,
                memory,
            );
            def.resources = Some(recommend(bytes, catalog));
            Ok(def)
        })
        .collect()
}

fn candidate_summaries(defs: &[PipelineDefinition], paths: &[PathBuf], out: &Path) -> Vec<CandidateSummary> {
    defs.iter()
        .zip(paths)
        .map(|(d, p)| CandidateSummary {
            id: d.id.clone(),
            strategy: d.strategy.clone(),
            algorithm: d.algorithm.name().to_string(),
            path: p.strip_prefix(out).unwrap_or(p).display().to_string(),
            transformers: d.transformers.len(),
            rule_firings: d.rule_firings.clone(),
            resources: d.resources.clone(),
        })
        .collect()
}

/// What to explore: freshly generated candidates or edited definition files.
#[derive(Debug, Clone)]
pub enum Candidates {
    Generate,
    Definitions(PathBuf),
}

/// Result of a full job, with the in-memory pieces bench needs.
#[derive(Debug)]
pub struct FitOutcome {
    pub report: JobReport,
    pub analysis: Option<Analysis>,
    pub definitions: Vec<PipelineDefinition>,
    pub best_model: Option<SavedModel>,
}

impl FitOutcome {
    fn failed(report: JobReport) -> Self {
        Self {
            report,
            analysis: None,
            definitions: vec![],
            best_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardFile {
    pub metric: String,
    #[serde(flatten)]
    pub leaderboard: Leaderboard,
}

fn write_transformed(out: &Path, def: &PipelineDefinition, data: &PreparedData) -> Result<(), JobError> {
    let dir = out.join("transformed").join(&def.id);
    std::fs::create_dir_all(&dir).map_err(failed)?;
    for (name, x, y) in [
        ("train.csv", &data.train_x, &data.train_y),
        ("valid.csv", &data.valid_x, &data.valid_y),
    ] {
        let path = dir.join(name);
        let f = File::create(&path).map_err(failed)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(f));
        let mut header = data.fitted.feature_names.clone();
        header.push(def.target.clone());
        w.write_record(&header).map_err(failed)?;
        for (i, yi) in y.iter().enumerate() {
            let mut rec: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(yi.to_string());
            w.write_record(&rec).map_err(failed)?;
        }
        w.flush().map_err(failed)?;
    }
    Ok(())
}

/// Trains `def` at the full configuration on the prepared training fold.
pub fn train_pipeline(
    def: &PipelineDefinition,
    data: &PreparedData,
    tunable: &automl_core::learners::HpConfig,
    seed: u64,
) -> Result<(automl_core::learners::Model, Loss), String> {
    let hp = def.space.full_config(tunable);
    let model = train(def.algorithm, def.problem_type, &data.train_x, &data.train_y, &hp, None, seed)
        .map_err(|e| format!("{}: {e}", def.id))?;
    let pred = model.predict(&data.valid_x).map_err(|e| format!("{}: {e}", def.id))?;
    let loss = evaluate(&pred, &data.valid_y);
    if !loss.value.is_finite() {
        return Err(format!("{}: non-finite validation loss", def.id));
    }
    Ok((model, loss))
}

fn explore(
    cfg: &JobConfig,
    a: &Analysis,
    defs: &[PipelineDefinition],
    timer: &mut Timer,
) -> Result<(JobReport, Option<SavedModel>), JobError> {
    let out = &cfg.output_dir;
    let prepared: Vec<Result<Arc<PreparedData>, String>> = defs
        .par_iter()
        .map(|d| execute_preprocessing(d, &a.train, &a.valid).map(Arc::new))
        .collect();
    for (d, p) in defs.iter().zip(&prepared) {
        match p {
            Ok(data) => write_transformed(out, d, data)?,
            Err(e) => log::warn!("preprocessing failed: {e}"),
        }
    }
    timer.lap("preprocess");

    let arms: Vec<Arm> = defs
        .iter()
        .map(|d| Arm {
            id: d.id.clone(),
            space: d.space.clone(),
            seeds: d.seeds.clone(),
        })
        .collect();
    let runner = |p: usize, config: &automl_core::learners::HpConfig, seed: u64| -> Result<Loss, String> {
        let data = prepared[p].as_ref().map_err(Clone::clone)?;
        train_pipeline(&defs[p], data, config, seed).map(|(_, loss)| loss)
    };
    let log_path = out.join("trials.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(failed)?);
    let result = tuner::run(arms, &cfg.tuner, &runner, Some(&mut log as &mut dyn Write));
    log.flush().map_err(failed)?;
    timer.lap("tune");

    let summarize = |state: &TunerState| {
        let failed_trials = state
            .trials
            .iter()
            .filter(|t| t.state == tuner::TrialState::Failed)
            .count();
        let quarantined = state
            .stats
            .iter()
            .zip(&state.arms)
            .filter(|(s, _)| s.quarantined)
            .map(|(_, arm)| arm.id.clone())
            .collect::<Vec<_>>();
        (state.trials.len(), failed_trials, quarantined)
    };
    let (mut board, state) = match result {
        Ok(ok) => ok,
        Err((e, state)) => {
            let (issued, failed_trials, quarantined) = summarize(&state);
            let mut report = JobReport::failed(match e {
                TunerError::AllTrialsFailed => "every trial failed".to_string(),
                other => other.to_string(),
            });
            report.trials_issued = issued;
            report.trials_failed = failed_trials;
            report.quarantined = quarantined;
            return Ok((report, None));
        }
    };
    let (issued, failed_trials, quarantined) = summarize(&state);

    let models_dir = out.join("models");
    std::fs::create_dir_all(&models_dir).map_err(failed)?;
    let mut best_model = None;
    let keep = cfg.saved_models.min(board.entries.len());
    for entry in board.entries.iter_mut().take(keep) {
        let p = defs.iter().position(|d| d.id == entry.pipeline).expect("leaderboard pipeline");
        let data = prepared[p].as_ref().expect("finished trial had data");
        let seed = trial_seed(cfg.tuner.seed, entry.trial);
        let (model, loss) = train_pipeline(&defs[p], data, &entry.config, seed).map_err(failed)?;
        let saved = SavedModel {
            pipeline: entry.pipeline.clone(),
            trial: entry.trial,
            algorithm: defs[p].algorithm,
            config: defs[p].space.full_config(&entry.config),
            valid_loss: loss,
            preprocessing: data.fitted.clone(),
            model,
        };
        let rel = format!("models/{:02}-{}.json", entry.rank, entry.pipeline);
        saved.save(&out.join(&rel))?;
        entry.model_path = Some(rel);
        if best_model.is_none() {
            best_model = Some(saved);
        }
    }
    let metric = board
        .best()
        .and_then(|b| serde_json::to_value(b.loss.metric).ok()?.as_str().map(String::from))
        .unwrap_or_default();
    let file = LeaderboardFile {
        metric,
        leaderboard: board.clone(),
    };
    std::fs::write(out.join("leaderboard.json"), serde_json::to_string_pretty(&file).map_err(failed)?)
        .map_err(failed)?;

    let test_loss = match (&a.test, &best_model) {
        (Some(test), Some(m)) => Some(m.evaluate(test)?),
        _ => None,
    };
    timer.lap("persist");
    Ok((
        JobReport {
            status: JobStatus::Completed,
            message: None,
            analysis: None,
            candidates: vec![],
            leaderboard: Some(board),
            trials_issued: issued,
            trials_failed: failed_trials,
            quarantined,
            test_loss,
            timings: vec![],
        },
        best_model,
    ))
}

fn finish(mut report: JobReport, cfg: &JobConfig, timer: Timer) -> JobReport {
    report.timings = timer.timings;
    if let Err(e) = report.write(&cfg.output_dir) {
        log::error!("could not write the job report: {e}");
        if report.status != JobStatus::Failed {
            report.status = JobStatus::Failed;
            report.message = Some(e.to_string());
        }
    }
    report
}

/// Runs a job and keeps the in-memory analysis, definitions and best model.
pub fn fit_job(cfg: &JobConfig, candidates: Candidates) -> Result<FitOutcome, JobError> {
    cfg.validate()?;
    let portfolio = load_portfolio(cfg)?;
    let mut timer = Timer::new();
    let out = &cfg.output_dir;
    let a = match analyze_data(cfg, &mut timer) {
        Ok(a) => a,
        Err(e) => return Ok(FitOutcome::failed(finish(JobReport::failed(e.to_string()), cfg, timer))),
    };
    if let Err(e) = write_folds(&a, out) {
        return Ok(FitOutcome::failed(finish(JobReport::failed(e.to_string()), cfg, timer)));
    }

    let candidates_dir = out.join("candidates");
    let defs = match &candidates {
        Candidates::Generate => generate_definitions(&a, &portfolio, &cfg.catalog()?, &cfg.memory_model.unwrap_or_default()).and_then(|defs| {
            timer.lap("recommend_realize");
            Ok(defs)
        }),
        Candidates::Definitions(dir) => read_definitions(dir, Some(&a.schema))
            .map_err(failed)
            .and_then(|defs| check_rerun_definitions(&defs, &a).map(|_| defs)),
    };
    let defs = match defs {
        Ok(d) => d,
        Err(e) => {
            let mut r = JobReport::failed(e.to_string());
            r.analysis = Some(a.report.clone());
            return Ok(FitOutcome::failed(finish(r, cfg, timer)));
        }
    };
    let same_dir = matches!(&candidates, Candidates::Definitions(d)
        if d.canonicalize().ok() == candidates_dir.canonicalize().ok());
    let paths = if same_dir {
        defs.iter().map(|d| candidates_dir.join(format!("{}.toml", d.id))).collect()
    } else {
        let _ = std::fs::remove_dir_all(&candidates_dir);
        write_definitions(&candidates_dir, &defs).map_err(failed)?
    };
    let summaries = candidate_summaries(&defs, &paths, out);

    if cfg.mode == Mode::GenerateOnly {
        let report = JobReport {
            status: JobStatus::GeneratedOnly,
            message: None,
            analysis: Some(a.report.clone()),
            candidates: summaries,
            leaderboard: None,
            trials_issued: 0,
            trials_failed: 0,
            quarantined: vec![],
            test_loss: None,
            timings: vec![],
        };
        return Ok(FitOutcome {
            report: finish(report, cfg, timer),
            analysis: Some(a),
            definitions: defs,
            best_model: None,
        });
    }

    let (mut report, best_model) = match explore(cfg, &a, &defs, &mut timer) {
        Ok(r) => r,
        Err(e) => (JobReport::failed(e.to_string()), None),
    };
    report.analysis = Some(a.report.clone());
    report.candidates = summaries;
    Ok(FitOutcome {
        report: finish(report, cfg, timer),
        analysis: Some(a),
        definitions: defs,
        best_model,
    })
}

fn check_rerun_definitions(defs: &[PipelineDefinition], a: &Analysis) -> Result<(), JobError> {
    for d in defs {
        if d.problem_type != a.problem {
            return Err(failed(format!(
                "definition {} is for {} but the data is {}",
                d.id, d.problem_type, a.problem
            )));
        }
    }
    if defs.len() > automl_core::strategy::MAX_STRATEGIES {
        return Err(failed(format!(
            "{} definitions; at most {}",
            defs.len(),
            automl_core::strategy::MAX_STRATEGIES
        )));
    }
    Ok(())
}

fn report_only(r: Result<FitOutcome, JobError>) -> JobReport {
    match r {
        Ok(o) => o.report,
        Err(e) => JobReport::failed(e.to_string()),
    }
}

/// Candidate generation only: folds, data analysis and definition files.
pub fn run_generate(cfg: &JobConfig) -> JobReport {
    let mut cfg = cfg.clone();
    cfg.mode = Mode::GenerateOnly;
    report_only(fit_job(&cfg, Candidates::Generate))
}

/// Candidate generation followed by exploration (unless the config says
/// generate-only).
pub fn run_fit(cfg: &JobConfig) -> JobReport {
    report_only(fit_job(cfg, Candidates::Generate))
}

/// Explores edited definitions verbatim, skipping recommendation.
pub fn rerun(definitions: &Path, cfg: &JobConfig) -> JobReport {
    report_only(fit_job(cfg, Candidates::Definitions(definitions.to_path_buf())))
}

/// Data analysis only; writes `report/data_analysis.{json,md}`.
pub fn analyze(cfg: &JobConfig) -> Result<DataAnalysis, JobError> {
    cfg.validate()?;
    let mut timer = Timer::new();
    let a = analyze_data(cfg, &mut timer)?;
    let dir = cfg.output_dir.join("report");
    std::fs::create_dir_all(&dir).map_err(failed)?;
    std::fs::write(
        dir.join("data_analysis.json"),
        serde_json::to_string_pretty(&a.report).map_err(failed)?,
    )
    .map_err(failed)?;
    std::fs::write(dir.join("data_analysis.md"), crate::report::render_analysis(&a.report)).map_err(failed)?;
    Ok(a.report)
}

/// Analysis without writing anything.
pub fn load_analysis(cfg: &JobConfig) -> Result<Analysis, JobError> {
    cfg.validate()?;
    analyze_data(cfg, &mut Timer::new())
}
