//! Job configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use automl_core::data::{ProblemType, DEFAULT_IMBALANCE_THRESHOLD, DEFAULT_VALID_FRACTION};
use automl_core::resources::{Instance, InstanceCatalog, MemoryModel};
use automl_core::tuner::TunerConfig;
use serde::{Deserialize, Serialize};

use crate::JobError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    GenerateOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub input: PathBuf,
    pub target: String,
    pub output_dir: PathBuf,
    /// `regression`, `binary_classification` or `multiclass_classification`.
    #[serde(default)]
    pub problem_type: Option<String>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub tuner: TunerConfig,
    #[serde(default = "default_valid_fraction")]
    pub valid_fraction: f64,
    /// Held-out test share carved before the train/valid split.
    #[serde(default)]
    pub test_fraction: Option<f64>,
    #[serde(default = "default_imbalance")]
    pub imbalance_threshold: f64,
    /// Leaderboard entries whose models are persisted.
    #[serde(default = "default_saved_models")]
    pub saved_models: usize,
    /// Strategy portfolio JSON; the built-in one when absent.
    #[serde(default)]
    pub portfolio: Option<PathBuf>,
    #[serde(default)]
    pub missing_values: Option<Vec<String>>,
    /// Simulated hardware; the built-in catalog when absent.
    #[serde(default)]
    pub catalog: Option<Vec<Instance>>,
    #[serde(default)]
    pub memory_model: Option<MemoryModel>,
}

fn default_valid_fraction() -> f64 {
    DEFAULT_VALID_FRACTION
}

fn default_imbalance() -> f64 {
    DEFAULT_IMBALANCE_THRESHOLD
}

fn default_saved_models() -> usize {
    10
}

impl JobConfig {
    pub fn new(input: impl Into<PathBuf>, target: &str, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            target: target.to_string(),
            output_dir: output_dir.into(),
            problem_type: None,
            mode: Mode::Full,
            tuner: TunerConfig::default(),
            valid_fraction: DEFAULT_VALID_FRACTION,
            test_fraction: None,
            imbalance_threshold: DEFAULT_IMBALANCE_THRESHOLD,
            saved_models: default_saved_models(),
            portfolio: None,
            missing_values: None,
            catalog: None,
            memory_model: None,
        }
    }

    pub fn from_toml(path: &Path) -> Result<Self, JobError> {
        let text = std::fs::read_to_string(path).map_err(|e| JobError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| JobError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), JobError> {
        let usage = |m: String| Err(JobError::Usage(m));
        if self.target.is_empty() {
            return usage("target column name is empty".into());
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction < 1.0) {
            return usage(format!("valid fraction {} not in (0, 1)", self.valid_fraction));
        }
        if let Some(t) = self.test_fraction {
            if !(t > 0.0 && t < 1.0) {
                return usage(format!("test fraction {t} not in (0, 1)"));
            }
        }
        if !(self.imbalance_threshold > 0.0 && self.imbalance_threshold < 0.5) {
            return usage(format!("imbalance threshold {} not in (0, 0.5)", self.imbalance_threshold));
        }
        if let Some(p) = &self.problem_type {
            parse_problem_type(p)?;
        }
        self.catalog()?;
        if let Some(m) = &self.memory_model {
            m.validate().map_err(JobError::Usage)?;
        }
        if self.tuner.total_budget == 0 {
            return usage("budget must be positive".into());
        }
        self.tuner.validate(1).map_err(|e| JobError::Usage(e.to_string()))?;
        std::fs::create_dir_all(&self.output_dir)
            .map_err(|e| JobError::Usage(format!("output directory {}: {e}", self.output_dir.display())))?;
        Ok(())
    }
}

impl JobConfig {
    pub fn catalog(&self) -> Result<InstanceCatalog, JobError> {
        match &self.catalog {
            Some(list) => InstanceCatalog::new(list.clone()).map_err(JobError::Usage),
            None => Ok(InstanceCatalog::default()),
        }
    }
}

/// Problem-type names as accepted on the command line. The class count of a
/// multiclass override is filled in from the data.
pub fn parse_problem_type(s: &str) -> Result<ProblemType, JobError> {
    match s {
        "regression" => Ok(ProblemType::Regression),
        "binary" | "binary_classification" => Ok(ProblemType::BinaryClassification),
        "multiclass" | "multiclass_classification" => Ok(ProblemType::MulticlassClassification { n_classes: 0 }),
        other => Err(JobError::Usage(format!(
            "unknown problem type {other:?} (regression, binary_classification, multiclass_classification)"
        ))),
    }
}
