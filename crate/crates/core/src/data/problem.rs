use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::profile::parse_number;
use super::DataError;

/// Numeric targets with at most this many distinct integral values are classification.
pub const MAX_INTEGRAL_CLASSES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemType {
    Regression,
    BinaryClassification,
    MulticlassClassification { n_classes: usize },
}

impl ProblemType {
    pub fn classification(n_classes: usize) -> Self {
        if n_classes == 2 {
            ProblemType::BinaryClassification
        } else {
            ProblemType::MulticlassClassification { n_classes }
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, ProblemType::Regression)
    }

    /// Number of classes, 0 for regression.
    pub fn n_classes(&self) -> usize {
        match self {
            ProblemType::Regression => 0,
            ProblemType::BinaryClassification => 2,
            ProblemType::MulticlassClassification { n_classes } => *n_classes,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemType::Regression => "regression",
            ProblemType::BinaryClassification => "binary_classification",
            ProblemType::MulticlassClassification { .. } => "multiclass_classification",
        }
    }
}

impl fmt::Display for ProblemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemType::MulticlassClassification { n_classes } => {
                write!(f, "multiclass_classification({n_classes})")
            }
            other => f.write_str(other.name()),
        }
    }
}

/// Infers the problem type from the (non-missing) target values.
pub fn infer_problem_type(target_values: &[Option<String>]) -> Result<ProblemType, DataError> {
    let present: Vec<&str> = target_values.iter().filter_map(|v| v.as_deref()).collect();
    let unique: BTreeSet<&str> = present.iter().copied().collect();
    if unique.len() < 2 {
        return Err(DataError::DegenerateTarget);
    }
    let parsed: Option<Vec<f64>> = present.iter().map(|c| parse_number(c)).collect();
    match parsed {
        None => Ok(ProblemType::classification(unique.len())),
        Some(values) => {
            let integral = values.iter().all(|v| v.fract() == 0.0);
            let distinct: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
            if integral && distinct.len() <= MAX_INTEGRAL_CLASSES {
                Ok(ProblemType::classification(unique.len()))
            } else {
                Ok(ProblemType::Regression)
            }
        }
    }
}

/// Checks a user-supplied problem type against the target column.
pub fn validate_problem_override(
    problem: ProblemType,
    target_values: &[Option<String>],
) -> Result<ProblemType, DataError> {
    let present: Vec<&str> = target_values.iter().filter_map(|v| v.as_deref()).collect();
    let unique: BTreeSet<&str> = present.iter().copied().collect();
    match problem {
        ProblemType::Regression => {
            if let Some(bad) = present.iter().find(|c| parse_number(c).is_none()) {
                return Err(DataError::InvalidOverride(format!(
                    "regression target has non-numeric value {bad:?}"
                )));
            }
            if unique.len() < 2 {
                return Err(DataError::DegenerateTarget);
            }
            Ok(problem)
        }
        _ => {
            if unique.len() < 2 {
                return Err(DataError::DegenerateTarget);
            }
            let actual = ProblemType::classification(unique.len());
            if std::mem::discriminant(&actual) != std::mem::discriminant(&problem) {
                return Err(DataError::InvalidOverride(format!(
                    "requested {} but target has {} classes",
                    problem.name(),
                    unique.len()
                )));
            }
            Ok(actual)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceInfo {
    pub minority_fraction: f64,
    pub is_imbalanced: bool,
}

pub const DEFAULT_IMBALANCE_THRESHOLD: f64 = 0.2;

pub fn detect_imbalance(
    target_values: &[Option<String>],
    problem: ProblemType,
    threshold: f64,
) -> Result<ImbalanceInfo, DataError> {
    if problem != ProblemType::BinaryClassification {
        return Err(DataError::WrongProblemType(problem.name().to_string()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut n = 0usize;
    for v in target_values.iter().flatten() {
        *counts.entry(v.as_str()).or_default() += 1;
        n += 1;
    }
    let minority = counts.values().copied().min().unwrap_or(0);
    if n == 0 || counts.len() != 2 {
        return Err(DataError::DegenerateTarget);
    }
    let minority_fraction = minority as f64 / n as f64;
    Ok(ImbalanceInfo {
        minority_fraction,
        is_imbalanced: minority_fraction < threshold,
    })
}
