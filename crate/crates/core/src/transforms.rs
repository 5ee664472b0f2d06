//! Feature and label preprocessors.
//!
//! Numeric transformers work on one column at a time and impute missing
//! (NaN) cells with the fit-time mean of their input. `one_hot` and `tfidf`
//! consume raw string cells. `pca` consumes an already numeric matrix.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{parse_number, nearest_rank, ProblemType};
use crate::matrix::NumericMatrix;

pub const ONE_HOT_MAX_CATEGORIES: usize = 1000;
pub const FITTED_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    ImputeMean,
    Standardize,
    OneHot,
    QuantileBin { bins: usize },
    LogTransform,
    Tfidf { max_features: usize },
    Pca { k: usize },
}

impl TransformKind {
    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::ImputeMean => "impute_mean",
            TransformKind::Standardize => "standardize",
            TransformKind::OneHot => "one_hot",
            TransformKind::QuantileBin { .. } => "quantile_bin",
            TransformKind::LogTransform => "log_transform",
            TransformKind::Tfidf { .. } => "tfidf",
            TransformKind::Pca { .. } => "pca",
        }
    }

    /// Numeric single-column transformers that rewrite a column in place.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TransformKind::ImputeMean
                | TransformKind::Standardize
                | TransformKind::QuantileBin { .. }
                | TransformKind::LogTransform
        )
    }

    pub fn is_multi_column(&self) -> bool {
        matches!(self, TransformKind::Pca { .. })
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        match *self {
            TransformKind::QuantileBin { bins } if bins < 2 => {
                Err(TransformError::InvalidParameter(format!("bins must be >= 2, got {bins}")))
            }
            TransformKind::Tfidf { max_features } if max_features < 1 => Err(
                TransformError::InvalidParameter(format!("max_features must be >= 1, got {max_features}")),
            ),
            TransformKind::Pca { k } if k < 1 => {
                Err(TransformError::InvalidParameter(format!("k must be >= 1, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

/// A transformer bound to explicit columns. Multi-column transformers with an
/// empty column list act on every feature produced so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerSpec {
    #[serde(flatten)]
    pub kind: TransformKind,
    #[serde(default)]
    pub columns: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("empty selection for {0}")]
    EmptySelection(String),
    #[error("arity mismatch: fitted on {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("{kind} cannot consume {input} input")]
    WrongInput { kind: &'static str, input: &'static str },
    #[error("invalid transformer parameter: {0}")]
    InvalidParameter(String),
    #[error("regression target value {0:?} is not a number")]
    UnparseableRegressionTarget(String),
    #[error("missing label at row {0}")]
    MissingLabel(usize),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
}

/// Input handed to a transformer.
#[derive(Debug, Clone, Copy)]
pub enum TransformInput<'a> {
    /// One numeric column; NaN marks missing.
    Numeric(&'a [f64]),
    /// One raw string column.
    Strings(&'a [Option<String>]),
    /// A dense feature matrix.
    Matrix(&'a NumericMatrix),
}

impl TransformInput<'_> {
    fn label(&self) -> &'static str {
        match self {
            TransformInput::Numeric(_) => "numeric",
            TransformInput::Strings(_) => "string",
            TransformInput::Matrix(_) => "matrix",
        }
    }

    fn n_rows(&self) -> usize {
        match self {
            TransformInput::Numeric(v) => v.len(),
            TransformInput::Strings(v) => v.len(),
            TransformInput::Matrix(m) => m.n_rows(),
        }
    }
}

/// Parses raw cells into a numeric column, NaN for missing or unparseable cells.
pub fn parse_numeric_column(values: &[Option<String>]) -> Vec<f64> {
    values
        .iter()
        .map(|v| v.as_deref().and_then(parse_number).unwrap_or(f64::NAN))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TransformState {
    ImputeMean { mean: f64 },
    Standardize { mean: f64, std_dev: f64 },
    OneHot { categories: Vec<String> },
    QuantileBin { edges: Vec<f64>, fill: f64 },
    LogTransform { fill: f64 },
    Tfidf { vocabulary: Vec<String>, idf: Vec<f64> },
    Pca { mean: Vec<f64>, components: Vec<Vec<f64>>, explained_variance: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransformer {
    pub kind: TransformKind,
    pub state: TransformState,
    pub n_inputs: usize,
    pub n_outputs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn finite_mean(values: &[f64]) -> Option<f64> {
    let (sum, n) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fill_or_warn(values: &[f64], kind: &str, warnings: &mut Vec<String>) -> f64 {
    finite_mean(values).unwrap_or_else(|| {
        let msg = format!("{kind}: selected column has no numeric values; imputing 0");
        log::warn!("{msg}");
        warnings.push(msg);
        0.0
    })
}

/// Lowercases, splits on non-alphanumerics and drops tokens shorter than 2 chars.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

impl FittedTransformer {
    pub fn fit(kind: TransformKind, data: TransformInput<'_>) -> Result<Self, TransformError> {
        kind.validate()?;
        if data.n_rows() == 0 {
            return Err(TransformError::EmptySelection(kind.name().into()));
        }
        let wrong = || TransformError::WrongInput {
            kind: kind.name(),
            input: data.label(),
        };
        let mut warnings = Vec::new();
        let (state, n_inputs, n_outputs) = match (kind, data) {
            (TransformKind::ImputeMean, TransformInput::Numeric(v)) => {
                let mean = fill_or_warn(v, "impute_mean", &mut warnings);
                (TransformState::ImputeMean { mean }, 1, 1)
            }
            (TransformKind::Standardize, TransformInput::Numeric(v)) => {
                let mean = fill_or_warn(v, "standardize", &mut warnings);
                let filled: Vec<f64> = v.iter().map(|x| if x.is_finite() { *x } else { mean }).collect();
                let var = filled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / filled.len() as f64;
                let sd = var.sqrt();
                let std_dev = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
                (TransformState::Standardize { mean, std_dev }, 1, 1)
            }
            (TransformKind::LogTransform, TransformInput::Numeric(v)) => {
                let fill = fill_or_warn(v, "log_transform", &mut warnings);
                if v.iter().any(|x| *x < 0.0) {
                    let msg = "log_transform: negative inputs clamped at 0".to_string();
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                (TransformState::LogTransform { fill }, 1, 1)
            }
            (TransformKind::QuantileBin { bins }, TransformInput::Numeric(v)) => {
                let fill = fill_or_warn(v, "quantile_bin", &mut warnings);
                let mut sorted: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
                sorted.sort_by(f64::total_cmp);
                let mut edges: Vec<f64> = Vec::new();
                if !sorted.is_empty() {
                    for i in 1..bins {
                        let e = nearest_rank(&sorted, 100.0 * i as f64 / bins as f64);
                        if edges.last().is_none_or(|&last| e > last) {
                            edges.push(e);
                        }
                    }
                }
                (TransformState::QuantileBin { edges, fill }, 1, 1)
            }
            (TransformKind::OneHot, TransformInput::Strings(v)) => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for s in v.iter().flatten() {
                    *counts.entry(s.as_str()).or_default() += 1;
                }
                let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                ranked.truncate(ONE_HOT_MAX_CATEGORIES);
                let mut categories: Vec<String> = ranked.into_iter().map(|(s, _)| s.to_string()).collect();
                categories.sort();
                let n_out = categories.len() + 1;
                (TransformState::OneHot { categories }, 1, n_out)
            }
            (TransformKind::Tfidf { max_features }, TransformInput::Strings(v)) => {
                let mut df: BTreeMap<String, usize> = BTreeMap::new();
                for doc in v {
                    let mut toks = tokenize(doc.as_deref().unwrap_or(""));
                    toks.sort();
                    toks.dedup();
                    for t in toks {
                        *df.entry(t).or_default() += 1;
                    }
                }
                let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                ranked.truncate(max_features);
                ranked.sort_by(|a, b| a.0.cmp(&b.0));
                let n_docs = v.len() as f64;
                let idf = ranked
                    .iter()
                    .map(|(_, d)| ((1.0 + n_docs) / (1.0 + *d as f64)).ln() + 1.0)
                    .collect();
                let vocabulary: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
                let n_out = vocabulary.len();
                (TransformState::Tfidf { vocabulary, idf }, 1, n_out)
            }
            (TransformKind::Pca { k }, TransformInput::Matrix(m)) => {
                let d = m.n_cols();
                if d == 0 {
                    return Err(TransformError::EmptySelection("pca".into()));
                }
                fit_pca(m, k)
            }
            _ => return Err(wrong()),
        };
        Ok(Self {
            kind,
            state,
            n_inputs,
            n_outputs,
            warnings,
        })
    }

    pub fn apply(&self, data: TransformInput<'_>) -> Result<NumericMatrix, TransformError> {
        let wrong = || TransformError::WrongInput {
            kind: self.kind.name(),
            input: data.label(),
        };
        let n = data.n_rows();
        match (&self.state, data) {
            (state, TransformInput::Numeric(v)) if self.kind.is_numeric() => {
                let out: Vec<f64> = v.iter().map(|&x| self.apply_scalar(state, x)).collect();
                Ok(NumericMatrix::from_row_major(n, 1, out))
            }
            (TransformState::OneHot { categories }, TransformInput::Strings(v)) => {
                let width = categories.len() + 1;
                let mut m = NumericMatrix::zeros(n, width);
                for (i, cell) in v.iter().enumerate() {
                    let slot = cell
                        .as_deref()
                        .and_then(|s| categories.binary_search_by(|c| c.as_str().cmp(s)).ok())
                        .unwrap_or(categories.len());
                    m.set(i, slot, 1.0);
                }
                Ok(m)
            }
            (TransformState::Tfidf { vocabulary, idf }, TransformInput::Strings(v)) => {
                let mut m = NumericMatrix::zeros(n, vocabulary.len());
                for (i, doc) in v.iter().enumerate() {
                    let row = m.row_mut(i);
                    for tok in tokenize(doc.as_deref().unwrap_or("")) {
                        if let Ok(j) = vocabulary.binary_search(&tok) {
                            row[j] += idf[j];
                        }
                    }
                    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.iter_mut().for_each(|x| *x /= norm);
                    }
                }
                Ok(m)
            }
            (TransformState::Pca { mean, components, .. }, TransformInput::Matrix(x)) => {
                if x.n_cols() != self.n_inputs {
                    return Err(TransformError::ArityMismatch {
                        expected: self.n_inputs,
                        got: x.n_cols(),
                    });
                }
                let mut out = NumericMatrix::zeros(n, components.len());
                for i in 0..n {
                    let row = x.row(i);
                    for (c, comp) in components.iter().enumerate() {
                        let mut s = 0.0;
                        for j in 0..mean.len() {
                            let v = if row[j].is_finite() { row[j] } else { mean[j] };
                            s += (v - mean[j]) * comp[j];
                        }
                        out.set(i, c, s);
                    }
                }
                Ok(out)
            }
            (_, TransformInput::Matrix(x)) if x.n_cols() != self.n_inputs => Err(TransformError::ArityMismatch {
                expected: self.n_inputs,
                got: x.n_cols(),
            }),
            _ => Err(wrong()),
        }
    }

    fn apply_scalar(&self, state: &TransformState, x: f64) -> f64 {
        match state {
            TransformState::ImputeMean { mean } => {
                if x.is_finite() {
                    x
                } else {
                    *mean
                }
            }
            TransformState::Standardize { mean, std_dev } => {
                let v = if x.is_finite() { x } else { *mean };
                (v - mean) / std_dev
            }
            TransformState::LogTransform { fill } => {
                let v = if x.is_finite() { x } else { *fill };
                v.max(0.0).ln_1p()
            }
            TransformState::QuantileBin { edges, fill } => {
                let v = if x.is_finite() { x } else { *fill };
                edges.iter().take_while(|&&e| e < v).count() as f64
            }
            _ => unreachable!("non-numeric state in numeric path"),
        }
    }

    /// Maps PCA scores back to input space. `None` for non-PCA transformers.
    pub fn pca_reconstruct(&self, scores: &NumericMatrix) -> Option<NumericMatrix> {
        let TransformState::Pca { mean, components, .. } = &self.state else {
            return None;
        };
        let mut out = NumericMatrix::zeros(scores.n_rows(), mean.len());
        for i in 0..scores.n_rows() {
            for j in 0..mean.len() {
                let s: f64 = components.iter().enumerate().map(|(c, comp)| scores.get(i, c) * comp[j]).sum();
                out.set(i, j, mean[j] + s);
            }
        }
        Some(out)
    }
}

fn fit_pca(m: &NumericMatrix, k: usize) -> (TransformState, usize, usize) {
    let n = m.n_rows();
    let d = m.n_cols();
    let mean: Vec<f64> = (0..d)
        .map(|j| finite_mean(&m.column(j)).unwrap_or(0.0))
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, j| {
        let v = m.get(i, j);
        (if v.is_finite() { v } else { mean[j] }) - mean[j]
    });
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let k = k.min(d).min(n).max(1);
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() + 1e-12 { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    (
        TransformState::Pca {
            mean,
            components,
            explained_variance,
        },
        d,
        k,
    )
}

/// Class names in lexicographic order (classification) or nothing (regression).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LabelMapping {
    pub classes: Vec<String>,
}

impl LabelMapping {
    pub fn from_values(values: &[Option<String>]) -> Self {
        let mut classes: Vec<String> = values.iter().flatten().cloned().collect();
        classes.sort();
        classes.dedup();
        Self { classes }
    }

    pub fn encode(&self, value: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(value)).ok()
    }

    pub fn decode(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }
}

/// Encodes labels with an existing mapping (classification) or parses them (regression).
pub fn encode_labels_with(
    target: &[Option<String>],
    problem: ProblemType,
    mapping: &LabelMapping,
) -> Result<Vec<f64>, TransformError> {
    target
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let v = v.as_deref().ok_or(TransformError::MissingLabel(i))?;
            if problem.is_classification() {
                mapping
                    .encode(v)
                    .map(|c| c as f64)
                    .ok_or_else(|| TransformError::UnknownClass(v.to_string()))
            } else {
                parse_number(v).ok_or_else(|| TransformError::UnparseableRegressionTarget(v.to_string()))
            }
        })
        .collect()
}

pub fn encode_labels(
    target: &[Option<String>],
    problem: ProblemType,
) -> Result<(Vec<f64>, LabelMapping), TransformError> {
    let mapping = if problem.is_classification() {
        LabelMapping::from_values(target)
    } else {
        LabelMapping::default()
    };
    let y = encode_labels_with(target, problem, &mapping)?;
    Ok((y, mapping))
}
