//! Strategies: dataset-independent recipes of conditional column rules,
//! dataset-level rules and an algorithm, parameterized by the symbolic
//! values X1..X4. Realizing a strategy against a concrete dataset yields a
//! [`PipelineDefinition`].

mod builtin;
mod definition;
mod execute;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use builtin::builtin_portfolio;
pub use definition::{
    parse_definition, parse_definitions, read_definitions, serialize_definition, write_definitions,
    DefinitionError, PipelineDefinition,
};
pub use execute::{execute_preprocessing, FittedPipeline, PreparedData, PreprocessCache};

use crate::data::{ColumnProfile, ImbalanceInfo, MetaFeatures, ProblemType};
use crate::learners::{default_hp_space, Algorithm, HpConfig, HpValue};
use crate::schema::{ColumnType, SchemaReport};
use crate::transforms::{TransformKind, TransformerSpec};

pub const MAX_STRATEGIES: usize = 10;
pub const MAX_SEEDS: usize = 5;
pub const DEFAULT_TFIDF_FEATURES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("no strategy in the portfolio applies to this dataset")]
    NoApplicableStrategy,
    #[error("strategy {strategy}: {reason}")]
    RealizationMismatch { strategy: String, reason: String },
    #[error("invalid portfolio: {0}")]
    InvalidPortfolio(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symbol {
    X1,
    X2,
    X3,
    X4,
}

/// A literal or a reference to one of the symbolic hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Symbol(Symbol),
}

impl Param {
    pub fn resolve(&self, b: &Bindings) -> f64 {
        match self {
            Param::Value(v) => *v,
            Param::Symbol(Symbol::X1) => b.x1,
            Param::Symbol(Symbol::X2) => b.x2,
            Param::Symbol(Symbol::X3) => b.x3,
            Param::Symbol(Symbol::X4) => b.x4,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Value(v) => write!(f, "{v}"),
            Param::Symbol(s) => write!(f, "{s:?}"),
        }
    }
}

/// Concrete values of the symbolic hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bindings {
    /// Outlier count above which a numeric column is binned.
    pub x1: f64,
    /// Number of quantile bins.
    pub x2: f64,
    /// Column count above which PCA is applied.
    pub x3: f64,
    /// Fraction of columns kept by PCA.
    pub x4: f64,
}

impl Default for Bindings {
    fn default() -> Self {
        Self {
            x1: 10.0,
            x2: 5.0,
            x3: 100.0,
            x4: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "when", rename_all = "snake_case")]
pub enum ColumnCondition {
    Always,
    OutliersAbove { threshold: Param },
    AbsSkewAbove { threshold: Param },
    MissingAbove { threshold: Param },
}

impl ColumnCondition {
    /// Whether the condition holds, plus a description of the evidence.
    fn check(&self, p: &ColumnProfile, b: &Bindings) -> (bool, String) {
        match self {
            ColumnCondition::Always => (true, "always".into()),
            ColumnCondition::OutliersAbove { threshold } => {
                let t = threshold.resolve(b);
                let v = p.outlier_count_3sigma as f64;
                (v > t, format!("outlier_count_3sigma={v} > {threshold}={t}"))
            }
            ColumnCondition::AbsSkewAbove { threshold } => {
                let t = threshold.resolve(b);
                let v = p.skewness.abs();
                (v > t, format!("|skewness|={v:.3} > {threshold}={t}"))
            }
            ColumnCondition::MissingAbove { threshold } => {
                let t = threshold.resolve(b);
                let v = p.missing_fraction;
                (v > t, format!("missing_fraction={v:.3} > {threshold}={t}"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "when", rename_all = "snake_case")]
pub enum DatasetCondition {
    Always,
    ColumnsAbove { threshold: Param },
    RowsAbove { threshold: Param },
}

impl DatasetCondition {
    fn check(&self, mf: &MetaFeatures, b: &Bindings) -> (bool, String) {
        match self {
            DatasetCondition::Always => (true, "always".into()),
            DatasetCondition::ColumnsAbove { threshold } => {
                let t = threshold.resolve(b);
                (mf.n_cols as f64 > t, format!("n_cols={} > {threshold}={t}", mf.n_cols))
            }
            DatasetCondition::RowsAbove { threshold } => {
                let t = threshold.resolve(b);
                (mf.n_rows as f64 > t, format!("n_rows={} > {threshold}={t}", mf.n_rows))
            }
        }
    }
}

/// A transformer with possibly symbolic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionTemplate {
    ImputeMean,
    Standardize,
    OneHot,
    LogTransform,
    QuantileBin { bins: Param },
    Tfidf { max_features: Param },
    /// Keeps `round(fraction * n_cols)` components.
    Pca { fraction: Param },
}

impl ActionTemplate {
    fn realize(&self, b: &Bindings, n_cols: usize) -> TransformKind {
        let count = |p: &Param| p.resolve(b).round().max(0.0) as usize;
        match self {
            ActionTemplate::ImputeMean => TransformKind::ImputeMean,
            ActionTemplate::Standardize => TransformKind::Standardize,
            ActionTemplate::OneHot => TransformKind::OneHot,
            ActionTemplate::LogTransform => TransformKind::LogTransform,
            ActionTemplate::QuantileBin { bins } => TransformKind::QuantileBin { bins: count(bins) },
            ActionTemplate::Tfidf { max_features } => TransformKind::Tfidf {
                max_features: count(max_features),
            },
            ActionTemplate::Pca { fraction } => TransformKind::Pca {
                k: ((fraction.resolve(b) * n_cols as f64).round() as usize).max(1),
            },
        }
    }

    fn is_text(&self) -> bool {
        matches!(self, ActionTemplate::Tfidf { .. })
    }

    fn is_pca(&self) -> bool {
        matches!(self, ActionTemplate::Pca { .. })
    }
}

fn describe(kind: &TransformKind) -> String {
    match kind {
        TransformKind::QuantileBin { bins } => format!("quantile_bin(bins={bins})"),
        TransformKind::Tfidf { max_features } => format!("tfidf(max_features={max_features})"),
        TransformKind::Pca { k } => format!("pca(k={k})"),
        other => other.name().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRule {
    pub column_type: ColumnType,
    pub condition: ColumnCondition,
    pub actions: Vec<ActionTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRule {
    pub condition: DatasetCondition,
    pub action: ActionTemplate,
}

/// Transformers for columns no rule claimed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDefaults {
    pub numeric: Vec<ActionTemplate>,
    pub categorical: Vec<ActionTemplate>,
    pub text: Vec<ActionTemplate>,
}

impl Default for TypeDefaults {
    fn default() -> Self {
        Self {
            numeric: vec![ActionTemplate::ImputeMean, ActionTemplate::Standardize],
            categorical: vec![ActionTemplate::OneHot],
            text: vec![ActionTemplate::Tfidf {
                max_features: Param::Value(DEFAULT_TFIDF_FEATURES as f64),
            }],
        }
    }
}

impl TypeDefaults {
    fn for_type(&self, t: ColumnType) -> &[ActionTemplate] {
        match t {
            ColumnType::Numeric => &self.numeric,
            ColumnType::Categorical => &self.categorical,
            ColumnType::Text => &self.text,
            ColumnType::Datetime | ColumnType::Ignored => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub id: String,
    #[serde(default)]
    pub column_rules: Vec<ColumnRule>,
    #[serde(default)]
    pub dataset_rules: Vec<DatasetRule>,
    #[serde(default)]
    pub defaults: TypeDefaults,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub bindings: Bindings,
    /// Zero-shot configurations, at most five.
    #[serde(default)]
    pub seeds: Vec<HpConfig>,
}

impl Strategy {
    fn uses_text_rules(&self) -> bool {
        self.column_rules.iter().any(|r| r.actions.iter().any(ActionTemplate::is_text))
    }

    fn uses_pca(&self) -> bool {
        self.dataset_rules.iter().any(|r| r.action.is_pca())
            || self.column_rules.iter().any(|r| r.actions.iter().any(ActionTemplate::is_pca))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("strategy id is empty".into());
        }
        if self.seeds.len() > MAX_SEEDS {
            return Err(format!("{}: at most {MAX_SEEDS} seeds", self.id));
        }
        if self.column_rules.iter().any(|r| r.actions.iter().any(ActionTemplate::is_pca)) {
            return Err(format!("{}: pca is a dataset-level action", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PortfolioMetadata {
    /// Fingerprint of the performance table the portfolio was selected from.
    #[serde(default)]
    pub source_table: Option<String>,
    #[serde(default)]
    pub objective: Option<f64>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyPortfolio {
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub metadata: PortfolioMetadata,
}

impl StrategyPortfolio {
    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.strategies.len() > MAX_STRATEGIES {
            return Err(StrategyError::InvalidPortfolio(format!(
                "{} strategies, at most {MAX_STRATEGIES}",
                self.strategies.len()
            )));
        }
        let mut ids: Vec<&str> = self.strategies.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(StrategyError::InvalidPortfolio("duplicate strategy id".into()));
        }
        for s in &self.strategies {
            s.validate().map_err(StrategyError::InvalidPortfolio)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, StrategyError> {
        let p: Self = serde_json::from_str(text).map_err(|e| StrategyError::InvalidPortfolio(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("portfolio serializes")
    }
}

/// Minimum column count for PCA-bearing strategies.
pub const PCA_MIN_COLUMNS: usize = 3;

/// Filters the portfolio by applicability, preserving order.
pub fn recommend_strategies(
    mf: &MetaFeatures,
    schema: &SchemaReport,
    portfolio: &StrategyPortfolio,
) -> Result<Vec<Strategy>, StrategyError> {
    let has_text = schema.has_primary(ColumnType::Text);
    let out: Vec<Strategy> = portfolio
        .strategies
        .iter()
        .filter(|s| has_text || !s.uses_text_rules())
        .filter(|s| mf.n_cols >= PCA_MIN_COLUMNS || !s.uses_pca())
        .take(MAX_STRATEGIES)
        .cloned()
        .collect();
    if out.is_empty() {
        return Err(StrategyError::NoApplicableStrategy);
    }
    Ok(out)
}

/// Dataset facts realization depends on.
#[derive(Debug, Clone, Copy)]
pub struct RealizeContext<'a> {
    pub schema: &'a SchemaReport,
    /// One profile per table column, indexed like the table.
    pub profiles: &'a [ColumnProfile],
    pub meta: &'a MetaFeatures,
    pub problem: ProblemType,
    pub imbalance: Option<&'a ImbalanceInfo>,
    /// Rows the tuner will train on.
    pub n_train_rows: usize,
}

/// Turns a strategy into explicit transformers on explicit columns plus an
/// algorithm search space.
pub fn realize(s: &Strategy, ctx: &RealizeContext<'_>, index: usize) -> Result<PipelineDefinition, StrategyError> {
    let b = &s.bindings;
    let mismatch = |reason: String| StrategyError::RealizationMismatch {
        strategy: s.id.clone(),
        reason,
    };
    for r in &s.column_rules {
        if matches!(r.column_type, ColumnType::Ignored) {
            return Err(mismatch("rules cannot target ignored columns".into()));
        }
    }
    let mut transformers: Vec<TransformerSpec> = Vec::new();
    let mut firings: Vec<String> = Vec::new();
    let mut claimed = vec![false; ctx.schema.columns.len()];
    let n_cols = ctx.meta.n_cols;

    for rule in &s.column_rules {
        let mut cols: Vec<String> = Vec::new();
        for (ci, col) in ctx.schema.columns.iter().enumerate() {
            if col.primary() != rule.column_type {
                continue;
            }
            let profile = ctx
                .profiles
                .get(col.index)
                .ok_or_else(|| mismatch(format!("no profile for column {}", col.name)))?;
            let (fires, evidence) = rule.condition.check(profile, b);
            if fires {
                let names: Vec<String> = rule.actions.iter().map(|a| describe(&a.realize(b, n_cols))).collect();
                firings.push(format!("{} on {}: {}", names.join(" + "), col.name, evidence));
                claimed[ci] = true;
                cols.push(col.name.clone());
            }
        }
        if !cols.is_empty() {
            for a in &rule.actions {
                transformers.push(TransformerSpec {
                    kind: a.realize(b, n_cols),
                    columns: cols.clone(),
                });
            }
        }
    }

    for t in [ColumnType::Numeric, ColumnType::Categorical, ColumnType::Text] {
        let cols: Vec<String> = ctx
            .schema
            .columns
            .iter()
            .enumerate()
            .filter(|(ci, c)| !claimed[*ci] && c.primary() == t)
            .map(|(_, c)| c.name.clone())
            .collect();
        if cols.is_empty() {
            continue;
        }
        for a in s.defaults.for_type(t) {
            transformers.push(TransformerSpec {
                kind: a.realize(b, n_cols),
                columns: cols.clone(),
            });
        }
    }

    for rule in &s.dataset_rules {
        let (fires, evidence) = rule.condition.check(ctx.meta, b);
        if fires {
            let kind = rule.action.realize(b, n_cols);
            firings.push(format!("{} on all features: {evidence}", describe(&kind)));
            transformers.push(TransformerSpec { kind, columns: vec![] });
        }
    }

    let mut space = default_hp_space(s.algorithm, ctx.problem, ctx.n_train_rows, n_cols);
    if ctx.problem == ProblemType::BinaryClassification && ctx.imbalance.is_some_and(|i| i.is_imbalanced) {
        space
            .statics
            .insert("class_weight".into(), HpValue::Str("balanced".into()));
        firings.push("class_weight=balanced: minority class below the imbalance threshold".into());
    }
    Ok(PipelineDefinition {
        id: format!("{:02}-{}", index + 1, s.id),
        strategy: s.id.clone(),
        problem_type: ctx.problem,
        target: ctx.schema.target.clone(),
        rule_firings: firings,
        transformers,
        algorithm: s.algorithm,
        space,
        seeds: s.seeds.clone(),
        resources: None,
    })
}
