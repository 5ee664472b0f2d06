//! Fitting a definition's transformers on the training fold.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::PipelineDefinition;
use crate::data::{ProblemType, RawTable};
use crate::matrix::NumericMatrix;
use crate::transforms::{
    encode_labels_with, parse_numeric_column, FittedTransformer, LabelMapping, TransformError, TransformInput,
    TransformKind,
};

/// Per-column chain. Numeric steps rewrite a working vector parsed from the
/// raw cells; `one_hot` and `tfidf` emit blocks from the raw cells. The
/// column's output is its blocks followed by the working vector (if any
/// numeric step ran).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnChain {
    pub column: String,
    pub steps: Vec<FittedTransformer>,
    /// Output width of the chain.
    pub width: usize,
}

/// A multi-column step over the outputs of `columns` (all features if empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStep {
    pub columns: Vec<String>,
    pub transformer: FittedTransformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub pipeline_id: String,
    pub problem_type: ProblemType,
    pub target: String,
    pub labels: LabelMapping,
    pub chains: Vec<ColumnChain>,
    pub multi: Vec<MultiStep>,
    pub feature_names: Vec<String>,
}

/// Preprocessed folds of one pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train_x: NumericMatrix,
    pub valid_x: NumericMatrix,
    pub train_y: Vec<f64>,
    pub valid_y: Vec<f64>,
    pub fitted: FittedPipeline,
}

fn ctx(id: &str, e: TransformError) -> String {
    format!("pipeline {id}: {e}")
}

fn column_values(t: &RawTable, name: &str) -> Result<Vec<Option<String>>, String> {
    t.column_index(name)
        .map(|i| t.column(i))
        .ok_or_else(|| format!("column {name:?} is missing from the input"))
}

fn run_chain(steps: &[FittedTransformer], raw: &[Option<String>], n_rows: usize) -> Result<Vec<Vec<f64>>, TransformError> {
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    let mut working: Option<Vec<f64>> = None;
    for s in steps {
        if s.kind.is_numeric() {
            let input = working.take().unwrap_or_else(|| parse_numeric_column(raw));
            working = Some(s.apply(TransformInput::Numeric(&input))?.column(0));
        } else {
            let m = s.apply(TransformInput::Strings(raw))?;
            blocks.extend((0..m.n_cols()).map(|j| m.column(j)));
        }
    }
    blocks.extend(working);
    debug_assert!(blocks.iter().all(|b| b.len() == n_rows));
    Ok(blocks)
}

fn fit_chain(kinds: &[TransformKind], raw: &[Option<String>]) -> Result<(Vec<FittedTransformer>, Vec<Vec<f64>>), TransformError> {
    let mut steps = Vec::new();
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    let mut working: Option<Vec<f64>> = None;
    for &kind in kinds {
        if kind.is_numeric() {
            let input = working.take().unwrap_or_else(|| parse_numeric_column(raw));
            let f = FittedTransformer::fit(kind, TransformInput::Numeric(&input))?;
            working = Some(f.apply(TransformInput::Numeric(&input))?.column(0));
            steps.push(f);
        } else {
            let f = FittedTransformer::fit(kind, TransformInput::Strings(raw))?;
            let m = f.apply(TransformInput::Strings(raw))?;
            blocks.extend((0..m.n_cols()).map(|j| m.column(j)));
            steps.push(f);
        }
    }
    blocks.extend(working);
    Ok((steps, blocks))
}

fn output_names(column: &str, steps: &[FittedTransformer]) -> Vec<String> {
    let mut names = Vec::new();
    let mut numeric = false;
    for s in steps {
        if s.kind.is_numeric() {
            numeric = true;
        } else {
            names.extend((0..s.n_outputs).map(|j| format!("{column}__{}{j}", s.kind.name())));
        }
    }
    if numeric {
        names.push(column.to_string());
    }
    names
}

/// Working matrix as named column vectors.
struct Features {
    names: Vec<String>,
    owner: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Features {
    fn matrix(&self, idx: &[usize], n_rows: usize) -> NumericMatrix {
        let cols: Vec<Vec<f64>> = idx.iter().map(|&i| self.values[i].clone()).collect();
        NumericMatrix::from_columns(n_rows, &cols)
    }

    fn select(&self, columns: &[String]) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| columns.is_empty() || columns.contains(&self.owner[i]))
            .collect()
    }

    /// Replaces the features at `idx` with `m`'s columns appended at the end.
    fn replace(&mut self, idx: &[usize], m: &NumericMatrix, label: &str) {
        let keep: Vec<usize> = (0..self.values.len()).filter(|i| !idx.contains(i)).collect();
        let mut names = Vec::new();
        let mut owner = Vec::new();
        let mut values = Vec::new();
        for i in keep {
            names.push(std::mem::take(&mut self.names[i]));
            owner.push(std::mem::take(&mut self.owner[i]));
            values.push(std::mem::take(&mut self.values[i]));
        }
        for j in 0..m.n_cols() {
            names.push(format!("{label}{j}"));
            owner.push(label.to_string());
            values.push(m.column(j));
        }
        *self = Features { names, owner, values };
    }
}

impl FittedPipeline {
    fn fit(def: &PipelineDefinition, train: &RawTable, labels: LabelMapping) -> Result<(Self, NumericMatrix), String> {
        let id = &def.id;
        let n = train.n_rows();
        let mut order: Vec<String> = Vec::new();
        let mut kinds: HashMap<String, Vec<TransformKind>> = HashMap::new();
        let mut multi_specs = Vec::new();
        for spec in &def.transformers {
            if spec.kind.is_multi_column() {
                multi_specs.push(spec);
                continue;
            }
            for c in &spec.columns {
                if !kinds.contains_key(c) {
                    order.push(c.clone());
                }
                kinds.entry(c.clone()).or_default().push(spec.kind);
            }
        }
        let mut chains = Vec::new();
        let mut feats = Features {
            names: vec![],
            owner: vec![],
            values: vec![],
        };
        for c in &order {
            let raw = column_values(train, c).map_err(|e| format!("pipeline {id}: {e}"))?;
            let (steps, blocks) = fit_chain(&kinds[c], &raw).map_err(|e| ctx(id, e))?;
            let names = output_names(c, &steps);
            feats.owner.extend(std::iter::repeat_n(c.clone(), names.len()));
            feats.names.extend(names);
            chains.push(ColumnChain {
                column: c.clone(),
                steps,
                width: blocks.len(),
            });
            feats.values.extend(blocks);
        }
        let mut multi = Vec::new();
        for (si, spec) in multi_specs.into_iter().enumerate() {
            let idx = feats.select(&spec.columns);
            let m = feats.matrix(&idx, n);
            let f = FittedTransformer::fit(spec.kind, TransformInput::Matrix(&m)).map_err(|e| ctx(id, e))?;
            let out = f.apply(TransformInput::Matrix(&m)).map_err(|e| ctx(id, e))?;
            feats.replace(&idx, &out, &format!("{}{si}_", spec.kind.name()));
            multi.push(MultiStep {
                columns: spec.columns.clone(),
                transformer: f,
            });
        }
        let x = NumericMatrix::from_columns(n, &feats.values);
        Ok((
            FittedPipeline {
                pipeline_id: id.clone(),
                problem_type: def.problem_type,
                target: def.target.clone(),
                labels,
                chains,
                multi,
                feature_names: feats.names,
            },
            x,
        ))
    }

    /// Applies the fitted transformers to a table with the same feature columns.
    pub fn transform(&self, t: &RawTable) -> Result<NumericMatrix, String> {
        let id = &self.pipeline_id;
        let n = t.n_rows();
        let mut feats = Features {
            names: vec![],
            owner: vec![],
            values: vec![],
        };
        for chain in &self.chains {
            let raw = column_values(t, &chain.column).map_err(|e| format!("pipeline {id}: {e}"))?;
            let blocks = run_chain(&chain.steps, &raw, n).map_err(|e| ctx(id, e))?;
            feats.names.extend(std::iter::repeat_n(String::new(), blocks.len()));
            feats.owner.extend(std::iter::repeat_n(chain.column.clone(), blocks.len()));
            feats.values.extend(blocks);
        }
        for (si, step) in self.multi.iter().enumerate() {
            let idx = feats.select(&step.columns);
            let m = feats.matrix(&idx, n);
            let out = step.transformer.apply(TransformInput::Matrix(&m)).map_err(|e| ctx(id, e))?;
            feats.replace(&idx, &out, &format!("{}{si}_", step.transformer.kind.name()));
        }
        Ok(NumericMatrix::from_columns(n, &feats.values))
    }

    pub fn encode_target(&self, t: &RawTable) -> Result<Vec<f64>, String> {
        encode_labels_with(&t.target(), self.problem_type, &self.labels).map_err(|e| ctx(&self.pipeline_id, e))
    }
}

/// Fits on `train`, applies to both folds and encodes labels. Classes are
/// collected from both folds so a class seen only in validation still has a code.
pub fn execute_preprocessing(def: &PipelineDefinition, train: &RawTable, valid: &RawTable) -> Result<PreparedData, String> {
    let labels = if def.problem_type.is_classification() {
        let mut all = train.target();
        all.extend(valid.target());
        LabelMapping::from_values(&all)
    } else {
        LabelMapping::default()
    };
    let (fitted, train_x) = FittedPipeline::fit(def, train, labels)?;
    let valid_x = fitted.transform(valid)?;
    let train_y = fitted.encode_target(train)?;
    let valid_y = fitted.encode_target(valid)?;
    Ok(PreparedData {
        train_x,
        valid_x,
        train_y,
        valid_y,
        fitted,
    })
}

/// Preprocessed folds keyed by pipeline id, computed once and shared by all trials.
#[derive(Debug, Default)]
pub struct PreprocessCache {
    entries: Mutex<HashMap<String, Arc<PreparedData>>>,
}

impl PreprocessCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> Option<Arc<PreparedData>> {
        self.entries.lock().expect("cache lock").get(id).cloned()
    }

    pub fn get_or_prepare(
        &self,
        def: &PipelineDefinition,
        train: &RawTable,
        valid: &RawTable,
    ) -> Result<Arc<PreparedData>, String> {
        if let Some(hit) = self.get(&def.id) {
            return Ok(hit);
        }
        let prepared = Arc::new(execute_preprocessing(def, train, valid)?);
        let mut map = self.entries.lock().expect("cache lock");
        Ok(map.entry(def.id.clone()).or_insert(prepared).clone())
    }
}
