//! Dataset-level meta-features.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{parse_number, ColumnProfile, ProblemType, RawTable};
use crate::learners::{evaluate, train, Algorithm, HpConfig, HpValue};
use crate::matrix::NumericMatrix;
use crate::schema::{ColumnType, SchemaReport};
use crate::transforms::encode_labels;

pub const LANDMARK_MAX_ROWS: usize = 1000;
const LANDMARK_DEPTH: i64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatures {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Primary-type counts over feature columns.
    pub type_distribution: BTreeMap<ColumnType, usize>,
    /// Holdout loss of a depth-3 single tree on a seeded subsample.
    pub landmark_score: f64,
    /// Absolute Pearson correlation with the target, numeric columns only.
    pub target_correlations: BTreeMap<String, f64>,
    pub size_bytes: usize,
    pub density: f64,
}

fn pearson_abs(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).abs()
    }
}

/// Numeric and categorical features as a dense matrix: numbers mean-imputed,
/// categories as lexicographic codes.
fn landmark_features(t: &RawTable, schema: &SchemaReport) -> NumericMatrix {
    let mut columns = Vec::new();
    for col in &schema.columns {
        let values = t.column(col.index);
        match col.primary() {
            ColumnType::Numeric => {
                let parsed: Vec<Option<f64>> = values.iter().map(|v| v.as_deref().and_then(parse_number)).collect();
                let present: Vec<f64> = parsed.iter().flatten().copied().collect();
                let mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
                columns.push(parsed.into_iter().map(|v| v.unwrap_or(mean)).collect());
            }
            ColumnType::Categorical => {
                let mut levels: Vec<&str> = values.iter().flatten().map(String::as_str).collect();
                levels.sort_unstable();
                levels.dedup();
                columns.push(
                    values
                        .iter()
                        .map(|v| match v {
                            Some(s) => levels.binary_search(&s.as_str()).map_or(-1.0, |i| i as f64),
                            None => -1.0,
                        })
                        .collect(),
                );
            }
            _ => {}
        }
    }
    if columns.is_empty() {
        columns.push(vec![0.0; t.n_rows()]);
    }
    NumericMatrix::from_columns(t.n_rows(), &columns)
}

fn landmark_score(t: &RawTable, schema: &SchemaReport, problem: ProblemType, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = t.n_rows();
    let m = n.min(LANDMARK_MAX_ROWS);
    let mut rows = sample(&mut rng, n, m).into_vec();
    rows.sort_unstable();
    let sub = t.select_rows(&rows);
    let Ok((y, _)) = encode_labels(&sub.target(), problem) else {
        return f64::MAX;
    };
    let x = landmark_features(&sub, schema);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let n_valid = (m / 5).max(1).min(m.saturating_sub(1));
    let (valid, train_rows) = order.split_at(n_valid);
    if train_rows.is_empty() {
        return f64::MAX;
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<f64>>();
    let hp = HpConfig::new()
        .with("n_trees", HpValue::Int(1))
        .with("max_depth", HpValue::Int(LANDMARK_DEPTH))
        .with("learning_rate", HpValue::Float(1.0))
        .with("min_child_rows", HpValue::Int(1))
        .with("subsample", HpValue::Float(1.0));
    let y_train = pick(train_rows);
    let model = match train(Algorithm::Gbt, problem, &x.select_rows(train_rows), &y_train, &hp, None, seed) {
        Ok(m) => m,
        // a subsample holding one class: the constant predictor is exact on train
        Err(_) => return pick(valid).iter().filter(|&&v| v != y_train[0]).count() as f64 / valid.len() as f64,
    };
    match model.predict(&x.select_rows(valid)) {
        Ok(p) => evaluate(&p, &pick(valid)).value,
        Err(_) => f64::MAX,
    }
}

pub fn compute_meta_features(
    t: &RawTable,
    profiles: &[ColumnProfile],
    schema: &SchemaReport,
    problem: ProblemType,
    seed: u64,
) -> MetaFeatures {
    let mut type_distribution: BTreeMap<ColumnType, usize> = BTreeMap::new();
    for c in &schema.columns {
        *type_distribution.entry(c.primary()).or_default() += 1;
    }
    let cells = t.n_rows() * t.n_cols();
    let missing: usize = profiles.iter().map(|p| p.n_missing).sum();
    let density = if cells == 0 { 0.0 } else { 1.0 - missing as f64 / cells as f64 };

    let mut target_correlations = BTreeMap::new();
    if let Ok((y, _)) = encode_labels(&t.target(), problem) {
        for c in schema.columns_of_primary(ColumnType::Numeric) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = t
                .column(c.index)
                .iter()
                .zip(&y)
                .filter_map(|(v, &yv)| v.as_deref().and_then(parse_number).map(|x| (x, yv)))
                .unzip();
            target_correlations.insert(c.name.clone(), pearson_abs(&xs, &ys));
        }
    }

    MetaFeatures {
        n_rows: t.n_rows(),
        n_cols: t.n_cols(),
        type_distribution,
        landmark_score: landmark_score(t, schema, problem, seed),
        target_correlations,
        size_bytes: t.size_bytes(),
        density: density.clamp(0.0, 1.0),
    }
}
