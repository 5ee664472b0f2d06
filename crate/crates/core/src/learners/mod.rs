//! Built-in learners (boosted trees and a linear model), prediction and losses.

pub mod gbt;
pub mod linear;
mod space;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use space::{default_config, default_hp_space, loss_name, Domain, HpConfig, HpParam, HpSpace, HpValue};

use crate::data::ProblemType;
use crate::matrix::NumericMatrix;
use gbt::{fit_booster, sigmoid, Booster, BoostLoss, GbtParams, Presorted};
use linear::{fit_linear, softmax, LinearModel, LinearParams, Link};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("classification target has a single class")]
    SingleClass,
    #[error("feature arity mismatch: model expects {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("labels ({labels}) do not match rows ({rows})")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("missing hyperparameter {0}")]
    MissingHyperparameter(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training diverged to non-finite parameters")]
    Diverged,
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gbt,
    Linear,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Gbt => "gbt",
            Algorithm::Linear => "linear",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gbt" => Ok(Algorithm::Gbt),
            "linear" => Ok(Algorithm::Linear),
            other => Err(LearnerError::UnknownAlgorithm(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub problem: ProblemType,
    pub n_features: usize,
    pub learning_rate: f64,
    /// One booster for regression/binary, one per class (one-vs-rest) for multiclass.
    pub boosters: Vec<Booster>,
    /// Training objective after each round, summed over boosters.
    pub train_loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Model {
    Gbt(GbtModel),
    Linear { problem: ProblemType, model: LinearModel },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Values(Vec<f64>),
    /// Row-wise class probabilities.
    Probabilities(NumericMatrix),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Values(v) => v.len(),
            Predictions::Probabilities(m) => m.n_rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point predictions: values for regression, argmax class index otherwise.
    pub fn point(&self) -> Vec<f64> {
        match self {
            Predictions::Values(v) => v.clone(),
            Predictions::Probabilities(m) => (0..m.n_rows()).map(|i| argmax(m.row(i)) as f64).collect(),
        }
    }
}

/// Index of the largest entry, smallest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse-frequency class weights: `n / (K * n_c)` for each row's class.
pub fn balanced_weights(y: &[f64], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c as usize] += 1;
    }
    let n = y.len() as f64;
    y.iter()
        .map(|&c| n / (n_classes as f64 * counts[c as usize].max(1) as f64))
        .collect()
}

fn check_inputs(x: &NumericMatrix, y: &[f64], problem: ProblemType) -> Result<(), LearnerError> {
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFiniteInput);
    }
    if y.len() != x.n_rows() {
        return Err(LearnerError::LabelMismatch {
            labels: y.len(),
            rows: x.n_rows(),
        });
    }
    if x.n_rows() == 0 {
        return Err(LearnerError::EmptyTrainingSet);
    }
    if problem.is_classification() {
        let k = problem.n_classes();
        if y.iter().any(|&c| c < 0.0 || c as usize >= k || c.fract() != 0.0) {
            return Err(LearnerError::InvalidHyperparameter(format!("labels must be class indices in 0..{k}")));
        }
        if y.iter().all(|&c| c == y[0]) {
            return Err(LearnerError::SingleClass);
        }
    }
    Ok(())
}

/// Trains a model. `hp` must hold the tunables plus statics (`loss`,
/// `class_weight`, ...). Explicit `weights` override `class_weight`.
pub fn train(
    algorithm: Algorithm,
    problem: ProblemType,
    x: &NumericMatrix,
    y: &[f64],
    hp: &HpConfig,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<Model, LearnerError> {
    check_inputs(x, y, problem)?;
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None if problem.is_classification() && hp.str_or("class_weight", "none") == "balanced" => {
            balanced_weights(y, problem.n_classes())
        }
        None => vec![1.0; y.len()],
    };
    match algorithm {
        Algorithm::Gbt => {
            let params = GbtParams {
                n_trees: hp.usize("n_trees")?,
                max_depth: hp.usize("max_depth")?,
                learning_rate: hp.f64("learning_rate")?,
                min_child_rows: hp.usize("min_child_rows")?,
                subsample: hp.f64("subsample")?,
                reg_lambda: hp.get("reg_lambda").and_then(HpValue::as_f64).unwrap_or(1.0),
            };
            if !(params.learning_rate > 0.0) || !(params.subsample > 0.0 && params.subsample <= 1.0) {
                return Err(LearnerError::InvalidHyperparameter(format!("{params:?}")));
            }
            let presorted = Presorted::new(x);
            let (targets, loss): (Vec<Vec<f64>>, BoostLoss) = match problem {
                ProblemType::Regression => (vec![y.to_vec()], BoostLoss::SquaredError),
                ProblemType::BinaryClassification => (vec![y.to_vec()], BoostLoss::Logistic),
                ProblemType::MulticlassClassification { n_classes } => (
                    (0..n_classes)
                        .map(|k| y.iter().map(|&c| if c as usize == k { 1.0 } else { 0.0 }).collect())
                        .collect(),
                    BoostLoss::Logistic,
                ),
            };
            let mut boosters = Vec::with_capacity(targets.len());
            let mut history = vec![0.0; params.n_trees + 1];
            for (k, target) in targets.iter().enumerate() {
                let (b, h) = fit_booster(x, &presorted, target, &w, loss, &params, seed, k as u64)?;
                history.iter_mut().zip(&h).for_each(|(acc, v)| *acc += v);
                boosters.push(b);
            }
            Ok(Model::Gbt(GbtModel {
                problem,
                n_features: x.n_cols(),
                learning_rate: params.learning_rate,
                boosters,
                train_loss_history: history,
            }))
        }
        Algorithm::Linear => {
            let params = LinearParams {
                l2: hp.f64("l2")?,
                learning_rate: hp.f64("learning_rate")?,
                epochs: hp.usize("epochs")?,
                batch_size: hp.get("batch_size").and_then(HpValue::as_f64).map_or(32, |b| b as usize),
            };
            let (link, n_out) = match problem {
                ProblemType::Regression => (Link::Identity, 1),
                ProblemType::BinaryClassification => (Link::Logistic, 1),
                ProblemType::MulticlassClassification { n_classes } => (Link::Softmax, n_classes),
            };
            let model = fit_linear(x, y, &w, link, n_out, &params, seed)?;
            Ok(Model::Linear { problem, model })
        }
    }
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Gbt(m) => m.n_features,
            Model::Linear { model, .. } => model.n_features,
        }
    }

    pub fn problem(&self) -> ProblemType {
        match self {
            Model::Gbt(m) => m.problem,
            Model::Linear { problem, .. } => *problem,
        }
    }

    pub fn predict(&self, x: &NumericMatrix) -> Result<Predictions, LearnerError> {
        if x.n_cols() != self.n_features() {
            return Err(LearnerError::ArityMismatch {
                expected: self.n_features(),
                got: x.n_cols(),
            });
        }
        let n = x.n_rows();
        match self {
            Model::Gbt(m) => match m.problem {
                ProblemType::Regression => Ok(Predictions::Values(
                    (0..n).map(|i| m.boosters[0].margin(x.row(i))).collect(),
                )),
                ProblemType::BinaryClassification => {
                    let mut out = NumericMatrix::zeros(n, 2);
                    for i in 0..n {
                        let p = sigmoid(m.boosters[0].margin(x.row(i)));
                        out.set(i, 0, 1.0 - p);
                        out.set(i, 1, p);
                    }
                    Ok(Predictions::Probabilities(out))
                }
                ProblemType::MulticlassClassification { n_classes } => {
                    let mut out = NumericMatrix::zeros(n, n_classes);
                    for i in 0..n {
                        let ps: Vec<f64> = m.boosters.iter().map(|b| sigmoid(b.margin(x.row(i)))).collect();
                        let total: f64 = ps.iter().sum();
                        for (k, p) in ps.iter().enumerate() {
                            out.set(i, k, p / total);
                        }
                    }
                    Ok(Predictions::Probabilities(out))
                }
            },
            Model::Linear { model, .. } => match model.link {
                Link::Identity => Ok(Predictions::Values(
                    (0..n)
                        .map(|i| model.scores(x.row(i))[0] * model.target_scale + model.target_mean)
                        .collect(),
                )),
                Link::Logistic => {
                    let mut out = NumericMatrix::zeros(n, 2);
                    for i in 0..n {
                        let p = sigmoid(model.scores(x.row(i))[0]);
                        out.set(i, 0, 1.0 - p);
                        out.set(i, 1, p);
                    }
                    Ok(Predictions::Probabilities(out))
                }
                Link::Softmax => {
                    let mut out = NumericMatrix::zeros(n, model.n_out);
                    for i in 0..n {
                        for (k, p) in softmax(&model.scores(x.row(i))).into_iter().enumerate() {
                            out.set(i, k, p);
                        }
                    }
                    Ok(Predictions::Probabilities(out))
                }
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    ErrorRate,
    Logloss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub metric: Metric,
    pub value: f64,
    /// Recorded for classification; used as a tie-breaker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logloss: Option<f64>,
}

/// RMSE for regression, argmax error rate (plus log loss) for classification.
pub fn evaluate(predictions: &Predictions, y: &[f64]) -> Loss {
    let n = y.len().max(1) as f64;
    match predictions {
        Predictions::Values(v) => {
            let mse = v.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
            Loss {
                metric: Metric::Rmse,
                value: mse.sqrt(),
                logloss: None,
            }
        }
        Predictions::Probabilities(m) => {
            let mut wrong = 0usize;
            let mut ll = 0.0;
            for (i, &t) in y.iter().enumerate() {
                let row = m.row(i);
                if argmax(row) != t as usize {
                    wrong += 1;
                }
                ll -= row[t as usize].clamp(1e-15, 1.0).ln();
            }
            Loss {
                metric: Metric::ErrorRate,
                value: wrong as f64 / n,
                logloss: Some(ll / n),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gbt_hp(n_trees: i64, max_depth: i64, lr: f64) -> HpConfig {
        HpConfig::new()
            .with("n_trees", HpValue::Int(n_trees))
            .with("max_depth", HpValue::Int(max_depth))
            .with("learning_rate", HpValue::Float(lr))
            .with("min_child_rows", HpValue::Int(1))
            .with("subsample", HpValue::Float(1.0))
    }

    #[test]
    fn single_leaf_predicts_mean() {
        let x = NumericMatrix::from_columns(3, &[vec![0.0, 1.0, 2.0]]);
        let y = [1.0, 2.0, 3.0];
        let m = train(Algorithm::Gbt, ProblemType::Regression, &x, &y, &gbt_hp(1, 0, 1.0), None, 0).unwrap();
        assert_eq!(m.predict(&x).unwrap(), Predictions::Values(vec![2.0; 3]));
    }

    #[test]
    fn zero_weight_links() {
        let x = NumericMatrix::from_columns(2, &[vec![1.0, -4.0]]);
        let logistic = Model::Linear {
            problem: ProblemType::BinaryClassification,
            model: LinearModel::zeros(Link::Logistic, 1, 1),
        };
        let Predictions::Probabilities(p) = logistic.predict(&x).unwrap() else { panic!() };
        assert_eq!(p.row(0), &[0.5, 0.5]);
        let soft = Model::Linear {
            problem: ProblemType::MulticlassClassification { n_classes: 3 },
            model: LinearModel::zeros(Link::Softmax, 1, 3),
        };
        let Predictions::Probabilities(p) = soft.predict(&x).unwrap() else { panic!() };
        for v in p.row(1) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_recovers_slope() {
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 - 100.0) / 50.0).collect();
        let y: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
        // closed-form least squares oracle
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
        let ols = sxy / sxx;
        let x = NumericMatrix::from_columns(200, &[xs]);
        let hp = HpConfig::new()
            .with("l2", HpValue::Float(1e-9))
            .with("learning_rate", HpValue::Float(0.05))
            .with("epochs", HpValue::Int(100));
        let m = train(Algorithm::Linear, ProblemType::Regression, &x, &y, &hp, None, 3).unwrap();
        let Model::Linear { model, .. } = &m else { panic!() };
        let slope = model.weights[0] * model.target_scale;
        assert!((slope - ols).abs() < 1e-2, "slope {slope} vs {ols}");
        assert!((slope - 2.0).abs() < 1e-2);
    }

    #[test]
    fn class_weights_surface_minority() {
        // 99:1 data; the minority sits inside the majority's range
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1000;
        let mut xs = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let minority = i % 100 == 0;
            xs.push(if minority { rng.random_range(0.6..1.0) } else { rng.random_range(0.0..1.0) });
            y.push(if minority { 1.0 } else { 0.0 });
        }
        let x = NumericMatrix::from_columns(n, &[xs]);
        let hp = gbt_hp(20, 2, 0.3).with("min_child_rows", HpValue::Int(20));
        let p = ProblemType::BinaryClassification;
        let valid: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let vx = NumericMatrix::from_columns(100, &[valid]);
        let count_pos = |m: &Model| m.predict(&vx).unwrap().point().iter().filter(|&&c| c == 1.0).count();
        let plain = train(Algorithm::Gbt, p, &x, &y, &hp, None, 0).unwrap();
        let weights: Vec<f64> = y.iter().map(|&c| if c == 1.0 { 99.0 } else { 1.0 }).collect();
        let weighted = train(Algorithm::Gbt, p, &x, &y, &hp, Some(&weights), 0).unwrap();
        assert_eq!(count_pos(&plain), 0);
        assert!(count_pos(&weighted) >= 1);
    }

    #[test]
    fn evaluation_values() {
        let y = [0.0, 1.0, 1.0, 0.0];
        let probs = NumericMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4], vec![0.7, 0.3]]);
        let l = evaluate(&Predictions::Probabilities(probs), &y);
        assert_eq!((l.metric, l.value), (Metric::ErrorRate, 0.25));
        let l = evaluate(&Predictions::Values(vec![4.0, 5.0]), &[1.0, 2.0]);
        assert_eq!(l.value, 3.0);
        let l = evaluate(&Predictions::Values(vec![1.0, 2.0]), &[1.0, 2.0]);
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = NumericMatrix::from_columns(2, &[vec![f64::NAN, 1.0]]);
        assert_eq!(
            train(Algorithm::Gbt, ProblemType::Regression, &x, &[1.0, 2.0], &gbt_hp(1, 1, 0.1), None, 0),
            Err(LearnerError::NonFiniteInput)
        );
        let x = NumericMatrix::from_columns(2, &[vec![0.0, 1.0]]);
        assert_eq!(
            train(Algorithm::Gbt, ProblemType::BinaryClassification, &x, &[1.0, 1.0], &gbt_hp(1, 1, 0.1), None, 0),
            Err(LearnerError::SingleClass)
        );
        let m = train(Algorithm::Gbt, ProblemType::Regression, &x, &[1.0, 2.0], &gbt_hp(1, 1, 0.1), None, 0).unwrap();
        let wide = NumericMatrix::zeros(1, 3);
        assert!(matches!(m.predict(&wide), Err(LearnerError::ArityMismatch { .. })));
    }

    #[test]
    fn multiclass_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 90;
        let x = NumericMatrix::from_row_major(n, 2, (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let p = ProblemType::MulticlassClassification { n_classes: 3 };
        let m = train(Algorithm::Gbt, p, &x, &y, &gbt_hp(5, 2, 0.3), None, 0).unwrap();
        let Predictions::Probabilities(probs) = m.predict(&x).unwrap() else { panic!() };
        for i in 0..n {
            assert!((probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
