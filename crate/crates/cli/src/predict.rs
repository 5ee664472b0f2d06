//! Persisted models and batch prediction.

use std::path::Path;

use automl_core::data::{MissingValues, RawTable};
use automl_core::learners::{evaluate, Algorithm, HpConfig, Loss, Model, Predictions};
use automl_core::strategy::FittedPipeline;
use serde::{Deserialize, Serialize};

use crate::{failed, JobError};

/// A trained pipeline: fitted preprocessing plus the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub pipeline: String,
    pub trial: usize,
    pub algorithm: Algorithm,
    pub config: HpConfig,
    pub valid_loss: Loss,
    pub preprocessing: FittedPipeline,
    pub model: Model,
}

impl SavedModel {
    pub fn save(&self, path: &Path) -> Result<(), JobError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(failed)?;
        }
        std::fs::write(path, serde_json::to_string(self).map_err(failed)?)
            .map_err(|e| failed(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, JobError> {
        let text = std::fs::read_to_string(path).map_err(|e| JobError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| failed(format!("{}: {e}", path.display())))
    }

    pub fn predict(&self, t: &RawTable) -> Result<Predictions, JobError> {
        let x = self.preprocessing.transform(t).map_err(failed)?;
        self.model.predict(&x).map_err(failed)
    }

    /// Loss on a labelled table.
    pub fn evaluate(&self, t: &RawTable) -> Result<Loss, JobError> {
        let y = self.preprocessing.encode_target(t).map_err(failed)?;
        Ok(evaluate(&self.predict(t)?, &y))
    }
}

/// Reads a CSV for prediction. The target column may be absent.
pub fn load_features(path: &Path, target: &str, missing: &MissingValues) -> Result<RawTable, JobError> {
    let text = std::fs::read_to_string(path).map_err(|e| JobError::Usage(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut header: Vec<String> = reader
        .headers()
        .map_err(failed)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let has_target = header.iter().any(|h| h == target);
    if !has_target {
        header.push(target.to_string());
    }
    let target_index = header.iter().position(|h| h == target).expect("target column present");
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(failed)?;
        let mut row: Vec<Option<String>> = record
            .iter()
            .map(|c| (!missing.is_missing(c)).then(|| c.to_string()))
            .collect();
        if !has_target {
            row.push(None);
        }
        cells.push(row);
    }
    RawTable::new(header, cells, target_index).map_err(failed)
}

/// Writes one prediction per row: the decoded class (plus class
/// probabilities) or the regression value.
pub fn predict_file(model_path: &Path, input: &Path, output: &Path) -> Result<usize, JobError> {
    let saved = SavedModel::load(model_path)?;
    let table = load_features(input, &saved.preprocessing.target, &MissingValues::default())?;
    let pred = saved.predict(&table)?;
    let mut w = csv::Writer::from_path(output).map_err(|e| failed(format!("{}: {e}", output.display())))?;
    match &pred {
        Predictions::Values(v) => {
            w.write_record(["prediction"]).map_err(failed)?;
            for p in v {
                w.write_record([p.to_string()]).map_err(failed)?;
            }
        }
        Predictions::Probabilities(m) => {
            let classes = &saved.preprocessing.labels.classes;
            let mut header = vec!["prediction".to_string()];
            header.extend(classes.iter().map(|c| format!("proba_{c}")));
            w.write_record(&header).map_err(failed)?;
            for (i, c) in pred.point().iter().enumerate() {
                let mut rec = vec![classes.get(*c as usize).cloned().unwrap_or_default()];
                rec.extend(m.row(i).iter().map(|p| p.to_string()));
                w.write_record(&rec).map_err(failed)?;
            }
        }
    }
    w.flush().map_err(failed)?;
    Ok(pred.len())
}
