//! Job reports rendered as JSON and Markdown.

use std::fmt::Write as _;
use std::path::Path;

use automl_core::data::{ColumnProfile, ImbalanceInfo, MetaFeatures};
use automl_core::learners::Loss;
use automl_core::resources::ResourcePlan;
use automl_core::schema::SchemaReport;
use automl_core::tuner::Leaderboard;
use serde::{Deserialize, Serialize};

use crate::{failed, JobError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Completed,
    GeneratedOnly,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedProfile {
    pub column: String,
    pub profile: ColumnProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataAnalysis {
    pub target: String,
    pub problem_type: String,
    pub n_classes: usize,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub dropped_missing_target: usize,
    /// Profiles of the training fold.
    pub profiles: Vec<NamedProfile>,
    pub schema: SchemaReport,
    pub meta_features: MetaFeatures,
    pub imbalance: Option<ImbalanceInfo>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub id: String,
    pub strategy: String,
    pub algorithm: String,
    pub path: String,
    pub transformers: usize,
    pub rule_firings: Vec<String>,
    pub resources: Option<ResourcePlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub status: JobStatus,
    #[serde(default)]
    pub message: Option<String>,
    #[serde(default)]
    pub analysis: Option<DataAnalysis>,
    #[serde(default)]
    pub candidates: Vec<CandidateSummary>,
    #[serde(default)]
    pub leaderboard: Option<Leaderboard>,
    pub trials_issued: usize,
    pub trials_failed: usize,
    #[serde(default)]
    pub quarantined: Vec<String>,
    /// Loss of the best model on the held-out test split, when one was carved.
    #[serde(default)]
    pub test_loss: Option<Loss>,
    pub timings: Vec<PhaseTiming>,
}

impl JobReport {
    pub fn failed(message: String) -> Self {
        Self {
            status: JobStatus::Failed,
            message: Some(message),
            analysis: None,
            candidates: vec![],
            leaderboard: None,
            trials_issued: 0,
            trials_failed: 0,
            quarantined: vec![],
            test_loss: None,
            timings: vec![],
        }
    }

    pub fn write(&self, output_dir: &Path) -> Result<(), JobError> {
        let dir = output_dir.join("report");
        std::fs::create_dir_all(&dir).map_err(failed)?;
        std::fs::write(dir.join("job_report.json"), serde_json::to_string_pretty(self).map_err(failed)?)
            .map_err(failed)?;
        std::fs::write(dir.join("job_report.md"), self.render_markdown()).map_err(failed)?;
        if let Some(a) = &self.analysis {
            write_analysis(a, &dir)?;
        }
        Ok(())
    }

    pub fn render_markdown(&self) -> String {
        let mut s = String::new();
        let status = match self.status {
            JobStatus::Completed => "completed",
            JobStatus::GeneratedOnly => "generated_only",
            JobStatus::Failed => "failed",
        };
        let _ = writeln!(s, "# Job report\n\nStatus: **{status}**\n");
        if let Some(m) = &self.message {
            let _ = writeln!(s, "Message: {m}\n");
        }
        if let Some(a) = &self.analysis {
            let _ = writeln!(
                s,
                "Problem type: {} ({} train / {} valid / {} test rows)\n",
                a.problem_type, a.n_train, a.n_valid, a.n_test
            );
        }
        if !self.candidates.is_empty() {
            let _ = writeln!(s, "## Candidates\n\n| id | algorithm | transformers | instance | rule firings |\n|---|---|---|---|---|");
            for c in &self.candidates {
                let instance = c.resources.as_ref().map_or("-".to_string(), |r| r.instance.clone());
                let firings = if c.rule_firings.is_empty() {
                    "-".to_string()
                } else {
                    c.rule_firings.join("; ")
                };
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    c.id, c.algorithm, c.transformers, instance, firings
                );
            }
            s.push('\n');
        }
        if let Some(board) = &self.leaderboard {
            let _ = writeln!(
                s,
                "## Leaderboard\n\n{} trials issued, {} failed.\n",
                self.trials_issued, self.trials_failed
            );
            let _ = writeln!(s, "| rank | trial | pipeline | loss | config |\n|---|---|---|---|---|");
            for e in board.entries.iter().take(20) {
                let _ = writeln!(s, "| {} | {} | {} | {:.6} | {} |", e.rank, e.trial, e.pipeline, e.loss.value, e.config);
            }
            s.push('\n');
        }
        if !self.quarantined.is_empty() {
            let _ = writeln!(s, "Quarantined pipelines: {}\n", self.quarantined.join(", "));
        }
        if let Some(t) = &self.test_loss {
            let _ = writeln!(s, "Test loss of the best model: {:.6} ({:?})\n", t.value, t.metric);
        }
        if !self.timings.is_empty() {
            let _ = writeln!(s, "## Timings\n\n| phase | seconds |\n|---|---|");
            for t in &self.timings {
                let _ = writeln!(s, "| {} | {:.3} |", t.phase, t.seconds);
            }
        }
        s
    }
}

fn write_analysis(a: &DataAnalysis, dir: &Path) -> Result<(), JobError> {
    std::fs::write(dir.join("data_analysis.json"), serde_json::to_string_pretty(a).map_err(failed)?)
        .map_err(failed)?;
    std::fs::write(dir.join("data_analysis.md"), render_analysis(a)).map_err(failed)
}

pub fn render_analysis(a: &DataAnalysis) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Data analysis\n");
    let _ = writeln!(
        s,
        "Target `{}`, problem type {}{}.\n",
        a.target,
        a.problem_type,
        if a.n_classes > 0 {
            format!(" with {} classes", a.n_classes)
        } else {
            String::new()
        }
    );
    let _ = writeln!(
        s,
        "{} rows ({} train, {} valid, {} test); {} rows dropped for a missing target.\n",
        a.n_rows, a.n_train, a.n_valid, a.n_test, a.dropped_missing_target
    );
    if let Some(i) = &a.imbalance {
        let _ = writeln!(
            s,
            "Minority class fraction {:.3}{}.\n",
            i.minority_fraction,
            if i.is_imbalanced { " (imbalanced)" } else { "" }
        );
    }
    let m = &a.meta_features;
    let _ = writeln!(
        s,
        "Meta-features: {} rows x {} columns, density {:.3}, {} bytes, landmark loss {:.4}.\n",
        m.n_rows, m.n_cols, m.density, m.size_bytes, m.landmark_score
    );
    let _ = writeln!(
        s,
        "| column | types | missing | unique | mean | std | skew | outliers (3 sd) |\n|---|---|---|---|---|---|---|---|"
    );
    for np in &a.profiles {
        let p = &np.profile;
        let types = a
            .schema
            .column(&np.column)
            .map(|c| c.types.iter().map(|t| t.name()).collect::<Vec<_>>().join("/"))
            .unwrap_or_else(|| "target".into());
        let _ = writeln!(
            s,
            "| {} | {} | {:.1}% | {} | {:.4} | {:.4} | {:.3} | {} |",
            np.column,
            types,
            100.0 * p.missing_fraction,
            p.n_unique,
            p.mean,
            p.std_dev,
            p.skewness,
            p.outlier_count_3sigma
        );
    }
    if !m.target_correlations.is_empty() {
        let _ = writeln!(s, "\n| column | abs. correlation with target |\n|---|---|");
        for (c, v) in &m.target_correlations {
            let _ = writeln!(s, "| {c} | {v:.4} |");
        }
    }
    if !a.warnings.is_empty() {
        let _ = writeln!(s, "\n## Warnings\n");
        for w in &a.warnings {
            let _ = writeln!(s, "- {w}");
        }
    }
    s
}
