//! Offline portfolio selection over a configurations × datasets loss table.
//!
//! The objective of a subset `I` of rows is `sum_j min_{i in I} P[i][j]`.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failed cells receive this multiple of the column's worst finite loss.
pub const FAILURE_PENALTY: f64 = 1.5;
pub const EXACT_MAX_SUBSETS: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum ZeroShotError {
    #[error("C({b},{k}) subsets exceeds the exact-solver guard")]
    TooLarge { b: usize, k: usize },
    #[error("portfolio size {k} is invalid for {b} configurations")]
    InvalidK { b: usize, k: usize },
    #[error("column {0} has no successful evaluation")]
    EmptyColumn(String),
    #[error("table is empty")]
    EmptyTable,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed table: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    MinMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTable {
    /// `losses[i][j]`: loss of configuration `i` on dataset `j`.
    pub losses: Vec<Vec<f64>>,
    pub configs: Vec<serde_json::Value>,
    pub datasets: Vec<String>,
    pub normalization: Normalization,
    /// Cells that failed and were filled with the penalty.
    #[serde(default)]
    pub failed_cells: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub indices: Vec<usize>,
    pub objective: f64,
}

impl PerformanceTable {
    pub fn n_configs(&self) -> usize {
        self.losses.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.losses.iter().map(|r| r[j]).collect()
    }

    /// Stable FNV-1a fingerprint of the CSV rendering.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in buf {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ZeroShotError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["config".to_string()];
        header.extend(self.datasets.iter().cloned());
        out.write_record(&header).map_err(|e| ZeroShotError::Malformed(e.to_string()))?;
        for (i, row) in self.losses.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            out.write_record(&rec).map_err(|e| ZeroShotError::Malformed(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` (losses) and `<stem>.json` (descriptors and metadata).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), ZeroShotError> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        let sidecar = serde_json::json!({
            "configs": self.configs,
            "normalization": self.normalization,
            "failed_cells": self.failed_cells,
        });
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&sidecar).map_err(|e| ZeroShotError::Malformed(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, ZeroShotError> {
        let mut text = String::new();
        std::fs::File::open(dir.join(format!("{stem}.csv")))?.read_to_string(&mut text)?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| ZeroShotError::Malformed(e.to_string()))?.clone();
        let datasets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut losses = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| ZeroShotError::Malformed(e.to_string()))?;
            let row: Result<Vec<f64>, _> = rec.iter().skip(1).map(str::parse::<f64>).collect();
            losses.push(row.map_err(|e| ZeroShotError::Malformed(e.to_string()))?);
        }
        let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)
            .map_err(|e| ZeroShotError::Malformed(e.to_string()))?;
        let configs: Vec<serde_json::Value> = serde_json::from_value(sidecar["configs"].clone())
            .map_err(|e| ZeroShotError::Malformed(e.to_string()))?;
        if configs.len() != losses.len() {
            return Err(ZeroShotError::Malformed("descriptor count differs from row count".into()));
        }
        Ok(Self {
            losses,
            configs,
            datasets,
            normalization: serde_json::from_value(sidecar["normalization"].clone())
                .map_err(|e| ZeroShotError::Malformed(e.to_string()))?,
            failed_cells: serde_json::from_value(sidecar["failed_cells"].clone()).unwrap_or_default(),
        })
    }
}

/// Evaluates every (config, dataset) cell in parallel. `evaluate` receives a
/// per-cell seed and returns a validation loss or an error; failed and
/// non-finite cells get `1.5 ×` the column's worst finite loss.
pub fn build_performance_table<C, D, F>(
    configs: &[C],
    descriptors: Vec<serde_json::Value>,
    datasets: &[D],
    dataset_names: Vec<String>,
    seed: u64,
    evaluate: F,
) -> Result<PerformanceTable, ZeroShotError>
where
    C: Sync,
    D: Sync,
    F: Fn(&C, &D, u64) -> Result<f64, String> + Sync,
{
    let b = configs.len();
    let d = datasets.len();
    if b == 0 || d == 0 {
        return Err(ZeroShotError::EmptyTable);
    }
    let cells: Vec<Option<f64>> = (0..b * d)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / d, cell % d);
            let cell_seed = seed ^ ((i as u64) << 32 | j as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            match evaluate(&configs[i], &datasets[j], cell_seed) {
                Ok(v) if v.is_finite() => Some(v.max(0.0)),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("config {i} failed on dataset {j}: {e}");
                    None
                }
            }
        })
        .collect();
    let mut losses = vec![vec![0.0; d]; b];
    let mut failed_cells = Vec::new();
    for j in 0..d {
        let worst = (0..b).filter_map(|i| cells[i * d + j]).fold(f64::NEG_INFINITY, f64::max);
        if worst == f64::NEG_INFINITY {
            return Err(ZeroShotError::EmptyColumn(dataset_names.get(j).cloned().unwrap_or_default()));
        }
        for (i, row) in losses.iter_mut().enumerate() {
            row[j] = match cells[i * d + j] {
                Some(v) => v,
                None => {
                    failed_cells.push((i, j));
                    FAILURE_PENALTY * worst
                }
            };
        }
    }
    failed_cells.sort_unstable();
    Ok(PerformanceTable {
        losses,
        configs: descriptors,
        datasets: dataset_names,
        normalization: Normalization::Raw,
        failed_cells,
    })
}

/// Per-column min-max scaling to [0, 1]; constant columns become 0.
pub fn normalize(table: &PerformanceTable) -> PerformanceTable {
    let mut out = table.clone();
    for j in 0..table.n_datasets() {
        let col = table.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, row) in out.losses.iter_mut().enumerate() {
            row[j] = if hi > lo { (col[i] - lo) / (hi - lo) } else { 0.0 };
        }
    }
    out.normalization = Normalization::MinMax;
    out
}

pub fn objective(losses: &[Vec<f64>], indices: &[usize]) -> f64 {
    let d = losses.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| indices.iter().map(|&i| losses[i][j]).fold(f64::INFINITY, f64::min))
        .sum()
}

pub fn n_choose_k(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn check_k(b: usize, k: usize) -> Result<(), ZeroShotError> {
    if b == 0 {
        return Err(ZeroShotError::EmptyTable);
    }
    if k == 0 || k > b {
        return Err(ZeroShotError::InvalidK { b, k });
    }
    Ok(())
}

/// Exhaustive search over all k-subsets; ties go to the lexicographically
/// smallest index set.
pub fn select_portfolio_exact(losses: &[Vec<f64>], k: usize) -> Result<Portfolio, ZeroShotError> {
    let b = losses.len();
    check_k(b, k)?;
    if n_choose_k(b, k) > EXACT_MAX_SUBSETS {
        return Err(ZeroShotError::TooLarge { b, k });
    }
    let d = losses[0].len();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = Portfolio {
        indices: idx.clone(),
        objective: f64::INFINITY,
    };
    // running column minima per prefix length avoid recomputing the whole subset
    let mut prefix_min = vec![vec![f64::INFINITY; d]; k + 1];
    let mut valid_from = 0;
    loop {
        for level in valid_from..k {
            let (head, tail) = prefix_min.split_at_mut(level + 1);
            for j in 0..d {
                tail[0][j] = head[level][j].min(losses[idx[level]][j]);
            }
        }
        let value: f64 = prefix_min[k].iter().sum();
        if value < best.objective {
            best = Portfolio {
                indices: idx.clone(),
                objective: value,
            };
        }
        // advance to the next combination in lexicographic order
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == b - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        for q in pos..k {
            idx[q] = idx[q - 1] + 1;
        }
        valid_from = pos - 1;
    }
    Ok(best)
}

/// Greedy forward selection; returns the objective after every pick as well.
pub fn select_portfolio_greedy_trace(losses: &[Vec<f64>], k: usize) -> Result<(Portfolio, Vec<f64>), ZeroShotError> {
    let b = losses.len();
    check_k(b, k)?;
    let d = losses[0].len();
    let mut current = vec![f64::INFINITY; d];
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..b).filter(|i| !chosen.contains(i)) {
            let value: f64 = (0..d).map(|j| current[j].min(losses[i][j])).sum();
            if best.is_none_or(|(_, v)| value < v) {
                best = Some((i, value));
            }
        }
        let (i, value) = best.expect("k <= b leaves a candidate");
        chosen.push(i);
        for j in 0..d {
            current[j] = current[j].min(losses[i][j]);
        }
        trace.push(value);
    }
    let objective = *trace.last().expect("k >= 1");
    Ok((
        Portfolio {
            indices: chosen,
            objective,
        },
        trace,
    ))
}

pub fn select_portfolio_greedy(losses: &[Vec<f64>], k: usize) -> Result<Portfolio, ZeroShotError> {
    select_portfolio_greedy_trace(losses, k).map(|(p, _)| p)
}
