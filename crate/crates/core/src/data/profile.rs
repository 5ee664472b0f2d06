//! Per-column statistics.
//!
//! Numeric moments are accumulated with a mergeable (count, mean, M2, M3)
//! state so chunks of a column can be profiled independently and combined.

use std::collections::HashSet;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::RawTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p1: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub n_rows: usize,
    pub n_missing: usize,
    pub missing_fraction: f64,
    /// Share of non-missing cells that parse as finite numbers (0 for an all-missing column).
    pub numeric_parse_fraction: f64,
    pub n_numeric: usize,
    pub n_unique: usize,
    pub percentiles: Option<Percentiles>,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub mean_token_count: f64,
    pub alpha_token_fraction: f64,
    pub datetime_fraction: f64,
    pub outlier_count_3sigma: usize,
}

/// Mergeable central moments of a stream of values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut m = Self::default();
        for &v in values {
            m.push(v);
        }
        m
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + delta * delta * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta.powi(3) * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        Moments {
            count: self.count + other.count,
            mean,
            m2,
            m3,
        }
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }

    /// Standardized third moment; 0 on zero variance.
    pub fn skewness(&self) -> f64 {
        let sd = self.std_dev();
        if self.count == 0 || sd <= f64::EPSILON * self.mean.abs().max(1.0) {
            0.0
        } else {
            (self.m3 / self.count as f64) / sd.powi(3)
        }
    }
}

/// Parses a cell as a finite number.
pub fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

static DATE_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"^\d{4}-(0[1-9]|1[0-2])-(0[1-9]|[12]\d|3[01])([T ]([01]\d|2[0-3]):[0-5]\d(:[0-5]\d(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$",
        r"^\d{4}/(0?[1-9]|1[0-2])/(0?[1-9]|[12]\d|3[01])$",
        r"^(0?[1-9]|1[0-2])/(0?[1-9]|[12]\d|3[01])/\d{4}$",
    ]
    .iter()
    .map(|p| Regex::new(p).expect("valid date pattern"))
    .collect()
});

pub fn looks_like_date(cell: &str) -> bool {
    let t = cell.trim();
    DATE_PATTERNS.iter().any(|r| r.is_match(t))
}

/// Nearest-rank percentile of sorted data, `p` in (0, 100].
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn profile_column(values: &[Option<String>]) -> ColumnProfile {
    let n_rows = values.len();
    let present: Vec<&str> = values.iter().filter_map(|v| v.as_deref()).collect();
    let n_missing = n_rows - present.len();

    let numbers: Vec<f64> = present.iter().filter_map(|c| parse_number(c)).collect();
    let unique: HashSet<&str> = present.iter().copied().collect();

    let mut n_tokens = 0usize;
    let mut n_alpha = 0usize;
    let mut n_dates = 0usize;
    for cell in &present {
        for tok in cell.split_whitespace() {
            n_tokens += 1;
            if tok.chars().all(char::is_alphabetic) {
                n_alpha += 1;
            }
        }
        if looks_like_date(cell) {
            n_dates += 1;
        }
    }

    let moments = Moments::from_values(&numbers);
    let mean = if numbers.is_empty() { 0.0 } else { moments.mean };
    let std_dev = moments.std_dev();
    let outliers = if std_dev > 0.0 {
        numbers.iter().filter(|&&x| (x - mean).abs() > 3.0 * std_dev).count()
    } else {
        0
    };

    let percentiles = if numbers.is_empty() {
        None
    } else {
        let mut sorted = numbers.clone();
        sorted.sort_by(f64::total_cmp);
        Some(Percentiles {
            p1: nearest_rank(&sorted, 1.0),
            p25: nearest_rank(&sorted, 25.0),
            p50: nearest_rank(&sorted, 50.0),
            p75: nearest_rank(&sorted, 75.0),
            p99: nearest_rank(&sorted, 99.0),
        })
    };

    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    ColumnProfile {
        n_rows,
        n_missing,
        missing_fraction: frac(n_missing, n_rows),
        numeric_parse_fraction: frac(numbers.len(), present.len()),
        n_numeric: numbers.len(),
        n_unique: unique.len(),
        percentiles,
        mean,
        std_dev,
        skewness: moments.skewness(),
        mean_token_count: frac(n_tokens, present.len()),
        alpha_token_fraction: frac(n_alpha, n_tokens),
        datetime_fraction: frac(n_dates, present.len()),
        outlier_count_3sigma: outliers,
    }
}

/// Profiles every column of the table (including the target), one task per column.
pub fn profile_table(t: &RawTable) -> Vec<ColumnProfile> {
    (0..t.n_cols())
        .into_par_iter()
        .map(|c| profile_column(&t.column(c)))
        .collect()
}
