//! Column type detection.
//!
//! Rules run in a fixed order and every match is kept, so a column can carry
//! several types (an integer column with few distinct values is both numeric
//! and categorical). The first match is the primary type.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ColumnProfile;

pub const CATEGORICAL_MAX_UNIQUE: usize = 20;
pub const TEXT_MIN_ALPHA_FRACTION: f64 = 0.5;
pub const TEXT_MIN_TOKENS: f64 = 3.0;
pub const DATETIME_MIN_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Numeric,
    Categorical,
    Text,
    Datetime,
    Ignored,
}

impl ColumnType {
    pub const ALL: [ColumnType; 5] = [
        ColumnType::Numeric,
        ColumnType::Categorical,
        ColumnType::Text,
        ColumnType::Datetime,
        ColumnType::Ignored,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ColumnType::Numeric => "numeric",
            ColumnType::Categorical => "categorical",
            ColumnType::Text => "text",
            ColumnType::Datetime => "datetime",
            ColumnType::Ignored => "ignored",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn detect_column_type(p: &ColumnProfile) -> Vec<ColumnType> {
    let has_values = p.n_rows > p.n_missing;
    let mut types = Vec::new();
    if has_values && p.numeric_parse_fraction == 1.0 {
        types.push(ColumnType::Numeric);
    }
    if has_values && p.n_unique < CATEGORICAL_MAX_UNIQUE {
        types.push(ColumnType::Categorical);
    }
    if p.alpha_token_fraction >= TEXT_MIN_ALPHA_FRACTION && p.mean_token_count >= TEXT_MIN_TOKENS {
        types.push(ColumnType::Text);
    }
    if has_values && p.datetime_fraction >= DATETIME_MIN_FRACTION {
        types.push(ColumnType::Datetime);
    }
    if types.is_empty() {
        types.push(ColumnType::Ignored);
    }
    types
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub index: usize,
    /// Candidate types, primary first.
    pub types: Vec<ColumnType>,
    pub ambiguous: bool,
}

impl ColumnSchema {
    pub fn primary(&self) -> ColumnType {
        self.types[0]
    }

    pub fn has_type(&self, t: ColumnType) -> bool {
        self.types.contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaReport {
    pub target: String,
    pub columns: Vec<ColumnSchema>,
}

impl SchemaReport {
    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Columns whose primary type is `t`, in schema order.
    pub fn columns_of_primary(&self, t: ColumnType) -> impl Iterator<Item = &ColumnSchema> {
        self.columns.iter().filter(move |c| c.primary() == t)
    }

    pub fn has_primary(&self, t: ColumnType) -> bool {
        self.columns_of_primary(t).next().is_some()
    }

    pub fn usable_columns(&self) -> usize {
        self.columns.iter().filter(|c| c.primary() != ColumnType::Ignored).count()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("every feature column was classified as ignored")]
    AllColumnsIgnored,
    #[error("profiles ({profiles}) do not match columns ({columns})")]
    Misaligned { profiles: usize, columns: usize },
}

/// Detects types for every non-target column.
pub fn build_schema(
    column_names: &[String],
    profiles: &[ColumnProfile],
    target_index: usize,
) -> Result<SchemaReport, SchemaError> {
    if column_names.len() != profiles.len() {
        return Err(SchemaError::Misaligned {
            profiles: profiles.len(),
            columns: column_names.len(),
        });
    }
    let columns: Vec<ColumnSchema> = profiles
        .par_iter()
        .enumerate()
        .filter(|(i, _)| *i != target_index)
        .map(|(i, p)| {
            let types = detect_column_type(p);
            ColumnSchema {
                name: column_names[i].clone(),
                index: i,
                ambiguous: types.len() > 1,
                types,
            }
        })
        .collect();
    let report = SchemaReport {
        target: column_names[target_index].clone(),
        columns,
    };
    if report.usable_columns() == 0 {
        return Err(SchemaError::AllColumnsIgnored);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::profile_column;

    fn prof(v: &[&str]) -> ColumnProfile {
        profile_column(&v.iter().map(|s| Some(s.to_string())).collect::<Vec<_>>())
    }

    #[test]
    fn numeric_strings() {
        let types = detect_column_type(&prof(&["1.5", "2", "3e1"]));
        assert_eq!(types[0], ColumnType::Numeric);
    }

    #[test]
    fn low_cardinality_strings_are_categorical() {
        let vals: Vec<String> = (0..1000).map(|i| format!("k{}", i % 5)).collect();
        let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
        assert_eq!(detect_column_type(&prof(&refs)), vec![ColumnType::Categorical]);
    }

    #[test]
    fn small_integers_are_both() {
        let types = detect_column_type(&prof(&["1", "2", "3", "1", "2"]));
        assert_eq!(types, vec![ColumnType::Numeric, ColumnType::Categorical]);
    }

    #[test]
    fn prose_is_text() {
        let vals: Vec<String> = (0..40).map(|i| format!("the quick fox number{i} jumps")).collect();
        let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
        assert_eq!(detect_column_type(&prof(&refs)), vec![ColumnType::Text]);
    }

    #[test]
    fn dates_detected() {
        let vals: Vec<String> = (1..=28).map(|d| format!("2020-02-{d:02}")).collect();
        let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
        assert_eq!(detect_column_type(&prof(&refs)), vec![ColumnType::Datetime]);
    }

    #[test]
    fn noise_is_ignored_alone() {
        let vals: Vec<String> = (0..50).map(|i| format!("z{i}q{}", i * 31 % 17)).collect();
        let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
        assert_eq!(detect_column_type(&prof(&refs)), vec![ColumnType::Ignored]);
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn build_mixed_schema() {
        let num: Vec<String> = (0..30).map(|i| format!("{}.5", i)).collect();
        let cat: Vec<String> = (0..30).map(|i| format!("c{}", i % 3)).collect();
        let txt: Vec<String> = (0..30).map(|i| format!("some words here item{i}")).collect();
        let y: Vec<String> = (0..30).map(|i| format!("{}", i % 2)).collect();
        let cols = [&num, &cat, &txt, &y];
        let profiles: Vec<ColumnProfile> = cols
            .iter()
            .map(|c| profile_column(&c.iter().map(|s| Some(s.clone())).collect::<Vec<_>>()))
            .collect();
        let report = build_schema(&names(&["n", "c", "t", "y"]), &profiles, 3).unwrap();
        let primaries: Vec<ColumnType> = report.columns.iter().map(ColumnSchema::primary).collect();
        assert_eq!(primaries, vec![ColumnType::Numeric, ColumnType::Categorical, ColumnType::Text]);

        // permuting columns permutes the report
        let perm = [2usize, 0, 1];
        let p2: Vec<ColumnProfile> = perm.iter().map(|&i| profiles[i].clone()).chain([profiles[3].clone()]).collect();
        let r2 = build_schema(&names(&["t", "n", "c", "y"]), &p2, 3).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(r2.columns[k].types, report.columns[i].types);
        }
    }

    #[test]
    fn all_ignored_is_error() {
        let noise: Vec<Option<String>> = (0..40).map(|i| Some(format!("x{i}k{}", i * 7))).collect();
        let y: Vec<Option<String>> = (0..40).map(|i| Some(format!("{}", i % 2))).collect();
        let profiles = vec![profile_column(&noise), profile_column(&y)];
        assert_eq!(
            build_schema(&names(&["a", "y"]), &profiles, 1),
            Err(SchemaError::AllColumnsIgnored)
        );
    }
}
