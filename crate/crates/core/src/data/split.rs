use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::profile::parse_number;
use super::{DataError, ProblemType, RawTable};

pub const DEFAULT_VALID_FRACTION: f64 = 0.2;
pub const MIN_SPLIT_ROWS: usize = 10;

#[derive(Debug, Clone)]
pub struct Split {
    pub train: RawTable,
    pub valid: RawTable,
    /// Source row indices, ascending.
    pub train_rows: Vec<usize>,
    pub valid_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Groups rows into strata: classes for classification, target deciles for regression.
fn strata(t: &RawTable, problem: ProblemType) -> BTreeMap<String, Vec<usize>> {
    let target = t.target_index();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    if problem.is_classification() {
        for (i, row) in t.rows().iter().enumerate() {
            let key = row[target].clone().unwrap_or_default();
            groups.entry(key).or_default().push(i);
        }
    } else {
        let mut keyed: Vec<(f64, usize)> = t
            .rows()
            .iter()
            .enumerate()
            .map(|(i, row)| (row[target].as_deref().and_then(parse_number).unwrap_or(0.0), i))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = keyed.len();
        for (rank, (_, i)) in keyed.into_iter().enumerate() {
            let decile = rank * 10 / n;
            groups.entry(format!("decile-{decile}")).or_default().push(i);
        }
    }
    groups
}

/// Stratified shuffle split. Each stratum contributes `round(valid_fraction * size)`
/// rows to validation; singleton strata stay in train.
pub fn stratified_split(
    t: &RawTable,
    valid_fraction: f64,
    problem: ProblemType,
    seed: u64,
) -> Result<Split, DataError> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(DataError::InvalidFraction(valid_fraction));
    }
    if t.n_rows() < MIN_SPLIT_ROWS {
        return Err(DataError::TooFewRows(t.n_rows()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut train_rows = Vec::new();
    let mut valid_rows = Vec::new();
    for (key, mut rows) in strata(t, problem) {
        let n = rows.len();
        if n == 1 {
            let msg = format!("class {key:?} has a single row; kept in train");
            log::warn!("{msg}");
            warnings.push(msg);
            train_rows.extend(rows);
            continue;
        }
        rows.shuffle(&mut rng);
        let n_valid = ((valid_fraction * n as f64).round() as usize).min(n - 1);
        valid_rows.extend_from_slice(&rows[..n_valid]);
        train_rows.extend_from_slice(&rows[n_valid..]);
    }
    if valid_rows.is_empty() {
        // every stratum rounded to zero; move one row so validation is usable
        train_rows.shuffle(&mut rng);
        if let Some(r) = train_rows.pop() {
            valid_rows.push(r);
        }
    }
    train_rows.sort_unstable();
    valid_rows.sort_unstable();
    Ok(Split {
        train: t.select_rows(&train_rows),
        valid: t.select_rows(&valid_rows),
        train_rows,
        valid_rows,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MissingValues;
    use proptest::prelude::*;

    fn table(labels: &[&str]) -> RawTable {
        let mut csv = String::from("x,y\n");
        for (i, l) in labels.iter().enumerate() {
            csv.push_str(&format!("{i},{l}\n"));
        }
        RawTable::parse_csv(&csv, "y", &MissingValues::default()).unwrap()
    }

    fn count(t: &RawTable, label: &str) -> usize {
        t.target().iter().filter(|v| v.as_deref() == Some(label)).count()
    }

    #[test]
    fn exact_stratification() {
        let mut labels = vec!["a"; 50];
        labels.extend(vec!["b"; 50]);
        let s = stratified_split(&table(&labels), 0.2, ProblemType::BinaryClassification, 3).unwrap();
        assert_eq!((count(&s.train, "a"), count(&s.train, "b")), (40, 40));
        assert_eq!((count(&s.valid, "a"), count(&s.valid, "b")), (10, 10));
    }

    #[test]
    fn same_seed_same_split() {
        let labels: Vec<&str> = (0..60).map(|i| if i % 3 == 0 { "a" } else { "b" }).collect();
        let t = table(&labels);
        let a = stratified_split(&t, 0.25, ProblemType::BinaryClassification, 9).unwrap();
        let b = stratified_split(&t, 0.25, ProblemType::BinaryClassification, 9).unwrap();
        assert_eq!(a.valid_rows, b.valid_rows);
        let c = stratified_split(&t, 0.25, ProblemType::BinaryClassification, 10).unwrap();
        assert_ne!(a.valid_rows, c.valid_rows);
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let mut labels = vec!["a"; 20];
        labels.push("rare");
        let s = stratified_split(&table(&labels), 0.2, ProblemType::BinaryClassification, 1).unwrap();
        assert_eq!(count(&s.train, "rare"), 1);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn too_few_rows() {
        let t = table(&["a", "b", "a"]);
        assert!(matches!(
            stratified_split(&t, 0.2, ProblemType::BinaryClassification, 0),
            Err(DataError::TooFewRows(3))
        ));
    }

    #[test]
    fn regression_deciles_spread_validation() {
        let mut csv = String::from("x,y\n");
        for i in 0..100 {
            csv.push_str(&format!("{i},{}\n", i as f64 * 1.5));
        }
        let t = RawTable::parse_csv(&csv, "y", &MissingValues::default()).unwrap();
        let s = stratified_split(&t, 0.2, ProblemType::Regression, 4).unwrap();
        assert_eq!(s.valid_rows.len(), 20);
        for d in 0..10 {
            let in_decile = s.valid_rows.iter().filter(|&&r| r / 10 == d).count();
            assert_eq!(in_decile, 2);
        }
    }

    proptest! {
        #[test]
        fn split_is_partition(seed in 0u64..1000, frac in 0.05f64..0.95, n in 10usize..80, k in 2usize..5) {
            let labels: Vec<String> = (0..n).map(|i| format!("c{}", (i * 7) % k)).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let t = table(&refs);
            let s = stratified_split(&t, frac, ProblemType::classification(k), seed).unwrap();
            let mut all: Vec<usize> = s.train_rows.iter().chain(&s.valid_rows).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for c in 0..k {
                let label = format!("c{c}");
                let total = count(&t, &label) as f64;
                let got = count(&s.valid, &label) as f64;
                if total > 1.0 {
                    prop_assert!((got - frac * total).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
