//! Seeded synthetic datasets: the bundled benchmark trio and small fixtures.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

/// A generated dataset as CSV text plus its target column.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub name: String,
    pub target: String,
    pub csv: String,
}

impl SyntheticDataset {
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, &self.csv)?;
        Ok(path)
    }
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

/// Numeric regression with a skewed column, an outlier-prone column, missing
/// cells and a step-shaped driver.
pub fn regression(n_rows: usize, seed: u64) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).expect("valid sd");
    let skewed = LogNormal::new(0.0, 1.0).expect("valid sd");
    let shift = [0.0, 1.5, -1.0, 0.5];
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let x1: f64 = rng.random_range(-3.0..3.0);
        let x2: f64 = rng.random_range(-2.0..2.0);
        let x3: f64 = skewed.sample(&mut rng);
        let mut x4: f64 = rng.random_range(0.0..1.0);
        if rng.random_bool(0.01) {
            x4 += rng.random_range(20.0..50.0);
        }
        let x5: f64 = rng.random_range(-1.0..1.0);
        let x6: f64 = rng.random_range(0.0..4.0);
        let r = x6 as usize;
        let y = 2.0 * x1.sin() + 0.8 * x2 * x2 + 0.6 * x3.ln_1p() + 1.5 * x4.min(1.0) + shift[r]
            + if x1 > 0.0 && x2 > 0.0 { 1.0 } else { 0.0 }
            + noise.sample(&mut rng);
        let cell = |v: f64, rng: &mut ChaCha8Rng| if rng.random_bool(0.03) { String::new() } else { fmt(v) };
        rows.push(vec![
            cell(x1, &mut rng),
            cell(x2, &mut rng),
            fmt(x3),
            fmt(x4),
            fmt(x5),
            fmt(x6),
            fmt(y),
        ]);
    }
    SyntheticDataset {
        name: "regression".into(),
        target: "y".into(),
        csv: csv_text(&["x1", "x2", "x3", "x4", "x5", "x6", "y"], rows),
    }
}

const FILLER: [&str; 12] = [
    "order", "arrived", "today", "package", "service", "thanks", "delivery", "checked", "account", "update", "week",
    "status",
];
const SIGNAL: [&str; 4] = ["refund", "cancel", "broken", "angry"];

/// Imbalanced binary target (roughly 12% positive) driven by numeric,
/// categorical and free-text evidence.
pub fn imbalanced_binary(n_rows: usize, seed: u64) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plans = ["basic", "plus", "pro", "team", "trial"];
    let plan_effect = [0.0, -0.4, -0.8, -0.2, 1.0];
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let tenure: f64 = rng.random_range(0.0..60.0);
        let usage: f64 = rng.random_range(0.0..1.0);
        let tickets: f64 = rng.random_range(0..6) as f64;
        let p = rng.random_range(0..plans.len());
        let complaint = rng.random_bool(0.2);
        let mut words: Vec<&str> = (0..rng.random_range(4..9))
            .map(|_| FILLER[rng.random_range(0..FILLER.len())])
            .collect();
        if complaint {
            let at = rng.random_range(0..=words.len());
            words.insert(at, SIGNAL[rng.random_range(0..SIGNAL.len())]);
        }
        let logit = -3.2 - 0.04 * tenure + 1.5 * (1.0 - usage) + 0.35 * tickets + plan_effect[p]
            + if complaint { 2.2 } else { 0.0 };
        let prob = 1.0 / (1.0 + (-logit).exp());
        let label = if rng.random_bool(prob) { "churn" } else { "stay" };
        rows.push(vec![
            fmt(tenure),
            fmt(usage),
            fmt(tickets),
            plans[p].to_string(),
            words.join(" "),
            label.to_string(),
        ]);
    }
    SyntheticDataset {
        name: "imbalanced_binary".into(),
        target: "label".into(),
        csv: csv_text(&["tenure", "usage", "tickets", "plan", "note", "label"], rows),
    }
}

/// Five classes from noisy nonlinear scores over eight numeric features.
pub fn multiclass(n_rows: usize, seed: u64) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.6).expect("valid sd");
    let names = ["alpha", "beta", "gamma", "delta", "epsilon"];
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let f: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let scores = [
            f[0] + f[1],
            -f[0] + 0.5 * f[2] * f[2] - 1.0,
            f[3] * f[4],
            (f[1] - f[5]).abs() - 1.0,
            0.8 * f[6] - 0.5 * f[0],
        ];
        let label = scores
            .iter()
            .map(|s| s + noise.sample(&mut rng))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("five scores");
        let mut row: Vec<String> = f.iter().map(|&v| fmt(v)).collect();
        row.push(names[label].to_string());
        rows.push(row);
    }
    SyntheticDataset {
        name: "multiclass".into(),
        target: "class".into(),
        csv: csv_text(&["f0", "f1", "f2", "f3", "f4", "f5", "f6", "f7", "class"], rows),
    }
}

/// The bundled benchmark datasets.
pub fn bundled(n_rows: usize, seed: u64) -> Vec<SyntheticDataset> {
    vec![
        regression(n_rows, seed),
        imbalanced_binary(n_rows, seed.wrapping_add(1)),
        multiclass(n_rows, seed.wrapping_add(2)),
    ]
}

/// Writes the bundled datasets and a bench manifest listing them.
pub fn write_bundled(dir: &Path, n_rows: usize, seed: u64) -> std::io::Result<PathBuf> {
    let mut manifest = String::new();
    for d in bundled(n_rows, seed) {
        d.write(dir)?;
        manifest.push_str(&format!(
            "[[datasets]]\nname = \"{}\"\npath = \"{}.csv\"\ntarget = \"{}\"\n\n",
            d.name, d.name, d.target
        ));
    }
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest)?;
    Ok(path)
}
