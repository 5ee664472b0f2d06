//! Hyperparameter spaces and concrete configurations.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Algorithm, LearnerError};
use crate::data::ProblemType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HpValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl HpValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HpValue::Int(i) => Some(*i as f64),
            HpValue::Float(f) => Some(*f),
            HpValue::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            HpValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for HpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpValue::Int(i) => write!(f, "{i}"),
            HpValue::Float(x) => write!(f, "{x}"),
            HpValue::Str(s) => f.write_str(s),
        }
    }
}

/// A complete hyperparameter assignment, keyed by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HpConfig(pub BTreeMap<String, HpValue>);

impl HpConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: HpValue) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: HpValue) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&HpValue> {
        self.0.get(name)
    }

    pub fn f64(&self, name: &str) -> Result<f64, LearnerError> {
        self.get(name)
            .and_then(HpValue::as_f64)
            .ok_or_else(|| LearnerError::MissingHyperparameter(name.to_string()))
    }

    pub fn usize(&self, name: &str) -> Result<usize, LearnerError> {
        let v = self.f64(name)?;
        if v < 0.0 {
            return Err(LearnerError::InvalidHyperparameter(format!("{name} = {v} is negative")));
        }
        Ok(v.round() as usize)
    }

    pub fn str_or<'a>(&'a self, name: &str, default: &'a str) -> &'a str {
        self.get(name).and_then(HpValue::as_str).unwrap_or(default)
    }

    /// Overlays `other` onto a copy of `self`.
    pub fn merged(&self, other: &HpConfig) -> HpConfig {
        let mut out = self.clone();
        for (k, v) in &other.0 {
            out.0.insert(k.clone(), v.clone());
        }
        out
    }
}

impl fmt::Display for HpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Continuous {
        lo: f64,
        hi: f64,
        #[serde(default)]
        log: bool,
    },
    Integer {
        lo: i64,
        hi: i64,
    },
    Categorical {
        choices: Vec<String>,
    },
}

impl Domain {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Domain::Continuous { lo, hi, log } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err("bounds must be finite".into());
                }
                if lo >= hi {
                    return Err(format!("lo ({lo}) must be < hi ({hi})"));
                }
                if *log && *lo <= 0.0 {
                    return Err(format!("log-scaled domain needs lo > 0, got {lo}"));
                }
                Ok(())
            }
            Domain::Integer { lo, hi } => {
                if lo >= hi {
                    Err(format!("lo ({lo}) must be < hi ({hi})"))
                } else {
                    Ok(())
                }
            }
            Domain::Categorical { choices } => {
                let mut sorted = choices.clone();
                sorted.sort();
                sorted.dedup();
                if choices.is_empty() {
                    Err("categorical domain needs at least one choice".into())
                } else if sorted.len() != choices.len() {
                    Err("categorical choices must be unique".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn contains(&self, v: &HpValue) -> bool {
        match (self, v) {
            (Domain::Continuous { lo, hi, .. }, v) => v.as_f64().is_some_and(|x| x >= *lo && x <= *hi),
            (Domain::Integer { lo, hi }, HpValue::Int(i)) => i >= lo && i <= hi,
            (Domain::Categorical { choices }, HpValue::Str(s)) => choices.contains(s),
            _ => false,
        }
    }

    /// Number of unit-cube coordinates this domain occupies.
    pub fn width(&self) -> usize {
        match self {
            Domain::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }

    /// Uniform draw (log-uniform for log domains, inclusive for integers).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HpValue {
        match self {
            Domain::Continuous { lo, hi, log: false } => HpValue::Float(rng.random_range(*lo..=*hi)),
            Domain::Continuous { lo, hi, log: true } => {
                HpValue::Float(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi))
            }
            Domain::Integer { lo, hi } => HpValue::Int(rng.random_range(*lo..=*hi)),
            Domain::Categorical { choices } => HpValue::Str(choices[rng.random_range(0..choices.len())].clone()),
        }
    }

    /// Moves a value into the domain: clamps numbers, rounds integers and
    /// falls back to the first choice for unknown categories.
    pub fn project(&self, v: Option<&HpValue>) -> HpValue {
        match self {
            Domain::Continuous { lo, hi, log } => {
                let mid = if *log { (0.5 * (lo.ln() + hi.ln())).exp() } else { 0.5 * (lo + hi) };
                HpValue::Float(v.and_then(HpValue::as_f64).unwrap_or(mid).clamp(*lo, *hi))
            }
            Domain::Integer { lo, hi } => {
                let x = v.and_then(HpValue::as_f64).map(|x| x.round() as i64).unwrap_or((lo + hi) / 2);
                HpValue::Int(x.clamp(*lo, *hi))
            }
            Domain::Categorical { choices } => match v {
                Some(HpValue::Str(s)) if choices.contains(s) => HpValue::Str(s.clone()),
                _ => HpValue::Str(choices[0].clone()),
            },
        }
    }

    /// Writes the unit-cube encoding of `v` into `out`.
    pub fn encode(&self, v: &HpValue, out: &mut Vec<f64>) {
        match self {
            Domain::Continuous { lo, hi, log } => {
                let x = v.as_f64().unwrap_or(*lo).clamp(*lo, *hi);
                out.push(if *log {
                    (x.ln() - lo.ln()) / (hi.ln() - lo.ln())
                } else {
                    (x - lo) / (hi - lo)
                });
            }
            Domain::Integer { lo, hi } => {
                let x = v.as_f64().unwrap_or(*lo as f64).clamp(*lo as f64, *hi as f64);
                out.push((x - *lo as f64) / (*hi - *lo) as f64);
            }
            Domain::Categorical { choices } => {
                for c in choices {
                    out.push(if v.as_str() == Some(c.as_str()) { 1.0 } else { 0.0 });
                }
            }
        }
    }

    /// Decodes unit-cube coordinates back into a value of the domain.
    pub fn decode(&self, u: &[f64]) -> HpValue {
        match self {
            Domain::Continuous { lo, hi, log } => {
                let t = u[0].clamp(0.0, 1.0);
                let x = if *log {
                    (lo.ln() + t * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + t * (hi - lo)
                };
                HpValue::Float(x.clamp(*lo, *hi))
            }
            Domain::Integer { lo, hi } => {
                let t = u[0].clamp(0.0, 1.0);
                HpValue::Int((*lo as f64 + t * (*hi - *lo) as f64).round() as i64)
            }
            Domain::Categorical { choices } => {
                let mut best = 0;
                for (i, &x) in u.iter().enumerate() {
                    if x > u[best] {
                        best = i;
                    }
                }
                HpValue::Str(choices[best].clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpParam {
    pub name: String,
    #[serde(flatten)]
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HpSpace {
    pub tunables: Vec<HpParam>,
    pub statics: BTreeMap<String, HpValue>,
}

impl HpSpace {
    pub fn param(&self, name: &str) -> Option<&HpParam> {
        self.tunables.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut HpParam> {
        self.tunables.iter_mut().find(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let mut names: Vec<&str> = self.tunables.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(LearnerError::InvalidSpace("duplicate tunable name".into()));
        }
        for p in &self.tunables {
            p.domain
                .validate()
                .map_err(|e| LearnerError::InvalidSpace(format!("{}: {e}", p.name)))?;
            if self.statics.contains_key(&p.name) {
                return Err(LearnerError::InvalidSpace(format!("{} is both static and tunable", p.name)));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.tunables.iter().map(|p| p.domain.width()).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HpConfig {
        let mut cfg = HpConfig::new();
        for p in &self.tunables {
            cfg.insert(&p.name, p.domain.sample(rng));
        }
        cfg
    }

    /// Restricts a configuration to the tunables of this space, projecting each
    /// value into its domain and filling gaps with the domain midpoint.
    pub fn project(&self, cfg: &HpConfig) -> HpConfig {
        let mut out = HpConfig::new();
        for p in &self.tunables {
            out.insert(&p.name, p.domain.project(cfg.get(&p.name)));
        }
        out
    }

    pub fn contains(&self, cfg: &HpConfig) -> bool {
        self.tunables
            .iter()
            .all(|p| cfg.get(&p.name).is_some_and(|v| p.domain.contains(v)))
    }

    pub fn encode(&self, cfg: &HpConfig) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims());
        for p in &self.tunables {
            let v = cfg.get(&p.name).cloned().unwrap_or_else(|| p.domain.project(None));
            p.domain.encode(&v, &mut out);
        }
        out
    }

    pub fn decode(&self, u: &[f64]) -> HpConfig {
        let mut cfg = HpConfig::new();
        let mut offset = 0;
        for p in &self.tunables {
            let w = p.domain.width();
            cfg.insert(&p.name, p.domain.decode(&u[offset..offset + w]));
            offset += w;
        }
        cfg
    }

    /// A uniform draw expressed directly in unit-cube coordinates; same
    /// distribution as `sample` followed by `encode`.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims());
        for p in &self.tunables {
            match &p.domain {
                Domain::Continuous { .. } => out.push(rng.random::<f64>()),
                Domain::Integer { lo, hi } => {
                    let k = rng.random_range(*lo..=*hi);
                    out.push((k - lo) as f64 / (hi - lo) as f64);
                }
                Domain::Categorical { choices } => {
                    let k = rng.random_range(0..choices.len());
                    out.extend((0..choices.len()).map(|i| if i == k { 1.0 } else { 0.0 }));
                }
            }
        }
        out
    }

    /// Moves unit-cube coordinates onto values the space can represent:
    /// clamps, rounds integer grids and one-hots categoricals.
    pub fn snap(&self, u: &mut [f64]) {
        let mut offset = 0;
        for p in &self.tunables {
            match &p.domain {
                Domain::Continuous { .. } => u[offset] = u[offset].clamp(0.0, 1.0),
                Domain::Integer { lo, hi } => {
                    let steps = (hi - lo) as f64;
                    u[offset] = (u[offset].clamp(0.0, 1.0) * steps).round() / steps;
                }
                Domain::Categorical { choices } => {
                    let block = &mut u[offset..offset + choices.len()];
                    let mut best = 0;
                    for i in 0..block.len() {
                        if block[i] > block[best] {
                            best = i;
                        }
                    }
                    for (i, v) in block.iter_mut().enumerate() {
                        *v = if i == best { 1.0 } else { 0.0 };
                    }
                }
            }
            offset += p.domain.width();
        }
    }

    /// Statics overlaid with the tunable assignment.
    pub fn full_config(&self, tunable: &HpConfig) -> HpConfig {
        let mut cfg = HpConfig(self.statics.clone());
        for (k, v) in &tunable.0 {
            cfg.0.insert(k.clone(), v.clone());
        }
        cfg
    }
}

fn continuous(name: &str, lo: f64, hi: f64, log: bool) -> HpParam {
    HpParam {
        name: name.into(),
        domain: Domain::Continuous { lo, hi, log },
    }
}

fn integer(name: &str, lo: i64, hi: i64) -> HpParam {
    HpParam {
        name: name.into(),
        domain: Domain::Integer { lo, hi },
    }
}

/// Loss name stored as a static hyperparameter.
pub fn loss_name(algorithm: Algorithm, problem: ProblemType) -> &'static str {
    match (algorithm, problem) {
        (_, ProblemType::Regression) => "squared_error",
        (_, ProblemType::BinaryClassification) => "logistic",
        (Algorithm::Gbt, ProblemType::MulticlassClassification { .. }) => "logistic_ovr",
        (Algorithm::Linear, ProblemType::MulticlassClassification { .. }) => "softmax",
    }
}

/// Search space whose bounds scale with the dataset so that no tunable
/// choice can exceed what the data supports.
pub fn default_hp_space(algorithm: Algorithm, problem: ProblemType, n_rows: usize, _n_cols: usize) -> HpSpace {
    let n_rows = n_rows.max(10);
    let mut statics = BTreeMap::new();
    statics.insert("loss".to_string(), HpValue::Str(loss_name(algorithm, problem).into()));
    statics.insert("class_weight".to_string(), HpValue::Str("none".into()));
    let tunables = match algorithm {
        Algorithm::Gbt => {
            let depth_hi = 10.min((n_rows as f64).log2().floor() as i64);
            let child_hi = ((n_rows / 100) as i64).max(2);
            statics.insert("reg_lambda".to_string(), HpValue::Float(1.0));
            vec![
                integer("n_trees", 10, 300),
                integer("max_depth", 2, depth_hi),
                continuous("learning_rate", 0.01, 0.5, true),
                integer("min_child_rows", 1, child_hi),
                continuous("subsample", 0.5, 1.0, false),
            ]
        }
        Algorithm::Linear => {
            statics.insert("batch_size".to_string(), HpValue::Int(32));
            vec![
                continuous("l2", 1e-6, 10.0, true),
                continuous("learning_rate", 1e-4, 1.0, true),
                integer("epochs", 5, 100),
            ]
        }
    };
    HpSpace { tunables, statics }
}

/// The library defaults used by the single-configuration baseline.
pub fn default_config(algorithm: Algorithm) -> HpConfig {
    match algorithm {
        Algorithm::Gbt => HpConfig::new()
            .with("n_trees", HpValue::Int(100))
            .with("max_depth", HpValue::Int(6))
            .with("learning_rate", HpValue::Float(0.3))
            .with("min_child_rows", HpValue::Int(1))
            .with("subsample", HpValue::Float(1.0)),
        Algorithm::Linear => HpConfig::new()
            .with("l2", HpValue::Float(1e-4))
            .with("learning_rate", HpValue::Float(0.01))
            .with("epochs", HpValue::Int(30)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn depth_hi(space: &HpSpace) -> i64 {
        match space.param("max_depth").unwrap().domain {
            Domain::Integer { hi, .. } => hi,
            _ => unreachable!(),
        }
    }

    #[test]
    fn depth_bound_scales_with_rows() {
        let p = ProblemType::Regression;
        assert_eq!(depth_hi(&default_hp_space(Algorithm::Gbt, p, 1024, 5)), 10);
        assert_eq!(depth_hi(&default_hp_space(Algorithm::Gbt, p, 64, 5)), 6);
    }

    #[test]
    fn bounds_valid_for_all_sizes() {
        for n in 10..3000 {
            for alg in [Algorithm::Gbt, Algorithm::Linear] {
                default_hp_space(alg, ProblemType::BinaryClassification, n, 3).validate().unwrap();
            }
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let space = default_hp_space(Algorithm::Gbt, ProblemType::Regression, 5000, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let cfg = space.sample(&mut rng);
            assert!(space.contains(&cfg));
            let back = space.decode(&space.encode(&cfg));
            for p in &space.tunables {
                let (a, b) = (cfg.get(&p.name).unwrap().as_f64().unwrap(), back.get(&p.name).unwrap().as_f64().unwrap());
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{}: {a} vs {b}", p.name);
            }
        }
    }

    #[test]
    fn categorical_encoding() {
        let d = Domain::Categorical { choices: vec!["a".into(), "b".into(), "c".into()] };
        let mut out = Vec::new();
        d.encode(&HpValue::Str("b".into()), &mut out);
        assert_eq!(out, vec![0.0, 1.0, 0.0]);
        assert_eq!(d.decode(&out), HpValue::Str("b".into()));
    }

    #[test]
    fn projection_clamps() {
        let space = default_hp_space(Algorithm::Gbt, ProblemType::Regression, 64, 4);
        let cfg = HpConfig::new().with("max_depth", HpValue::Int(9)).with("learning_rate", HpValue::Float(3.0));
        let p = space.project(&cfg);
        assert_eq!(p.get("max_depth"), Some(&HpValue::Int(6)));
        assert_eq!(p.get("learning_rate"), Some(&HpValue::Float(0.5)));
        assert!(space.contains(&p));
    }

    #[test]
    fn invalid_domains() {
        assert!(Domain::Continuous { lo: 1.0, hi: 1.0, log: false }.validate().is_err());
        assert!(Domain::Continuous { lo: 0.0, hi: 1.0, log: true }.validate().is_err());
        assert!(Domain::Integer { lo: 4, hi: 2 }.validate().is_err());
    }
}
