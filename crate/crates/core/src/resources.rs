//! Memory estimation and instance selection from a simulated catalog.

use serde::{Deserialize, Serialize};

use crate::learners::{Algorithm, Domain, HpSpace};

pub const SAFETY_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryCoefficients {
    pub intercept_bytes: f64,
    pub bytes_per_cell: f64,
    /// GBT only: applied per unit of the largest allowed max_depth.
    #[serde(default)]
    pub depth_multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub gbt: MemoryCoefficients,
    pub linear: MemoryCoefficients,
}

impl Default for MemoryModel {
    fn default() -> Self {
        Self {
            gbt: MemoryCoefficients {
                intercept_bytes: 5.0e7,
                bytes_per_cell: 16.0,
                depth_multiplier: 0.05,
            },
            linear: MemoryCoefficients {
                intercept_bytes: 2.0e7,
                bytes_per_cell: 64.0,
                depth_multiplier: 0.0,
            },
        }
    }
}

impl MemoryModel {
    pub fn coefficients(&self, algorithm: Algorithm) -> &MemoryCoefficients {
        match algorithm {
            Algorithm::Gbt => &self.gbt,
            Algorithm::Linear => &self.linear,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for c in [&self.gbt, &self.linear] {
            if [c.intercept_bytes, c.bytes_per_cell, c.depth_multiplier]
                .iter()
                .any(|v| !(v.is_finite() && *v >= 0.0))
            {
                return Err(format!("memory coefficients must be finite and non-negative: {c:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    pub memory_bytes: f64,
    pub hourly_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCatalog {
    pub instances: Vec<Instance>,
}

const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

impl Default for InstanceCatalog {
    fn default() -> Self {
        let entries = [
            ("sim.small", 4.0, 1.0),
            ("sim.medium", 8.0, 2.0),
            ("sim.large", 16.0, 4.0),
            ("sim.xlarge", 32.0, 8.0),
            ("sim.2xlarge", 64.0, 16.0),
            ("sim.4xlarge", 128.0, 32.0),
        ];
        Self::new(
            entries
                .iter()
                .map(|(n, gb, c)| Instance {
                    name: n.to_string(),
                    memory_bytes: gb * GIB,
                    hourly_cost: *c,
                })
                .collect(),
        )
        .expect("built-in catalog is valid")
    }
}

impl InstanceCatalog {
    /// Sorts by cost (then capacity) and checks capacities.
    pub fn new(mut instances: Vec<Instance>) -> Result<Self, String> {
        if instances.is_empty() {
            return Err("instance catalog is empty".into());
        }
        if let Some(bad) = instances.iter().find(|i| !(i.memory_bytes > 0.0) || !(i.hourly_cost >= 0.0)) {
            return Err(format!("instance {} needs positive capacity and non-negative cost", bad.name));
        }
        instances.sort_by(|a, b| {
            a.hourly_cost
                .total_cmp(&b.hourly_cost)
                .then(a.memory_bytes.total_cmp(&b.memory_bytes))
        });
        Ok(Self { instances })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourcePlan {
    pub instance: String,
    pub instance_count: usize,
    pub memory_bytes: f64,
    pub hourly_cost: f64,
    pub estimated_bytes: f64,
    #[serde(default)]
    pub over_capacity: bool,
}

fn max_depth_hi(space: &HpSpace) -> f64 {
    match space.param("max_depth").map(|p| &p.domain) {
        Some(Domain::Integer { hi, .. }) => *hi as f64,
        Some(Domain::Continuous { hi, .. }) => *hi,
        _ => space
            .statics
            .get("max_depth")
            .and_then(|v| v.as_f64())
            .unwrap_or(0.0),
    }
}

/// Peak training memory for the most memory-hungry configuration in `space`.
pub fn estimate_memory(
    algorithm: Algorithm,
    n_rows: usize,
    n_cols: usize,
    density: f64,
    space: &HpSpace,
    model: &MemoryModel,
) -> f64 {
    let c = model.coefficients(algorithm);
    match algorithm {
        Algorithm::Gbt => {
            let data = c.bytes_per_cell * n_rows as f64 * n_cols as f64 * density;
            (c.intercept_bytes + data) * (1.0 + c.depth_multiplier * max_depth_hi(space))
        }
        Algorithm::Linear => c.intercept_bytes + c.bytes_per_cell * n_cols as f64,
    }
}

/// Cheapest instance holding `estimate * 1.2`; the largest one otherwise.
pub fn recommend(estimate: f64, catalog: &InstanceCatalog) -> ResourcePlan {
    let needed = estimate * SAFETY_FACTOR;
    let (chosen, over) = match catalog.instances.iter().find(|i| i.memory_bytes >= needed) {
        Some(i) => (i, false),
        None => {
            let largest = catalog
                .instances
                .iter()
                .max_by(|a, b| a.memory_bytes.total_cmp(&b.memory_bytes))
                .expect("catalog is non-empty");
            log::warn!(
                "estimated {:.0} bytes exceeds every instance; using {}",
                needed,
                largest.name
            );
            (largest, true)
        }
    };
    ResourcePlan {
        instance: chosen.name.clone(),
        instance_count: 1,
        memory_bytes: chosen.memory_bytes,
        hourly_cost: chosen.hourly_cost,
        estimated_bytes: estimate,
        over_capacity: over,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ProblemType;
    use crate::learners::{default_hp_space, HpParam};

    fn gbt_space(depth_hi: i64) -> HpSpace {
        let mut s = default_hp_space(Algorithm::Gbt, ProblemType::Regression, 10_000, 10);
        *s.param_mut("max_depth").unwrap() = HpParam {
            name: "max_depth".into(),
            domain: Domain::Integer { lo: 2, hi: depth_hi },
        };
        s
    }

    #[test]
    fn plugs_into_formula() {
        let mut m = MemoryModel::default();
        m.gbt = MemoryCoefficients {
            intercept_bytes: 1e8,
            bytes_per_cell: 16.0,
            depth_multiplier: 0.0,
        };
        let e = estimate_memory(Algorithm::Gbt, 1_000_000, 10, 1.0, &gbt_space(6), &m);
        assert_eq!(e, 2.6e8);
    }

    #[test]
    fn linear_ignores_rows() {
        let m = MemoryModel::default();
        let s = default_hp_space(Algorithm::Linear, ProblemType::Regression, 100, 5);
        assert_eq!(
            estimate_memory(Algorithm::Linear, 10, 5, 1.0, &s, &m),
            estimate_memory(Algorithm::Linear, 10_000_000, 5, 1.0, &s, &m)
        );
    }

    #[test]
    fn deeper_trees_cost_more() {
        let m = MemoryModel::default();
        let a = estimate_memory(Algorithm::Gbt, 1000, 10, 1.0, &gbt_space(6), &m);
        let b = estimate_memory(Algorithm::Gbt, 1000, 10, 1.0, &gbt_space(10), &m);
        assert!(b > a);
    }

    #[test]
    fn picks_cheapest_fitting_instance() {
        let cat = InstanceCatalog::new(vec![
            Instance {
                name: "big".into(),
                memory_bytes: 8e9,
                hourly_cost: 2.0,
            },
            Instance {
                name: "small".into(),
                memory_bytes: 4e9,
                hourly_cost: 1.0,
            },
        ])
        .unwrap();
        assert_eq!(recommend(2e9, &cat).instance, "small");
        assert_eq!(recommend(3.5e9, &cat).instance, "big");
        let over = recommend(1e10, &cat);
        assert!(over.over_capacity);
        assert_eq!(over.instance, "big");
    }
}
