use super::{
    ActionTemplate, Bindings, ColumnCondition, ColumnRule, DatasetCondition, DatasetRule, Param, PortfolioMetadata,
    Strategy, StrategyPortfolio, Symbol, TypeDefaults,
};
use crate::learners::{Algorithm, HpConfig, HpValue};
use crate::schema::ColumnType;

fn gbt(n_trees: i64, depth: i64, lr: f64, child: i64, subsample: f64) -> HpConfig {
    HpConfig::new()
        .with("n_trees", HpValue::Int(n_trees))
        .with("max_depth", HpValue::Int(depth))
        .with("learning_rate", HpValue::Float(lr))
        .with("min_child_rows", HpValue::Int(child))
        .with("subsample", HpValue::Float(subsample))
}

fn linear(l2: f64, lr: f64, epochs: i64) -> HpConfig {
    HpConfig::new()
        .with("l2", HpValue::Float(l2))
        .with("learning_rate", HpValue::Float(lr))
        .with("epochs", HpValue::Int(epochs))
}

fn seeds(algorithm: Algorithm) -> Vec<HpConfig> {
    match algorithm {
        Algorithm::Gbt => vec![
            gbt(100, 6, 0.3, 1, 1.0),
            gbt(200, 4, 0.1, 5, 0.8),
            gbt(300, 6, 0.05, 2, 0.8),
            gbt(60, 3, 0.3, 1, 1.0),
            gbt(150, 8, 0.1, 10, 0.7),
        ],
        Algorithm::Linear => vec![
            linear(1e-4, 0.01, 30),
            linear(1e-3, 0.05, 50),
            linear(1e-2, 0.003, 80),
            linear(1e-6, 0.1, 20),
            linear(0.1, 0.02, 60),
        ],
    }
}

fn quantile_rule() -> ColumnRule {
    ColumnRule {
        column_type: ColumnType::Numeric,
        condition: ColumnCondition::OutliersAbove {
            threshold: Param::Symbol(Symbol::X1),
        },
        actions: vec![ActionTemplate::QuantileBin {
            bins: Param::Symbol(Symbol::X2),
        }],
    }
}

fn log_rule() -> ColumnRule {
    ColumnRule {
        column_type: ColumnType::Numeric,
        condition: ColumnCondition::AbsSkewAbove {
            threshold: Param::Value(2.0),
        },
        actions: vec![ActionTemplate::LogTransform, ActionTemplate::Standardize],
    }
}

fn text_rule() -> ColumnRule {
    ColumnRule {
        column_type: ColumnType::Text,
        condition: ColumnCondition::Always,
        actions: vec![ActionTemplate::Tfidf {
            max_features: Param::Value(300.0),
        }],
    }
}

fn pca_rule() -> DatasetRule {
    DatasetRule {
        condition: DatasetCondition::ColumnsAbove {
            threshold: Param::Symbol(Symbol::X3),
        },
        action: ActionTemplate::Pca {
            fraction: Param::Symbol(Symbol::X4),
        },
    }
}

fn strategy(id: &str, algorithm: Algorithm, column_rules: Vec<ColumnRule>, dataset_rules: Vec<DatasetRule>) -> Strategy {
    Strategy {
        id: format!("{}-{id}", algorithm.name()),
        column_rules,
        dataset_rules,
        defaults: TypeDefaults::default(),
        algorithm,
        bindings: Bindings::default(),
        seeds: seeds(algorithm),
    }
}

/// Ten strategies: five preprocessing recipes for each algorithm.
pub fn builtin_portfolio() -> StrategyPortfolio {
    let mut strategies = Vec::new();
    for algorithm in [Algorithm::Gbt, Algorithm::Linear] {
        strategies.push(strategy("default", algorithm, vec![], vec![]));
        strategies.push(strategy("quantile", algorithm, vec![quantile_rule()], vec![]));
        strategies.push(strategy("log", algorithm, vec![log_rule()], vec![]));
        strategies.push(strategy("pca", algorithm, vec![quantile_rule()], vec![pca_rule()]));
        strategies.push(strategy("tfidf", algorithm, vec![text_rule()], vec![]));
    }
    StrategyPortfolio {
        strategies,
        metadata: PortfolioMetadata {
            note: Some("built-in".into()),
            ..Default::default()
        },
    }
}
