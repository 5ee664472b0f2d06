//! Human-editable pipeline definition files (TOML, one pipeline per file).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::data::ProblemType;
use crate::learners::{Algorithm, HpConfig, HpParam, HpSpace, HpValue};
use crate::resources::ResourcePlan;
use crate::schema::SchemaReport;
use crate::transforms::TransformerSpec;

/// A concrete, dataset-specific pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineDefinition {
    pub id: String,
    pub strategy: String,
    pub problem_type: ProblemType,
    pub target: String,
    pub rule_firings: Vec<String>,
    pub transformers: Vec<TransformerSpec>,
    pub algorithm: Algorithm,
    pub space: HpSpace,
    pub seeds: Vec<HpConfig>,
    pub resources: Option<ResourcePlan>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DefinitionError {
    #[error("{file}:{line}:{column}: parse error: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{file}:{line}: invalid definition: {message}")]
    Validation { file: String, line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineSection {
    id: String,
    strategy: String,
    problem_type: String,
    #[serde(default)]
    n_classes: usize,
    target: String,
    #[serde(default)]
    rule_firings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmSection {
    name: Algorithm,
    #[serde(rename = "static", default)]
    statics: BTreeMap<String, HpValue>,
    #[serde(default)]
    seeds: Vec<HpConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefinitionFile {
    pipeline: PipelineSection,
    #[serde(default)]
    transformers: Vec<TransformerSpec>,
    algorithm: AlgorithmSection,
    #[serde(default)]
    tunables: Vec<HpParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resources: Option<ResourcePlan>,
}

pub fn serialize_definition(def: &PipelineDefinition) -> String {
    let file = DefinitionFile {
        pipeline: PipelineSection {
            id: def.id.clone(),
            strategy: def.strategy.clone(),
            problem_type: def.problem_type.name().to_string(),
            n_classes: def.problem_type.n_classes(),
            target: def.target.clone(),
            rule_firings: def.rule_firings.clone(),
        },
        transformers: def.transformers.clone(),
        algorithm: AlgorithmSection {
            name: def.algorithm,
            statics: def.space.statics.clone(),
            seeds: def.seeds.clone(),
        },
        tunables: def.space.tunables.clone(),
        resources: def.resources.clone(),
    };
    toml::to_string(&file).expect("definition serializes")
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Locates a value by a path of table keys and array indices.
enum Key<'a> {
    Name(&'a str),
    Index(usize),
}

fn locate(root: &Spanned<DeValue<'_>>, text: &str, path: &[Key<'_>]) -> usize {
    let mut cur = root;
    let mut line = 1;
    for k in path {
        let next = match k {
            Key::Name(n) => cur.get_ref().get(*n),
            Key::Index(i) => cur.get_ref().get(*i),
        };
        match next {
            Some(v) => {
                cur = v;
                line = line_of(text, v.span().start);
            }
            None => break,
        }
    }
    line
}

fn problem_from(name: &str, n_classes: usize) -> Result<ProblemType, String> {
    match name {
        "regression" => Ok(ProblemType::Regression),
        "binary_classification" => Ok(ProblemType::BinaryClassification),
        "multiclass_classification" if n_classes >= 3 => Ok(ProblemType::MulticlassClassification { n_classes }),
        "multiclass_classification" => Err(format!("multiclass needs n_classes >= 3, got {n_classes}")),
        other => Err(format!("unknown problem_type {other:?}")),
    }
}

/// Parses one definition and validates domains, ordering and (when a schema
/// is given) column references. Errors carry the offending line.
pub fn parse_definition(text: &str, file: &str, schema: Option<&SchemaReport>) -> Result<PipelineDefinition, DefinitionError> {
    let parse_err = |e: toml::de::Error| {
        let (line, column) = match e.span() {
            Some(s) => {
                let start = s.start.min(text.len());
                let line_start = text[..start].rfind('\n').map_or(0, |p| p + 1);
                (line_of(text, start), start - line_start + 1)
            }
            None => (1, 1),
        };
        DefinitionError::Parse {
            file: file.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    };
    let parsed: DefinitionFile = toml::from_str(text).map_err(parse_err)?;
    let root = DeTable::parse(text).map_err(parse_err)?;
    let root = Spanned::new(root.span(), DeValue::Table(root.into_inner()));
    let invalid = |path: &[Key<'_>], message: String| DefinitionError::Validation {
        file: file.to_string(),
        line: locate(&root, text, path),
        message,
    };

    if parsed.pipeline.id.trim().is_empty() {
        return Err(invalid(&[Key::Name("pipeline"), Key::Name("id")], "pipeline id is empty".into()));
    }
    let problem_type = problem_from(&parsed.pipeline.problem_type, parsed.pipeline.n_classes)
        .map_err(|m| invalid(&[Key::Name("pipeline"), Key::Name("problem_type")], m))?;

    let mut seen_multi = false;
    for (i, t) in parsed.transformers.iter().enumerate() {
        let here = [Key::Name("transformers"), Key::Index(i)];
        t.kind
            .validate()
            .map_err(|e| invalid(&here, format!("transformer {}: {e}", t.kind.name())))?;
        if t.kind.is_multi_column() {
            seen_multi = true;
        } else {
            if seen_multi {
                return Err(invalid(
                    &here,
                    format!("{} must precede multi-column transformers", t.kind.name()),
                ));
            }
            if t.columns.is_empty() {
                return Err(invalid(&here, format!("{} needs at least one column", t.kind.name())));
            }
        }
        if let Some(schema) = schema {
            for c in &t.columns {
                if c == &schema.target {
                    return Err(invalid(&here, format!("column {c:?} is the target")));
                }
                if schema.column(c).is_none() {
                    return Err(invalid(&here, format!("column {c:?} is not in the dataset")));
                }
            }
        }
    }

    let space = HpSpace {
        tunables: parsed.tunables,
        statics: parsed.algorithm.statics,
    };
    let mut names = std::collections::HashSet::new();
    for (i, p) in space.tunables.iter().enumerate() {
        let here = [Key::Name("tunables"), Key::Index(i)];
        p.domain.validate().map_err(|m| invalid(&here, format!("tunable {}: {m}", p.name)))?;
        if !names.insert(p.name.as_str()) {
            return Err(invalid(&here, format!("duplicate tunable {}", p.name)));
        }
        if space.statics.contains_key(&p.name) {
            return Err(invalid(&here, format!("{} is both static and tunable", p.name)));
        }
    }
    if parsed.algorithm.seeds.len() > super::MAX_SEEDS {
        return Err(invalid(
            &[Key::Name("algorithm"), Key::Name("seeds")],
            format!("at most {} seeds", super::MAX_SEEDS),
        ));
    }
    if let Some(r) = &parsed.resources {
        if r.instance_count == 0 || !(r.memory_bytes > 0.0) {
            return Err(invalid(
                &[Key::Name("resources")],
                "resources need a positive instance count and memory".into(),
            ));
        }
    }
    if let Some(schema) = schema {
        if schema.target != parsed.pipeline.target {
            return Err(invalid(
                &[Key::Name("pipeline"), Key::Name("target")],
                format!("target {:?} differs from the job target {:?}", parsed.pipeline.target, schema.target),
            ));
        }
    }

    Ok(PipelineDefinition {
        id: parsed.pipeline.id,
        strategy: parsed.pipeline.strategy,
        problem_type,
        target: parsed.pipeline.target,
        rule_firings: parsed.pipeline.rule_firings,
        transformers: parsed.transformers,
        algorithm: parsed.algorithm.name,
        space,
        seeds: parsed.algorithm.seeds,
        resources: parsed.resources,
    })
}

/// Parses a list of definitions given as `(file name, text)` pairs.
pub fn parse_definitions(
    files: &[(String, String)],
    schema: Option<&SchemaReport>,
) -> Result<Vec<PipelineDefinition>, DefinitionError> {
    let defs = files
        .iter()
        .map(|(name, text)| parse_definition(text, name, schema))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids: Vec<&str> = defs.iter().map(|d| d.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(DefinitionError::Validation {
            file: files.first().map(|f| f.0.clone()).unwrap_or_default(),
            line: 1,
            message: format!("duplicate pipeline id {}", w[0]),
        });
    }
    Ok(defs)
}

/// Writes `<dir>/<id>.toml` for each definition.
pub fn write_definitions(dir: &Path, defs: &[PipelineDefinition]) -> Result<Vec<PathBuf>, DefinitionError> {
    std::fs::create_dir_all(dir).map_err(|e| DefinitionError::Io(format!("{}: {e}", dir.display())))?;
    defs.iter()
        .map(|d| {
            let path = dir.join(format!("{}.toml", d.id));
            std::fs::write(&path, serialize_definition(d))
                .map_err(|e| DefinitionError::Io(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.toml` in `dir`, in file-name order.
pub fn read_definitions(dir: &Path, schema: Option<&SchemaReport>) -> Result<Vec<PipelineDefinition>, DefinitionError> {
    let io = |e: std::io::Error| DefinitionError::Io(format!("{}: {e}", dir.display()));
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DefinitionError::Io(format!("{}: no definition files", dir.display())));
    }
    let files = paths
        .iter()
        .map(|p| {
            std::fs::read_to_string(p)
                .map(|t| (p.display().to_string(), t))
                .map_err(|e| DefinitionError::Io(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    parse_definitions(&files, schema)
}
