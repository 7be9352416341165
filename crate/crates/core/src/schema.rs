//! Typed node library: node types, typed ports, parameter domains, adapters
//! and branch constraints.
//!
//! A [`SchemaRegistry`] is immutable once loaded and is shared read-only by
//! the validator, the rollout engine and the service.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const MINI_SD_JSON: &str = include_str!("../fixtures/mini-sd.json");
pub const MINI_EDIT_JSON: &str = include_str!("../fixtures/mini-edit.json");

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed registry: {0}")]
    MalformedRegistry(String),
    #[error("registry invariant violated: {0}")]
    InvariantViolation(String),
    #[error("duplicate node type `{0}`")]
    DuplicateTypeName(String),
    #[error("unknown bundled schema `{0}`")]
    UnknownBundled(String),
    #[error("i/o error reading registry: {0}")]
    Io(#[from] std::io::Error),
}

/// Name of a port type such as `MODEL` or `LATENT`. Comparison is exact.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortType(pub String);

impl PortType {
    pub fn new(name: impl Into<String>) -> Self {
        PortType(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PortType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Integer,
    Real,
    String,
    Enum,
    Boolean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl ParamDomain {
    /// Whether `value` lies in this domain. Integers must be JSON integers;
    /// reals accept any JSON number.
    pub fn contains(&self, value: &Value) -> bool {
        let numeric = match self.kind {
            ParamKind::Integer => match value {
                Value::Number(n) if n.is_i64() || n.is_u64() => n.as_f64(),
                _ => return false,
            },
            ParamKind::Real => match value {
                Value::Number(n) => n.as_f64(),
                _ => return false,
            },
            ParamKind::String => return value.is_string(),
            ParamKind::Boolean => return value.is_boolean(),
            ParamKind::Enum => return self.choices.contains(value),
        };
        let Some(x) = numeric else { return false };
        if !x.is_finite() {
            return false;
        }
        self.min.is_none_or(|lo| x >= lo) && self.max.is_none_or(|hi| x <= hi)
    }

    /// A value inside the domain: the default when declared, otherwise the
    /// lower bound, the first choice, or the kind's zero value.
    pub fn sample_value(&self) -> Value {
        if let Some(d) = &self.default {
            return d.clone();
        }
        match self.kind {
            ParamKind::Integer => {
                let lo = self.min.map(|m| m.ceil() as i64).unwrap_or(0);
                Value::from(lo)
            }
            ParamKind::Real => Value::from(self.min.unwrap_or(0.0)),
            ParamKind::String => Value::String(String::new()),
            ParamKind::Boolean => Value::Bool(false),
            ParamKind::Enum => self.choices.first().cloned().unwrap_or(Value::Null),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPortDef {
    pub name: String,
    pub port_type: PortType,
    pub required: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputPortDef {
    pub name: String,
    pub port_type: PortType,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub name: String,
    #[serde(flatten)]
    pub domain: ParamDomain,
    pub required: bool,
}

impl ParamDef {
    /// Required and without a default: must be supplied explicitly.
    pub fn must_be_supplied(&self) -> bool {
        self.required && self.domain.default.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Source,
    Transform,
    Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTypeDef {
    pub type_name: String,
    pub category: Category,
    #[serde(default)]
    pub inputs: Vec<InputPortDef>,
    #[serde(default)]
    pub params: Vec<ParamDef>,
    #[serde(default)]
    pub outputs: Vec<OutputPortDef>,
}

impl NodeTypeDef {
    pub fn input(&self, name: &str) -> Option<&InputPortDef> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&OutputPortDef> {
        self.outputs.iter().find(|p| p.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&ParamDef> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Params that must be present at construction, filled with in-domain
    /// sample values.
    pub fn sample_params(&self) -> BTreeMap<String, Value> {
        self.params
            .iter()
            .filter(|p| p.must_be_supplied())
            .map(|p| (p.name.clone(), p.domain.sample_value()))
            .collect()
    }

    fn check_invariants(&self) -> Result<(), SchemaError> {
        let mut names = BTreeSet::new();
        let all = self
            .inputs
            .iter()
            .map(|p| &p.name)
            .chain(self.params.iter().map(|p| &p.name));
        for name in all {
            if !names.insert(name.as_str()) {
                return Err(SchemaError::InvariantViolation(format!(
                    "{}: port/param name `{name}` declared twice",
                    self.type_name
                )));
            }
        }
        let mut outs = BTreeSet::new();
        for o in &self.outputs {
            if !outs.insert(o.name.as_str()) {
                return Err(SchemaError::InvariantViolation(format!(
                    "{}: output `{}` declared twice",
                    self.type_name, o.name
                )));
            }
        }
        if self.category == Category::Source && !self.inputs.is_empty() {
            return Err(SchemaError::InvariantViolation(format!(
                "{}: source node types cannot declare inputs",
                self.type_name
            )));
        }
        for p in &self.params {
            let d = &p.domain;
            if let (Some(lo), Some(hi)) = (d.min, d.max) {
                if lo > hi {
                    return Err(SchemaError::InvariantViolation(format!(
                        "{}.{}: min {lo} > max {hi}",
                        self.type_name, p.name
                    )));
                }
            }
            if d.kind == ParamKind::Enum && d.choices.is_empty() {
                return Err(SchemaError::InvariantViolation(format!(
                    "{}.{}: enum without choices",
                    self.type_name, p.name
                )));
            }
            if let Some(default) = &d.default {
                if !d.contains(default) {
                    return Err(SchemaError::InvariantViolation(format!(
                        "{}.{}: default {default} outside its domain",
                        self.type_name, p.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Declares that a single `via` node converts `from` into `to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub from: PortType,
    pub to: PortType,
    pub via: String,
}

/// The two named inputs of `node_type` must be fed by distinct upstream
/// node instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchConstraint {
    pub node_type: String,
    pub distinct_source_inputs: [String; 2],
}

impl BranchConstraint {
    /// The other input of the pair, if `port` belongs to it.
    pub fn partner_of(&self, port: &str) -> Option<&str> {
        let [a, b] = &self.distinct_source_inputs;
        if a == port {
            Some(b)
        } else if b == port {
            Some(a)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RegistryDoc {
    schema_id: String,
    node_types: Vec<NodeTypeDef>,
    #[serde(default)]
    adapters: Vec<Adapter>,
    #[serde(default)]
    branch_constraints: Vec<BranchConstraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemaRegistry {
    schema_id: String,
    node_types: BTreeMap<String, NodeTypeDef>,
    adapters: Vec<Adapter>,
    branch_constraints: Vec<BranchConstraint>,
}

impl SchemaRegistry {
    pub fn empty(schema_id: impl Into<String>) -> Self {
        SchemaRegistry {
            schema_id: schema_id.into(),
            node_types: BTreeMap::new(),
            adapters: Vec::new(),
            branch_constraints: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let doc: RegistryDoc = serde_json::from_str(text)
            .map_err(|e| SchemaError::MalformedRegistry(e.to_string()))?;
        Self::from_doc(doc)
    }

    /// One of the registries shipped with the crate (`mini-sd`, `mini-edit`).
    pub fn bundled(name: &str) -> Result<Self, SchemaError> {
        let text = match name {
            "mini-sd" => MINI_SD_JSON,
            "mini-edit" => MINI_EDIT_JSON,
            other => return Err(SchemaError::UnknownBundled(other.to_string())),
        };
        Self::from_json(text)
    }

    pub fn bundled_names() -> &'static [&'static str] {
        &["mini-sd", "mini-edit"]
    }

    fn from_doc(doc: RegistryDoc) -> Result<Self, SchemaError> {
        let mut node_types = BTreeMap::new();
        for def in doc.node_types {
            def.check_invariants()?;
            let name = def.type_name.clone();
            if node_types.insert(name.clone(), def).is_some() {
                return Err(SchemaError::DuplicateTypeName(name));
            }
        }
        let registry = SchemaRegistry {
            schema_id: doc.schema_id,
            node_types,
            adapters: doc.adapters,
            branch_constraints: doc.branch_constraints,
        };
        registry.check_adapters()?;
        registry.check_branch_constraints()?;
        Ok(registry)
    }

    fn check_adapters(&self) -> Result<(), SchemaError> {
        for a in &self.adapters {
            let via = self.lookup(&a.via).ok_or_else(|| {
                SchemaError::InvariantViolation(format!(
                    "adapter {} -> {} references missing node type `{}`",
                    a.from, a.to, a.via
                ))
            })?;
            let from_inputs = via
                .inputs
                .iter()
                .filter(|p| p.required && p.port_type == a.from)
                .count();
            let to_outputs = via.outputs.iter().filter(|p| p.port_type == a.to).count();
            if from_inputs != 1 || to_outputs != 1 {
                return Err(SchemaError::InvariantViolation(format!(
                    "adapter via `{}` must take exactly one required {} input and produce exactly one {} output",
                    a.via, a.from, a.to
                )));
            }
        }
        Ok(())
    }

    fn check_branch_constraints(&self) -> Result<(), SchemaError> {
        for c in &self.branch_constraints {
            let def = self.lookup(&c.node_type).ok_or_else(|| {
                SchemaError::InvariantViolation(format!(
                    "branch constraint references missing node type `{}`",
                    c.node_type
                ))
            })?;
            let [a, b] = &c.distinct_source_inputs;
            if a == b || def.input(a).is_none() || def.input(b).is_none() {
                return Err(SchemaError::InvariantViolation(format!(
                    "branch constraint on `{}` must name two distinct declared inputs",
                    c.node_type
                )));
            }
        }
        Ok(())
    }

    pub fn schema_id(&self) -> &str {
        &self.schema_id
    }

    /// Exact, case-sensitive lookup.
    pub fn lookup(&self, type_name: &str) -> Option<&NodeTypeDef> {
        self.node_types.get(type_name)
    }

    pub fn node_types(&self) -> impl Iterator<Item = &NodeTypeDef> {
        self.node_types.values()
    }

    pub fn len(&self) -> usize {
        self.node_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_types.is_empty()
    }

    pub fn adapters(&self) -> &[Adapter] {
        &self.adapters
    }

    /// Depth-1 adapter converting `from` into `to`, if declared.
    pub fn adapter_for(&self, from: &PortType, to: &PortType) -> Option<&Adapter> {
        self.adapters.iter().find(|a| &a.from == from && &a.to == to)
    }

    pub fn branch_constraints(&self) -> &[BranchConstraint] {
        &self.branch_constraints
    }

    pub fn constraints_for<'a>(
        &'a self,
        type_name: &'a str,
    ) -> impl Iterator<Item = &'a BranchConstraint> + 'a {
        self.branch_constraints
            .iter()
            .filter(move |c| c.node_type == type_name)
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self.to_doc()).expect("registry serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("registry serializes")
    }

    fn to_doc(&self) -> RegistryDoc {
        RegistryDoc {
            schema_id: self.schema_id.clone(),
            node_types: self.node_types.values().cloned().collect(),
            adapters: self.adapters.clone(),
            branch_constraints: self.branch_constraints.clone(),
        }
    }
}
