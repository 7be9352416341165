//! Structured rejection feedback.
//!
//! Codes serialize to stable strings (the variant names) and each
//! constructor fills exactly the subject fields its code requires.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::schema::PortType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    UnknownOperator,
    MissingRequiredField,
    ParamOutOfDomain,
    SchemaViolation,
    TypeMismatch,
    MissingAdapter,
    PortOccupied,
    AcyclicityViolation,
    BranchConstraintViolation,
    MissingRequiredInput,
    NoOutputNode,
    UnknownNodeId,
    UnknownPort,
    SyntaxError,
    UnknownVariable,
    ArityMismatch,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::UnknownOperator => "UnknownOperator",
            DiagnosticCode::MissingRequiredField => "MissingRequiredField",
            DiagnosticCode::ParamOutOfDomain => "ParamOutOfDomain",
            DiagnosticCode::SchemaViolation => "SchemaViolation",
            DiagnosticCode::TypeMismatch => "TypeMismatch",
            DiagnosticCode::MissingAdapter => "MissingAdapter",
            DiagnosticCode::PortOccupied => "PortOccupied",
            DiagnosticCode::AcyclicityViolation => "AcyclicityViolation",
            DiagnosticCode::BranchConstraintViolation => "BranchConstraintViolation",
            DiagnosticCode::MissingRequiredInput => "MissingRequiredInput",
            DiagnosticCode::NoOutputNode => "NoOutputNode",
            DiagnosticCode::UnknownNodeId => "UnknownNodeId",
            DiagnosticCode::UnknownPort => "UnknownPort",
            DiagnosticCode::SyntaxError => "SyntaxError",
            DiagnosticCode::UnknownVariable => "UnknownVariable",
            DiagnosticCode::ArityMismatch => "ArityMismatch",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subject {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
}

/// Machine-readable repair suggestion attached to a diagnostic.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Hint {
    /// An adapter node of type `via` converts `from` into `to`; the caller
    /// must insert it explicitly.
    MissingAdapter {
        via: String,
        from: PortType,
        to: PortType,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    #[serde(default)]
    pub subject: Subject,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<Hint>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

fn node_port(node: &str, port: &str) -> Subject {
    Subject {
        node_id: Some(node.to_string()),
        port: Some(port.to_string()),
        param: None,
    }
}

fn node_param(node: Option<&str>, param: &str) -> Subject {
    Subject {
        node_id: node.map(str::to_string),
        port: None,
        param: Some(param.to_string()),
    }
}

fn node_only(node: &str) -> Subject {
    Subject {
        node_id: Some(node.to_string()),
        ..Subject::default()
    }
}

impl Diagnostic {
    fn new(code: DiagnosticCode, subject: Subject, message: String) -> Self {
        Diagnostic {
            code,
            subject,
            message,
            hint: None,
        }
    }

    pub fn unknown_operator(node: Option<&str>, type_name: &str) -> Self {
        let subject = Subject {
            node_id: node.map(str::to_string),
            ..Subject::default()
        };
        Self::new(
            DiagnosticCode::UnknownOperator,
            subject,
            format!("node type `{type_name}` does not exist in the registry"),
        )
    }

    pub fn missing_required_field(node: Option<&str>, type_name: &str, param: &str) -> Self {
        Self::new(
            DiagnosticCode::MissingRequiredField,
            node_param(node, param),
            format!("{type_name} requires parameter `{param}`"),
        )
    }

    pub fn param_out_of_domain(
        node: Option<&str>,
        type_name: &str,
        param: &str,
        value: &serde_json::Value,
    ) -> Self {
        Self::new(
            DiagnosticCode::ParamOutOfDomain,
            node_param(node, param),
            format!("{type_name}.{param} = {value} is outside its domain"),
        )
    }

    pub fn unknown_param(node: Option<&str>, type_name: &str, param: &str) -> Self {
        Self::new(
            DiagnosticCode::SchemaViolation,
            node_param(node, param),
            format!("{type_name} declares no parameter `{param}`"),
        )
    }

    pub fn schema_violation(subject: Subject, message: impl Into<String>) -> Self {
        Self::new(DiagnosticCode::SchemaViolation, subject, message.into())
    }

    pub fn type_mismatch(
        dst_node: &str,
        dst_port: &str,
        src: &str,
        from: &PortType,
        to: &PortType,
        adapter: Option<&str>,
    ) -> Self {
        let mut message = format!("{src} produces {from} but {dst_node}.{dst_port} expects {to}");
        if let Some(via) = adapter {
            message.push_str(&format!("; insert a {via} node to convert {from} to {to}"));
        }
        Diagnostic {
            code: DiagnosticCode::TypeMismatch,
            subject: node_port(dst_node, dst_port),
            message,
            hint: adapter.map(|via| Hint::MissingAdapter {
                via: via.to_string(),
                from: from.clone(),
                to: to.clone(),
            }),
        }
    }

    pub fn port_occupied(node: &str, port: &str, existing_src: &str) -> Self {
        Self::new(
            DiagnosticCode::PortOccupied,
            node_port(node, port),
            format!("{node}.{port} is already fed by {existing_src}; disconnect it first"),
        )
    }

    pub fn not_connected(node: &str, port: &str) -> Self {
        Self::new(
            DiagnosticCode::SchemaViolation,
            node_port(node, port),
            format!("{node}.{port} has no incoming edge to remove"),
        )
    }

    pub fn acyclicity(node: &str, port: Option<&str>, detail: impl Into<String>) -> Self {
        let subject = match port {
            Some(p) => node_port(node, p),
            None => node_only(node),
        };
        Self::new(DiagnosticCode::AcyclicityViolation, subject, detail.into())
    }

    pub fn branch_constraint(node: &str, port: &str, shared_src: &str, other_port: &str) -> Self {
        Self::new(
            DiagnosticCode::BranchConstraintViolation,
            node_port(node, port),
            format!(
                "{node}.{port} and {node}.{other_port} must be fed by distinct nodes, both use {shared_src}"
            ),
        )
    }

    pub fn missing_required_input(node: &str, port: &str) -> Self {
        Self::new(
            DiagnosticCode::MissingRequiredInput,
            node_port(node, port),
            format!("required input {node}.{port} is not connected"),
        )
    }

    pub fn no_output_node() -> Self {
        Self::new(
            DiagnosticCode::NoOutputNode,
            Subject::default(),
            "workflow has no output node".to_string(),
        )
    }

    pub fn unreachable_output(node: &str) -> Self {
        Self::new(
            DiagnosticCode::NoOutputNode,
            node_only(node),
            format!("output node {node} is not reachable from any source node"),
        )
    }

    pub fn unknown_node(node: &str) -> Self {
        Self::new(
            DiagnosticCode::UnknownNodeId,
            node_only(node),
            format!("no node with id `{node}`"),
        )
    }

    pub fn unknown_port(node: &str, port: &str, detail: impl Into<String>) -> Self {
        Self::new(DiagnosticCode::UnknownPort, node_port(node, port), detail.into())
    }

    pub fn syntax(message: impl Into<String>) -> Self {
        Self::new(DiagnosticCode::SyntaxError, Subject::default(), message.into())
    }

    pub fn unknown_variable(name: &str) -> Self {
        Self::new(
            DiagnosticCode::UnknownVariable,
            Subject::default(),
            format!("variable `{name}` is not bound by any accepted node"),
        )
    }

    pub fn arity(type_name: &str, expected: usize, got: usize) -> Self {
        Self::new(
            DiagnosticCode::ArityMismatch,
            Subject::default(),
            format!("{type_name} has {expected} outputs but {got} variables were assigned"),
        )
    }

    /// Canonical ordering key: subject node, then port/param, then code.
    pub fn sort_key(&self) -> (&str, &str, DiagnosticCode, &str) {
        let node = self.subject.node_id.as_deref().unwrap_or("");
        let slot = self
            .subject
            .port
            .as_deref()
            .or(self.subject.param.as_deref())
            .unwrap_or("");
        (node, slot, self.code, self.message.as_str())
    }
}

pub fn sort_canonical(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Acceptance flag plus diagnostics; accepted exactly when diagnostics are
/// empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub accepted: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationOutcome {
    pub fn accept() -> Self {
        ValidationOutcome {
            accepted: true,
            diagnostics: Vec::new(),
        }
    }

    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        ValidationOutcome {
            accepted: diagnostics.is_empty(),
            diagnostics,
        }
    }

    pub fn reject(diagnostic: Diagnostic) -> Self {
        Self::from_diagnostics(vec![diagnostic])
    }

    pub fn has_code(&self, code: DiagnosticCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }

    pub fn codes(&self) -> Vec<DiagnosticCode> {
        self.diagnostics.iter().map(|d| d.code).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_serialize_to_stable_strings() {
        let s = serde_json::to_string(&DiagnosticCode::BranchConstraintViolation).unwrap();
        assert_eq!(s, "\"BranchConstraintViolation\"");
        assert_eq!(DiagnosticCode::MissingRequiredInput.to_string(), "MissingRequiredInput");
    }

    #[test]
    fn hint_wire_shape() {
        let d = Diagnostic::type_mismatch(
            "sampler_0",
            "latent",
            "decode_0.image",
            &PortType::new("IMAGE"),
            &PortType::new("LATENT"),
            Some("Encode"),
        );
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["code"], "TypeMismatch");
        assert_eq!(v["hint"]["kind"], "MissingAdapter");
        assert_eq!(v["hint"]["via"], "Encode");
        assert_eq!(v["subject"]["node_id"], "sampler_0");
    }

    #[test]
    fn outcome_accepts_iff_empty() {
        assert!(ValidationOutcome::from_diagnostics(vec![]).accepted);
        assert!(!ValidationOutcome::reject(Diagnostic::no_output_node()).accepted);
    }

    #[test]
    fn canonical_order() {
        let mut d = vec![
            Diagnostic::missing_required_input("sampler_0", "positive"),
            Diagnostic::no_output_node(),
            Diagnostic::missing_required_input("decode_0", "vae"),
            Diagnostic::missing_required_input("sampler_0", "latent"),
        ];
        sort_canonical(&mut d);
        let keys: Vec<_> = d
            .iter()
            .map(|d| (d.subject.node_id.clone(), d.subject.port.clone()))
            .collect();
        assert_eq!(keys[0], (None, None));
        assert_eq!(keys[1].0.as_deref(), Some("decode_0"));
        assert_eq!(keys[2].1.as_deref(), Some("latent"));
        assert_eq!(keys[3].1.as_deref(), Some("positive"));
    }
}
