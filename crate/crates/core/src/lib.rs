//! Execution-grounded construction of typed node-graph workflows.
//!
//! Policies propose one action line at a time; each line is parsed into
//! graph edits, validated against the schema registry and the current
//! partial graph, and either committed or rejected with diagnostics.

pub mod action;
pub mod conformance;
pub mod dataset;
pub mod diagnostic;
pub mod edit;
pub mod fixtures;
pub mod graph;
pub mod grpo;
pub mod par;
pub mod reward;
pub mod rollout;
pub mod schema;
pub mod validator;

pub use diagnostic::{Diagnostic, DiagnosticCode, ValidationOutcome};
pub use edit::{GraphEdit, PortRef};
pub use graph::{final_check, GraphDigest, WorkflowGraph};
pub use schema::SchemaRegistry;
