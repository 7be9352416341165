//! The policy interface and the mock policies used without an LLM.

use serde_json::{json, Value};
use thiserror::Error;

use super::entropy::PolicyDistribution;
use crate::action::render_edit;
use crate::diagnostic::Diagnostic;
use crate::edit::{GraphEdit, PortRef};
use crate::graph::{final_check, GraphDigest, WorkflowGraph};
use crate::schema::SchemaRegistry;
use crate::validator::{validate_edit, History};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("policy protocol error: {0}")]
    Protocol(String),
    #[error("policy i/o error: {0}")]
    Io(String),
}

/// What a policy sees at one step of one branch.
#[derive(Clone, Copy, Debug)]
pub struct PolicyState<'a> {
    pub query: &'a str,
    pub registry: &'a SchemaRegistry,
    pub graph: &'a WorkflowGraph,
    pub digest: GraphDigest,
    pub history: &'a History,
    pub step: usize,
    pub top_k: usize,
}

impl PolicyState<'_> {
    pub fn to_json(&self) -> Value {
        json!({
            "query": self.query,
            "step": self.step,
            "top_k": self.top_k,
            "graph_digest": self.digest,
            "graph": self.graph.to_json_value(Some(self.registry.schema_id())),
            "history": self.history,
        })
    }
}

pub trait Policy: Send + Sync {
    /// Short description recorded in the rollout header.
    fn name(&self) -> String;

    fn distribution(&self, state: &PolicyState<'_>) -> Result<PolicyDistribution, PolicyError>;

    /// A replacement line after a rejection; `None` gives up.
    fn repair(&self, _state: &PolicyState<'_>, _diagnostics: &[Diagnostic]) -> Option<String> {
        None
    }

    /// Whether sibling branches may query this policy at the same time.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Emits a fixed program line by line, then `STOP` forever.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    pub lines: Vec<String>,
}

impl ScriptedPolicy {
    pub fn new<S: Into<String>>(lines: impl IntoIterator<Item = S>) -> Self {
        ScriptedPolicy {
            lines: lines.into_iter().map(Into::into).collect(),
        }
    }

    /// One action per non-blank line of `text`.
    pub fn from_text(text: &str) -> Self {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> String {
        format!("scripted({} lines)", self.lines.len())
    }

    fn distribution(&self, state: &PolicyState<'_>) -> Result<PolicyDistribution, PolicyError> {
        let line = self.lines.get(state.step).map_or("STOP", String::as_str);
        Ok(PolicyDistribution::single(line))
    }
}

/// Every single edit that passes validation on `graph`, in canonical order:
/// `Stop` if the graph is executable, then edges (by source then
/// destination), then one `AddNode` per type with sample params.
pub fn admissible_edits(graph: &WorkflowGraph, registry: &SchemaRegistry) -> Vec<GraphEdit> {
    let mut out = Vec::new();
    if final_check(graph, registry).accepted {
        out.push(GraphEdit::Stop);
    }
    let mut outputs = Vec::new();
    let mut inputs = Vec::new();
    for node in graph.nodes() {
        let Some(def) = registry.lookup(&node.type_name) else {
            continue;
        };
        outputs.extend(def.outputs.iter().map(|o| PortRef::new(&node.node_id, &o.name)));
        inputs.extend(
            def.inputs
                .iter()
                .map(|i| PortRef::new(&node.node_id, &i.name))
                .filter(|r| graph.source_of(r).is_none()),
        );
    }
    for src in &outputs {
        for dst in &inputs {
            let edit = GraphEdit::add_edge(src.clone(), dst.clone());
            if validate_edit(graph, &edit, registry).accepted {
                out.push(edit);
            }
        }
    }
    for def in registry.node_types() {
        out.push(GraphEdit::add_node_with(def.type_name.clone(), def.sample_params()));
    }
    out
}

/// Uniform over the first `top_k` admissible edits.
#[derive(Clone, Debug, Default)]
pub struct UniformAdmissiblePolicy;

impl Policy for UniformAdmissiblePolicy {
    fn name(&self) -> String {
        "uniform".to_string()
    }

    fn distribution(&self, state: &PolicyState<'_>) -> Result<PolicyDistribution, PolicyError> {
        let lines: Vec<String> = admissible_edits(state.graph, state.registry)
            .iter()
            .take(state.top_k.max(1))
            .map(|e| render_edit(e, state.graph, state.registry))
            .collect();
        PolicyDistribution::uniform(lines).map_err(|e| PolicyError::Protocol(e.to_string()))
    }
}

/// Softmax over admissible edits scored by progress toward a target
/// workflow: new target node types score 1, edges into a required input
/// 0.5, `Stop` 2, anything else 0. The `top_k` best (stable on canonical
/// order) are kept.
#[derive(Clone, Debug)]
pub struct SoftmaxPolicy {
    pub target: WorkflowGraph,
    pub temperature: f64,
}

impl SoftmaxPolicy {
    pub fn new(target: WorkflowGraph, temperature: f64) -> Self {
        SoftmaxPolicy { target, temperature }
    }

    fn score(&self, edit: &GraphEdit, graph: &WorkflowGraph, registry: &SchemaRegistry) -> f64 {
        match edit {
            GraphEdit::Stop => 2.0,
            GraphEdit::AddNode { type_name, .. } => {
                let wanted = self.target.type_names().contains(type_name.as_str());
                let present = graph.type_names().contains(type_name.as_str());
                if wanted && !present {
                    1.0
                } else {
                    0.0
                }
            }
            GraphEdit::AddEdge { dst, .. } => {
                let required = graph
                    .node(&dst.node_id)
                    .and_then(|n| registry.lookup(&n.type_name))
                    .and_then(|d| d.input(&dst.port))
                    .is_some_and(|i| i.required);
                if required {
                    0.5
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }
}

impl Policy for SoftmaxPolicy {
    fn name(&self) -> String {
        format!("softmax(t={})", self.temperature)
    }

    fn distribution(&self, state: &PolicyState<'_>) -> Result<PolicyDistribution, PolicyError> {
        let mut scored: Vec<(f64, GraphEdit)> = admissible_edits(state.graph, state.registry)
            .into_iter()
            .map(|e| (self.score(&e, state.graph, state.registry), e))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.truncate(state.top_k.max(1));
        let t = self.temperature.max(1e-6);
        let top = scored.first().map_or(0.0, |s| s.0);
        let weights: Vec<f64> = scored.iter().map(|(s, _)| ((s - top) / t).exp()).collect();
        let z: f64 = weights.iter().sum();
        let lines = scored
            .iter()
            .map(|(_, e)| render_edit(e, state.graph, state.registry))
            .collect();
        PolicyDistribution::new(lines, weights.iter().map(|w| w / z).collect())
            .map_err(|e| PolicyError::Protocol(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::validator::step;

    fn state<'a>(
        r: &'a SchemaRegistry,
        g: &'a WorkflowGraph,
        h: &'a History,
        step: usize,
    ) -> PolicyState<'a> {
        PolicyState {
            query: "q",
            registry: r,
            graph: g,
            digest: g.digest(),
            history: h,
            step,
            top_k: 8,
        }
    }

    #[test]
    fn admissible_edits_all_validate() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let (g, _) = crate::validator::replay_lines(fixtures::TEXT_TO_IMAGE_LINES[..5].iter().copied(), &r);
        for e in admissible_edits(&g, &r) {
            if !e.is_stop() {
                assert!(validate_edit(&g, &e, &r).accepted, "{e:?}");
            }
            let line = render_edit(&e, &g, &r);
            assert!(step(&g, &line, &r).outcome.accepted, "{line}");
        }
    }

    #[test]
    fn stop_offered_only_when_executable() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = fixtures::text_to_image(&r);
        assert_eq!(admissible_edits(&g, &r)[0], GraphEdit::Stop);
        assert!(!admissible_edits(&WorkflowGraph::empty(), &r).contains(&GraphEdit::Stop));
    }

    #[test]
    fn scripted_then_stop() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = WorkflowGraph::empty();
        let h = History::default();
        let p = ScriptedPolicy::new(["A()"]);
        assert_eq!(p.distribution(&state(&r, &g, &h, 0)).unwrap().candidates, vec!["A()"]);
        assert_eq!(p.distribution(&state(&r, &g, &h, 1)).unwrap().candidates, vec!["STOP"]);
    }

    #[test]
    fn softmax_prefers_stop_and_target_types() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let target = fixtures::text_to_image(&r);
        let p = SoftmaxPolicy::new(target.clone(), 0.5);
        let h = History::default();
        let d = p.distribution(&state(&r, &target, &h, 0)).unwrap();
        assert_eq!(d.candidates[0], "STOP");
        let empty = WorkflowGraph::empty();
        let d = p.distribution(&state(&r, &empty, &h, 0)).unwrap();
        assert_eq!(d.len(), 6);
        assert!((d.entropy().unwrap() - 1.0).abs() < 1e-12);
    }
}
