use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::diagnostic::{Diagnostic, ValidationOutcome};
use crate::edit::PortRef;
use crate::graph::WorkflowGraph;
use crate::schema::SchemaRegistry;

pub const DEFAULT_HISTORY_CAPACITY: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub action_text: String,
    pub accepted: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Recent validation records plus facts derived from the current graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub capacity: usize,
    pub records: VecDeque<HistoryRecord>,
    /// `occupied:<node.port>` for every connected input and
    /// `unfilled:<node.port>` for every required input still open.
    pub accumulated_constraints: BTreeSet<String>,
}

impl Default for History {
    fn default() -> Self {
        History::with_capacity(DEFAULT_HISTORY_CAPACITY)
    }
}

impl History {
    pub fn with_capacity(capacity: usize) -> Self {
        History {
            capacity,
            records: VecDeque::new(),
            accumulated_constraints: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRecord> {
        self.records.back()
    }
}

fn constraints_of(graph: &WorkflowGraph, registry: &SchemaRegistry) -> BTreeSet<String> {
    let mut facts = BTreeSet::new();
    for node in graph.nodes() {
        let Some(def) = registry.lookup(&node.type_name) else {
            continue;
        };
        for input in &def.inputs {
            let r = PortRef::new(&node.node_id, &input.name);
            if graph.source_of(&r).is_some() {
                facts.insert(format!("occupied:{r}"));
            } else if input.required {
                facts.insert(format!("unfilled:{r}"));
            }
        }
    }
    facts
}

/// Appends a record, evicting the oldest beyond capacity, and refreshes
/// the derived constraints from `graph` (the state after the action).
pub fn update_history(
    h: &History,
    action_text: &str,
    outcome: &ValidationOutcome,
    graph: &WorkflowGraph,
    registry: &SchemaRegistry,
) -> History {
    let mut next = h.clone();
    next.records.push_back(HistoryRecord {
        action_text: action_text.to_string(),
        accepted: outcome.accepted,
        diagnostics: outcome.diagnostics.clone(),
    });
    while next.records.len() > next.capacity {
        next.records.pop_front();
    }
    next.accumulated_constraints = constraints_of(graph, registry);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fifo_eviction() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = WorkflowGraph::empty();
        let mut h = History::default();
        for i in 0..9 {
            h = update_history(&h, &format!("line {i}"), &ValidationOutcome::accept(), &g, &r);
        }
        assert_eq!(h.len(), 8);
        assert_eq!(h.records.front().unwrap().action_text, "line 1");
        assert!(h.last().unwrap().diagnostics.is_empty());
    }

    #[test]
    fn branches_diverge_independently() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = WorkflowGraph::empty();
        let base = update_history(&History::default(), "a", &ValidationOutcome::accept(), &g, &r);
        let left = update_history(&base, "left", &ValidationOutcome::accept(), &g, &r);
        let right = update_history(&base, "right", &ValidationOutcome::accept(), &g, &r);
        assert_eq!(base.len(), 1);
        assert_eq!(left.last().unwrap().action_text, "left");
        assert_eq!(right.last().unwrap().action_text, "right");
    }

    #[test]
    fn constraints_track_graph() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = fixtures::text_to_image(&r);
        let h = update_history(&History::default(), "x", &ValidationOutcome::accept(), &g, &r);
        assert!(h.accumulated_constraints.contains("occupied:sampler_0.latent"));
        assert!(!h.accumulated_constraints.iter().any(|f| f.starts_with("unfilled:")));
        let g = g
            .apply_edit(&crate::edit::GraphEdit::RemoveEdge { dst: fixtures::port("sampler_0.latent") }, &r)
            .unwrap();
        let h = update_history(&h, "y", &ValidationOutcome::accept(), &g, &r);
        assert!(h.accumulated_constraints.contains("unfilled:sampler_0.latent"));
    }
}
