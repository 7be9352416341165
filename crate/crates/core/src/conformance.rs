//! Exhaustive comparison of the incremental validator against a
//! whole-graph executability check.
//!
//! Every action-line sequence up to a given length is generated from the
//! empty graph. A sequence is accepted incrementally when every line and a
//! closing `STOP` are accepted. The oracle applies the same lines
//! structurally, with no validation, and judges the resulting graph.
//!
//! The line alphabet only ever adds nodes and edges, so a defect introduced
//! by one line cannot be undone by a later one. Sequences are grouped by the
//! state they reach, and each distinct state is judged once, weighted by the
//! number of sequences reaching it.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use serde::Serialize;
use serde_json::json;

use crate::edit::{GraphEdit, PortRef};
use crate::graph::{final_check, WorkflowGraph};
use crate::par::{self, Execution};
use crate::schema::SchemaRegistry;
use crate::validator::{transition_all, validate_edit};

const MAX_EXAMPLES: usize = 16;
const CHUNK: usize = 512;
const EXAMPLE_POOL: usize = 4096;

pub const PROBE_UNKNOWN_TYPE: &str = "UnknownOperator";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Track {
    /// Every line so far was accepted.
    Live,
    /// Some line was rejected; the graph is the structural result.
    Rejected,
}

/// One action line as the edits it lowers to.
pub type Line = Vec<GraphEdit>;

/// Lines that can be appended to `graph`: a bare instance of every node
/// type, invalid probes, every node type with its inputs wired to existing
/// outputs, every type-compatible edge (occupied and cyclic ones included)
/// and one ill-typed edge per input port.
pub fn line_alphabet(graph: &WorkflowGraph, registry: &SchemaRegistry) -> Vec<Line> {
    let mut lines = Vec::new();
    let outputs: Vec<(PortRef, &str)> = graph
        .nodes()
        .filter_map(|n| registry.lookup(&n.type_name).map(|d| (n, d)))
        .flat_map(|(n, d)| {
            d.outputs
                .iter()
                .map(move |o| (PortRef::new(&n.node_id, &o.name), o.port_type.as_str()))
        })
        .collect();

    for def in registry.node_types() {
        lines.push(vec![GraphEdit::AddNode {
            type_name: def.type_name.clone(),
            params: def.sample_params(),
        }]);
        if def.inputs.is_empty() {
            continue;
        }
        let id = graph.next_node_id(&def.type_name);
        // distinct sources where possible, then first match for every input
        for distinct in [true, false] {
            let mut used: Vec<&PortRef> = Vec::new();
            let mut line = vec![GraphEdit::AddNode {
                type_name: def.type_name.clone(),
                params: def.sample_params(),
            }];
            for input in &def.inputs {
                let src = outputs
                    .iter()
                    .filter(|(_, t)| *t == input.port_type.as_str())
                    .map(|(r, _)| r)
                    .find(|r| !distinct || !used.contains(r));
                if let Some(src) = src {
                    used.push(src);
                    line.push(GraphEdit::add_edge(src.clone(), PortRef::new(&id, &input.name)));
                }
            }
            if line.len() > 1 && !lines.contains(&line) {
                lines.push(line);
            }
        }
    }

    for def in registry.node_types() {
        if let Some(p) = def.params.iter().find(|p| p.domain.min.is_some()) {
            let mut params = def.sample_params();
            let below = p.domain.min.unwrap_or(0.0) - 1.0;
            params.insert(p.name.clone(), json!(below as i64));
            lines.push(vec![GraphEdit::AddNode {
                type_name: def.type_name.clone(),
                params,
            }]);
        }
        if let Some(p) = def.params.iter().find(|p| p.must_be_supplied()) {
            let mut params = def.sample_params();
            params.remove(&p.name);
            lines.push(vec![GraphEdit::AddNode {
                type_name: def.type_name.clone(),
                params,
            }]);
        }
    }
    lines.push(vec![GraphEdit::add_node(PROBE_UNKNOWN_TYPE)]);

    for n in graph.nodes() {
        let Some(def) = registry.lookup(&n.type_name) else {
            continue;
        };
        for input in &def.inputs {
            let dst = PortRef::new(&n.node_id, &input.name);
            let (matching, other): (Vec<_>, Vec<_>) =
                outputs.iter().partition(|(_, t)| *t == input.port_type.as_str());
            for (src, _) in matching.into_iter().chain(other.into_iter().take(1)) {
                lines.push(vec![GraphEdit::add_edge(src.clone(), dst.clone())]);
            }
        }
    }
    lines
}

fn apply_structural(graph: &WorkflowGraph, line: &Line, registry: &SchemaRegistry) -> Option<WorkflowGraph> {
    let mut g = graph.clone();
    for e in line {
        g.apply_in_place(e, registry).ok()?;
    }
    Some(g)
}

/// A state where the two verdicts differ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mismatch {
    pub length: usize,
    pub incremental: bool,
    pub oracle: bool,
    pub graph: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub max_len: usize,
    /// Sequences of length 1..=max_len.
    pub sequences: u64,
    /// Distinct (track, graph) states judged.
    pub states: u64,
    pub incremental_accepted: u64,
    pub oracle_accepted: u64,
    /// Sequences accepted by one side only.
    pub mismatched: u64,
    /// Up to 16 example states, shortest first.
    pub examples: Vec<Mismatch>,
}

impl EquivalenceReport {
    pub fn equivalent(&self) -> bool {
        self.mismatched == 0 && self.incremental_accepted == self.oracle_accepted
    }
}

type StateKey = (Track, [u64; 2]);

struct Expansion {
    children: Vec<(Track, WorkflowGraph)>,
    /// Lines whose structural application failed.
    dead: u64,
    /// Lines the incremental validator accepted but that do not apply
    /// structurally.
    dead_accepted: u64,
}

/// Enumerates all line sequences of length `1..=max_len` and compares the
/// incremental verdict with `oracle` on the structural result.
pub fn check_equivalence<O>(
    registry: &SchemaRegistry,
    max_len: usize,
    exec: Execution,
    oracle: O,
) -> EquivalenceReport
where
    O: Fn(&WorkflowGraph) -> bool + Sync + Send,
{
    let mut report = EquivalenceReport {
        max_len,
        ..EquivalenceReport::default()
    };
    let judge = |(track, g): &(Track, WorkflowGraph)| {
        let incremental = *track == Track::Live && validate_edit(g, &GraphEdit::Stop, registry).accepted;
        (incremental, oracle(g))
    };
    let mut frontier: Vec<((Track, WorkflowGraph), u64)> = vec![((Track::Live, WorkflowGraph::empty()), 1)];

    for length in 1..=max_len {
        let last = length == max_len;
        let mut next: HashMap<(Track, WorkflowGraph), u64> = HashMap::new();
        // the last level is never expanded, so only a content hash is kept
        let mut judged: HashMap<StateKey, (bool, bool)> = HashMap::new();

        for chunk in frontier.chunks(CHUNK) {
            let expansions = par::map(exec, chunk, |((track, g), _)| expand(*track, g, registry));
            let mut fresh: HashMap<StateKey, ((Track, WorkflowGraph), u64)> = HashMap::new();
            for (exp, (_, weight)) in expansions.into_iter().zip(chunk) {
                // dead sequences have no graph: both sides reject, and so do
                // all their extensions, which are not generated
                report.sequences += (exp.dead + exp.dead_accepted) * weight;
                report.mismatched += exp.dead_accepted * weight;
                for child in exp.children {
                    if !last {
                        *next.entry(child).or_insert(0) += weight;
                        continue;
                    }
                    let key = (child.0, content_key(&child.1));
                    match judged.get(&key) {
                        Some(&verdict) => report.tally(length, verdict, *weight, None),
                        None => fresh.entry(key).or_insert((child, 0)).1 += weight,
                    }
                }
            }
            let fresh: Vec<_> = fresh.into_iter().collect();
            let verdicts = par::map(exec, &fresh, |(_, (state, _))| judge(state));
            for ((key, (state, weight)), verdict) in fresh.into_iter().zip(verdicts) {
                judged.insert(key, verdict);
                report.states += 1;
                report.tally(length, verdict, weight, Some((&state.1, registry)));
            }
        }

        if last {
            break;
        }
        let states: Vec<((Track, WorkflowGraph), u64)> = next.into_iter().collect();
        let verdicts = par::map(exec, &states, |(state, _)| judge(state));
        for ((state, weight), verdict) in states.iter().zip(verdicts) {
            report.states += 1;
            report.tally(length, verdict, *weight, Some((&state.1, registry)));
        }
        frontier = states;
    }
    report.examples.sort_by_cached_key(|m| (m.length, m.graph.to_string()));
    report.examples.truncate(MAX_EXAMPLES);
    report
}

impl EquivalenceReport {
    fn tally(
        &mut self,
        length: usize,
        (inc, ora): (bool, bool),
        weight: u64,
        graph: Option<(&WorkflowGraph, &SchemaRegistry)>,
    ) {
        self.sequences += weight;
        if inc {
            self.incremental_accepted += weight;
        }
        if ora {
            self.oracle_accepted += weight;
        }
        if inc == ora {
            return;
        }
        self.mismatched += weight;
        if let Some((g, registry)) = graph {
            if self.examples.len() < EXAMPLE_POOL {
                self.examples.push(Mismatch {
                    length,
                    incremental: inc,
                    oracle: ora,
                    graph: g.to_json_value(Some(registry.schema_id())),
                });
            }
        }
    }
}

fn expand(track: Track, g: &WorkflowGraph, registry: &SchemaRegistry) -> Expansion {
    let mut children = Vec::new();
    let mut dead = 0;
    let mut dead_accepted = 0;
    for line in line_alphabet(g, registry) {
        if track == Track::Rejected {
            match apply_structural(g, &line, registry) {
                Some(next) => children.push((Track::Rejected, next)),
                None => dead += 1,
            }
            continue;
        }
        // single edits are validated in place to skip a scratch copy
        let accepted = match line.as_slice() {
            [edit] => validate_edit(g, edit, registry).accepted,
            _ => {
                let (next, outcome) = transition_all(g, &line, registry);
                if outcome.accepted {
                    children.push((Track::Live, next));
                    continue;
                }
                false
            }
        };
        match (accepted, apply_structural(g, &line, registry)) {
            (true, Some(next)) => children.push((Track::Live, next)),
            (true, None) => dead_accepted += 1,
            (false, Some(next)) => children.push((Track::Rejected, next)),
            (false, None) => dead += 1,
        }
    }
    Expansion {
        children,
        dead,
        dead_accepted,
    }
}

/// Two independently salted SipHash passes; collisions over a few million
/// states are negligible at 128 bits.
fn content_key(g: &WorkflowGraph) -> [u64; 2] {
    [0u8, 1].map(|salt| {
        let mut h = DefaultHasher::new();
        salt.hash(&mut h);
        g.hash(&mut h);
        h.finish()
    })
}

/// [`check_equivalence`] with the crate's own whole-graph check as oracle.
pub fn check_against_final_check(registry: &SchemaRegistry, max_len: usize, exec: Execution) -> EquivalenceReport {
    check_equivalence(registry, max_len, exec, |g| final_check(g, registry).accepted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_sequences_agree() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let rep = check_against_final_check(&r, 4, Execution::default());
        assert!(rep.equivalent(), "{:?}", rep.examples);
        // loader, latent, wired decode, wired save
        assert!(rep.incremental_accepted > 0);
    }

    #[test]
    fn execution_modes_agree() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let a = check_against_final_check(&r, 3, Execution::Parallel);
        let b = check_against_final_check(&r, 3, Execution::Sequential);
        assert_eq!(a, b);
    }

    #[test]
    fn alphabet_from_empty_graph() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let lines = line_alphabet(&WorkflowGraph::empty(), &r);
        // bare nodes, two domain probes, one missing-field probe, one unknown type
        assert!(lines.iter().all(|l| l.len() == 1));
        assert_eq!(lines.len(), r.len() + 2 + 1 + 1);
    }

    #[test]
    fn rejected_prefix_breaks_oracle_agreement_only_if_repairable() {
        // a bad edge stays in the structural graph, so the oracle rejects too
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = WorkflowGraph::empty()
            .apply_edit(&GraphEdit::add_node("EmptyLatent"), &r)
            .unwrap()
            .apply_edit(&GraphEdit::add_node("SaveImage"), &r)
            .unwrap();
        let line = vec![GraphEdit::add_edge(
            PortRef::new("emptylatent_0", "latent"),
            PortRef::new("saveimage_0", "images"),
        )];
        assert!(!transition_all(&g, &line, &r).1.accepted);
        let s = apply_structural(&g, &line, &r).unwrap();
        assert!(!final_check(&s, &r).accepted);
    }
}
