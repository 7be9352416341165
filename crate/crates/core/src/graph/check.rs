//! Whole-graph executability check, run at STOP time and used as the
//! reference for the incremental validator.

use std::collections::{BTreeSet, VecDeque};

use super::WorkflowGraph;
use crate::diagnostic::{sort_canonical, Diagnostic, ValidationOutcome};
use crate::edit::PortRef;
use crate::schema::{Category, SchemaRegistry};

/// Accepts iff every required input is connected, every required param is
/// set within its domain, the graph is acyclic, every edge is
/// type-compatible, at least one output node exists and each output node
/// is reachable from a source node, and all branch constraints hold.
///
/// All violations are reported, in canonical order.
pub fn final_check(graph: &WorkflowGraph, registry: &SchemaRegistry) -> ValidationOutcome {
    let mut diags = Vec::new();
    // one lookup key, refilled per port
    let mut key = PortRef::new("", "");

    for node in graph.nodes() {
        let Some(def) = registry.lookup(&node.type_name) else {
            diags.push(Diagnostic::unknown_operator(Some(&node.node_id), &node.type_name));
            continue;
        };
        let id = node.node_id.as_str();
        key.node_id.clear();
        key.node_id.push_str(id);
        for (name, value) in &node.params {
            match def.param(name) {
                None => diags.push(Diagnostic::unknown_param(Some(id), &def.type_name, name)),
                Some(p) if !p.domain.contains(value) => diags.push(
                    Diagnostic::param_out_of_domain(Some(id), &def.type_name, name, value),
                ),
                Some(_) => {}
            }
        }
        for p in def.params.iter().filter(|p| p.must_be_supplied()) {
            if !node.params.contains_key(&p.name) {
                diags.push(Diagnostic::missing_required_field(Some(id), &def.type_name, &p.name));
            }
        }
        for input in def.inputs.iter().filter(|i| i.required) {
            key.port.clear();
            key.port.push_str(&input.name);
            if graph.source_of(&key).is_none() {
                diags.push(Diagnostic::missing_required_input(id, &input.name));
            }
        }
        for c in registry.constraints_for(&def.type_name) {
            let [a, b] = &c.distinct_source_inputs;
            key.port.clear();
            key.port.push_str(a);
            let src_a = graph.source_of(&key);
            key.port.clear();
            key.port.push_str(b);
            let src_b = graph.source_of(&key);
            if let (Some(sa), Some(sb)) = (src_a, src_b) {
                if sa.node_id == sb.node_id {
                    diags.push(Diagnostic::branch_constraint(id, b, &sa.node_id, a));
                }
            }
        }
    }

    for (src, dst) in graph.edge_refs() {
        let port_type = |r: &PortRef, output: bool| {
            let node = graph.node(&r.node_id)?;
            let def = registry.lookup(&node.type_name)?;
            if output {
                def.output(&r.port).map(|p| &p.port_type)
            } else {
                def.input(&r.port).map(|p| &p.port_type)
            }
        };
        match (port_type(src, true), port_type(dst, false)) {
            (Some(from), Some(to)) if from != to => {
                let via = registry.adapter_for(from, to).map(|a| a.via.as_str());
                diags.push(Diagnostic::type_mismatch(
                    &dst.node_id,
                    &dst.port,
                    &src.to_string(),
                    from,
                    to,
                    via,
                ));
            }
            (Some(_), Some(_)) => {}
            (None, _) => diags.push(Diagnostic::unknown_port(
                &src.node_id,
                &src.port,
                format!("{src} is not a declared output"),
            )),
            (_, None) => diags.push(Diagnostic::unknown_port(
                &dst.node_id,
                &dst.port,
                format!("{dst} is not a declared input"),
            )),
        }
    }

    for id in nodes_on_cycles(graph) {
        diags.push(Diagnostic::acyclicity(
            &id,
            None,
            format!("node {id} lies on a cycle"),
        ));
    }

    let category = |id: &str| {
        graph
            .node(id)
            .and_then(|n| registry.lookup(&n.type_name))
            .map(|d| d.category)
    };
    let outputs: Vec<&str> = graph
        .nodes()
        .map(|n| n.node_id.as_str())
        .filter(|id| category(id) == Some(Category::Output))
        .collect();
    if outputs.is_empty() {
        diags.push(Diagnostic::no_output_node());
    } else {
        let fed = reachable_from_sources(graph, |id| category(id) == Some(Category::Source));
        for o in outputs {
            if !fed.contains(o) {
                diags.push(Diagnostic::unreachable_output(o));
            }
        }
    }

    sort_canonical(&mut diags);
    ValidationOutcome::from_diagnostics(diags)
}

/// Nodes that can reach themselves through one or more edges.
fn nodes_on_cycles(graph: &WorkflowGraph) -> Vec<String> {
    if graph.is_acyclic() {
        return Vec::new();
    }
    let mut on_cycle = BTreeSet::new();
    for (src, dst) in graph.edge_refs() {
        if graph.reaches(&dst.node_id, &src.node_id) {
            on_cycle.insert(src.node_id.clone());
            on_cycle.insert(dst.node_id.clone());
        }
    }
    on_cycle.into_iter().collect()
}

fn reachable_from_sources(
    graph: &WorkflowGraph,
    is_source: impl Fn(&str) -> bool,
) -> BTreeSet<&str> {
    let edges: Vec<_> = graph.edge_refs().collect();
    let mut seen: BTreeSet<&str> = graph
        .nodes()
        .map(|n| n.node_id.as_str())
        .filter(|id| is_source(id))
        .collect();
    let mut queue: VecDeque<&str> = seen.iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        for (_, dst) in edges.iter().filter(|(src, _)| src.node_id == n) {
            if let Some(node) = graph.node(&dst.node_id) {
                if seen.insert(node.node_id.as_str()) {
                    queue.push_back(node.node_id.as_str());
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostic::DiagnosticCode;
    use crate::edit::GraphEdit;
    use crate::fixtures;
    use serde_json::json;

    #[test]
    fn empty_graph_has_no_output() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let out = final_check(&WorkflowGraph::empty(), &r);
        assert!(!out.accepted);
        assert_eq!(out.codes(), vec![DiagnosticCode::NoOutputNode]);
    }

    #[test]
    fn complete_text_to_image_accepted() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = fixtures::text_to_image(&r);
        let out = final_check(&g, &r);
        assert!(out.accepted, "{:?}", out.diagnostics);
        assert_eq!(g.node_count(), 7);
        assert_eq!(g.edge_count(), 9);
    }

    #[test]
    fn missing_latent_reported() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = fixtures::text_to_image(&r)
            .apply_edit(
                &GraphEdit::RemoveEdge {
                    dst: PortRef::new("sampler_0", "latent"),
                },
                &r,
            )
            .unwrap();
        let out = final_check(&g, &r);
        assert!(!out.accepted);
        assert_eq!(out.diagnostics.len(), 1);
        let d = &out.diagnostics[0];
        assert_eq!(d.code, DiagnosticCode::MissingRequiredInput);
        assert_eq!(d.subject.node_id.as_deref(), Some("sampler_0"));
        assert_eq!(d.subject.port.as_deref(), Some("latent"));
    }

    #[test]
    fn shared_conditioning_violates_branch_constraint() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = fixtures::text_to_image(&r)
            .apply_edit(
                &GraphEdit::RemoveEdge {
                    dst: PortRef::new("sampler_0", "negative"),
                },
                &r,
            )
            .unwrap()
            .apply_edit(
                &GraphEdit::add_edge(
                    PortRef::new("textencode_0", "conditioning"),
                    PortRef::new("sampler_0", "negative"),
                ),
                &r,
            )
            .unwrap();
        let out = final_check(&g, &r);
        assert!(out.has_code(DiagnosticCode::BranchConstraintViolation));
        assert!(!out.accepted);
    }

    #[test]
    fn reports_every_violation() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = WorkflowGraph::empty()
            .apply_edit(
                &GraphEdit::add_node_with("Sampler", [("steps".to_string(), json!(0))]),
                &r,
            )
            .unwrap()
            .apply_edit(&GraphEdit::add_node("SaveImage"), &r)
            .unwrap();
        let out = final_check(&g, &r);
        let codes = out.codes();
        assert_eq!(
            codes
                .iter()
                .filter(|c| **c == DiagnosticCode::MissingRequiredInput)
                .count(),
            5
        );
        assert!(codes.contains(&DiagnosticCode::ParamOutOfDomain));
        assert!(codes.contains(&DiagnosticCode::NoOutputNode));
    }

    #[test]
    fn cycle_detected() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let mut g = WorkflowGraph::empty();
        for t in ["Sampler", "Sampler"] {
            g = g.apply_edit(&GraphEdit::add_node(t), &r).unwrap();
        }
        for (a, b) in [("sampler_0", "sampler_1"), ("sampler_1", "sampler_0")] {
            g = g
                .apply_edit(
                    &GraphEdit::add_edge(PortRef::new(a, "latent"), PortRef::new(b, "latent")),
                    &r,
                )
                .unwrap();
        }
        let out = final_check(&g, &r);
        let cyc: Vec<_> = out
            .diagnostics
            .iter()
            .filter(|d| d.code == DiagnosticCode::AcyclicityViolation)
            .collect();
        assert_eq!(cyc.len(), 2);
    }
}
