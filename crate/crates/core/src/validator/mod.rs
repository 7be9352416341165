//! Incremental validation of graph edits.
//!
//! `check_int` looks at an edit alone, `check_comp` at the edit against
//! the current partial graph. A transition commits an edit only when both
//! accept; otherwise the graph is returned unchanged.

mod history;
mod repair;

use crate::action::{parse_action, ActionError};
use crate::diagnostic::{sort_canonical, Diagnostic, ValidationOutcome};
use crate::edit::{GraphEdit, PortRef};
use crate::graph::{final_check, WorkflowGraph};
use crate::schema::SchemaRegistry;

pub use history::{update_history, History, HistoryRecord, DEFAULT_HISTORY_CAPACITY};
pub use repair::{repair_loop, Repaired, RepairError, DEFAULT_MAX_REPAIR_ATTEMPTS};

/// Intrinsic validity: operator existence, construction params and their
/// domains. Independent of any graph.
pub fn check_int(edit: &GraphEdit, registry: &SchemaRegistry) -> ValidationOutcome {
    let GraphEdit::AddNode { type_name, params } = edit else {
        return ValidationOutcome::accept();
    };
    let Some(def) = registry.lookup(type_name) else {
        return ValidationOutcome::reject(Diagnostic::unknown_operator(None, type_name));
    };
    let mut diags = Vec::new();
    for (name, value) in params {
        match def.param(name) {
            None => diags.push(Diagnostic::unknown_param(None, type_name, name)),
            Some(p) if !p.domain.contains(value) => {
                diags.push(Diagnostic::param_out_of_domain(None, type_name, name, value))
            }
            Some(_) => {}
        }
    }
    for p in def.params.iter().filter(|p| p.must_be_supplied()) {
        if !params.contains_key(&p.name) {
            diags.push(Diagnostic::missing_required_field(None, type_name, &p.name));
        }
    }
    sort_canonical(&mut diags);
    ValidationOutcome::from_diagnostics(diags)
}

/// Composability of `edit` with `graph`: endpoints exist, the destination
/// is free, types agree, no cycle appears and branch constraints still
/// hold. `Stop` defers to the whole-graph check.
pub fn check_comp(graph: &WorkflowGraph, edit: &GraphEdit, registry: &SchemaRegistry) -> ValidationOutcome {
    let mut diags = Vec::new();
    match edit {
        GraphEdit::AddNode { .. } => {}
        GraphEdit::AddEdge { src, dst } => comp_add_edge(graph, src, dst, registry, &mut diags),
        GraphEdit::RemoveEdge { dst } => {
            if input_type(graph, dst, registry, &mut diags).is_some() && graph.source_of(dst).is_none() {
                diags.push(Diagnostic::not_connected(&dst.node_id, &dst.port));
            }
        }
        GraphEdit::SetParam {
            node_id,
            param,
            value,
        } => match graph.node(node_id) {
            None => diags.push(Diagnostic::unknown_node(node_id)),
            Some(node) => match registry.lookup(&node.type_name) {
                None => diags.push(Diagnostic::unknown_operator(Some(node_id), &node.type_name)),
                Some(def) => match def.param(param) {
                    None => diags.push(Diagnostic::unknown_param(Some(node_id), &def.type_name, param)),
                    Some(p) if !p.domain.contains(value) => diags.push(
                        Diagnostic::param_out_of_domain(Some(node_id), &def.type_name, param, value),
                    ),
                    Some(_) => {}
                },
            },
        },
        GraphEdit::Stop => return final_check(graph, registry),
    }
    sort_canonical(&mut diags);
    ValidationOutcome::from_diagnostics(diags)
}

fn output_type(
    graph: &WorkflowGraph,
    r: &PortRef,
    registry: &SchemaRegistry,
    diags: &mut Vec<Diagnostic>,
) -> Option<crate::schema::PortType> {
    let Some(node) = graph.node(&r.node_id) else {
        diags.push(Diagnostic::unknown_node(&r.node_id));
        return None;
    };
    let Some(def) = registry.lookup(&node.type_name) else {
        diags.push(Diagnostic::unknown_operator(Some(&r.node_id), &node.type_name));
        return None;
    };
    match def.output(&r.port) {
        Some(o) => Some(o.port_type.clone()),
        None => {
            diags.push(Diagnostic::unknown_port(
                &r.node_id,
                &r.port,
                format!("{} has no output `{}`", def.type_name, r.port),
            ));
            None
        }
    }
}

fn input_type(
    graph: &WorkflowGraph,
    r: &PortRef,
    registry: &SchemaRegistry,
    diags: &mut Vec<Diagnostic>,
) -> Option<crate::schema::PortType> {
    let Some(node) = graph.node(&r.node_id) else {
        diags.push(Diagnostic::unknown_node(&r.node_id));
        return None;
    };
    let Some(def) = registry.lookup(&node.type_name) else {
        diags.push(Diagnostic::unknown_operator(Some(&r.node_id), &node.type_name));
        return None;
    };
    match def.input(&r.port) {
        Some(i) => Some(i.port_type.clone()),
        None => {
            diags.push(Diagnostic::unknown_port(
                &r.node_id,
                &r.port,
                format!("{} has no input `{}`", def.type_name, r.port),
            ));
            None
        }
    }
}

fn comp_add_edge(
    graph: &WorkflowGraph,
    src: &PortRef,
    dst: &PortRef,
    registry: &SchemaRegistry,
    diags: &mut Vec<Diagnostic>,
) {
    let from = output_type(graph, src, registry, diags);
    let to = input_type(graph, dst, registry, diags);
    let (Some(from), Some(to)) = (from, to) else {
        return;
    };
    if let Some(existing) = graph.source_of(dst) {
        diags.push(Diagnostic::port_occupied(&dst.node_id, &dst.port, &existing.to_string()));
    }
    if from != to {
        let via = registry.adapter_for(&from, &to).map(|a| a.via.as_str());
        diags.push(Diagnostic::type_mismatch(
            &dst.node_id,
            &dst.port,
            &src.to_string(),
            &from,
            &to,
            via,
        ));
    }
    if graph.reaches(&dst.node_id, &src.node_id) {
        diags.push(Diagnostic::acyclicity(
            &dst.node_id,
            Some(&dst.port),
            format!("connecting {src} to {dst} would close a cycle"),
        ));
    }
    let dst_type = &graph.node(&dst.node_id).expect("checked above").type_name;
    for c in registry.constraints_for(dst_type) {
        let Some(partner) = c.partner_of(&dst.port) else {
            continue;
        };
        if let Some(other) = graph.source_of(&PortRef::new(&dst.node_id, partner)) {
            if other.node_id == src.node_id {
                diags.push(Diagnostic::branch_constraint(
                    &dst.node_id,
                    &dst.port,
                    &src.node_id,
                    partner,
                ));
            }
        }
    }
}

/// Int ∧ Comp for one edit: Int diagnostics first, then Comp.
pub fn validate_edit(graph: &WorkflowGraph, edit: &GraphEdit, registry: &SchemaRegistry) -> ValidationOutcome {
    let int = check_int(edit, registry);
    let comp = check_comp(graph, edit, registry);
    let mut diags = int.diagnostics;
    diags.extend(comp.diagnostics);
    ValidationOutcome::from_diagnostics(diags)
}

/// Applies `edit` if it validates; a rejected edit returns `graph` as is.
pub fn transition(
    graph: &WorkflowGraph,
    edit: &GraphEdit,
    registry: &SchemaRegistry,
) -> (WorkflowGraph, ValidationOutcome) {
    transition_all(graph, std::slice::from_ref(edit), registry)
}

/// Applies the edits of one action line atomically. Each part is
/// validated against the graph produced by the parts before it; any
/// rejection rejects the whole line. Diagnostics cover every rejected
/// implied edge, or only the node itself when the node is rejected.
pub fn transition_all(
    graph: &WorkflowGraph,
    edits: &[GraphEdit],
    registry: &SchemaRegistry,
) -> (WorkflowGraph, ValidationOutcome) {
    let mut scratch = graph.clone();
    let mut diags = Vec::new();
    for edit in edits {
        let outcome = validate_edit(&scratch, edit, registry);
        if outcome.accepted {
            scratch
                .apply_in_place(edit, registry)
                .expect("validated edits apply structurally");
            continue;
        }
        diags.extend(outcome.diagnostics);
        if matches!(edit, GraphEdit::AddNode { .. }) {
            break;
        }
    }
    if diags.is_empty() {
        debug_assert!(scratch.is_acyclic());
        (scratch, ValidationOutcome::accept())
    } else {
        (graph.clone(), ValidationOutcome::from_diagnostics(diags))
    }
}

/// Result of validating one action line.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub graph: WorkflowGraph,
    pub outcome: ValidationOutcome,
    /// Parsed edits; empty when the line failed to parse.
    pub edits: Vec<GraphEdit>,
    /// An accepted `STOP`.
    pub terminated: bool,
}

/// Parses and validates one action line against `graph`.
pub fn step(graph: &WorkflowGraph, text: &str, registry: &SchemaRegistry) -> StepResult {
    match parse_action(text, graph, registry) {
        Err(e) => StepResult {
            graph: graph.clone(),
            outcome: ValidationOutcome::reject(e.to_diagnostic()),
            edits: Vec::new(),
            terminated: false,
        },
        Ok(edits) => {
            let (next, outcome) = transition_all(graph, &edits, registry);
            let terminated = outcome.accepted && edits.iter().any(GraphEdit::is_stop);
            StepResult {
                graph: next,
                outcome,
                edits,
                terminated,
            }
        }
    }
}

/// Replays action lines from the empty graph, returning the final graph
/// and the number of rejected lines.
pub fn replay_lines<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    registry: &SchemaRegistry,
) -> (WorkflowGraph, usize) {
    let mut g = WorkflowGraph::empty();
    let mut rejected = 0;
    for line in lines {
        let r = step(&g, line, registry);
        if !r.outcome.accepted {
            rejected += 1;
        }
        g = r.graph;
    }
    (g, rejected)
}

/// Parses a full program, failing on the first line that does not parse.
pub fn parse_program<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    registry: &SchemaRegistry,
) -> Result<Vec<Vec<GraphEdit>>, (usize, ActionError)> {
    let mut g = WorkflowGraph::empty();
    let mut out = Vec::new();
    for (i, line) in lines.into_iter().enumerate() {
        let edits = parse_action(line, &g, registry).map_err(|e| (i, e))?;
        for e in &edits {
            g.apply_in_place(e, registry).map_err(|err| (i, ActionError::Syntax(err.to_string())))?;
        }
        out.push(edits);
    }
    Ok(out)
}
