use thiserror::Error;

use super::history::{update_history, History};
use super::step;
use crate::diagnostic::{Diagnostic, ValidationOutcome};
use crate::edit::GraphEdit;
use crate::graph::WorkflowGraph;
use crate::schema::SchemaRegistry;

pub const DEFAULT_MAX_REPAIR_ATTEMPTS: usize = 3;

/// Outcome of a successful (or unnecessary) repair loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Repaired {
    pub graph: WorkflowGraph,
    pub outcome: ValidationOutcome,
    pub attempts_used: usize,
    pub history: History,
    /// The accepted repair line, if any attempt was made.
    pub line: Option<String>,
    pub edits: Vec<GraphEdit>,
    pub terminated: bool,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RepairError {
    #[error("repair budget exhausted after {attempts_used} attempts")]
    BudgetExhausted {
        attempts_used: usize,
        history: History,
        last: ValidationOutcome,
    },
    #[error("repairer gave up after {attempts_used} attempts")]
    NoProposal {
        attempts_used: usize,
        history: History,
        last: ValidationOutcome,
    },
}

impl RepairError {
    pub fn attempts_used(&self) -> usize {
        match self {
            RepairError::BudgetExhausted { attempts_used, .. } | RepairError::NoProposal { attempts_used, .. } => {
                *attempts_used
            }
        }
    }

    pub fn history(&self) -> &History {
        match self {
            RepairError::BudgetExhausted { history, .. } | RepairError::NoProposal { history, .. } => history,
        }
    }
}

/// Proposes, parses and validates repair lines until one is accepted or
/// `max_attempts` rejections pile up. Every attempt is appended to the
/// history. An accepted `initial` outcome makes the loop a no-op.
///
/// `propose` sees the current graph, the history so far and the
/// diagnostics of the most recent rejection; `None` abandons the repair.
pub fn repair_loop<F>(
    graph: &WorkflowGraph,
    history: &History,
    registry: &SchemaRegistry,
    initial: &ValidationOutcome,
    max_attempts: usize,
    mut propose: F,
) -> Result<Repaired, RepairError>
where
    F: FnMut(&WorkflowGraph, &History, &[Diagnostic]) -> Option<String>,
{
    let mut history = history.clone();
    if initial.accepted {
        return Ok(Repaired {
            graph: graph.clone(),
            outcome: initial.clone(),
            attempts_used: 0,
            history,
            line: None,
            edits: Vec::new(),
            terminated: false,
        });
    }
    let mut last = initial.clone();
    for attempt in 1..=max_attempts {
        let Some(line) = propose(graph, &history, &last.diagnostics) else {
            return Err(RepairError::NoProposal {
                attempts_used: attempt - 1,
                history,
                last,
            });
        };
        let res = step(graph, &line, registry);
        history = update_history(&history, &line, &res.outcome, &res.graph, registry);
        if res.outcome.accepted {
            return Ok(Repaired {
                graph: res.graph,
                outcome: res.outcome,
                attempts_used: attempt,
                history,
                line: Some(line),
                edits: res.edits,
                terminated: res.terminated,
            });
        }
        last = res.outcome;
    }
    Err(RepairError::BudgetExhausted {
        attempts_used: max_attempts,
        history,
        last,
    })
}
