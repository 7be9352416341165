use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::BranchConfig;
use crate::action::{render_graph_lines, render_trace, TraceDocument, TraceStep};
use crate::diagnostic::ValidationOutcome;
use crate::graph::{GraphDigest, WorkflowGraph};
use crate::reward::{final_reward, RewardError};
use crate::schema::SchemaRegistry;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeHeader {
    pub query: String,
    pub schema_id: String,
    pub policy: String,
    pub config: BranchConfig,
}

/// One step of one branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub branch: u32,
    pub parent: Option<u32>,
    pub t: usize,
    pub digest_before: GraphDigest,
    pub candidates: Vec<String>,
    pub probs: Vec<f64>,
    pub entropy: f64,
    pub delta_entropy: f64,
    pub p_branch: f64,
    /// This step forked a child.
    pub branched: bool,
    /// This is a child's first step, taking the sampled alternative.
    pub forced: bool,
    pub forked_child: Option<u32>,
    pub action: String,
    /// Validation of `action` itself, before any repair.
    pub outcome: ValidationOutcome,
    pub repair_attempts: usize,
    /// The line that was committed: `action` or an accepted repair.
    pub committed: Option<String>,
    pub accepted: bool,
    pub terminated: bool,
    pub digest_after: GraphDigest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stop,
    StepBudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafRecord {
    pub branch: u32,
    pub parent: Option<u32>,
    pub termination: Termination,
    pub steps: usize,
    pub digest: GraphDigest,
    pub graph: Value,
    pub reward: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutTree {
    pub header: TreeHeader,
    /// In round order, then branch id.
    pub steps: Vec<StepRecord>,
    /// Sorted by branch id.
    pub leaves: Vec<LeafRecord>,
    pub forks: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header {
        #[serde(flatten)]
        header: TreeHeader,
        forks: u64,
    },
    Step(StepRecord),
    Leaf(LeafRecord),
}

#[derive(Debug, Error)]
pub enum TreeParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing header line")]
    MissingHeader,
}

impl RolloutTree {
    pub fn new(header: TreeHeader) -> Self {
        RolloutTree {
            header,
            steps: Vec::new(),
            leaves: Vec::new(),
            forks: 0,
        }
    }

    /// Header line, then one line per step, then one per leaf.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("tree records serialize"));
            out.push('\n');
        };
        push(&Line::Header {
            header: self.header.clone(),
            forks: self.forks,
        });
        for s in &self.steps {
            push(&Line::Step(s.clone()));
        }
        for l in &self.leaves {
            push(&Line::Leaf(l.clone()));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TreeParseError> {
        let mut tree: Option<RolloutTree> = None;
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| TreeParseError::Line {
                line: i + 1,
                message: e.to_string(),
            })?;
            match (line, tree.as_mut()) {
                (Line::Header { header, forks }, None) => {
                    let mut t = RolloutTree::new(header);
                    t.forks = forks;
                    tree = Some(t);
                }
                (Line::Header { .. }, Some(_)) => {
                    return Err(TreeParseError::Line {
                        line: i + 1,
                        message: "second header".into(),
                    })
                }
                (_, None) => return Err(TreeParseError::MissingHeader),
                (Line::Step(s), Some(t)) => t.steps.push(s),
                (Line::Leaf(l), Some(t)) => t.leaves.push(l),
            }
        }
        tree.ok_or(TreeParseError::MissingHeader)
    }

    /// Decision steps that had an alternative to fork to.
    pub fn fork_eligible_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| !s.forced && s.candidates.len() >= 2)
            .count()
    }

    pub fn branch_count(&self) -> usize {
        self.leaves.len()
    }

    /// Steps leading to `branch`'s current state, root first: the
    /// ancestors' steps before each fork point, then the branch's own.
    pub fn path(&self, branch: u32) -> Vec<&StepRecord> {
        let own: Vec<&StepRecord> = self.steps.iter().filter(|s| s.branch == branch).collect();
        let Some(first) = own.first() else {
            return Vec::new();
        };
        let mut out = match first.parent {
            Some(p) if first.forced => self
                .path(p)
                .into_iter()
                .filter(|s| s.t < first.t)
                .collect(),
            Some(p) => self.path(p),
            None => Vec::new(),
        };
        out.extend(own);
        out
    }

    /// Trace document for a leaf: every step on its path (rejections carry
    /// their diagnostics as the result), then the node lines of its final
    /// graph.
    pub fn leaf_trace(&self, leaf: &LeafRecord, registry: &SchemaRegistry) -> TraceDocument {
        let mut steps = Vec::new();
        for s in self.path(leaf.branch) {
            if s.outcome.accepted {
                steps.push(TraceStep::accepted(&s.action));
                continue;
            }
            let text: Vec<String> = s.outcome.diagnostics.iter().map(|d| d.to_string()).collect();
            steps.push(TraceStep::rejected(&s.action, text.join("; ")));
            if let Some(fix) = &s.committed {
                steps.push(TraceStep::accepted(fix));
            }
        }
        let graph = WorkflowGraph::from_json_value(&leaf.graph, registry).unwrap_or_default();
        let lines = render_graph_lines(&graph, registry).unwrap_or_default();
        TraceDocument::new(steps, lines)
    }

    /// Scores every leaf against `target`.
    pub fn assign_rewards(&mut self, target: &WorkflowGraph, registry: &SchemaRegistry) -> Result<(), RewardError> {
        let mut rewards = Vec::with_capacity(self.leaves.len());
        for leaf in &self.leaves {
            let doc = render_trace(&self.leaf_trace(leaf, registry));
            rewards.push(final_reward(doc.as_bytes(), target, registry)?.final_reward);
        }
        for (leaf, r) in self.leaves.iter_mut().zip(rewards) {
            leaf.reward = Some(r);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rollout::{run_rollouts, ScriptedPolicy, UniformAdmissiblePolicy};

    #[test]
    fn jsonl_round_trip() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let cfg = BranchConfig {
            max_steps: 8,
            ..BranchConfig::default()
        };
        let tree = run_rollouts("q", &r, &UniformAdmissiblePolicy, &cfg).unwrap();
        let text = tree.to_jsonl();
        let back = RolloutTree::from_jsonl(&text).unwrap();
        assert_eq!(back, tree);
        assert!(text.lines().next().unwrap().contains("\"kind\":\"header\""));
    }

    #[test]
    fn scripted_leaf_scores_one() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let target = fixtures::text_to_image(&r);
        let p = ScriptedPolicy::new(fixtures::TEXT_TO_IMAGE_LINES);
        let mut tree = run_rollouts("q", &r, &p, &BranchConfig::default()).unwrap();
        tree.assign_rewards(&target, &r).unwrap();
        assert_eq!(tree.leaves[0].reward, Some(1.0));
    }

    #[test]
    fn paths_replay_to_recorded_digests() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let cfg = BranchConfig {
            max_steps: 10,
            seed: 11,
            ..BranchConfig::default()
        };
        let tree = run_rollouts("q", &r, &UniformAdmissiblePolicy, &cfg).unwrap();
        for leaf in &tree.leaves {
            let mut g = WorkflowGraph::empty();
            for s in tree.path(leaf.branch) {
                assert_eq!(g.digest(), s.digest_before);
                if let Some(line) = &s.committed {
                    let res = crate::validator::step(&g, line, &r);
                    assert!(res.outcome.accepted);
                    g = res.graph;
                }
                assert_eq!(g.digest(), s.digest_after);
            }
            assert_eq!(g.digest(), leaf.digest);
        }
    }
}
