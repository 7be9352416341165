//! Seeded rollout trees with entropy-driven forking.
//!
//! Branches advance breadth-first, one step per round. Each round has
//! three phases:
//!
//! 1. every active branch queries the policy (in parallel when the policy
//!    allows it);
//! 2. in branch-id order, each branch samples its action from its own
//!    stream and decides whether to fork; forks spend the shared budget
//!    first-come-first-served and the child takes one alternative
//!    candidate, sampled without replacement;
//! 3. every branch, new children included, validates and commits its
//!    action, running the repair loop on rejection.
//!
//! Output depends only on (seed, policy, registry, query, config).

mod entropy;
mod external;
mod policy;
mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::WorkflowGraph;
use crate::par::{self, Execution};
use crate::schema::SchemaRegistry;
use crate::validator::{repair_loop, step, update_history, History};

pub use entropy::{
    branch_probability, decide_branch, delta_entropy, entropy, sigmoid, validate_probs, BranchDecision,
    DistributionError, PolicyDistribution, PROB_SUM_TOLERANCE,
};
pub use external::ExternalPolicy;
pub use policy::{
    admissible_edits, Policy, PolicyError, PolicyState, ScriptedPolicy, SoftmaxPolicy, UniformAdmissiblePolicy,
};
pub use tree::{LeafRecord, RolloutTree, StepRecord, Termination, TreeHeader, TreeParseError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau_b: f64,
    /// Total forks allowed per tree; `None` is unlimited.
    pub branch_budget: Option<u64>,
    pub max_steps: usize,
    pub top_k: usize,
    pub seed: u64,
    #[serde(default)]
    pub branch_decision: BranchDecision,
    pub max_repair_attempts: usize,
    pub history_capacity: usize,
}

impl Default for BranchConfig {
    fn default() -> Self {
        BranchConfig {
            alpha: 0.5,
            beta: 0.2,
            tau_b: 0.5,
            branch_budget: Some(4),
            max_steps: 32,
            top_k: 8,
            seed: 0,
            branch_decision: BranchDecision::Threshold,
            max_repair_attempts: crate::validator::DEFAULT_MAX_REPAIR_ATTEMPTS,
            history_capacity: crate::validator::DEFAULT_HISTORY_CAPACITY,
        }
    }
}

impl BranchConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        let bad = |m: &str| Err(RolloutError::Config(m.to_string()));
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return bad("alpha and beta must be finite");
        }
        if !(0.0..=1.0).contains(&self.tau_b) {
            return bad("tau_b must lie in [0, 1]");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("branch {branch} step {t}: {error}")]
    Policy { branch: u32, t: usize, error: PolicyError },
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `child_index`-th child forked from a branch with seed
/// `parent` at step `t`.
pub fn mix_seed(parent: u64, t: u64, child_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(parent) ^ t) ^ child_index)
}

/// Index drawn in proportion to `probs`, skipping `exclude`. Falls back to
/// uniform over the allowed indices when they carry no mass.
fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64], exclude: Option<usize>) -> usize {
    let allowed: Vec<usize> = (0..probs.len()).filter(|&i| Some(i) != exclude).collect();
    let total: f64 = allowed.iter().map(|&i| probs[i]).sum();
    let u: f64 = rng.random();
    if total <= 0.0 {
        return allowed[((u * allowed.len() as f64) as usize).min(allowed.len() - 1)];
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = allowed[0];
    for &i in &allowed {
        if probs[i] <= 0.0 {
            continue;
        }
        acc += probs[i];
        last = i;
        if target < acc {
            return i;
        }
    }
    last
}

#[derive(Clone)]
struct Branch {
    id: u32,
    parent: Option<u32>,
    seed: u64,
    rng: ChaCha8Rng,
    graph: WorkflowGraph,
    history: History,
    h_prev: Option<f64>,
    t: usize,
    children: u64,
}

/// What a branch will do this round, decided in phase 2.
struct Plan {
    dist: PolicyDistribution,
    entropy: f64,
    delta_entropy: f64,
    p_branch: f64,
    action: String,
    forced: bool,
    branched: bool,
    forked_child: Option<u32>,
}

pub fn run_rollouts(
    query: &str,
    registry: &SchemaRegistry,
    policy: &dyn Policy,
    cfg: &BranchConfig,
) -> Result<RolloutTree, RolloutError> {
    run_rollouts_with(query, registry, policy, cfg, Execution::default())
}

pub fn run_rollouts_with(
    query: &str,
    registry: &SchemaRegistry,
    policy: &dyn Policy,
    cfg: &BranchConfig,
    exec: Execution,
) -> Result<RolloutTree, RolloutError> {
    cfg.validate()?;
    let exec = if policy.concurrent() { exec } else { Execution::Sequential };
    let mut tree = RolloutTree::new(TreeHeader {
        query: query.to_string(),
        schema_id: registry.schema_id().to_string(),
        policy: policy.name(),
        config: cfg.clone(),
    });
    let mut budget = cfg.branch_budget;
    let mut next_id = 1u32;
    let mut active = vec![Branch {
        id: 0,
        parent: None,
        seed: cfg.seed,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        graph: WorkflowGraph::empty(),
        history: History::with_capacity(cfg.history_capacity),
        h_prev: None,
        t: 0,
        children: 0,
    }];

    while !active.is_empty() {
        let dists = par::map(exec, &active, |b| {
            let state = PolicyState {
                query,
                registry,
                graph: &b.graph,
                digest: b.graph.digest(),
                history: &b.history,
                step: b.t,
                top_k: cfg.top_k,
            };
            policy
                .distribution(&state)
                .and_then(|d| d.validate().map(|_| d).map_err(|e| PolicyError::Protocol(e.to_string())))
                .map_err(|error| RolloutError::Policy { branch: b.id, t: b.t, error })
        });

        let mut round: Vec<(Branch, Plan)> = Vec::with_capacity(active.len());
        for (mut b, dist) in active.into_iter().zip(dists) {
            let dist = dist?;
            let h = entropy(&dist.probs).expect("validated distribution");
            let dh = delta_entropy(h, b.h_prev);
            let p = branch_probability(dh, cfg.alpha, cfg.beta);
            let chosen = sample_index(&mut b.rng, &dist.probs, None);
            let fork = match cfg.branch_decision {
                BranchDecision::Threshold => decide_branch(p, cfg.tau_b, budget, dist.len()),
                BranchDecision::Bernoulli => {
                    let u: f64 = b.rng.random();
                    u < p && decide_branch(1.0, 0.0, budget, dist.len())
                }
            };
            let mut child = None;
            if fork {
                if let Some(left) = budget.as_mut() {
                    *left -= 1;
                }
                let alt = sample_index(&mut b.rng, &dist.probs, Some(chosen));
                let seed = mix_seed(b.seed, b.t as u64, b.children);
                b.children += 1;
                let c = Branch {
                    id: next_id,
                    parent: Some(b.id),
                    seed,
                    rng: ChaCha8Rng::seed_from_u64(seed),
                    graph: b.graph.clone(),
                    history: b.history.clone(),
                    h_prev: b.h_prev,
                    t: b.t,
                    children: 0,
                };
                next_id += 1;
                tree.forks += 1;
                child = Some((
                    c,
                    Plan {
                        dist: dist.clone(),
                        entropy: h,
                        delta_entropy: dh,
                        p_branch: p,
                        action: dist.candidates[alt].clone(),
                        forced: true,
                        branched: false,
                        forked_child: None,
                    },
                ));
            }
            let action = dist.candidates[chosen].clone();
            round.push((
                b,
                Plan {
                    dist,
                    entropy: h,
                    delta_entropy: dh,
                    p_branch: p,
                    action,
                    forced: false,
                    branched: fork,
                    forked_child: child.as_ref().map(|(c, _)| c.id),
                },
            ));
            round.extend(child);
        }
        round.sort_by_key(|(b, _)| b.id);

        let results = par::map(exec, &round, |(b, plan)| advance(query, registry, policy, cfg, b, plan));
        active = Vec::new();
        for (next, record, leaf) in results {
            tree.steps.push(record);
            match leaf {
                Some(l) => tree.leaves.push(l),
                None => active.push(next),
            }
        }
    }
    tree.leaves.sort_by_key(|l| l.branch);
    Ok(tree)
}

fn advance(
    query: &str,
    registry: &SchemaRegistry,
    policy: &dyn Policy,
    cfg: &BranchConfig,
    b: &Branch,
    plan: &Plan,
) -> (Branch, StepRecord, Option<LeafRecord>) {
    let digest_before = b.graph.digest();
    let first = step(&b.graph, &plan.action, registry);
    let history = update_history(&b.history, &plan.action, &first.outcome, &first.graph, registry);
    let (graph, history, committed, accepted, repairs, terminated) = if first.outcome.accepted {
        (first.graph, history, Some(plan.action.clone()), true, 0, first.terminated)
    } else {
        let propose = |g: &WorkflowGraph, h: &History, diags: &[crate::diagnostic::Diagnostic]| {
            let state = PolicyState {
                query,
                registry,
                graph: g,
                digest: g.digest(),
                history: h,
                step: b.t,
                top_k: cfg.top_k,
            };
            policy.repair(&state, diags)
        };
        match repair_loop(&b.graph, &history, registry, &first.outcome, cfg.max_repair_attempts, propose) {
            Ok(r) => (r.graph, r.history, r.line, true, r.attempts_used, r.terminated),
            Err(e) => (b.graph.clone(), e.history().clone(), None, false, e.attempts_used(), false),
        }
    };
    let digest_after = graph.digest();
    let record = StepRecord {
        branch: b.id,
        parent: b.parent,
        t: b.t,
        digest_before,
        candidates: plan.dist.candidates.clone(),
        probs: plan.dist.probs.clone(),
        entropy: plan.entropy,
        delta_entropy: plan.delta_entropy,
        p_branch: plan.p_branch,
        branched: plan.branched,
        forced: plan.forced,
        forked_child: plan.forked_child,
        action: plan.action.clone(),
        outcome: first.outcome,
        repair_attempts: repairs,
        committed,
        accepted,
        terminated,
        digest_after,
    };
    let next = Branch {
        graph,
        history,
        h_prev: Some(plan.entropy),
        t: b.t + 1,
        ..b.clone()
    };
    let termination = if terminated {
        Some(Termination::Stop)
    } else if next.t >= cfg.max_steps {
        Some(Termination::StepBudgetExhausted)
    } else {
        None
    };
    let leaf = termination.map(|termination| LeafRecord {
        branch: b.id,
        parent: b.parent,
        termination,
        steps: next.t,
        digest: digest_after,
        graph: next.graph.to_json_value(Some(registry.schema_id())),
        reward: None,
    });
    (next, record, leaf)
}

/// Runs one tree per seed, overriding `cfg.seed`. Trees are independent,
/// so they are spread across threads; each tree runs sequentially.
pub fn run_batch(
    query: &str,
    registry: &SchemaRegistry,
    policy: &dyn Policy,
    cfg: &BranchConfig,
    seeds: &[u64],
    exec: Execution,
) -> Vec<Result<RolloutTree, RolloutError>> {
    let exec = if policy.concurrent() { exec } else { Execution::Sequential };
    par::map(exec, seeds, |&seed| {
        let cfg = BranchConfig { seed, ..cfg.clone() };
        run_rollouts_with(query, registry, policy, &cfg, Execution::Sequential)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::final_check;

    fn sd() -> SchemaRegistry {
        SchemaRegistry::bundled("mini-sd").unwrap()
    }

    #[test]
    fn scripted_program_single_branch() {
        let r = sd();
        let p = ScriptedPolicy::new(fixtures::TEXT_TO_IMAGE_LINES);
        let tree = run_rollouts("make an image", &r, &p, &BranchConfig::default()).unwrap();
        assert_eq!(tree.forks, 0);
        assert_eq!(tree.leaves.len(), 1);
        let leaf = &tree.leaves[0];
        assert_eq!(leaf.termination, Termination::Stop);
        assert_eq!(leaf.steps, 8);
        let g = WorkflowGraph::from_json_value(&leaf.graph, &r).unwrap();
        assert!(final_check(&g, &r).accepted);
        assert_eq!(g, fixtures::text_to_image(&r));
    }

    #[test]
    fn same_seed_same_bytes() {
        let r = sd();
        let cfg = BranchConfig {
            seed: 7,
            max_steps: 12,
            ..BranchConfig::default()
        };
        let a = run_rollouts("q", &r, &UniformAdmissiblePolicy, &cfg).unwrap().to_jsonl();
        let b = run_rollouts_with("q", &r, &UniformAdmissiblePolicy, &cfg, Execution::Sequential)
            .unwrap()
            .to_jsonl();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_budget_single_branch() {
        let r = sd();
        let cfg = BranchConfig {
            branch_budget: Some(0),
            max_steps: 10,
            ..BranchConfig::default()
        };
        let tree = run_rollouts("q", &r, &UniformAdmissiblePolicy, &cfg).unwrap();
        assert_eq!(tree.forks, 0);
        assert_eq!(tree.leaves.len(), 1);
    }

    #[test]
    fn budget_bounds_forks() {
        let r = sd();
        for b in 0..6 {
            let cfg = BranchConfig {
                branch_budget: Some(b),
                max_steps: 6,
                seed: 3,
                ..BranchConfig::default()
            };
            let tree = run_rollouts("q", &r, &UniformAdmissiblePolicy, &cfg).unwrap();
            assert_eq!(tree.forks, b.min(tree.fork_eligible_steps() as u64));
            assert_eq!(tree.leaves.len() as u64, tree.forks + 1);
        }
    }

    #[test]
    fn fork_children_share_prefix() {
        let r = sd();
        let cfg = BranchConfig {
            branch_budget: None,
            max_steps: 4,
            ..BranchConfig::default()
        };
        let tree = run_rollouts("q", &r, &UniformAdmissiblePolicy, &cfg).unwrap();
        for s in tree.steps.iter().filter(|s| s.branched) {
            let child = tree
                .steps
                .iter()
                .find(|c| Some(c.branch) == s.forked_child && c.t == s.t)
                .unwrap();
            assert!(child.forced);
            assert_eq!(child.digest_before, s.digest_before);
            assert_ne!(child.action, s.action);
        }
    }

    #[test]
    fn seed_mixer_is_stable() {
        assert_eq!(mix_seed(0, 0, 0), mix_seed(0, 0, 0));
        assert_ne!(mix_seed(1, 2, 0), mix_seed(1, 2, 1));
        assert_ne!(mix_seed(1, 2, 0), mix_seed(1, 3, 0));
    }

    #[test]
    fn bad_config_rejected() {
        let r = sd();
        let cfg = BranchConfig {
            tau_b: 1.5,
            ..BranchConfig::default()
        };
        assert!(matches!(
            run_rollouts("q", &r, &UniformAdmissiblePolicy, &cfg),
            Err(RolloutError::Config(_))
        ));
    }
}
