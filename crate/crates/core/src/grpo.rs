//! Group-relative advantages and the value of the KL-regularized GRPO
//! objective, computed from recorded log-probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rollout::validate_probs;

pub const DEFAULT_LAMBDA_KL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("group has {0} trajectories, at least 2 are required")]
    GroupTooSmall(usize),
    #[error("mismatched lengths: {0}")]
    MismatchedLengths(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// `R_k - mean(R)` for every trajectory in the group.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok(rewards.iter().map(|r| r - mean).collect())
}

/// One decision step: the log-probability of the taken action under the
/// current and reference policies, and both full distributions over the
/// same recorded candidate set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLogProbs {
    pub logprob_current: f64,
    pub logprob_reference: f64,
    pub current: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub reward: f64,
    pub steps: Vec<StepLogProbs>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub trajectories: Vec<Trajectory>,
}

/// Exact `KL(p || q) = Σ p ln(p / q)` over a finite support.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, GrpoError> {
    if p.len() != q.len() {
        return Err(GrpoError::MismatchedLengths(format!(
            "distributions of sizes {} and {}",
            p.len(),
            q.len()
        )));
    }
    validate_probs(p).map_err(|e| GrpoError::InvalidDistribution(e.to_string()))?;
    validate_probs(q).map_err(|e| GrpoError::InvalidDistribution(e.to_string()))?;
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(GrpoError::InvalidDistribution(
                "reference assigns zero probability to a supported candidate".into(),
            ));
        }
        kl += pi * (pi / qi).ln();
    }
    Ok(kl.max(0.0))
}

/// `mean_{k,t}[A_k * logp_cur] - lambda_kl * mean_{k,t}[KL(cur || ref)]`,
/// pooling every step of every trajectory.
pub fn grpo_objective_value(group: &GroupRollout, lambda_kl: f64) -> Result<f64, GrpoError> {
    let rewards: Vec<f64> = group.trajectories.iter().map(|t| t.reward).collect();
    let adv = group_advantages(&rewards)?;
    let mut n = 0usize;
    let mut policy_term = 0.0;
    let mut kl_term = 0.0;
    for (k, traj) in group.trajectories.iter().enumerate() {
        if traj.steps.is_empty() {
            return Err(GrpoError::MismatchedLengths(format!("trajectory {k} has no steps")));
        }
        for step in &traj.steps {
            if !step.logprob_current.is_finite() || step.logprob_current > 0.0 {
                return Err(GrpoError::InvalidDistribution(format!(
                    "log-probability {} is not a finite non-positive value",
                    step.logprob_current
                )));
            }
            policy_term += adv[k] * step.logprob_current;
            kl_term += kl_divergence(&step.current, &step.reference)?;
            n += 1;
        }
    }
    Ok(policy_term / n as f64 - lambda_kl * kl_term / n as f64)
}
