//! Normalized entropy of a candidate distribution and the entropy-driven
//! branching rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the probability sum.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("distribution has no candidates")]
    Empty,
    #[error("{candidates} candidates but {probs} probabilities")]
    LengthMismatch { candidates: usize, probs: usize },
    #[error("probability {0} is negative or not finite")]
    BadProbability(f64),
    #[error("probabilities sum to {0}")]
    BadSum(f64),
    #[error("candidate `{0}` listed twice")]
    DuplicateCandidate(String),
}

/// A policy's constrained candidate set with its probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDistribution {
    pub candidates: Vec<String>,
    pub probs: Vec<f64>,
}

impl PolicyDistribution {
    pub fn new(candidates: Vec<String>, probs: Vec<f64>) -> Result<Self, DistributionError> {
        let d = PolicyDistribution { candidates, probs };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(candidates: Vec<String>) -> Result<Self, DistributionError> {
        let n = candidates.len();
        Self::new(candidates, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn single(candidate: impl Into<String>) -> Self {
        PolicyDistribution {
            candidates: vec![candidate.into()],
            probs: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        if self.candidates.is_empty() {
            return Err(DistributionError::Empty);
        }
        if self.candidates.len() != self.probs.len() {
            return Err(DistributionError::LengthMismatch {
                candidates: self.candidates.len(),
                probs: self.probs.len(),
            });
        }
        validate_probs(&self.probs)?;
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.candidates {
            if !seen.insert(c.as_str()) {
                return Err(DistributionError::DuplicateCandidate(c.clone()));
            }
        }
        Ok(())
    }

    pub fn entropy(&self) -> Result<f64, DistributionError> {
        entropy(&self.probs)
    }
}

pub fn validate_probs(probs: &[f64]) -> Result<(), DistributionError> {
    if probs.is_empty() {
        return Err(DistributionError::Empty);
    }
    if let Some(&p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(DistributionError::BadProbability(p));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(DistributionError::BadSum(sum));
    }
    Ok(())
}

/// Shannon entropy (natural log) divided by `ln n`, clamped to `[0, 1]`.
/// Zero-probability terms contribute nothing; a single candidate has
/// entropy 0.
pub fn entropy(probs: &[f64]) -> Result<f64, DistributionError> {
    validate_probs(probs)?;
    if probs.len() <= 1 {
        return Ok(0.0);
    }
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok((h / (probs.len() as f64).ln()).clamp(0.0, 1.0))
}

/// `H_t - H_{t-1}`, taking `H_{-1} = 0` at the first step.
pub fn delta_entropy(h: f64, prev: Option<f64>) -> f64 {
    h - prev.unwrap_or(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(alpha + beta * dh)`.
pub fn branch_probability(dh: f64, alpha: f64, beta: f64) -> f64 {
    sigmoid(alpha + beta * dh)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchDecision {
    /// Fork when `P > tau_b`.
    #[default]
    Threshold,
    /// Fork with probability `P`, drawn from the branch's stream.
    Bernoulli,
}

/// Threshold rule: fork iff `p > tau_b`, budget remains (`None` is
/// unlimited) and there is an alternative candidate.
pub fn decide_branch(p: f64, tau_b: f64, budget_remaining: Option<u64>, n_candidates: usize) -> bool {
    p > tau_b && budget_remaining.is_none_or(|b| b > 0) && n_candidates >= 2
}
