//! Arbitrary-precision recomputation of the closed-form quantities.

use astro_float::{BigFloat, Consts, RoundingMode};

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Hp {
    cc: Consts,
}

impl Default for Hp {
    fn default() -> Self {
        Hp {
            cc: Consts::new().expect("constants cache"),
        }
    }
}

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, P)
}

/// Nearest f64, via the decimal rendering.
pub fn to_f64(x: &BigFloat) -> f64 {
    x.to_string().parse().expect("decimal rendering parses")
}

impl Hp {
    pub fn ln(&mut self, x: &BigFloat) -> BigFloat {
        x.ln(P, RM, &mut self.cc)
    }

    /// `-Σ p ln p / ln n`, computed from the f64 inputs exactly.
    pub fn entropy(&mut self, probs: &[f64]) -> f64 {
        if probs.len() <= 1 {
            return 0.0;
        }
        let mut acc = big(0.0);
        for &p in probs.iter().filter(|&&p| p > 0.0) {
            let bp = big(p);
            let term = bp.mul(&self.ln(&bp), P, RM);
            acc = acc.sub(&term, P, RM);
        }
        let ln_n = self.ln(&big(probs.len() as f64));
        to_f64(&acc.div(&ln_n, P, RM))
    }

    /// `1 / (1 + e^{-x})`.
    pub fn sigmoid(&mut self, x: &BigFloat) -> f64 {
        let e = x.neg().exp(P, RM, &mut self.cc);
        let one = big(1.0);
        to_f64(&one.div(&one.add(&e, P, RM), P, RM))
    }

    /// `sigmoid(alpha + beta * dh)` with the affine part exact.
    pub fn branch_probability(&mut self, dh: f64, alpha: f64, beta: f64) -> f64 {
        let z = big(alpha).add(&big(beta).mul(&big(dh), P, RM), P, RM);
        self.sigmoid(&z)
    }

    /// `Σ p ln(p / q)`.
    pub fn kl(&mut self, p: &[f64], q: &[f64]) -> BigFloat {
        let mut acc = big(0.0);
        for (&pi, &qi) in p.iter().zip(q) {
            if pi == 0.0 {
                continue;
            }
            let r = big(pi).div(&big(qi), P, RM);
            acc = acc.add(&big(pi).mul(&self.ln(&r), P, RM), P, RM);
        }
        acc
    }

    /// Pooled objective value over every step of every trajectory:
    /// `mean[(R_k - mean R) * logp] - lambda * mean[KL(cur || ref)]`.
    /// `steps[k]` holds `(logp_current, current, reference)` per step.
    #[allow(clippy::type_complexity)]
    pub fn grpo_objective(&mut self, rewards: &[f64], steps: &[Vec<(f64, Vec<f64>, Vec<f64>)>], lambda: f64) -> f64 {
        let mut mean = big(0.0);
        for &r in rewards {
            mean = mean.add(&big(r), P, RM);
        }
        mean = mean.div(&big(rewards.len() as f64), P, RM);
        let mut policy = big(0.0);
        let mut kl = big(0.0);
        let mut n = 0usize;
        for (k, traj) in steps.iter().enumerate() {
            let adv = big(rewards[k]).sub(&mean, P, RM);
            for (lp, cur, reference) in traj {
                policy = policy.add(&adv.mul(&big(*lp), P, RM), P, RM);
                kl = kl.add(&self.kl(cur, reference), P, RM);
                n += 1;
            }
        }
        let nn = big(n as f64);
        let value = policy
            .div(&nn, P, RM)
            .sub(&big(lambda).mul(&kl.div(&nn, P, RM), P, RM), P, RM);
        to_f64(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(to_f64(&big(0.1)), 0.1);
        assert_eq!(to_f64(&big(-3.5e-9)), -3.5e-9);
        let mut hp = Hp::default();
        assert!((hp.entropy(&[0.5, 0.5]) - 1.0).abs() < 1e-15);
        assert!((hp.sigmoid(&big(0.0)) - 0.5).abs() < 1e-16);
    }
}
