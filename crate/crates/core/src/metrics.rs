//! Strong (no-cancellation) cumulative regret and violation.

use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StrongMetrics {
    /// `sum_t [gap_t]_+`.
    pub regret: f64,
    /// `max_i sum_t [violation_{i,t}]_+`.
    pub violation: f64,
    pub cum_regret: Vec<f64>,
    pub cum_violation: Vec<f64>,
    /// Plain `sum_t gap_t` prefix sums, kept as a diagnostic.
    pub cum_weak_regret: Vec<f64>,
}

/// `violations[i][t]` holds `alpha_i - V_{d_i}^{pi_t}`.
pub fn strong_metrics(gaps: &[f64], violations: &[Vec<f64>]) -> Result<StrongMetrics> {
    let n = gaps.len();
    if let Some(v) = violations.iter().find(|v| v.len() != n) {
        return Err(contract(format!(
            "violation series of length {} does not match {n} gaps",
            v.len()
        )));
    }
    let mut cum_regret = Vec::with_capacity(n);
    let mut cum_weak_regret = Vec::with_capacity(n);
    let mut cum_violation = Vec::with_capacity(n);
    let mut per_constraint = vec![0.0; violations.len()];
    let (mut strong, mut weak) = (0.0, 0.0);
    for t in 0..n {
        strong += gaps[t].max(0.0);
        weak += gaps[t];
        cum_regret.push(strong);
        cum_weak_regret.push(weak);
        for (acc, v) in per_constraint.iter_mut().zip(violations) {
            *acc += v[t].max(0.0);
        }
        cum_violation.push(per_constraint.iter().copied().fold(0.0, f64::max));
    }
    Ok(StrongMetrics {
        regret: strong,
        violation: cum_violation.last().copied().unwrap_or(0.0),
        cum_regret,
        cum_violation,
        cum_weak_regret,
    })
}

/// Running accumulator used by the experiment loop.
#[derive(Debug, Clone, Default)]
pub struct StrongAccumulator {
    regret: f64,
    weak_regret: f64,
    per_constraint: Vec<f64>,
}

impl StrongAccumulator {
    pub fn new(constraints: usize) -> Self {
        Self {
            regret: 0.0,
            weak_regret: 0.0,
            per_constraint: vec![0.0; constraints],
        }
    }

    /// Adds one episode; returns `(cum_strong_regret, cum_strong_violation, cum_weak_regret)`.
    pub fn push(&mut self, gap: f64, violations: &[f64]) -> (f64, f64, f64) {
        self.regret += gap.max(0.0);
        self.weak_regret += gap;
        for (acc, v) in self.per_constraint.iter_mut().zip(violations) {
            *acc += v.max(0.0);
        }
        (self.regret, self.violation(), self.weak_regret)
    }

    pub fn violation(&self) -> f64 {
        self.per_constraint.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn positive_part_sum() {
        let m = strong_metrics(&[0.5, -0.2, 0.1], &[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!((m.regret - 0.6).abs() < 1e-15);
        assert!((m.cum_weak_regret[2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn feasible_run_has_zero_violation() {
        let m = strong_metrics(&[0.0; 4], &[vec![-1.0, -0.1, 0.0, -3.0]]).unwrap();
        assert_eq!(m.violation, 0.0);
    }

    #[test]
    fn max_over_constraints() {
        let m = strong_metrics(&[0.0, 0.0], &[vec![0.5, 0.5], vec![2.0, 0.5]]).unwrap();
        assert_eq!(m.violation, 2.5);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        assert!(strong_metrics(&[0.0, 1.0], &[vec![0.0]]).is_err());
    }

    #[test]
    fn accumulator_agrees_with_batch() {
        let gaps = [0.3, -0.1, 0.7, 0.0];
        let viol = vec![vec![0.1, 0.2, -0.4, 0.3], vec![-1.0, 0.5, 0.5, 0.0]];
        let batch = strong_metrics(&gaps, &viol).unwrap();
        let mut acc = StrongAccumulator::new(2);
        for t in 0..4 {
            let (r, v, w) = acc.push(gaps[t], &[viol[0][t], viol[1][t]]);
            assert_eq!(r, batch.cum_regret[t]);
            assert_eq!(v, batch.cum_violation[t]);
            assert_eq!(w, batch.cum_weak_regret[t]);
        }
    }

    proptest! {
        #[test]
        fn negating_a_negative_gap_never_lowers_regret(
            gaps in prop::collection::vec(-1.0f64..1.0, 1..50), idx in 0usize..50,
        ) {
            let base = strong_metrics(&gaps, &[]).unwrap().regret;
            let mut flipped = gaps.clone();
            let k = idx % gaps.len();
            if flipped[k] < 0.0 {
                flipped[k] = -flipped[k];
            }
            prop_assert!(strong_metrics(&flipped, &[]).unwrap().regret >= base);
        }
    }
}
