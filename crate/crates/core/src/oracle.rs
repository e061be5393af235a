//! Ground-truth planning under the true model.
//!
//! The constrained optimum is found through the Lagrangian dual
//! `g(lambda) = max_pi V_{r + lambda d}^pi - lambda alpha`, which is convex and
//! piecewise linear in `lambda` and, by strong duality, attains the optimum
//! of the occupancy-measure LP.

use crate::cmdp::{CmdpModel, Dims, Policy, StepTable};
use crate::error::{Error, Result};

/// Final bracket width for the golden-section search.
pub const GOLDEN_TOL: f64 = 1e-9;
/// Subgradient iterations used when there is more than one constraint.
pub const SUBGRADIENT_ITERS: usize = 100_000;

/// Optimal value of `payoff` by backward induction, with the greedy
/// deterministic policy. Ties go to the lowest action index.
pub fn max_value(model: &CmdpModel, payoff: &StepTable) -> Result<(f64, Policy)> {
    model.check_payoff(payoff)?;
    let Dims {
        states: ns,
        actions: na,
        horizon: nh,
        ..
    } = model.dims();
    let mut next = vec![0.0; ns];
    let mut current = vec![0.0; ns];
    let mut choice = vec![0usize; nh * ns];
    for h in (0..nh).rev() {
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let cont: f64 = model
                    .transition_row(h, s, a)
                    .iter()
                    .zip(&next)
                    .map(|(p, v)| p * v)
                    .sum();
                let q = payoff.get(h, s, a) + cont;
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            current[s] = best;
            choice[h * ns + s] = best_a;
        }
        std::mem::swap(&mut next, &mut current);
    }
    let value = next[model.initial_state()];
    let policy = Policy::deterministic(nh, ns, na, |h, s| choice[h * ns + s]);
    Ok((value, policy))
}

/// Thresholds at half the best achievable constraint value, and the
/// resulting Slater gap `Xi = min_i (max V_{d_i} - alpha_i) = min_i alpha_i`.
pub fn slater_quantities(model: &CmdpModel) -> Result<(f64, Vec<f64>)> {
    let mut alpha = Vec::with_capacity(model.dims().constraints);
    for (i, d) in model.constraints().iter().enumerate() {
        let (best, _) = max_value(model, d)?;
        if best <= 0.0 {
            return Err(Error::Degenerate(format!(
                "constraint {i} has maximal value {best}; no strictly feasible policy"
            )));
        }
        alpha.push(0.5 * best);
    }
    let gap = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((gap, alpha))
}

/// Constrained optimum and its dual certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdpOptimum {
    pub value: f64,
    pub lambda: Vec<f64>,
    /// `min_i (max V_{d_i} - alpha_i)` for the supplied thresholds.
    pub slater_gap: f64,
}

/// Lagrangian dual function `g(lambda)`.
pub fn dual_function(model: &CmdpModel, alpha: &[f64], lambda: &[f64]) -> Result<f64> {
    Ok(dual_eval(model, alpha, lambda)?.0)
}

/// `(g(lambda), V_d^{pi_lambda})` where `pi_lambda` is the greedy policy for
/// the Lagrangian payoff. The second component is a subgradient offset.
fn dual_eval(model: &CmdpModel, alpha: &[f64], lambda: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut payoff = model.reward().clone();
    for (d, &l) in model.constraints().iter().zip(lambda) {
        payoff = payoff.add_scaled(d, l)?;
    }
    let (best, policy) = max_value(model, &payoff)?;
    let shift: f64 = lambda.iter().zip(alpha).map(|(l, a)| l * a).sum();
    let vd = model
        .constraints()
        .iter()
        .map(|d| crate::cmdp::evaluate_policy(model, &policy, d).map(|t| t.root_value))
        .collect::<Result<Vec<_>>>()?;
    Ok((best - shift, vd))
}

/// Exact optimum `max V_r s.t. V_{d_i} >= alpha_i` by dual minimisation over
/// `[0, 4H/Xi]^m`.
pub fn cmdp_optimum(model: &CmdpModel, alpha: &[f64]) -> Result<CmdpOptimum> {
    let dims = model.dims();
    if alpha.len() != dims.constraints {
        return Err(Error::Contract(format!(
            "expected {} thresholds, got {}",
            dims.constraints,
            alpha.len()
        )));
    }
    let mut gap = f64::INFINITY;
    for (d, &a) in model.constraints().iter().zip(alpha) {
        gap = gap.min(max_value(model, d)?.0 - a);
    }
    if !(gap > 0.0) {
        return Err(Error::Degenerate(format!(
            "thresholds admit no strictly feasible policy (Slater gap {gap})"
        )));
    }
    let upper = 4.0 * dims.horizon as f64 / gap;

    let (value, lambda) = if dims.constraints == 1 {
        let g = |l: f64| dual_function(model, alpha, &[l]);
        let (l, v) = golden_section(g, 0.0, upper, GOLDEN_TOL)?;
        (v, vec![l])
    } else {
        subgradient_dual(model, alpha, upper)?
    };
    Ok(CmdpOptimum {
        value: value.clamp(0.0, dims.horizon as f64),
        lambda,
        slater_gap: gap,
    })
}

/// Minimises a unimodal function on `[lo, hi]`; returns the best probed
/// point and value.
pub(crate) fn golden_section(
    f: impl Fn(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = (lo, f(lo)?);
    let end = f(hi)?;
    if end < best.1 {
        best = (hi, end);
    }
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx < best.1 {
                best = (x, fx);
            }
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid)?;
    if fm < best.1 {
        best = (mid, fm);
    }
    Ok(best)
}

/// Projected subgradient descent on the dual with step `upper / sqrt(k)`.
/// Reports the smaller of the best probed value and the value at the
/// averaged iterate; both upper-bound the optimum by weak duality.
fn subgradient_dual(model: &CmdpModel, alpha: &[f64], upper: f64) -> Result<(f64, Vec<f64>)> {
    let m = alpha.len();
    let mut lambda = vec![0.0; m];
    let mut avg = vec![0.0; m];
    let mut best = (f64::INFINITY, lambda.clone());
    let scale = upper / model.dims().horizon as f64;
    for k in 1..=SUBGRADIENT_ITERS {
        let (g, vd) = dual_eval(model, alpha, &lambda)?;
        if g < best.0 {
            best = (g, lambda.clone());
        }
        let step = scale / (k as f64).sqrt();
        for i in 0..m {
            avg[i] += (lambda[i] - avg[i]) / k as f64;
            lambda[i] = (lambda[i] - step * (vd[i] - alpha[i])).clamp(0.0, upper);
        }
    }
    let g_avg = dual_function(model, alpha, &avg)?;
    if g_avg < best.0 {
        best = (g_avg, avg);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::evaluate_policy;
    use crate::cmdp::test_support::random_model;

    fn bandit(rewards: &[f64], constraint: &[f64], horizon: usize) -> CmdpModel {
        let na = rewards.len();
        let r = StepTable::from_fn(horizon, 1, na, |_, _, a| rewards[a]);
        let d = StepTable::from_fn(horizon, 1, na, |_, _, a| constraint[a]);
        CmdpModel::new(
            Dims::new(1, na, horizon, 1),
            0,
            vec![1.0; horizon * na],
            r,
            vec![d],
            vec![0.0],
        )
        .unwrap()
    }

    /// Every deterministic Markov policy, evaluated independently by forward
    /// propagation of the state distribution.
    fn brute_force_max(model: &CmdpModel, payoff: &StepTable) -> f64 {
        let d = model.dims();
        let slots = d.horizon * d.states;
        let total = d.actions.pow(slots as u32);
        let mut best = f64::NEG_INFINITY;
        for code in 0..total {
            let mut digits = vec![0; slots];
            let mut c = code;
            for digit in digits.iter_mut() {
                *digit = c % d.actions;
                c /= d.actions;
            }
            let mut mass = vec![0.0; d.states];
            mass[model.initial_state()] = 1.0;
            let mut value = 0.0;
            for h in 0..d.horizon {
                let mut next = vec![0.0; d.states];
                for s in 0..d.states {
                    let a = digits[h * d.states + s];
                    value += mass[s] * payoff.get(h, s, a);
                    for (n, p) in next.iter_mut().zip(model.transition_row(h, s, a)) {
                        *n += mass[s] * p;
                    }
                }
                mass = next;
            }
            best = best.max(value);
        }
        best
    }

    #[test]
    fn single_state_greedy() {
        let model = bandit(&[1.0, 0.0], &[0.0, 1.0], 2);
        let (v, pi) = max_value(&model, model.reward()).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(pi.prob(0, 0, 0), 1.0);
        assert_eq!(pi.prob(1, 0, 0), 1.0);
    }

    #[test]
    fn zero_payoff_ties_to_first_action() {
        let model = random_model(4, Dims::new(3, 3, 2, 1));
        let (v, pi) = max_value(&model, &StepTable::zeros(2, 3, 3)).unwrap();
        assert_eq!(v, 0.0);
        for h in 0..2 {
            for s in 0..3 {
                assert_eq!(pi.row(h, s), &[1.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn max_value_matches_policy_enumeration() {
        for seed in 0..8 {
            let model = random_model(seed, Dims::new(3, 2, 3, 1));
            let (v, pi) = max_value(&model, model.reward()).unwrap();
            let brute = brute_force_max(&model, model.reward());
            assert!((v - brute).abs() < 1e-12);
            let check = evaluate_policy(&model, &pi, model.reward())
                .unwrap()
                .root_value;
            assert!((check - v).abs() < 1e-12);
        }
    }

    #[test]
    fn slater_half_rule() {
        // max V_d = 4 with H = 4 and d = 1 on action 1.
        let model = bandit(&[1.0, 0.0], &[0.0, 1.0], 4);
        let (gap, alpha) = slater_quantities(&model).unwrap();
        assert_eq!(alpha, vec![2.0]);
        assert_eq!(gap, 2.0);
    }

    #[test]
    fn slater_rejects_zero_constraint() {
        let model = bandit(&[1.0, 0.0], &[0.0, 0.0], 2);
        assert!(matches!(
            slater_quantities(&model),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn forced_mixture_instance() {
        let model = bandit(&[1.0, 0.0], &[0.0, 1.0], 1);
        let opt = cmdp_optimum(&model, &[0.5]).unwrap();
        assert!((opt.value - 0.5).abs() < 1e-9, "{}", opt.value);
        assert!((opt.lambda[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn inactive_constraint_recovers_unconstrained_value() {
        for seed in 0..5 {
            let model = random_model(seed, Dims::new(3, 2, 3, 1));
            let opt = cmdp_optimum(&model, &[0.0]).unwrap();
            let (best, _) = max_value(&model, model.reward()).unwrap();
            assert!((opt.value - best).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_thresholds_error_before_search() {
        let model = bandit(&[1.0, 0.0], &[0.0, 1.0], 1);
        assert!(matches!(
            cmdp_optimum(&model, &[1.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn golden_section_on_kinked_function() {
        let (x, fx) = golden_section(|x| Ok((x - 0.3).abs() + 1.0), 0.0, 2.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-9);
        assert!((fx - 1.0).abs() < 1e-9);
        // minimum at the boundary
        let (x, _) = golden_section(Ok, 0.0, 5.0, 1e-9).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn multi_constraint_subgradient_is_close() {
        // Two identical constraints reduce to the single-constraint problem.
        let base = random_model(11, Dims::new(2, 2, 2, 1));
        let d = base.constraint(0).clone();
        let model = CmdpModel::new(
            Dims::new(2, 2, 2, 2),
            base.initial_state(),
            base.transitions().to_vec(),
            base.reward().clone(),
            vec![d.clone(), d],
            vec![0.0, 0.0],
        )
        .unwrap();
        let (best_d, _) = max_value(&base, base.constraint(0)).unwrap();
        let alpha = 0.6 * best_d;
        let single = cmdp_optimum(&base, &[alpha]).unwrap();
        let multi = cmdp_optimum(&model, &[alpha, alpha]).unwrap();
        assert!(
            (single.value - multi.value).abs() < 1e-3,
            "{} vs {}",
            single.value,
            multi.value
        );
    }
}
