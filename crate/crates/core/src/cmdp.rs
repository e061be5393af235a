//! Finite-horizon constrained MDPs and exact dynamic programming on them.
//!
//! All tables are dense and row-major. Steps are indexed from 0 internally,
//! so step `h` here is step `h + 1` in the usual 1-based notation and the
//! remaining horizon at step `h` is `H - h`.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Tolerance for row-stochasticity checks.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Problem dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "m")]
    pub constraints: usize,
}

impl Dims {
    pub fn new(states: usize, actions: usize, horizon: usize, constraints: usize) -> Self {
        Self {
            states,
            actions,
            horizon,
            constraints,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.actions == 0 || self.horizon == 0 || self.constraints == 0 {
            return Err(Error::Config(format!(
                "all dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of (h, s, a) cells.
    pub fn cells(&self) -> usize {
        self.horizon * self.states * self.actions
    }
}

/// A real value for every (step, state, action) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTable {
    horizon: usize,
    states: usize,
    actions: usize,
    data: Vec<f64>,
}

impl StepTable {
    pub fn filled(horizon: usize, states: usize, actions: usize, value: f64) -> Self {
        Self {
            horizon,
            states,
            actions,
            data: vec![value; horizon * states * actions],
        }
    }

    pub fn zeros(horizon: usize, states: usize, actions: usize) -> Self {
        Self::filled(horizon, states, actions, 0.0)
    }

    pub fn from_fn(
        horizon: usize,
        states: usize,
        actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(horizon * states * actions);
        for h in 0..horizon {
            for s in 0..states {
                for a in 0..actions {
                    data.push(f(h, s, a));
                }
            }
        }
        Self {
            horizon,
            states,
            actions,
            data,
        }
    }

    pub fn from_vec(horizon: usize, states: usize, actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != horizon * states * actions {
            return Err(contract(format!(
                "table of length {} does not match {horizon}x{states}x{actions}",
                data.len()
            )));
        }
        Ok(Self {
            horizon,
            states,
            actions,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.horizon, self.states, self.actions)
    }

    #[inline]
    fn idx(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.states + s) * self.actions + a
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.data[self.idx(h, s, a)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, s: usize, a: usize, value: f64) {
        let i = self.idx(h, s, a);
        self.data[i] = value;
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = self.idx(h, s, 0);
        &self.data[start..start + self.actions]
    }

    #[inline]
    pub fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let start = self.idx(h, s, 0);
        &mut self.data[start..start + self.actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self + weight * other`, cellwise.
    pub fn add_scaled(&self, other: &StepTable, weight: f64) -> Result<StepTable> {
        if self.shape() != other.shape() {
            return Err(contract("payoff tables differ in shape"));
        }
        let mut out = self.clone();
        for (x, y) in out.data.iter_mut().zip(&other.data) {
            *x += weight * y;
        }
        Ok(out)
    }

    /// Inner product over all cells.
    pub fn dot(&self, other: &StepTable) -> f64 {
        self.data.iter().zip(&other.data).map(|(x, y)| x * y).sum()
    }

    pub(crate) fn nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.horizon)
            .map(|h| (0..self.states).map(|s| self.row(h, s).to_vec()).collect())
            .collect()
    }

    pub(crate) fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let horizon = nested.len();
        let states = nested.first().map_or(0, Vec::len);
        let actions = nested.first().and_then(|x| x.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(horizon * states * actions);
        for per_state in nested {
            if per_state.len() != states {
                return Err(contract("ragged table"));
            }
            for row in per_state {
                if row.len() != actions {
                    return Err(contract("ragged table"));
                }
                data.extend_from_slice(row);
            }
        }
        Self::from_vec(horizon, states, actions, data)
    }
}

/// A real value for every (step, state) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTable {
    states: usize,
    data: Vec<f64>,
}

impl StateTable {
    pub fn zeros(horizon: usize, states: usize) -> Self {
        Self {
            states,
            data: vec![0.0; horizon * states],
        }
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize) -> f64 {
        self.data[h * self.states + s]
    }

    #[inline]
    pub fn set(&mut self, h: usize, s: usize, value: f64) {
        self.data[h * self.states + s] = value;
    }

    #[inline]
    pub fn step(&self, h: usize) -> &[f64] {
        &self.data[h * self.states..(h + 1) * self.states]
    }
}

/// Ground-truth constrained MDP `(S, A, H, p, r, d, alpha)` with a fixed
/// initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct CmdpModel {
    dims: Dims,
    initial_state: usize,
    /// Flat `[h][s][a][s']`.
    transitions: Vec<f64>,
    reward: StepTable,
    constraints: Vec<StepTable>,
    thresholds: Vec<f64>,
}

impl CmdpModel {
    pub fn new(
        dims: Dims,
        initial_state: usize,
        transitions: Vec<f64>,
        reward: StepTable,
        constraints: Vec<StepTable>,
        thresholds: Vec<f64>,
    ) -> Result<Self> {
        dims.validate().map_err(|e| contract(e.to_string()))?;
        let Dims {
            states: ns,
            actions: na,
            horizon: nh,
            constraints: m,
        } = dims;
        if initial_state >= ns {
            return Err(contract(format!(
                "initial state {initial_state} out of range"
            )));
        }
        if transitions.len() != nh * ns * na * ns {
            return Err(contract("transition tensor has the wrong length"));
        }
        for (k, row) in transitions.chunks(ns).enumerate() {
            if row.iter().any(|&x| !(x >= 0.0)) {
                return Err(contract(format!(
                    "negative transition probability in row {k}"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SIMPLEX_TOL {
                return Err(contract(format!("transition row {k} sums to {total}")));
            }
        }
        if reward.shape() != (nh, ns, na) {
            return Err(contract("reward table has the wrong shape"));
        }
        if constraints.len() != m || thresholds.len() != m {
            return Err(contract(format!(
                "expected {m} constraint tables and thresholds"
            )));
        }
        let unit = |x: &f64| (0.0..=1.0).contains(x);
        if !reward.as_slice().iter().all(unit) {
            return Err(contract("reward entries must lie in [0, 1]"));
        }
        for d in &constraints {
            if d.shape() != (nh, ns, na) {
                return Err(contract("constraint table has the wrong shape"));
            }
            if !d.as_slice().iter().all(unit) {
                return Err(contract("constraint entries must lie in [0, 1]"));
            }
        }
        if !thresholds.iter().all(|a| (0.0..=nh as f64).contains(a)) {
            return Err(contract("thresholds must lie in [0, H]"));
        }
        Ok(Self {
            dims,
            initial_state,
            transitions,
            reward,
            constraints,
            thresholds,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let ns = self.dims.states;
        let start = ((h * ns + s) * self.dims.actions + a) * ns;
        &self.transitions[start..start + ns]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn reward(&self) -> &StepTable {
        &self.reward
    }

    pub fn constraint(&self, i: usize) -> &StepTable {
        &self.constraints[i]
    }

    pub fn constraints(&self) -> &[StepTable] {
        &self.constraints
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Same model with a different threshold vector.
    pub fn with_thresholds(&self, thresholds: Vec<f64>) -> Result<Self> {
        Self::new(
            self.dims,
            self.initial_state,
            self.transitions.clone(),
            self.reward.clone(),
            self.constraints.clone(),
            thresholds,
        )
    }

    pub(crate) fn check_payoff(&self, payoff: &StepTable) -> Result<()> {
        let d = self.dims;
        if payoff.shape() != (d.horizon, d.states, d.actions) {
            return Err(contract(format!(
                "payoff shape {:?} does not match model ({}, {}, {})",
                payoff.shape(),
                d.horizon,
                d.states,
                d.actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        let d = self.dims;
        if policy.shape() != (d.horizon, d.states, d.actions) {
            return Err(contract("policy shape does not match model"));
        }
        Ok(())
    }
}

/// Markov policy: a distribution over actions for every (step, state).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: StepTable,
}

impl Policy {
    /// Validates that every row lies on the probability simplex.
    pub fn new(probs: StepTable) -> Result<Self> {
        let policy = Self { probs };
        let err = policy.simplex_error();
        if !(err <= SIMPLEX_TOL) {
            return Err(contract(format!(
                "policy rows are off the simplex by {err}"
            )));
        }
        Ok(policy)
    }

    pub(crate) fn from_table_unchecked(probs: StepTable) -> Self {
        Self { probs }
    }

    /// Deterministic policy picking `choice(h, s)` everywhere.
    pub fn deterministic(
        horizon: usize,
        states: usize,
        actions: usize,
        choice: impl Fn(usize, usize) -> usize,
    ) -> Self {
        Self {
            probs: StepTable::from_fn(horizon, states, actions, |h, s, a| {
                if choice(h, s) == a {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.probs.shape()
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs.get(h, s, a)
    }

    #[inline]
    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        self.probs.row(h, s)
    }

    pub fn table(&self) -> &StepTable {
        &self.probs
    }

    /// Largest deviation of any row from the simplex: row-sum error or
    /// negative mass, whichever is worse. NaN entries yield infinity.
    pub fn simplex_error(&self) -> f64 {
        let (nh, ns, _) = self.probs.shape();
        let mut worst = 0.0_f64;
        for h in 0..nh {
            for s in 0..ns {
                let row = self.probs.row(h, s);
                if row.iter().any(|x| !x.is_finite()) {
                    return f64::INFINITY;
                }
                let total: f64 = row.iter().sum();
                worst = worst.max((total - 1.0).abs());
                for &x in row {
                    worst = worst.max(-x);
                }
            }
        }
        worst
    }
}

/// Every entry `1/A`.
pub fn uniform_policy(states: usize, actions: usize, horizon: usize) -> Policy {
    Policy::from_table_unchecked(StepTable::filled(
        horizon,
        states,
        actions,
        1.0 / actions as f64,
    ))
}

/// Values of a policy for one payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub v: StateTable,
    pub q: StepTable,
    /// `V_1(s_1)`.
    pub root_value: f64,
}

/// Exact backward recursion `Q_h = payoff_h + p_h V_{h+1}`, `V_h = <pi_h, Q_h>`.
pub fn evaluate_policy(
    model: &CmdpModel,
    policy: &Policy,
    payoff: &StepTable,
) -> Result<ValueTables> {
    model.check_payoff(payoff)?;
    model.check_policy(policy)?;
    let Dims {
        states: ns,
        actions: na,
        horizon: nh,
        ..
    } = model.dims();
    let mut q = StepTable::zeros(nh, ns, na);
    let mut v = StateTable::zeros(nh, ns);
    let mut next = vec![0.0; ns];
    for h in (0..nh).rev() {
        for s in 0..ns {
            let mut vs = 0.0;
            for a in 0..na {
                let cont: f64 = model
                    .transition_row(h, s, a)
                    .iter()
                    .zip(&next)
                    .map(|(p, v)| p * v)
                    .sum();
                let qa = payoff.get(h, s, a) + cont;
                q.set(h, s, a, qa);
                vs += policy.prob(h, s, a) * qa;
            }
            v.set(h, s, vs);
        }
        next.copy_from_slice(v.step(h));
    }
    let root_value = v.get(0, model.initial_state());
    Ok(ValueTables { v, q, root_value })
}

/// Per-step state-action visitation distribution `q_h(s, a)` from `s_1`.
pub fn occupancy_measure(model: &CmdpModel, policy: &Policy) -> Result<StepTable> {
    model.check_policy(policy)?;
    let Dims {
        states: ns,
        actions: na,
        horizon: nh,
        ..
    } = model.dims();
    let mut occ = StepTable::zeros(nh, ns, na);
    let mut state_mass = vec![0.0; ns];
    state_mass[model.initial_state()] = 1.0;
    for h in 0..nh {
        let mut next_mass = vec![0.0; ns];
        for (s, &reach) in state_mass.iter().enumerate() {
            if reach == 0.0 {
                continue;
            }
            for a in 0..na {
                let mass = reach * policy.prob(h, s, a);
                occ.set(h, s, a, mass);
                if mass == 0.0 {
                    continue;
                }
                for (acc, p) in next_mass.iter_mut().zip(model.transition_row(h, s, a)) {
                    *acc += mass * p;
                }
            }
        }
        state_mass = next_mass;
    }
    Ok(occ)
}

/// `sum_{h,s,a} q_h(s,a) * (-ln pi_h(a|s))` with `0 ln 0 = 0`.
pub fn policy_entropy(model: &CmdpModel, policy: &Policy) -> Result<f64> {
    let occ = occupancy_measure(model, policy)?;
    let total = occ
        .as_slice()
        .iter()
        .zip(policy.table().as_slice())
        .filter(|(_, &p)| p > 0.0)
        .map(|(q, p)| -q * p.ln())
        .sum();
    Ok(total)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn chain(
        ns: usize,
        na: usize,
        nh: usize,
        next: impl Fn(usize) -> usize,
        reward: StepTable,
    ) -> CmdpModel {
        let mut p = vec![0.0; nh * ns * na * ns];
        for h in 0..nh {
            for s in 0..ns {
                for a in 0..na {
                    p[((h * ns + s) * na + a) * ns + next(s)] = 1.0;
                }
            }
        }
        let d = StepTable::zeros(nh, ns, na);
        CmdpModel::new(Dims::new(ns, na, nh, 1), 0, p, reward, vec![d], vec![0.0]).unwrap()
    }

    /// Sums payoff over every (action sequence, state sequence) weighted by its probability.
    fn enumerate_value(model: &CmdpModel, policy: &Policy, payoff: &StepTable) -> f64 {
        fn walk(
            model: &CmdpModel,
            policy: &Policy,
            payoff: &StepTable,
            h: usize,
            s: usize,
            weight: f64,
        ) -> f64 {
            let d = model.dims();
            if h == d.horizon || weight == 0.0 {
                return 0.0;
            }
            let mut total = 0.0;
            for a in 0..d.actions {
                let w = weight * policy.prob(h, s, a);
                total += w * payoff.get(h, s, a);
                for (s2, p) in model.transition_row(h, s, a).iter().enumerate() {
                    total += walk(model, policy, payoff, h + 1, s2, w * p);
                }
            }
            total
        }
        walk(model, policy, payoff, 0, model.initial_state(), 1.0)
    }

    #[test]
    fn deterministic_chain_sums_payoff() {
        let model = chain(1, 1, 3, |_| 0, StepTable::filled(3, 1, 1, 1.0));
        let pi = uniform_policy(1, 1, 3);
        let vt = evaluate_policy(&model, &pi, model.reward()).unwrap();
        assert_eq!(vt.root_value, 3.0);
    }

    #[test]
    fn forced_trajectory_collects_first_state_only() {
        let payoff = StepTable::from_fn(2, 2, 1, |_, s, _| if s == 0 { 1.0 } else { 0.0 });
        let model = chain(2, 1, 2, |_| 1, payoff.clone());
        let pi = uniform_policy(2, 1, 2);
        assert_eq!(
            evaluate_policy(&model, &pi, &payoff).unwrap().root_value,
            1.0
        );
    }

    #[test]
    fn evaluation_matches_trajectory_enumeration() {
        for seed in 0..10 {
            let model = random_model(seed, Dims::new(3, 2, 3, 1));
            let pi = uniform_policy(3, 2, 3);
            let vt = evaluate_policy(&model, &pi, model.reward()).unwrap();
            let brute = enumerate_value(&model, &pi, model.reward());
            assert!(
                close(vt.root_value, brute, 1e-12),
                "{} vs {}",
                vt.root_value,
                brute
            );
            // V = <pi, Q>
            for h in 0..3 {
                for s in 0..3 {
                    let vq: f64 = (0..2).map(|a| pi.prob(h, s, a) * vt.q.get(h, s, a)).sum();
                    assert!(close(vt.v.get(h, s), vq, 1e-9));
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let model = random_model(1, Dims::new(3, 2, 3, 1));
        let pi = uniform_policy(3, 2, 3);
        let wrong = StepTable::zeros(2, 3, 2);
        assert!(matches!(
            evaluate_policy(&model, &pi, &wrong),
            Err(Error::Contract(_))
        ));
        let wrong_pi = uniform_policy(3, 3, 3);
        assert!(matches!(
            occupancy_measure(&model, &wrong_pi),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn single_state_occupancy_is_policy() {
        let model = chain(1, 2, 4, |_| 0, StepTable::zeros(4, 1, 2));
        let occ = occupancy_measure(&model, &uniform_policy(1, 2, 4)).unwrap();
        assert!(occ.as_slice().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn occupancy_inner_product_equals_value() {
        for seed in 0..10 {
            let model = random_model(100 + seed, Dims::new(3, 2, 2, 1));
            let pi = random_policy(seed, 2, 3, 2);
            let occ = occupancy_measure(&model, &pi).unwrap();
            for h in 0..2 {
                let mass: f64 = (0..3).flat_map(|s| occ.row(h, s).to_vec()).sum();
                assert!(close(mass, 1.0, 1e-12));
            }
            let v = evaluate_policy(&model, &pi, model.reward())
                .unwrap()
                .root_value;
            assert!(close(occ.dot(model.reward()), v, 1e-12));
        }
    }

    #[test]
    fn entropy_closed_forms() {
        let model = random_model(3, Dims::new(4, 5, 5, 1));
        let h = policy_entropy(&model, &uniform_policy(4, 5, 5)).unwrap();
        assert!(close(h, 5.0 * 5f64.ln(), 1e-12));
        assert!(close(h, 8.04719, 1e-5));

        let det = Policy::deterministic(5, 4, 5, |h, s| (h + s) % 5);
        assert_eq!(policy_entropy(&model, &det).unwrap(), 0.0);

        let one_state = chain(1, 2, 2, |_| 0, StepTable::zeros(2, 1, 2));
        let pi = Policy::new(StepTable::from_fn(
            2,
            1,
            2,
            |_, _, a| if a == 0 { 0.3 } else { 0.7 },
        ))
        .unwrap();
        let h = policy_entropy(&one_state, &pi).unwrap();
        let bern = -(0.3f64 * 0.3f64.ln() + 0.7 * 0.7f64.ln());
        assert!(close(h, 2.0 * bern, 1e-12));
        assert!(close(h, 1.221729, 1e-6));
    }

    #[test]
    fn uniform_policy_entries() {
        let pi = uniform_policy(3, 5, 2);
        assert!(pi.table().as_slice().iter().all(|&x| x == 0.2));
        let pi = uniform_policy(3, 1, 2);
        assert!(pi.table().as_slice().iter().all(|&x| x == 1.0));
        assert!(Policy::new(uniform_policy(7, 3, 4).table().clone()).is_ok());
    }

    #[test]
    fn model_rejects_non_stochastic_rows() {
        let dims = Dims::new(2, 1, 1, 1);
        let r = StepTable::zeros(1, 2, 1);
        let bad = CmdpModel::new(
            dims,
            0,
            vec![0.5, 0.4, 1.0, 0.0],
            r.clone(),
            vec![r.clone()],
            vec![0.0],
        );
        assert!(bad.is_err());
        let bad_alpha = CmdpModel::new(
            dims,
            0,
            vec![0.5, 0.5, 1.0, 0.0],
            r.clone(),
            vec![r],
            vec![2.0],
        );
        assert!(bad_alpha.is_err());
    }
}
