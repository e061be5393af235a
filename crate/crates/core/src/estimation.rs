//! Empirical model, optimistic estimates and truncated policy evaluation.

use crate::cmdp::{Dims, Policy, StateTable, StepTable};
use crate::env::Trajectory;
use crate::error::{contract, Error, Result};

/// Probability floor inside `-ln pi` so the entropy payoff stays finite.
pub const PI_MIN: f64 = 1e-12;

/// Visit counts and running sums of everything observed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    dims: Dims,
    initial_state: usize,
    counts: Vec<u64>,
    /// Flat `[h][s][a][s']`.
    transition_counts: Vec<u64>,
    reward_sums: StepTable,
    constraint_sums: Vec<StepTable>,
    threshold_sum: Vec<f64>,
    threshold_count: u64,
    episodes_seen: u64,
}

impl EmpiricalModel {
    pub fn new(dims: Dims, initial_state: usize) -> Self {
        let Dims {
            states: ns,
            actions: na,
            horizon: nh,
            constraints: m,
        } = dims;
        Self {
            dims,
            initial_state,
            counts: vec![0; nh * ns * na],
            transition_counts: vec![0; nh * ns * na * ns],
            reward_sums: StepTable::zeros(nh, ns, na),
            constraint_sums: vec![StepTable::zeros(nh, ns, na); m],
            threshold_sum: vec![0.0; m],
            threshold_count: 0,
            episodes_seen: 0,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    fn cell(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.dims.states + s) * self.dims.actions + a
    }

    pub fn count(&self, h: usize, s: usize, a: usize) -> u64 {
        self.counts[self.cell(h, s, a)]
    }

    pub fn transition_counts(&self, h: usize, s: usize, a: usize) -> &[u64] {
        let ns = self.dims.states;
        let start = self.cell(h, s, a) * ns;
        &self.transition_counts[start..start + ns]
    }

    pub fn reward_sums(&self) -> &StepTable {
        &self.reward_sums
    }

    pub fn constraint_sums(&self) -> &[StepTable] {
        &self.constraint_sums
    }

    pub fn threshold_sum(&self) -> &[f64] {
        &self.threshold_sum
    }

    pub fn threshold_count(&self) -> u64 {
        self.threshold_count
    }

    pub fn episodes_seen(&self) -> u64 {
        self.episodes_seen
    }

    pub fn total_visits(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Empirical threshold mean, 0 before any data.
    pub fn threshold_mean(&self) -> Vec<f64> {
        if self.threshold_count == 0 {
            return vec![0.0; self.dims.constraints];
        }
        self.threshold_sum
            .iter()
            .map(|x| x / self.threshold_count as f64)
            .collect()
    }

    /// Folds one episode into the counters.
    pub fn update_with_trajectory(&mut self, traj: &Trajectory) -> Result<()> {
        let Dims {
            states: ns,
            actions: na,
            horizon: nh,
            constraints: m,
        } = self.dims;
        if traj.steps.len() != nh || traj.threshold_samples.len() != m {
            return Err(contract("trajectory does not match model dimensions"));
        }
        for samples in &traj.threshold_samples {
            if samples.len() != nh {
                return Err(contract("threshold samples must cover every step"));
            }
        }
        for (h, step) in traj.steps.iter().enumerate() {
            if step.state >= ns
                || step.action >= na
                || step.next_state >= ns
                || step.constraints.len() != m
            {
                return Err(contract(format!("trajectory step {h} is out of range")));
            }
            let c = self.cell(h, step.state, step.action);
            self.counts[c] += 1;
            self.transition_counts[c * ns + step.next_state] += 1;
            self.reward_sums.as_mut_slice()[c] += step.reward;
            for (sums, &obs) in self.constraint_sums.iter_mut().zip(&step.constraints) {
                sums.as_mut_slice()[c] += obs;
            }
        }
        for (acc, samples) in self.threshold_sum.iter_mut().zip(&traj.threshold_samples) {
            *acc += samples.iter().sum::<f64>();
        }
        self.threshold_count += nh as u64;
        self.episodes_seen += 1;
        Ok(())
    }
}

/// Bonus parameters: confidence `delta`, episode budget `T`, scaler `c_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusConfig {
    pub delta: f64,
    pub episodes: u64,
    pub scaler: f64,
}

impl BonusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episode budget must be positive".into()));
        }
        if !(self.scaler >= 0.0) {
            return Err(Error::Config(format!(
                "bonus scaler must be nonnegative, got {}",
                self.scaler
            )));
        }
        Ok(())
    }

    /// `(L_r, L_p)` log terms with `delta' = delta / 4`.
    pub fn log_terms(&self, dims: Dims) -> (f64, f64) {
        let delta_prime = self.delta / 4.0;
        let Dims {
            states: s,
            actions: a,
            horizon: h,
            constraints: m,
        } = dims;
        let (s, a, h, m, t) = (s as f64, a as f64, h as f64, m as f64, self.episodes as f64);
        let l_r = 0.5 * (2.0 * s * a * h * (m + 1.0) * t / delta_prime).ln();
        let l_p = 2.0 * s + 2.0 * (s * a * h * t / delta_prime).ln();
        (l_r, l_p)
    }

    /// `(phi^r, phi^p)` for a cell visited `count` times.
    pub fn bonuses(&self, dims: Dims, count: u64) -> (f64, f64) {
        let (l_r, l_p) = self.log_terms(dims);
        let n = count.max(1) as f64;
        let phi_r = self.scaler * (l_r / n).sqrt();
        let phi_p = self.scaler * dims.horizon as f64 * (l_p / n).sqrt();
        (phi_r, phi_p)
    }
}

/// Optimistic CMDP handed to policy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticModel {
    pub dims: Dims,
    pub initial_state: usize,
    pub reward: StepTable,
    pub constraints: Vec<StepTable>,
    /// Bonused entropy payoff `-ln pi + phi^p ln A`.
    pub entropy: StepTable,
    /// Plain `-ln pi`, used in the entropy truncation cap.
    pub entropy_base: StepTable,
    pub alpha: Vec<f64>,
    /// Flat `[h][s][a][s']`.
    pub transitions: Vec<f64>,
    pub bonus_reward: StepTable,
    pub bonus_transition: StepTable,
}

impl OptimisticModel {
    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let ns = self.dims.states;
        let start = ((h * ns + s) * self.dims.actions + a) * ns;
        &self.transitions[start..start + ns]
    }
}

/// Empirical means plus bonuses for the policy about to be evaluated.
pub fn build_optimistic_model(
    emp: &EmpiricalModel,
    policy: &Policy,
    config: &BonusConfig,
) -> Result<OptimisticModel> {
    config.validate()?;
    let dims = emp.dims();
    let Dims {
        states: ns,
        actions: na,
        horizon: nh,
        constraints: m,
    } = dims;
    if policy.shape() != (nh, ns, na) {
        return Err(contract("policy shape does not match the empirical model"));
    }
    let cap = 1.0 + nh as f64;
    let log_a = (na as f64).ln();
    let (l_r, l_p) = config.log_terms(dims);

    let mut reward = StepTable::zeros(nh, ns, na);
    let mut constraints = vec![StepTable::zeros(nh, ns, na); m];
    let mut entropy = StepTable::zeros(nh, ns, na);
    let mut entropy_base = StepTable::zeros(nh, ns, na);
    let mut bonus_reward = StepTable::zeros(nh, ns, na);
    let mut bonus_transition = StepTable::zeros(nh, ns, na);
    let mut transitions = vec![0.0; nh * ns * na * ns];

    for h in 0..nh {
        for s in 0..ns {
            for a in 0..na {
                let c = emp.cell(h, s, a);
                let count = emp.counts[c];
                let n = count.max(1) as f64;
                let phi_r = config.scaler * (l_r / n).sqrt();
                let phi_p = config.scaler * nh as f64 * (l_p / n).sqrt();
                bonus_reward.set(h, s, a, phi_r);
                bonus_transition.set(h, s, a, phi_p);
                let phi = phi_r + phi_p;

                reward.set(h, s, a, (emp.reward_sums.get(h, s, a) / n + phi).min(cap));
                for (out, sums) in constraints.iter_mut().zip(&emp.constraint_sums) {
                    out.set(h, s, a, (sums.get(h, s, a) / n + phi).min(cap));
                }
                let neg_log = -policy.prob(h, s, a).max(PI_MIN).ln();
                entropy_base.set(h, s, a, neg_log);
                entropy.set(h, s, a, neg_log + phi_p * log_a);

                let row = &mut transitions[c * ns..(c + 1) * ns];
                if count == 0 {
                    row.fill(1.0 / ns as f64);
                } else {
                    for (p, &k) in row.iter_mut().zip(emp.transition_counts(h, s, a)) {
                        *p = k as f64 / n;
                    }
                }
            }
        }
    }

    Ok(OptimisticModel {
        dims,
        initial_state: emp.initial_state(),
        reward,
        constraints,
        entropy,
        entropy_base,
        alpha: emp.threshold_mean(),
        transitions,
        bonus_reward,
        bonus_transition,
    })
}

/// Output of truncated policy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimates {
    pub q_reward: StepTable,
    pub q_constraints: Vec<StepTable>,
    pub q_entropy: StepTable,
    /// `Q_r + sum_i lambda_i Q_{d_i} + tau Q_psi`.
    pub q_composite: StepTable,
    pub v_reward: StateTable,
    pub v_constraints: Vec<StateTable>,
    pub v_entropy: StateTable,
    pub root_reward: f64,
    pub root_constraints: Vec<f64>,
    pub root_entropy: f64,
    pub root_composite: f64,
}

/// Backward recursion with per-payoff caps: `H - h` for reward and
/// constraints (0-based `h`), `-ln pi + (H - h) ln A` for entropy. The
/// composite is assembled from the separately truncated tables.
pub fn truncated_policy_evaluation(
    opt: &OptimisticModel,
    policy: &Policy,
    lambda: &[f64],
    tau: f64,
    lambda_max: f64,
) -> Result<ValueEstimates> {
    let Dims {
        states: ns,
        actions: na,
        horizon: nh,
        constraints: m,
    } = opt.dims;
    if policy.shape() != (nh, ns, na) {
        return Err(contract("policy shape does not match the optimistic model"));
    }
    if lambda.len() != m {
        return Err(contract(format!(
            "dual vector has length {}, expected {m}",
            lambda.len()
        )));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0 && **l <= lambda_max)) {
        return Err(contract(format!(
            "dual value {l} outside [0, {lambda_max}]"
        )));
    }
    if !(tau >= 0.0) {
        return Err(contract(format!(
            "regularization {tau} must be nonnegative"
        )));
    }

    let log_a = (na as f64).ln();
    let mut q_reward = StepTable::zeros(nh, ns, na);
    let mut q_constraints = vec![StepTable::zeros(nh, ns, na); m];
    let mut q_entropy = StepTable::zeros(nh, ns, na);
    let mut v_reward = StateTable::zeros(nh, ns);
    let mut v_constraints = vec![StateTable::zeros(nh, ns); m];
    let mut v_entropy = StateTable::zeros(nh, ns);

    // next-step values: [reward, entropy, d_0, .., d_{m-1}] each of length S
    let payoffs = m + 2;
    let mut next = vec![0.0; payoffs * ns];
    let mut cont = vec![0.0; payoffs];
    for h in (0..nh).rev() {
        let remaining = (nh - h) as f64;
        let mut current = vec![0.0; payoffs * ns];
        for s in 0..ns {
            for a in 0..na {
                cont.fill(0.0);
                for (s2, &p) in opt.transition_row(h, s, a).iter().enumerate() {
                    if p != 0.0 {
                        for (k, c) in cont.iter_mut().enumerate() {
                            *c += p * next[k * ns + s2];
                        }
                    }
                }
                let pi = policy.prob(h, s, a);
                let qr = (opt.reward.get(h, s, a) + cont[0]).min(remaining);
                q_reward.set(h, s, a, qr);
                current[s] += pi * qr;

                let cap = opt.entropy_base.get(h, s, a) + remaining * log_a;
                let qp = (opt.entropy.get(h, s, a) + cont[1]).min(cap);
                q_entropy.set(h, s, a, qp);
                current[ns + s] += pi * qp;

                for i in 0..m {
                    let qd = (opt.constraints[i].get(h, s, a) + cont[2 + i]).min(remaining);
                    q_constraints[i].set(h, s, a, qd);
                    current[(2 + i) * ns + s] += pi * qd;
                }
            }
            v_reward.set(h, s, current[s]);
            v_entropy.set(h, s, current[ns + s]);
            for i in 0..m {
                v_constraints[i].set(h, s, current[(2 + i) * ns + s]);
            }
        }
        next = current;
    }

    let mut q_composite = q_reward.clone();
    for (qd, &l) in q_constraints.iter().zip(lambda) {
        for (y, d) in q_composite.as_mut_slice().iter_mut().zip(qd.as_slice()) {
            *y += l * d;
        }
    }
    for (y, e) in q_composite
        .as_mut_slice()
        .iter_mut()
        .zip(q_entropy.as_slice())
    {
        *y += tau * e;
    }

    let s1 = opt.initial_state;
    let root_composite = policy
        .row(0, s1)
        .iter()
        .zip(q_composite.row(0, s1))
        .map(|(p, q)| p * q)
        .sum();
    Ok(ValueEstimates {
        root_reward: v_reward.get(0, s1),
        root_constraints: v_constraints.iter().map(|v| v.get(0, s1)).collect(),
        root_entropy: v_entropy.get(0, s1),
        root_composite,
        q_reward,
        q_constraints,
        q_entropy,
        q_composite,
        v_reward,
        v_constraints,
        v_entropy,
    })
}
