//! Safe primal-dual learner: decaying safety margin, time-varying entropy
//! and dual regularization, mirror-ascent policy step and projected dual
//! step.

use serde::{Deserialize, Serialize};

use crate::cmdp::{uniform_policy, Dims, Policy, StepTable};
use crate::error::{contract, Error, Result};
use crate::estimation::{
    build_optimistic_model, truncated_policy_evaluation, BonusConfig, EmpiricalModel,
};

/// Step-size rule `eta_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// `t^{-5/6}`.
    Theory,
    /// `t^{-1/2}`.
    InvSqrt,
    Constant(f64),
}

impl StepSize {
    pub fn at(&self, t: u64) -> f64 {
        let t = t as f64;
        match *self {
            StepSize::Theory => t.powf(-5.0 / 6.0),
            StepSize::InvSqrt => 1.0 / t.sqrt(),
            StepSize::Constant(c) => c,
        }
    }
}

/// Constant from the cumulative estimation-error bound:
/// `(1 + 8mH/Xi) * 4H sqrt(2SA) (H sqrt(S) + H + 1) + (4mH/Xi) sqrt(2H)`.
pub fn estimation_error_constant(dims: Dims, slater_gap: f64) -> f64 {
    let s = dims.states as f64;
    let a = dims.actions as f64;
    let h = dims.horizon as f64;
    let m = dims.constraints as f64;
    (1.0 + 8.0 * m * h / slater_gap) * (4.0 * h * (2.0 * s * a).sqrt() * (h * s.sqrt() + h + 1.0))
        + (4.0 * m * h / slater_gap) * (2.0 * h).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub dims: Dims,
    pub slater_gap: f64,
    /// `c_eps` multiplying the theoretical margin.
    pub margin_scaler: f64,
    pub delta: f64,
    /// `4H / Xi`.
    pub dual_cap: f64,
    pub step_size: StepSize,
    pub use_margin: bool,
    pub use_regularization: bool,
    /// Replace the estimated threshold by the true one in the dual step.
    pub oracle_threshold: bool,
}

impl ScheduleConfig {
    pub fn new(dims: Dims, slater_gap: f64, margin_scaler: f64, delta: f64) -> Result<Self> {
        if !(slater_gap > 0.0) {
            return Err(Error::Config(format!(
                "Slater gap must be positive, got {slater_gap}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if !(margin_scaler >= 0.0) {
            return Err(Error::Config(format!(
                "margin scaler must be nonnegative, got {margin_scaler}"
            )));
        }
        Ok(Self {
            dims,
            slater_gap,
            margin_scaler,
            delta,
            dual_cap: 4.0 * dims.horizon as f64 / slater_gap,
            step_size: StepSize::Theory,
            use_margin: true,
            use_regularization: true,
            oracle_threshold: false,
        })
    }

    /// Unscaled margin coefficient `(18/5) sqrt(H^3 C_B)`.
    pub fn margin_coefficient(&self) -> f64 {
        let h = self.dims.horizon as f64;
        18.0 / 5.0 * (h.powi(3) * estimation_error_constant(self.dims, self.slater_gap)).sqrt()
    }

    fn margin_at(&self, t: f64) -> f64 {
        let Dims {
            states: s,
            actions: a,
            horizon: h,
            ..
        } = self.dims;
        let log_term = (4.0 * (s * a * h) as f64 * t / self.delta).ln();
        self.margin_scaler * self.margin_coefficient() * t.powf(-1.0 / 6.0) * log_term.powf(0.25)
    }

    /// Smallest episode with `eps_t <= Xi / 2`. `None` when it exceeds 1e300.
    pub fn margin_feasibility_window(&self) -> Option<f64> {
        let target = 0.5 * self.slater_gap;
        if !self.use_margin || self.margin_at(1.0) <= target {
            return Some(1.0);
        }
        let mut hi = 2.0_f64;
        while self.margin_at(hi) > target {
            hi *= 2.0;
            if hi > 1e300 {
                return None;
            }
        }
        let mut lo = hi / 2.0;
        while hi - lo > 0.5 && hi > lo * (1.0 + 1e-15) {
            let mid = 0.5 * (lo + hi);
            if self.margin_at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi.ceil())
    }
}

/// `(eta_t, tau_t, eps_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub eta: f64,
    pub tau: f64,
    pub eps: Vec<f64>,
}

pub fn schedules(t: u64, config: &ScheduleConfig) -> Result<Schedule> {
    if t < 1 {
        return Err(contract("episodes are numbered from 1"));
    }
    let eta = config.step_size.at(t);
    let tau = if config.use_regularization {
        (t as f64).powf(-1.0 / 6.0)
    } else {
        0.0
    };
    let eps = if config.use_margin {
        config.margin_at(t as f64)
    } else {
        0.0
    };
    Ok(Schedule {
        eta,
        tau,
        eps: vec![eps; config.dims.constraints],
    })
}

/// `pi'(a|s) ∝ pi(a|s) exp(eta (Q(s,a) - max_b Q(s,b)))` per (h, s).
pub fn policy_update(policy: &Policy, q: &StepTable, eta: f64) -> Result<Policy> {
    if policy.shape() != q.shape() {
        return Err(contract("Q table and policy differ in shape"));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(contract(format!(
            "step size {eta} must be finite and nonnegative"
        )));
    }
    if q.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite value in Q estimate".into()));
    }
    let (nh, ns, _) = policy.shape();
    let mut out = policy.table().clone();
    for h in 0..nh {
        for s in 0..ns {
            let qs = q.row(h, s);
            let top = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let row = out.row_mut(h, s);
            let mut total = 0.0;
            for (p, &qa) in row.iter_mut().zip(qs) {
                *p *= (eta * (qa - top)).exp();
                total += *p;
            }
            if !(total > 0.0) || !total.is_finite() {
                return Err(Error::Numerical(format!(
                    "policy row ({h}, {s}) lost all mass"
                )));
            }
            row.iter_mut().for_each(|p| *p /= total);
        }
    }
    Ok(Policy::from_table_unchecked(out))
}

/// `clamp((1 - eta tau) lambda_i - eta (V_i - eps_i - alpha_i), 0, lambda_max)`.
pub fn dual_update(
    lambda: &[f64],
    v_constraint: &[f64],
    eps: &[f64],
    alpha: &[f64],
    eta: f64,
    tau: f64,
    lambda_max: f64,
) -> Vec<f64> {
    lambda
        .iter()
        .zip(v_constraint)
        .zip(eps.iter().zip(alpha))
        .map(|((&l, &v), (&e, &a))| {
            ((1.0 - eta * tau) * l - eta * (v - e - a)).clamp(0.0, lambda_max)
        })
        .collect()
}

/// Current iterate `(t, pi_t, lambda_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    pub episode: u64,
    pub policy: Policy,
    pub lambda: Vec<f64>,
}

impl LearnerState {
    /// Uniform policy and zero duals at episode 1.
    pub fn initial(dims: Dims) -> Self {
        Self {
            episode: 1,
            policy: uniform_policy(dims.states, dims.actions, dims.horizon),
            lambda: vec![0.0; dims.constraints],
        }
    }
}

/// Quantities used during one update, for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub episode: u64,
    pub eta: f64,
    pub tau: f64,
    pub eps: Vec<f64>,
    /// Dual iterate used in this episode.
    pub lambda: Vec<f64>,
    /// Empirical threshold estimate.
    pub alpha_hat: Vec<f64>,
    pub v_reward: f64,
    pub v_constraints: Vec<f64>,
    pub v_composite: f64,
}

/// Parameters of one primal-dual update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateParams<'a> {
    pub eta: f64,
    pub tau: f64,
    pub eps: Vec<f64>,
    pub lambda_max: f64,
    /// Thresholds to use in place of the empirical estimate.
    pub alpha_override: Option<&'a [f64]>,
}

/// Optimistic model, truncated evaluation, policy step, dual step.
pub fn primal_dual_step(
    state: &LearnerState,
    emp: &EmpiricalModel,
    bonus: &BonusConfig,
    params: &UpdateParams<'_>,
) -> Result<(LearnerState, StepDiagnostics)> {
    let opt = build_optimistic_model(emp, &state.policy, bonus)?;
    let est = truncated_policy_evaluation(
        &opt,
        &state.policy,
        &state.lambda,
        params.tau,
        params.lambda_max,
    )?;
    let policy = policy_update(&state.policy, &est.q_composite, params.eta)?;
    let alpha = params.alpha_override.unwrap_or(&opt.alpha);
    let lambda = dual_update(
        &state.lambda,
        &est.root_constraints,
        &params.eps,
        alpha,
        params.eta,
        params.tau,
        params.lambda_max,
    );
    let diagnostics = StepDiagnostics {
        episode: state.episode,
        eta: params.eta,
        tau: params.tau,
        eps: params.eps.clone(),
        lambda: state.lambda.clone(),
        alpha_hat: opt.alpha.clone(),
        v_reward: est.root_reward,
        v_constraints: est.root_constraints.clone(),
        v_composite: est.root_composite,
    };
    let next = LearnerState {
        episode: state.episode + 1,
        policy,
        lambda,
    };
    Ok((next, diagnostics))
}

/// Anything the experiment loop can drive.
pub trait Learner: Send + Sync {
    /// Name used in file names and plots.
    fn label(&self) -> String;
    fn lambda_max(&self) -> f64;
    fn step(
        &self,
        state: &LearnerState,
        emp: &EmpiricalModel,
        bonus: &BonusConfig,
    ) -> Result<(LearnerState, StepDiagnostics)>;
}

/// The safe learner with its schedules and ablation toggles.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexDome {
    pub config: ScheduleConfig,
    /// True thresholds, used only with `oracle_threshold`.
    pub true_alpha: Vec<f64>,
}

impl FlexDome {
    pub fn new(config: ScheduleConfig, true_alpha: Vec<f64>) -> Self {
        Self { config, true_alpha }
    }

    pub fn step(
        &self,
        state: &LearnerState,
        emp: &EmpiricalModel,
        bonus: &BonusConfig,
    ) -> Result<(LearnerState, StepDiagnostics)> {
        if state.policy.shape()
            != (
                self.config.dims.horizon,
                self.config.dims.states,
                self.config.dims.actions,
            )
            || state.lambda.len() != self.config.dims.constraints
        {
            return Err(contract(
                "learner state does not match configured dimensions",
            ));
        }
        let sched = schedules(state.episode, &self.config)?;
        let params = UpdateParams {
            eta: sched.eta,
            tau: sched.tau,
            eps: sched.eps,
            lambda_max: self.config.dual_cap,
            alpha_override: self
                .config
                .oracle_threshold
                .then_some(self.true_alpha.as_slice()),
        };
        primal_dual_step(state, emp, bonus, &params)
    }
}

impl Learner for FlexDome {
    fn label(&self) -> String {
        let c = &self.config;
        let mut label = String::from("flexdome");
        if !c.use_margin {
            label.push_str("-no-margin");
        }
        if !c.use_regularization {
            label.push_str("-no-reg");
        }
        if c.oracle_threshold {
            label.push_str("-oracle-threshold");
        }
        label
    }

    fn lambda_max(&self) -> f64 {
        self.config.dual_cap
    }

    fn step(
        &self,
        state: &LearnerState,
        emp: &EmpiricalModel,
        bonus: &BonusConfig,
    ) -> Result<(LearnerState, StepDiagnostics)> {
        FlexDome::step(self, state, emp, bonus)
    }
}
