//! Comparison learners sharing the primal-dual pipeline without the safety
//! margin.
//!
//! `FixedRpd` is a constant-regularization primal-dual stand-in, not a
//! reproduction of any published regularized method; outputs label it as
//! such.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{BonusConfig, EmpiricalModel};
use crate::learner::{
    primal_dual_step, Learner, LearnerState, StepDiagnostics, StepSize, UpdateParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    VanillaPd,
    FixedRpd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub step_size: StepSize,
    pub tau_fixed: f64,
    pub lambda_max: f64,
}

impl BaselineConfig {
    /// Unregularized, margin-free, `eta_t = 1/sqrt(t)`.
    pub fn vanilla(lambda_max: f64) -> Self {
        Self {
            kind: BaselineKind::VanillaPd,
            step_size: StepSize::InvSqrt,
            tau_fixed: 0.0,
            lambda_max,
        }
    }

    /// Constant `tau = T^{-1/6}` and `eta = T^{-5/6}` for a budget of `T`
    /// episodes.
    pub fn fixed_rpd(episodes: u64, lambda_max: f64) -> Self {
        let t = episodes as f64;
        Self {
            kind: BaselineKind::FixedRpd,
            step_size: StepSize::Constant(t.powf(-5.0 / 6.0)),
            tau_fixed: t.powf(-1.0 / 6.0),
            lambda_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BaselineKind::VanillaPd && self.tau_fixed != 0.0 {
            return Err(Error::Config(
                "vanilla primal-dual carries no regularization".into(),
            ));
        }
        if !(self.tau_fixed >= 0.0) || !(self.lambda_max > 0.0) {
            return Err(Error::Config(
                "baseline needs tau >= 0 and a positive dual cap".into(),
            ));
        }
        Ok(())
    }
}

/// One update with zero margin, the configured step size and a constant
/// regularization weight.
pub fn baseline_step(
    state: &LearnerState,
    emp: &EmpiricalModel,
    bonus: &BonusConfig,
    cfg: &BaselineConfig,
) -> Result<(LearnerState, StepDiagnostics)> {
    cfg.validate()?;
    let params = UpdateParams {
        eta: cfg.step_size.at(state.episode),
        tau: cfg.tau_fixed,
        eps: vec![0.0; state.lambda.len()],
        lambda_max: cfg.lambda_max,
        alpha_override: None,
    };
    primal_dual_step(state, emp, bonus, &params)
}

impl Learner for BaselineConfig {
    fn label(&self) -> String {
        match self.kind {
            BaselineKind::VanillaPd => "vanilla-pd".into(),
            BaselineKind::FixedRpd => "fixed-rpd-standin".into(),
        }
    }

    fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    fn step(
        &self,
        state: &LearnerState,
        emp: &EmpiricalModel,
        bonus: &BonusConfig,
    ) -> Result<(LearnerState, StepDiagnostics)> {
        baseline_step(state, emp, bonus, self)
    }
}
