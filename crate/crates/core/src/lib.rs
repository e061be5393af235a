//! Safe online primal-dual learning for finite-horizon constrained MDPs.
//!
//! The crate covers the tabular model and exact dynamic programming
//! ([`cmdp`]), a random instance generator and simulator ([`env`]),
//! optimistic estimation ([`estimation`]), the safe learner ([`learner`]) and
//! its baselines ([`baselines`]), a planning oracle ([`oracle`]), strong
//! regret metrics ([`metrics`]), numeric rate checks ([`theory`]) and the
//! experiment harness ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cmdp;
pub mod env;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod oracle;
pub mod theory;

pub use cmdp::{CmdpModel, Dims, Policy, StepTable};
pub use error::{Error, Result};
pub use learner::{FlexDome, Learner, LearnerState};
