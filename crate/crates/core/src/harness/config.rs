use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::BaselineConfig;
use crate::cmdp::{CmdpModel, Dims};
use crate::env::ThresholdMode;
use crate::error::{Error, Result};
use crate::learner::{FlexDome, Learner, ScheduleConfig, StepSize};

fn yes() -> bool {
    true
}

fn one() -> u64 {
    1
}

fn default_conc() -> f64 {
    0.1
}

/// Learner arm of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Flexdome {
        #[serde(default = "yes")]
        use_margin: bool,
        #[serde(default = "yes")]
        use_regularization: bool,
        #[serde(default)]
        oracle_threshold: bool,
    },
    VanillaPd,
    /// Constant-regularization stand-in; `None` picks `T^{-1/6}` and `T^{-5/6}`.
    FixedRpd {
        #[serde(default)]
        tau_fixed: Option<f64>,
        #[serde(default)]
        eta: Option<f64>,
    },
}

impl AlgorithmSpec {
    pub fn flexdome() -> Self {
        AlgorithmSpec::Flexdome {
            use_margin: true,
            use_regularization: true,
            oracle_threshold: false,
        }
    }

    /// Instantiates the learner for one instance.
    pub fn build(
        &self,
        model: &CmdpModel,
        slater_gap: f64,
        config: &ExperimentConfig,
    ) -> Result<Box<dyn Learner>> {
        let dims = model.dims();
        let lambda_max = 4.0 * dims.horizon as f64 / slater_gap;
        Ok(match *self {
            AlgorithmSpec::Flexdome {
                use_margin,
                use_regularization,
                oracle_threshold,
            } => {
                let mut sc =
                    ScheduleConfig::new(dims, slater_gap, config.scalers.c_eps, config.delta)?;
                sc.use_margin = use_margin;
                sc.use_regularization = use_regularization;
                sc.oracle_threshold = oracle_threshold;
                Box::new(FlexDome::new(sc, model.thresholds().to_vec()))
            }
            AlgorithmSpec::VanillaPd => Box::new(BaselineConfig::vanilla(lambda_max)),
            AlgorithmSpec::FixedRpd { tau_fixed, eta } => {
                let mut cfg = BaselineConfig::fixed_rpd(config.episodes, lambda_max);
                if let Some(tau) = tau_fixed {
                    cfg.tau_fixed = tau;
                }
                if let Some(eta) = eta {
                    cfg.step_size = StepSize::Constant(eta);
                }
                cfg.validate()?;
                Box::new(cfg)
            }
        })
    }

    /// Label without building the learner.
    pub fn label(&self) -> String {
        match *self {
            AlgorithmSpec::Flexdome {
                use_margin,
                use_regularization,
                oracle_threshold,
            } => {
                let mut label = String::from("flexdome");
                if !use_margin {
                    label.push_str("-no-margin");
                }
                if !use_regularization {
                    label.push_str("-no-reg");
                }
                if oracle_threshold {
                    label.push_str("-oracle-threshold");
                }
                label
            }
            AlgorithmSpec::VanillaPd => "vanilla-pd".into(),
            AlgorithmSpec::FixedRpd { .. } => "fixed-rpd-standin".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalers {
    /// Exploration bonus scaler.
    pub c_b: f64,
    /// Safety margin scaler.
    pub c_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dims: Dims,
    #[serde(rename = "T")]
    pub episodes: u64,
    pub seeds: Vec<u64>,
    pub threshold_mode: ThresholdMode,
    pub algorithms: Vec<AlgorithmSpec>,
    pub delta: f64,
    pub scalers: Scalers,
    #[serde(default = "one")]
    pub eval_every: u64,
    #[serde(default = "default_conc")]
    pub dirichlet_conc: f64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// The benchmark setting with all three comparison arms.
    pub fn benchmark(
        threshold_mode: ThresholdMode,
        episodes: u64,
        seeds: Vec<u64>,
        output_dir: PathBuf,
    ) -> Self {
        Self {
            dims: Dims::new(20, 5, 5, 1),
            episodes,
            seeds,
            threshold_mode,
            algorithms: vec![
                AlgorithmSpec::flexdome(),
                AlgorithmSpec::VanillaPd,
                AlgorithmSpec::FixedRpd {
                    tau_fixed: None,
                    eta: None,
                },
            ],
            delta: 0.1,
            scalers: Scalers {
                c_b: 1e-3,
                c_eps: 1e-5,
            },
            eval_every: 1,
            dirichlet_conc: 0.1,
            output_dir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let fail = |msg: String| Err(Error::Config(msg));
        if self.episodes == 0 {
            return fail("T must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.algorithms.is_empty() {
            return fail("at least one algorithm is required".into());
        }
        if self.eval_every == 0 || !self.episodes.is_multiple_of(self.eval_every) {
            return fail(format!(
                "eval_every {} must divide T = {}",
                self.eval_every, self.episodes
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.scalers.c_b >= 0.0 && self.scalers.c_eps >= 0.0) {
            return fail("scalers must be nonnegative".into());
        }
        if !(self.dirichlet_conc > 0.0) {
            return fail("dirichlet_conc must be positive".into());
        }
        let mut labels = HashSet::new();
        for a in &self.algorithms {
            if !labels.insert(a.label()) {
                return fail(format!("algorithm {} listed twice", a.label()));
            }
        }
        let mut seeds = HashSet::new();
        if !self.seeds.iter().all(|s| seeds.insert(*s)) {
            return fail("seeds must be distinct".into());
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything except `output_dir`.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output_dir = PathBuf::new();
        let text = serde_json::to_string(&keyed).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
