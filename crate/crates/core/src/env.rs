//! Random CMDP instances and the episodic interaction protocol.
//!
//! Instances follow the conflicting-objective benchmark family: sparse
//! Dirichlet transitions, Bernoulli(0.5) rewards drawn once, constraint
//! payoff `d = 1 - r`, a fixed random initial state, and thresholds at half
//! of the best achievable constraint value.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cmdp::{CmdpModel, Dims, Policy, StepTable};
use crate::error::{Error, Result};
use crate::oracle;

/// How many times instance generation retries with a fresh sub-seed when a
/// draw turns out degenerate.
pub const MAX_INSTANCE_ATTEMPTS: u64 = 10;

/// Deterministic generator family keyed by `(master_seed, label)`.
///
/// Each `(seed, label, index)` triple maps through SHA-256 to an independent
/// ChaCha8 key, so draws never depend on the order in which substreams are
/// consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
    pub label: String,
}

impl RngStream {
    pub fn new(master_seed: u64, label: impl Into<String>) -> Self {
        Self {
            master_seed,
            label: label.into(),
        }
    }

    /// Generator for the `index`-th substream.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"flexdome/rng/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((self.label.len() as u64).to_le_bytes());
        hasher.update(self.label.as_bytes());
        hasher.update(index.to_le_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Fixed,
    Gaussian,
}

impl std::fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdMode::Fixed => f.write_str("fixed"),
            ThresholdMode::Gaussian => f.write_str("gaussian"),
        }
    }
}

/// Distribution of the observed per-step threshold samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub mode: ThresholdMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ThresholdSpec {
    /// Fixed mode carries zero spread; Gaussian mode uses `std = mean / 2`.
    pub fn new(mode: ThresholdMode, mean: Vec<f64>) -> Self {
        let std = match mode {
            ThresholdMode::Fixed => vec![0.0; mean.len()],
            ThresholdMode::Gaussian => mean.iter().map(|a| 0.5 * a).collect(),
        };
        Self { mode, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub constraints: Vec<f64>,
    pub next_state: usize,
}

/// One H-step episode with the threshold samples observed along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// `[i][h]`.
    pub threshold_samples: Vec<Vec<f64>>,
}

fn dirichlet_row(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, len: usize) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.iter().map(|x| x / total).collect();
        }
    }
}

/// Draws one benchmark instance. `attempt` selects the sub-seed so the
/// caller can regenerate after a degenerate draw.
pub fn generate_instance_attempt(
    seed: u64,
    attempt: u64,
    dims: Dims,
    dirichlet_conc: f64,
    threshold_mode: ThresholdMode,
) -> Result<(CmdpModel, ThresholdSpec)> {
    dims.validate()?;
    if !(dirichlet_conc > 0.0) || !dirichlet_conc.is_finite() {
        return Err(Error::Config(format!(
            "Dirichlet concentration must be positive, got {dirichlet_conc}"
        )));
    }
    let Dims {
        states: ns,
        actions: na,
        horizon: nh,
        constraints: m,
    } = dims;
    let mut rng = RngStream::new(seed, "instance").rng(attempt);
    let gamma = Gamma::new(dirichlet_conc, 1.0).map_err(|e| Error::Config(e.to_string()))?;

    let mut transitions = Vec::with_capacity(nh * ns * na * ns);
    for _ in 0..nh * ns * na {
        transitions.extend(dirichlet_row(&mut rng, &gamma, ns));
    }
    let reward = StepTable::from_fn(
        nh,
        ns,
        na,
        |_, _, _| {
            if rng.random_bool(0.5) {
                1.0
            } else {
                0.0
            }
        },
    );
    let opposed = StepTable::from_fn(nh, ns, na, |h, s, a| 1.0 - reward.get(h, s, a));
    let s1 = rng.random_range(0..ns);

    let draft = CmdpModel::new(
        dims,
        s1,
        transitions,
        reward,
        vec![opposed; m],
        vec![0.0; m],
    )?;
    let (_, alpha) = oracle::slater_quantities(&draft)?;
    let model = draft.with_thresholds(alpha.clone())?;
    Ok((model, ThresholdSpec::new(threshold_mode, alpha)))
}

/// Instance for `seed`, using the first sub-seed.
pub fn generate_instance(
    seed: u64,
    dims: Dims,
    dirichlet_conc: f64,
    threshold_mode: ThresholdMode,
) -> Result<(CmdpModel, ThresholdSpec)> {
    generate_instance_attempt(seed, 0, dims, dirichlet_conc, threshold_mode)
}

/// Retries degenerate draws with perturbed sub-seeds, up to
/// [`MAX_INSTANCE_ATTEMPTS`]. Returns the attempt index that succeeded.
pub fn generate_feasible_instance(
    seed: u64,
    dims: Dims,
    dirichlet_conc: f64,
    threshold_mode: ThresholdMode,
) -> Result<(CmdpModel, ThresholdSpec, u64)> {
    let mut last = None;
    for attempt in 0..MAX_INSTANCE_ATTEMPTS {
        match generate_instance_attempt(seed, attempt, dims, dirichlet_conc, threshold_mode) {
            Ok((model, spec)) => return Ok((model, spec, attempt)),
            Err(Error::Degenerate(msg)) => {
                eprintln!(
                    "seed {seed}: degenerate instance on attempt {attempt} ({msg}), regenerating"
                );
                last = Some(msg);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Degenerate(format!(
        "seed {seed}: no feasible instance after {MAX_INSTANCE_ATTEMPTS} attempts: {}",
        last.unwrap_or_default()
    )))
}

/// Index drawn from a categorical distribution. Never returns an index
/// with zero mass.
fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Simulates one episode from `s_1` under `policy`.
///
/// Observed payoffs equal the true tables. Fixed thresholds replicate the
/// mean; Gaussian thresholds draw one unclamped value per constraint and
/// replicate it across the H step slots.
pub fn rollout(
    model: &CmdpModel,
    spec: &ThresholdSpec,
    policy: &Policy,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    model.check_policy(policy)?;
    let dims = model.dims();
    let threshold_samples = match spec.mode {
        ThresholdMode::Fixed => spec.mean.iter().map(|&a| vec![a; dims.horizon]).collect(),
        ThresholdMode::Gaussian => spec
            .mean
            .iter()
            .zip(&spec.std)
            .map(|(&mu, &sigma)| {
                let normal = Normal::new(mu, sigma).map_err(|e| Error::Config(e.to_string()))?;
                Ok(vec![normal.sample(rng); dims.horizon])
            })
            .collect::<Result<Vec<_>>>()?,
    };

    let mut steps = Vec::with_capacity(dims.horizon);
    let mut state = model.initial_state();
    for h in 0..dims.horizon {
        let action = sample_index(policy.row(h, state), rng);
        let next_state = sample_index(model.transition_row(h, state, action), rng);
        steps.push(TrajectoryStep {
            state,
            action,
            reward: model.reward().get(h, state, action),
            constraints: model
                .constraints()
                .iter()
                .map(|d| d.get(h, state, action))
                .collect(),
            next_state,
        });
        state = next_state;
    }
    Ok(Trajectory {
        steps,
        threshold_samples,
    })
}

/// On-disk instance layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub dims: Dims,
    pub s1: usize,
    /// `[h][s][a][s']`.
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[h][s][a]`.
    pub r: Vec<Vec<Vec<f64>>>,
    /// `[i][h][s][a]`.
    pub d: Vec<Vec<Vec<Vec<f64>>>>,
    pub alpha: Vec<f64>,
    pub threshold_spec: ThresholdSpec,
}

impl InstanceFile {
    pub fn from_model(model: &CmdpModel, spec: &ThresholdSpec) -> Self {
        let dims = model.dims();
        let p = (0..dims.horizon)
            .map(|h| {
                (0..dims.states)
                    .map(|s| {
                        (0..dims.actions)
                            .map(|a| model.transition_row(h, s, a).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            dims,
            s1: model.initial_state(),
            p,
            r: model.reward().nested(),
            d: model.constraints().iter().map(StepTable::nested).collect(),
            alpha: model.thresholds().to_vec(),
            threshold_spec: spec.clone(),
        }
    }

    pub fn into_model(self) -> Result<(CmdpModel, ThresholdSpec)> {
        let transitions: Vec<f64> = self.p.into_iter().flatten().flatten().flatten().collect();
        let reward = StepTable::from_nested(&self.r)?;
        let constraints = self
            .d
            .iter()
            .map(|d| StepTable::from_nested(d))
            .collect::<Result<Vec<_>>>()?;
        let model = CmdpModel::new(
            self.dims,
            self.s1,
            transitions,
            reward,
            constraints,
            self.alpha,
        )?;
        Ok((model, self.threshold_spec))
    }
}

pub fn save_instance(path: &Path, model: &CmdpModel, spec: &ThresholdSpec) -> Result<()> {
    let file = InstanceFile::from_model(model, spec);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<(CmdpModel, ThresholdSpec)> {
    let text = std::fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    file.into_model()
}
