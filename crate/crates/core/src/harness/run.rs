//! Experiment loop and manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmdp::{evaluate_policy, CmdpModel};
use crate::env::{generate_feasible_instance, rollout, RngStream, ThresholdSpec};
use crate::error::{Error, Result};
use crate::estimation::{BonusConfig, EmpiricalModel};
use crate::learner::{Learner, LearnerState, ScheduleConfig};
use crate::metrics::StrongAccumulator;
use crate::oracle::{cmdp_optimum, slater_quantities};

use super::config::{AlgorithmSpec, ExperimentConfig};
use super::record::{write_csv, RunAudit, RunRecord, RunRow};

/// Ground-truth quantities for one seed's instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOracle {
    pub seed: u64,
    /// Sub-seed attempt that produced a feasible instance.
    pub attempt: u64,
    pub v_star: f64,
    pub lambda_star: Vec<f64>,
    pub alpha: Vec<f64>,
    pub slater_gap: f64,
    /// First episode with margin at most half the Slater gap, for the
    /// margin-enabled learner.
    pub margin_feasibility_window: Option<f64>,
}

/// An instance with its oracle values.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub model: CmdpModel,
    pub spec: ThresholdSpec,
    pub oracle: InstanceOracle,
}

pub fn prepare_instance(config: &ExperimentConfig, seed: u64) -> Result<PreparedInstance> {
    let (model, spec, attempt) = generate_feasible_instance(
        seed,
        config.dims,
        config.dirichlet_conc,
        config.threshold_mode,
    )?;
    let (slater_gap, alpha) = slater_quantities(&model)?;
    let opt = cmdp_optimum(&model, &alpha)?;
    let window = ScheduleConfig::new(config.dims, slater_gap, config.scalers.c_eps, config.delta)?
        .margin_feasibility_window();
    Ok(PreparedInstance {
        model,
        spec,
        oracle: InstanceOracle {
            seed,
            attempt,
            v_star: opt.value,
            lambda_star: opt.lambda,
            alpha,
            slater_gap,
            margin_feasibility_window: window,
        },
    })
}

/// Runs `learner` for `episodes` episodes and evaluates every iterate
/// exactly under the true model. Rows are kept every `eval_every` episodes.
pub fn run_single(
    instance: &PreparedInstance,
    learner: &dyn Learner,
    bonus: &BonusConfig,
    episodes: u64,
    eval_every: u64,
) -> Result<RunRecord> {
    let model = &instance.model;
    let dims = model.dims();
    let oracle = &instance.oracle;
    let stream = RngStream::new(oracle.seed, "episode");
    let mut emp = EmpiricalModel::new(dims, model.initial_state());
    let mut state = LearnerState::initial(dims);
    let mut acc = StrongAccumulator::new(dims.constraints);
    let mut audit = RunAudit::new(learner.lambda_max());
    let mut rows = Vec::with_capacity((episodes / eval_every.max(1)) as usize);

    for t in 1..=episodes {
        audit.observe(&state.lambda, state.policy.simplex_error());
        let (next, diag) = learner.step(&state, &emp, bonus)?;
        let traj = rollout(model, &instance.spec, &state.policy, &mut stream.rng(t))?;
        emp.update_with_trajectory(&traj)?;

        let v_r = evaluate_policy(model, &state.policy, model.reward())?.root_value;
        let violation = model
            .constraints()
            .iter()
            .zip(&oracle.alpha)
            .map(|(d, a)| Ok(a - evaluate_policy(model, &state.policy, d)?.root_value))
            .collect::<Result<Vec<f64>>>()?;
        let gap = oracle.v_star - v_r;
        if !gap.is_finite() || violation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite metric at episode {t}"
            )));
        }
        let (cum_r, cum_v, cum_w) = acc.push(gap, &violation);
        if t % eval_every == 0 {
            rows.push(RunRow {
                episode: t,
                inst_gap: gap,
                inst_violation: violation,
                cum_strong_regret: cum_r,
                cum_strong_violation: cum_v,
                cum_weak_regret: cum_w,
                lambda: diag.lambda,
                eta: diag.eta,
                tau: diag.tau,
                eps: diag.eps,
                alpha_hat: diag.alpha_hat,
            });
        }
        state = next;
    }
    audit.observe(&state.lambda, state.policy.simplex_error());

    Ok(RunRecord {
        seed: oracle.seed,
        algorithm: learner.label(),
        constraints: dims.constraints,
        rows,
        audit,
    })
}

/// One run as listed in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    pub algorithm: String,
    /// CSV path relative to the output directory.
    pub csv: String,
    pub audit: RunAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub git_describe: String,
    pub wall_time_seconds: f64,
    pub instances: Vec<InstanceOracle>,
    pub runs: Vec<RunEntry>,
}

/// Results of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<RunRecord>,
}

pub fn csv_name(config: &ExperimentConfig, algorithm: &str, seed: u64) -> String {
    format!("{}_{}_seed{}.csv", config.threshold_mode, algorithm, seed)
}

pub fn manifest_name(config: &ExperimentConfig) -> String {
    format!(
        "manifest_{}_{}.json",
        config.threshold_mode,
        &config.hash()[..12]
    )
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Runs every (seed, algorithm) pair in parallel, writes one CSV per run
/// and a manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let started = Instant::now();
    fs::create_dir_all(&config.output_dir)?;

    let instances = config
        .seeds
        .iter()
        .map(|&seed| prepare_instance(config, seed))
        .collect::<Result<Vec<_>>>()?;
    let bonus = BonusConfig {
        delta: config.delta,
        episodes: config.episodes,
        scaler: config.scalers.c_b,
    };
    bonus.validate()?;

    let tasks: Vec<(&PreparedInstance, &AlgorithmSpec)> = instances
        .iter()
        .flat_map(|inst| config.algorithms.iter().map(move |alg| (inst, alg)))
        .collect();
    let records = tasks
        .par_iter()
        .map(|&(inst, alg)| {
            let learner = alg.build(&inst.model, inst.oracle.slater_gap, config)?;
            let record = run_single(
                inst,
                learner.as_ref(),
                &bonus,
                config.episodes,
                config.eval_every,
            )?;
            write_csv(
                &config
                    .output_dir
                    .join(csv_name(config, &record.algorithm, record.seed)),
                &record,
            )?;
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        config: config.clone(),
        config_hash: config.hash(),
        git_describe: git_describe(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        instances: instances.iter().map(|i| i.oracle.clone()).collect(),
        runs: records
            .iter()
            .map(|r| RunEntry {
                seed: r.seed,
                algorithm: r.algorithm.clone(),
                csv: csv_name(config, &r.algorithm, r.seed),
                audit: r.audit,
            })
            .collect(),
    };
    let manifest_path = config.output_dir.join(manifest_name(config));
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentOutcome {
        manifest_path,
        manifest,
        records,
    })
}

/// Reads either a bare configuration or a manifest written by
/// [`run_experiment`].
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    let config: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}
