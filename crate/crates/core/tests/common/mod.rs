#![allow(dead_code)]

use flexdome::cmdp::{evaluate_policy, CmdpModel, Dims, Policy, StepTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense random model with uniform payoffs in `[0, scale]` and zero
/// thresholds.
pub fn random_model(rng: &mut ChaCha8Rng, dims: Dims, scale: f64) -> CmdpModel {
    let Dims {
        states: ns,
        actions: na,
        horizon: nh,
        constraints: m,
    } = dims;
    let mut transitions = Vec::with_capacity(nh * ns * na * ns);
    for _ in 0..nh * ns * na {
        let row: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = row.iter().sum();
        transitions.extend(row.iter().map(|x| x / total));
    }
    let mut table = || StepTable::from_fn(nh, ns, na, |_, _, _| scale * rng.random::<f64>());
    let reward = table();
    let constraints = (0..m).map(|_| table()).collect();
    let s1 = rng.random_range(0..ns);
    CmdpModel::new(dims, s1, transitions, reward, constraints, vec![0.0; m])
        .expect("valid random model")
}

pub fn random_policy(rng: &mut ChaCha8Rng, nh: usize, ns: usize, na: usize) -> Policy {
    let mut raw = StepTable::from_fn(nh, ns, na, |_, _, _| rng.random::<f64>() + 1e-2);
    for h in 0..nh {
        for s in 0..ns {
            let row = raw.row_mut(h, s);
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            let fix = 1.0 - row.iter().sum::<f64>();
            row[0] += fix;
        }
    }
    Policy::new(raw).expect("normalised rows")
}

/// `(V_r, V_d0)` of every deterministic Markov policy.
pub fn deterministic_values(model: &CmdpModel) -> Vec<(f64, f64)> {
    let Dims {
        states: ns,
        actions: na,
        horizon: nh,
        ..
    } = model.dims();
    let cells = nh * ns;
    let total = na.pow(cells as u32);
    (0..total)
        .map(|code| {
            let pi =
                Policy::deterministic(nh, ns, na, |h, s| (code / na.pow((h * ns + s) as u32)) % na);
            let vr = evaluate_policy(model, &pi, model.reward())
                .unwrap()
                .root_value;
            let vd = evaluate_policy(model, &pi, model.constraint(0))
                .unwrap()
                .root_value;
            (vr, vd)
        })
        .collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
