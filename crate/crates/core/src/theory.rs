//! Numeric checks of the scalar decay rates behind the term-wise dominance
//! argument, for `eta_t = t^{-5/6}` and `tau_t = t^{-1/6}` (so
//! `eta_t tau_t = 1/t`).

use crate::cmdp::Dims;
use crate::learner::{schedules, ScheduleConfig};

/// Prefix sums `H_0 = 0, H_t = sum_{k<=t} 1/k`.
fn harmonic_prefix(t: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..=t {
        acc += 1.0 / k as f64;
        out.push(acc);
    }
    out
}

/// `exp(-1/2 sum_{j<=t} eta_j tau_j) = exp(-H_t / 2)`.
pub fn series_initial_decay(t: usize) -> f64 {
    assert!(t >= 1, "t starts at 1");
    (-0.5 * harmonic_prefix(t)[t]).exp()
}

/// `( sum_{j<=t} j^{-5/3} exp(-(H_t - H_j)) )^{1/2}`.
pub fn series_optimization_error(t: usize) -> f64 {
    assert!(t >= 1, "t starts at 1");
    let harmonic = harmonic_prefix(t);
    let total: f64 = (1..=t)
        .map(|j| (j as f64).powf(-5.0 / 3.0) * (harmonic[j] - harmonic[t]).exp())
        .sum();
    total.sqrt()
}

/// `series_initial_decay(t)` for every `t` in `1..=t_max` (index `t - 1`).
pub fn initial_decay_path(t_max: usize) -> Vec<f64> {
    harmonic_prefix(t_max)[1..]
        .iter()
        .map(|h| (-0.5 * h).exp())
        .collect()
}

/// `series_optimization_error(t)` for every `t` in `1..=t_max`, via the
/// recursion `X_t = X_{t-1} e^{-1/t} + t^{-5/3}`.
pub fn optimization_error_path(t_max: usize) -> Vec<f64> {
    let mut x = 0.0;
    (1..=t_max)
        .map(|t| {
            let tf = t as f64;
            x = x * (-1.0 / tf).exp() + tf.powf(-5.0 / 3.0);
            x.sqrt()
        })
        .collect()
}

/// Result of comparing an error sequence with a margin sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    /// Largest `t` in range with `error(t) > margin(t)`.
    pub last_exceedance: Option<usize>,
    /// `sum_t [error(t) - margin(t)]_+` over the whole range.
    pub positive_part_sum: f64,
    /// Same sum restricted to the first tenth of the range.
    pub early_sum: f64,
    /// True when the margin covers the error at the end of the range.
    pub dominated: bool,
}

/// Scans `t_start..=t_end`.
pub fn dominance_check(
    t_start: usize,
    t_end: usize,
    margin: impl Fn(usize) -> f64,
    error: impl Fn(usize) -> f64,
) -> DominanceReport {
    let early_end = t_start + (t_end - t_start) / 10;
    let mut last = None;
    let mut sum = 0.0;
    let mut early = 0.0;
    for t in t_start..=t_end {
        let excess = error(t) - margin(t);
        if excess > 0.0 {
            last = Some(t);
            sum += excess;
            if t <= early_end {
                early += excess;
            }
        }
    }
    DominanceReport {
        last_exceedance: last,
        positive_part_sum: sum,
        early_sum: early,
        dominated: last != Some(t_end),
    }
}

/// One line of the check table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Band endpoints for the rate checks.
pub const INITIAL_DECAY_BAND: (f64, f64) = (0.70, 0.80);
pub const OPTIMIZATION_ERROR_BAND: (f64, f64) = (1.0, 3.4);

/// Runs the rate and dominance checks. `t_max` bounds the largest probe.
pub fn run_checks(t_max: usize) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let probes: Vec<usize> = [1_000, 10_000, 100_000, 1_000_000]
        .into_iter()
        .filter(|&t| t <= t_max)
        .collect();

    for &t in &probes {
        let scaled = series_initial_decay(t) * (t as f64).sqrt();
        let (lo, hi) = INITIAL_DECAY_BAND;
        out.push(CheckResult {
            name: format!("initial decay sqrt(t)-scaled, t={t}"),
            passed: (lo..=hi).contains(&scaled),
            detail: format!("{scaled:.6} in [{lo}, {hi}]"),
        });
    }
    for &t in probes.iter().filter(|&&t| t <= 100_000) {
        let scaled = series_optimization_error(t) * (t as f64).powf(1.0 / 3.0);
        let (lo, hi) = OPTIMIZATION_ERROR_BAND;
        out.push(CheckResult {
            name: format!("optimization error t^(1/3)-scaled, t={t}"),
            passed: (lo..=hi).contains(&scaled),
            detail: format!("{scaled:.6} in [{lo}, {hi}]"),
        });
    }

    // Margin shape from the learner's schedule with unit scaler; error
    // terms at unit constant.
    let span = t_max.min(100_000);
    let cfg = ScheduleConfig::new(Dims::new(20, 5, 5, 1), 1.0, 1.0, 0.1)
        .expect("static configuration is valid");
    let unit = cfg.margin_coefficient();
    let margin = |t: usize| {
        schedules(t as u64, &cfg)
            .map(|s| s.eps[0] / unit)
            .unwrap_or(0.0)
    };
    let decay = initial_decay_path(span);
    let opt_err = optimization_error_path(span);
    for (name, path) in [
        ("term (a) initial decay", &decay),
        ("term (b) optimization error", &opt_err),
    ] {
        let report = dominance_check(1, span, margin, |t| path[t - 1]);
        let tail = report.positive_part_sum - report.early_sum;
        out.push(CheckResult {
            name: format!("{name} dominated by margin"),
            passed: report.dominated && report.positive_part_sum.is_finite() && tail <= 1e-12,
            detail: format!(
                "sum [err - eps]_+ = {:.6}, last exceedance {:?}",
                report.positive_part_sum, report.last_exceedance
            ),
        });
    }
    out
}
