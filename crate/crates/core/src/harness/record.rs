//! Per-run CSV records.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One logged episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub episode: u64,
    pub inst_gap: f64,
    pub inst_violation: Vec<f64>,
    pub cum_strong_regret: f64,
    pub cum_strong_violation: f64,
    pub cum_weak_regret: f64,
    pub lambda: Vec<f64>,
    pub eta: f64,
    pub tau: f64,
    pub eps: Vec<f64>,
    pub alpha_hat: Vec<f64>,
}

impl RunRow {
    /// Largest instantaneous violation across constraints.
    pub fn max_violation(&self) -> f64 {
        self.inst_violation
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Invariant audit over every episode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunAudit {
    pub lambda_cap: f64,
    pub lambda_min_seen: f64,
    pub lambda_max_seen: f64,
    pub max_simplex_error: f64,
}

impl RunAudit {
    pub fn new(lambda_cap: f64) -> Self {
        Self {
            lambda_cap,
            lambda_min_seen: f64::INFINITY,
            lambda_max_seen: f64::NEG_INFINITY,
            max_simplex_error: 0.0,
        }
    }

    pub fn observe(&mut self, lambda: &[f64], simplex_error: f64) {
        for &l in lambda {
            self.lambda_min_seen = self.lambda_min_seen.min(l);
            self.lambda_max_seen = self.lambda_max_seen.max(l);
        }
        self.max_simplex_error = self.max_simplex_error.max(simplex_error);
    }

    /// Duals inside `[0, cap]` and policies on the simplex to `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.lambda_min_seen >= 0.0
            && self.lambda_max_seen <= self.lambda_cap
            && self.max_simplex_error <= tol
    }
}

/// Full output of a single (seed, algorithm) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub algorithm: String,
    pub constraints: usize,
    pub rows: Vec<RunRow>,
    pub audit: RunAudit,
}

pub fn csv_header(constraints: usize) -> String {
    let indexed = |name: &'static str| (0..constraints).map(move |i| format!("{name}_{i}"));
    let mut cols: Vec<String> = vec!["episode".into(), "inst_gap".into()];
    cols.extend(indexed("inst_violation"));
    cols.extend(
        [
            "cum_strong_regret",
            "cum_strong_violation",
            "cum_weak_regret",
        ]
        .map(String::from),
    );
    cols.extend(indexed("lambda"));
    cols.extend(["eta", "tau"].map(String::from));
    cols.extend(indexed("eps"));
    cols.extend(indexed("alpha_hat"));
    cols.join(",")
}

fn push_float(line: &mut String, x: f64) {
    write!(line, ",{x:.16e}").expect("writing to a String cannot fail");
}

pub fn to_csv(record: &RunRecord) -> String {
    let mut out = csv_header(record.constraints);
    out.push('\n');
    for row in &record.rows {
        out.push_str(&row.episode.to_string());
        push_float(&mut out, row.inst_gap);
        for &v in &row.inst_violation {
            push_float(&mut out, v);
        }
        for x in [
            row.cum_strong_regret,
            row.cum_strong_violation,
            row.cum_weak_regret,
        ] {
            push_float(&mut out, x);
        }
        for &l in &row.lambda {
            push_float(&mut out, l);
        }
        push_float(&mut out, row.eta);
        push_float(&mut out, row.tau);
        for &e in row.eps.iter().chain(&row.alpha_hat) {
            push_float(&mut out, e);
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, record: &RunRecord) -> Result<()> {
    fs::write(path, to_csv(record))?;
    Ok(())
}

/// Parses a CSV written by [`to_csv`]. The constraint count is read off the
/// header.
pub fn read_csv(path: &Path) -> Result<Vec<RunRow>> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: String| Error::Aggregation(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let m = header
        .split(',')
        .filter(|c| c.starts_with("lambda_"))
        .count();
    if header != csv_header(m) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let width = 7 + 4 * m;
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(bad(format!(
                    "row {} has {} cells, expected {width}",
                    i + 1,
                    cells.len()
                )));
            }
            let episode = cells[0]
                .parse::<u64>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            let vals = cells[1..]
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|e| bad(format!("row {}: {e}", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            let take = |from: usize, n: usize| vals[from..from + n].to_vec();
            Ok(RunRow {
                episode,
                inst_gap: vals[0],
                inst_violation: take(1, m),
                cum_strong_regret: vals[1 + m],
                cum_strong_violation: vals[2 + m],
                cum_weak_regret: vals[3 + m],
                lambda: take(4 + m, m),
                eta: vals[4 + 2 * m],
                tau: vals[5 + 2 * m],
                eps: take(6 + 2 * m, m),
                alpha_hat: take(6 + 3 * m, m),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunRecord {
        let row = |t: u64| RunRow {
            episode: t,
            inst_gap: 0.1 / t as f64,
            inst_violation: vec![-0.25, 1.0 / 3.0],
            cum_strong_regret: 0.5 * t as f64,
            cum_strong_violation: 1e-300,
            cum_weak_regret: -2.0,
            lambda: vec![0.0, 7.5],
            eta: 1.0,
            tau: 0.5,
            eps: vec![0.2, 0.2],
            alpha_hat: vec![0.8, 1.1],
        };
        RunRecord {
            seed: 3,
            algorithm: "x".into(),
            constraints: 2,
            rows: vec![row(1), row(2)],
            audit: RunAudit::new(1.0),
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            csv_header(1),
            "episode,inst_gap,inst_violation_0,cum_strong_regret,cum_strong_violation,cum_weak_regret,\
             lambda_0,eta,tau,eps_0,alpha_hat_0"
        );
    }

    #[test]
    fn seventeen_significant_digits() {
        let text = to_csv(&sample());
        let second = text.lines().nth(1).unwrap();
        assert!(second.starts_with("1,1.0000000000000001e-1,"), "{second}");
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let rec = sample();
        write_csv(&path, &rec).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rec.rows);
    }

    #[test]
    fn audit_detects_escape() {
        let mut audit = RunAudit::new(2.0);
        audit.observe(&[0.0, 2.0], 1e-15);
        assert!(audit.holds(1e-9));
        audit.observe(&[2.0 + 1e-12], 0.0);
        assert!(!audit.holds(1e-9));
    }
}
