//! Cross-seed aggregation, summary JSON and SVG figures.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::record::{read_csv, RunRow};
use super::run::Manifest;

/// Mean and standard error per index across equally long series. The
/// standard deviation uses `n - 1`; a single series has zero error.
pub fn mean_stderr(series: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = series
        .first()
        .ok_or_else(|| Error::Aggregation("no series to aggregate".into()))?;
    let len = first.len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Aggregation("series lengths differ".into()));
    }
    let n = series.len() as f64;
    let mut mean = vec![0.0; len];
    let mut err = vec![0.0; len];
    for i in 0..len {
        let mu = series.iter().map(|s| s[i]).sum::<f64>() / n;
        mean[i] = mu;
        if series.len() > 1 {
            let var = series.iter().map(|s| (s[i] - mu).powi(2)).sum::<f64>() / (n - 1.0);
            err[i] = (var / n).sqrt();
        }
    }
    Ok((mean, err))
}

/// Trailing moving average with the given window; window 1 is the identity.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= w {
            acc -= xs[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    /// Logarithmic episode axis.
    pub log_scale: bool,
    /// Moving-average window for the instantaneous panels; 1 plots raw values.
    pub smooth_window: usize,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            log_scale: false,
            smooth_window: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanErr {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub seeds: Vec<u64>,
    pub episodes: u64,
    pub final_inst_gap: MeanErr,
    pub final_inst_violation: MeanErr,
    pub final_cum_strong_regret: MeanErr,
    pub final_cum_strong_violation: MeanErr,
}

/// Setting (threshold mode) to algorithm to final-episode values.
pub type Summary = BTreeMap<String, BTreeMap<String, AlgorithmSummary>>;

const PANELS: [(&str, bool); 4] = [
    ("instantaneous gap", true),
    ("instantaneous violation", true),
    ("strong regret", false),
    ("strong violation", false),
];

fn panel_values(rows: &[RunRow], panel: usize) -> Vec<f64> {
    rows.iter()
        .map(|r| match panel {
            0 => r.inst_gap,
            1 => r.max_violation(),
            2 => r.cum_strong_regret,
            _ => r.cum_strong_violation,
        })
        .collect()
}

struct Curve {
    label: String,
    episodes: Vec<f64>,
    /// Per panel mean and stderr.
    panels: Vec<(Vec<f64>, Vec<f64>)>,
}

struct Group {
    seeds: Vec<u64>,
    runs: Vec<Vec<RunRow>>,
}

/// Loads every manifest in `run_dir`, aggregates across seeds and writes
/// `summary.json` plus `figure_<setting>.svg` and, when ablation arms are
/// present, `figure_<setting>_ablation.svg`. Returns the written files and
/// the summary.
pub fn aggregate_and_plot(
    run_dir: &Path,
    options: &PlotOptions,
) -> Result<(Vec<PathBuf>, Summary)> {
    let mut manifests = Vec::new();
    for entry in fs::read_dir(run_dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name.starts_with("manifest_") && name.ends_with(".json") {
            manifests.push(path);
        }
    }
    manifests.sort();
    if manifests.is_empty() {
        return Err(Error::Aggregation(format!(
            "no manifest in {}",
            run_dir.display()
        )));
    }

    let mut settings: BTreeMap<String, BTreeMap<String, Group>> = BTreeMap::new();
    for path in &manifests {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        let setting = manifest.config.threshold_mode.to_string();
        for run in &manifest.runs {
            let rows = read_csv(&run_dir.join(&run.csv))?;
            let group = settings
                .entry(setting.clone())
                .or_default()
                .entry(run.algorithm.clone())
                .or_insert_with(|| Group {
                    seeds: Vec::new(),
                    runs: Vec::new(),
                });
            if group.seeds.contains(&run.seed) {
                return Err(Error::Aggregation(format!(
                    "{setting}/{}: seed {} appears twice",
                    run.algorithm, run.seed
                )));
            }
            group.seeds.push(run.seed);
            group.runs.push(rows);
        }
    }

    let mut written = Vec::new();
    let mut summary = Summary::new();
    for (setting, groups) in &settings {
        let mut curves = Vec::new();
        let mut reference: Option<Vec<u64>> = None;
        for (label, group) in groups {
            let episodes: Vec<u64> = group.runs[0].iter().map(|r| r.episode).collect();
            for run in &group.runs {
                let these: Vec<u64> = run.iter().map(|r| r.episode).collect();
                if these != episodes {
                    return Err(Error::Aggregation(format!(
                        "{setting}/{label}: runs cover different episodes"
                    )));
                }
            }
            if let Some(prev) = &reference {
                if *prev != episodes {
                    return Err(Error::Aggregation(format!(
                        "{setting}: {label} covers different episodes from other algorithms"
                    )));
                }
            } else {
                reference = Some(episodes.clone());
            }
            let panels = (0..PANELS.len())
                .map(|p| {
                    let series: Vec<Vec<f64>> = group
                        .runs
                        .iter()
                        .map(|run| {
                            let raw = panel_values(run, p);
                            if PANELS[p].1 {
                                moving_average(&raw, options.smooth_window)
                            } else {
                                raw
                            }
                        })
                        .collect();
                    mean_stderr(&series)
                })
                .collect::<Result<Vec<_>>>()?;

            let finals = (0..PANELS.len())
                .map(|p| {
                    let last: Vec<Vec<f64>> = group
                        .runs
                        .iter()
                        .map(|run| vec![panel_values(run, p).last().copied().unwrap_or(f64::NAN)])
                        .collect();
                    mean_stderr(&last).map(|(m, e)| MeanErr {
                        mean: m[0],
                        stderr: e[0],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            summary.entry(setting.clone()).or_default().insert(
                label.clone(),
                AlgorithmSummary {
                    seeds: group.seeds.clone(),
                    episodes: episodes.last().copied().unwrap_or(0),
                    final_inst_gap: finals[0],
                    final_inst_violation: finals[1],
                    final_cum_strong_regret: finals[2],
                    final_cum_strong_violation: finals[3],
                },
            );
            curves.push(Curve {
                label: label.clone(),
                episodes: episodes.iter().map(|&e| e as f64).collect(),
                panels,
            });
        }

        let (mut ablation, main): (Vec<&Curve>, Vec<&Curve>) = curves
            .iter()
            .partition(|c| c.label.starts_with("flexdome-"));
        let title = format!("{setting} thresholds");
        let path = run_dir.join(format!("figure_{setting}.svg"));
        fs::write(&path, render_figure(&title, &main, options))?;
        written.push(path);
        if !ablation.is_empty() {
            if let Some(full) = main.iter().find(|c| c.label == "flexdome") {
                ablation.insert(0, full);
            }
            let path = run_dir.join(format!("figure_{setting}_ablation.svg"));
            fs::write(
                &path,
                render_figure(&format!("{title}, ablations"), &ablation, options),
            )?;
            written.push(path);
        }
    }

    let path = run_dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
    written.push(path);
    Ok((written, summary))
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const MAX_POINTS: usize = 1500;

fn thin(len: usize) -> Vec<usize> {
    if len <= MAX_POINTS {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..MAX_POINTS)
        .map(|k| k * (len - 1) / (MAX_POINTS - 1))
        .collect();
    idx.dedup();
    idx
}

fn render_figure(title: &str, curves: &[&Curve], options: &PlotOptions) -> String {
    let width = 2.0 * (PANEL_W + MARGIN_L) + 20.0;
    let height = 2.0 * (PANEL_H + MARGIN_T + 30.0) + 40.0 + 20.0 * curves.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2.0,
        escape(title)
    );

    for (p, (name, instantaneous)) in PANELS.iter().enumerate() {
        let ox = MARGIN_L + (p % 2) as f64 * (PANEL_W + MARGIN_L);
        let oy = MARGIN_T + (p / 2) as f64 * (PANEL_H + MARGIN_T + 30.0);
        let mut label = name.to_string();
        if *instantaneous && options.smooth_window > 1 {
            label.push_str(&format!(
                " (moving average, window {})",
                options.smooth_window
            ));
        }
        panel(&mut svg, ox, oy, &label, curves, p, options.log_scale);
    }

    let ly = 2.0 * (PANEL_H + MARGIN_T + 30.0) + 30.0;
    for (k, c) in curves.iter().enumerate() {
        let y = ly + 20.0 * k as f64;
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            MARGIN_L + 30.0,
            MARGIN_L + 36.0,
            y + 4.0,
            escape(&c.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn panel(
    svg: &mut String,
    ox: f64,
    oy: f64,
    title: &str,
    curves: &[&Curve],
    p: usize,
    log_x: bool,
) {
    let xf = |e: f64| if log_x { e.max(1.0).log10() } else { e };
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for c in curves {
        let (mean, err) = &c.panels[p];
        for i in 0..mean.len() {
            x0 = x0.min(xf(c.episodes[i]));
            x1 = x1.max(xf(c.episodes[i]));
            if (mean[i] - err[i]).is_finite() && (mean[i] + err[i]).is_finite() {
                y0 = y0.min(mean[i] - err[i]);
                y1 = y1.max(mean[i] + err[i]);
            }
        }
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !y0.is_finite() || !y1.is_finite() {
        y0 = 0.0;
        y1 = 1.0;
    }
    if !(y1 > y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| ox + (xf(x) - x0) / (x1 - x0) * PANEL_W;
    let sy = |y: f64| oy + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;

    let _ = writeln!(svg, r#"<g>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ox + PANEL_W / 2.0,
        oy - 8.0,
        escape(title)
    );
    for k in 0..=4 {
        let fy = k as f64 / 4.0;
        let yv = y0 + fy * (y1 - y0);
        let py = sy(yv);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{py:.2}" x2="{ox}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            ox - 4.0,
            ox - 6.0,
            py + 4.0,
            tick(yv)
        );
        let xv = x0 + fy * (x1 - x0);
        let px = ox + fy * PANEL_W;
        let shown = if log_x { 10f64.powf(xv) } else { xv };
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            oy + PANEL_H,
            oy + PANEL_H + 4.0,
            oy + PANEL_H + 16.0,
            tick(shown)
        );
    }
    let axis = if log_x {
        "episode (log scale)"
    } else {
        "episode"
    };
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{axis}</text>"#,
        ox + PANEL_W / 2.0,
        oy + PANEL_H + 30.0
    );
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{ox}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
            sy(0.0),
            ox + PANEL_W
        );
    }

    for (k, c) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let (mean, err) = &c.panels[p];
        let idx = thin(mean.len());
        let mut band = String::new();
        for &i in &idx {
            let _ = write!(
                band,
                "{:.2},{:.2} ",
                sx(c.episodes[i]),
                sy(mean[i] + err[i])
            );
        }
        for &i in idx.iter().rev() {
            let _ = write!(
                band,
                "{:.2},{:.2} ",
                sx(c.episodes[i]),
                sy(mean[i] - err[i])
            );
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = idx
            .iter()
            .map(|&i| format!("{:.2},{:.2}", sx(c.episodes[i]), sy(mean[i])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
    }
    let _ = writeln!(svg, "</g>");
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_series_has_zero_band() {
        let (m, e) = mean_stderr(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(m, vec![1.0, 2.0, 3.0]);
        assert_eq!(e, vec![0.0; 3]);
    }

    #[test]
    fn constant_series() {
        let (m, e) = mean_stderr(&vec![vec![0.7; 4]; 5]).unwrap();
        assert!(m.iter().all(|&x| (x - 0.7).abs() < 1e-15));
        assert!(e.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn stderr_uses_unbiased_variance() {
        // values 1 and 3: sample sd sqrt(2), stderr 1
        let (m, e) = mean_stderr(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(m, vec![2.0]);
        assert!((e[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(matches!(
            mean_stderr(&[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::Aggregation(_))
        ));
        assert!(mean_stderr(&[]).is_err());
    }

    #[test]
    fn moving_average_window() {
        assert_eq!(
            moving_average(&[1.0, 2.0, 3.0, 4.0], 1),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        assert_eq!(
            moving_average(&[1.0, 3.0, 5.0, 7.0], 2),
            vec![1.0, 2.0, 4.0, 6.0]
        );
    }

    #[test]
    fn mismatched_horizons_fail_aggregation() {
        use crate::cmdp::Dims;
        use crate::env::ThresholdMode;
        use crate::harness::{run_experiment, ExperimentConfig};

        let dir = tempfile::tempdir().unwrap();
        for (t, seed) in [(6, 1), (8, 2)] {
            let mut cfg =
                ExperimentConfig::benchmark(ThresholdMode::Fixed, t, vec![seed], dir.path().into());
            cfg.dims = Dims::new(3, 2, 2, 1);
            run_experiment(&cfg).unwrap();
        }
        let err = aggregate_and_plot(dir.path(), &PlotOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Aggregation(_)), "{err}");
    }

    #[test]
    fn three_seeds_aggregate() {
        use crate::cmdp::Dims;
        use crate::env::ThresholdMode;
        use crate::harness::{run_experiment, ExperimentConfig};

        let dir = tempfile::tempdir().unwrap();
        let mut cfg =
            ExperimentConfig::benchmark(ThresholdMode::Fixed, 12, vec![1, 2, 3], dir.path().into());
        cfg.dims = Dims::new(3, 2, 2, 1);
        let out = run_experiment(&cfg).unwrap();
        let (files, summary) = aggregate_and_plot(dir.path(), &PlotOptions::default()).unwrap();
        assert_eq!(files.len(), 2);
        let flex = &summary["fixed"]["flexdome"];
        assert_eq!(flex.seeds, vec![1, 2, 3]);
        let finals: Vec<f64> = out
            .records
            .iter()
            .filter(|r| r.algorithm == "flexdome")
            .map(|r| r.rows.last().unwrap().cum_strong_regret)
            .collect();
        let mean = finals.iter().sum::<f64>() / 3.0;
        assert!((flex.final_cum_strong_regret.mean - mean).abs() < 1e-12);
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let idx = thin(20_000);
        assert_eq!(idx[0], 0);
        assert_eq!(*idx.last().unwrap(), 19_999);
        assert!(idx.len() <= MAX_POINTS);
    }
}
