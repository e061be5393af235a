use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flexdome::env::{generate_feasible_instance, load_instance, save_instance, ThresholdMode};
use flexdome::harness::{aggregate_and_plot, load_config, run_experiment, PlotOptions};
use flexdome::oracle::{cmdp_optimum, slater_quantities};
use flexdome::theory::run_checks;
use flexdome::{Dims, Error, Result};

#[derive(Parser)]
#[command(
    name = "flexdome",
    about = "Safe primal-dual learning on tabular constrained MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random instance and write it as JSON.
    Gen {
        #[arg(long)]
        seed: u64,
        /// Comma separated S,A,H,m.
        #[arg(long, default_value = "20,5,5,1")]
        dims: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Fixed)]
        threshold_mode: ModeArg,
        #[arg(long, default_value_t = 0.1)]
        dirichlet_conc: f64,
    },
    /// Run an experiment from a config or manifest JSON file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate runs in a directory into SVG figures and summary.json.
    Plot {
        #[arg(long)]
        dir: PathBuf,
        /// Logarithmic episode axis.
        #[arg(long)]
        log_scale: bool,
        /// Moving-average window for instantaneous panels.
        #[arg(long, default_value_t = 1)]
        smooth: usize,
    },
    /// Numeric rate and dominance checks.
    Check {
        #[arg(long, default_value_t = 1_000_000)]
        t_max: usize,
    },
    /// Exact constrained optimum of an instance file.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Fixed,
    Gaussian,
}

impl From<ModeArg> for ThresholdMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fixed => ThresholdMode::Fixed,
            ModeArg::Gaussian => ThresholdMode::Gaussian,
        }
    }
}

fn parse_dims(text: &str) -> Result<Dims> {
    let parts = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(format!("bad --dims {text:?}: {e}")))?;
    let [s, a, h, m] = parts[..] else {
        return Err(Error::Config(format!("--dims needs S,A,H,m, got {text:?}")));
    };
    let dims = Dims::new(s, a, h, m);
    dims.validate()?;
    Ok(dims)
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Gen {
            seed,
            dims,
            out,
            threshold_mode,
            dirichlet_conc,
        } => {
            let dims = parse_dims(&dims)?;
            let (model, spec, attempt) =
                generate_feasible_instance(seed, dims, dirichlet_conc, threshold_mode.into())?;
            save_instance(&out, &model, &spec)?;
            println!("wrote {} (attempt {attempt})", out.display());
        }
        Cmd::Run { config } => {
            let mut cfg = load_config(&config)?;
            if let Some(dir) = std::env::var_os("FLEXDOME_OUT") {
                cfg.output_dir = PathBuf::from(dir);
            }
            let outcome = run_experiment(&cfg)?;
            for inst in &outcome.manifest.instances {
                println!(
                    "seed {}: V* = {:.6}, alpha = {:?}, Slater gap = {:.6}, margin window = {:?}",
                    inst.seed,
                    inst.v_star,
                    inst.alpha,
                    inst.slater_gap,
                    inst.margin_feasibility_window
                );
            }
            for rec in &outcome.records {
                let last = rec.rows.last();
                println!(
                    "{} seed {}: strong regret {:.4}, strong violation {:.4}",
                    rec.algorithm,
                    rec.seed,
                    last.map_or(0.0, |r| r.cum_strong_regret),
                    last.map_or(0.0, |r| r.cum_strong_violation)
                );
            }
            println!("manifest: {}", outcome.manifest_path.display());
        }
        Cmd::Plot {
            dir,
            log_scale,
            smooth,
        } => {
            let options = PlotOptions {
                log_scale,
                smooth_window: smooth.max(1),
            };
            let (files, _) = aggregate_and_plot(&dir, &options)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Cmd::Check { t_max } => {
            let results = run_checks(t_max);
            let mut ok = true;
            for r in &results {
                println!(
                    "{:<4} {:<48} {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                ok &= r.passed;
            }
            if !ok {
                return Err(Error::Numerical("theory checks failed".into()));
            }
        }
        Cmd::Oracle { instance } => {
            let (model, _) = load_instance(&instance)?;
            let (gap, max_alpha) = slater_quantities(&model)?;
            let opt = cmdp_optimum(&model, model.thresholds())?;
            println!(
                "{}",
                serde_json::json!({
                    "v_star": opt.value,
                    "lambda_star": opt.lambda,
                    "slater_gap": opt.slater_gap,
                    "generator_alpha": max_alpha,
                    "generator_slater_gap": gap,
                })
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Json(_) => 2,
                Error::Numerical(_) => 3,
                _ => 1,
            })
        }
    }
}
