//! Command-line driver: simulate ground truth, train reservoir models, run
//! closed-loop predictions and KAM sweeps, extract sections, estimate
//! Lyapunov exponents, search hyperparameters, and plot diagrams.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kamrc::analysis::{Direction, GateSign, SectionPredicate};
use kamrc::config::{ExperimentConfig, PRESET_NAMES};
use kamrc::experiment::{self, RunContext};
use kamrc::hyperopt;

#[derive(Parser)]
#[command(
    name = "kamrc",
    version,
    about = "Reservoir computing for Hamiltonian dynamics: prediction, climate replication, KAM diagram reconstruction"
)]
struct Cli {
    /// Experiment config: a TOML path or a preset name.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write ground-truth trajectory CSVs for the configured training values.
    Simulate,
    /// Train the configured model and persist it as a JSON document.
    Train,
    /// Run a persisted model closed-loop at one control value.
    Predict {
        /// Model document produced by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Physical control value (pendulum theta2(0), map p0).
        #[arg(long)]
        beta: f64,
        /// Closed-loop steps (defaults to the config's prediction.steps).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Reconstruct machine and ground-truth dynamics diagrams over the
    /// configured control values, with per-value climate distances.
    Kam {
        /// Reuse a trained model document instead of training in-process.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Extract a Poincare section from a trajectory CSV.
    Poincare {
        #[arg(long)]
        input: PathBuf,
        /// Trigger coordinate index (default: config section or omega1).
        #[arg(long)]
        trigger: Option<usize>,
        #[arg(long, value_parser = parse_direction)]
        direction: Option<Direction>,
        /// Gate coordinate index.
        #[arg(long)]
        gate: Option<usize>,
        #[arg(long, value_parser = parse_gate_sign)]
        gate_sign: Option<GateSign>,
        /// Sample spacing of the trajectory.
        #[arg(long, default_value_t = 0.2)]
        dt: f64,
    },
    /// Estimate the largest Lyapunov exponent.
    Lyapunov {
        /// Trajectory CSV for the time-series estimator.
        #[arg(long, conflicts_with_all = ["model", "beta"])]
        input: Option<PathBuf>,
        /// Model document: closed-loop output is analyzed instead.
        #[arg(long, requires = "beta")]
        model: Option<PathBuf>,
        /// Control value for --model or for the configured ground truth.
        #[arg(long)]
        beta: Option<f64>,
        /// Closed-loop steps (with --model) or Benettin horizon in time
        /// units (with --config ground truth).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Random hyperparameter search over the config's [hyperopt] ranges.
    Hyperopt {
        /// Number of trials (defaults to hyperopt.budget).
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Scatter SVG from a diagram or section CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "ascending" => Ok(Direction::Ascending),
        "descending" => Ok(Direction::Descending),
        "any" => Ok(Direction::Any),
        _ => Err("expected ascending | descending | any".into()),
    }
}

fn parse_gate_sign(s: &str) -> Result<GateSign, String> {
    match s {
        "positive" => Ok(GateSign::Positive),
        "negative" => Ok(GateSign::Negative),
        _ => Err("expected positive | negative".into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("kamrc: failed to size thread pool: {e}");
        }
    }

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kamrc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> kamrc::Result<ExperimentConfig> {
    let spec = cli.config.as_deref().ok_or_else(|| {
        kamrc::Error::Config(format!(
            "missing --config (path or preset: {})",
            PRESET_NAMES.join(", ")
        ))
    })?;
    ExperimentConfig::load(spec)
}

fn context(cli: &Cli) -> RunContext {
    let mut ctx = RunContext::new(cli.out.clone());
    if let Some(seed) = cli.seed {
        ctx = ctx.with_seed(seed);
    }
    ctx
}

fn run(cli: &Cli) -> kamrc::Result<()> {
    match &cli.command {
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let files = experiment::cmd_simulate(&cfg, &context(cli))?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let path = experiment::cmd_train(&cfg, &context(cli))?;
            println!("{}", path.display());
        }
        Command::Predict { model, beta, steps } => {
            let cfg = match &cli.config {
                Some(spec) => Some(ExperimentConfig::load(spec)?),
                None => None,
            };
            let path = experiment::cmd_predict(model, cfg.as_ref(), *beta, *steps, &cli.out)?;
            println!("{}", path.display());
        }
        Command::Kam { model } => {
            let cfg = load_config(cli)?;
            let loaded = match model {
                Some(path) => Some(kamrc::io::artifact::load_model(path)?),
                None => None,
            };
            let out = experiment::cmd_kam(&cfg, loaded.as_ref(), &context(cli))?;
            let mut failures = 0usize;
            for r in &out.reports {
                match (&r.error, r.climate_distance) {
                    (Some(err), _) => {
                        failures += 1;
                        println!("beta {:+.4}: FAILED ({err})", r.beta);
                    }
                    (None, Some(d)) => println!(
                        "beta {:+.4}: distance {:.4} ({} machine / {} model points)",
                        r.beta, d, r.machine_points, r.model_points
                    ),
                    (None, None) => println!("beta {:+.4}: no distance", r.beta),
                }
            }
            for f in &out.files {
                println!("{}", f.display());
            }
            if failures > 0 {
                eprintln!("kamrc: {failures} control value(s) failed");
            }
        }
        Command::Poincare {
            input,
            trigger,
            direction,
            gate,
            gate_sign,
            dt,
        } => {
            // Explicit flags override the config's section; fall back to the
            // pendulum default.
            let pred = match (trigger, &cli.config) {
                (Some(t), _) => SectionPredicate {
                    trigger: *t,
                    direction: direction.unwrap_or(Direction::Any),
                    gate: gate.zip(*gate_sign),
                },
                (None, Some(spec)) => ExperimentConfig::load(spec)?
                    .section_predicate()?
                    .unwrap_or_else(SectionPredicate::pendulum_gated),
                (None, None) => SectionPredicate::pendulum_gated(),
            };
            let path = experiment::cmd_poincare(input, &pred, *dt, &cli.out)?;
            println!("{}", path.display());
        }
        Command::Lyapunov {
            input,
            model,
            beta,
            steps,
        } => {
            let report = if let Some(input) = input {
                experiment::lyapunov_from_csv(input)?
            } else if let Some(model) = model {
                experiment::lyapunov_from_model(model, beta.expect("clap requires"), *steps)?
            } else if let Some(beta) = beta {
                let cfg = load_config(cli)?;
                let horizon = steps.map(|s| s as f64).unwrap_or(4000.0);
                experiment::benettin_from_config(&cfg, *beta, horizon)
            } else {
                return Err(kamrc::Error::Config(
                    "lyapunov needs --input, --model --beta, or --config --beta".into(),
                ));
            };
            println!(
                "{} exponent = {:.6} ({} samples)",
                report.method, report.exponent, report.samples
            );
        }
        Command::Hyperopt { budget } => {
            let cfg = load_config(cli)?;
            let out = hyperopt::random_search(&cfg, *budget, &context(cli))?;
            let b = &out.best;
            println!(
                "best trial {}: density {:.4}, rho {:.4}, leak {:.4}, sigma {:.4}, ridge {:.3e} \
                 (rmse {:.3e}, valid time {:.2}, score {:.4})",
                b.index,
                b.settings.density,
                b.settings.spectral_radius,
                b.settings.leak,
                b.settings.input_scale,
                b.settings.ridge,
                b.validation_rmse,
                b.valid_time_raw,
                b.score
            );
            for f in &out.files {
                println!("{}", f.display());
            }
        }
        Command::Plot { input, output } => {
            let path = experiment::cmd_plot(input, output.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
