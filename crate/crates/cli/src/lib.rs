//! Command-line front end for training and analysing composite functional
//! gradient GANs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use licfg::cfg::{Penalty, PenaltyKind};
use licfg::dynamics::Integrator;

use crate::commands::{CliError, DynamicsArgs, TrainOutcome, EXIT_OK, EXIT_USAGE};
use crate::config::{parse_config, ConfigFile, Dataset};

#[derive(Debug, Parser)]
#[command(name = "licfg", version, about = "Composite functional gradient GAN experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntegratorArg {
    Simultaneous,
    Alternating,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a benchmark mixture to CSV.
    Data {
        #[arg(long, default_value = "ring")]
        dataset: Dataset,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Train one model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Neighbourhood-size ordering over 1-, 0- and eps-centred penalties.
    Nsize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score generated points against real points.
    Metrics {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        fake: PathBuf,
        #[arg(long, default_value = "ring")]
        dataset: Dataset,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        min_count: usize,
    },
    /// Simulate the Dirac problem under several penalties.
    Dynamics {
        #[arg(long, value_delimiter = ',', default_values_t = ["none".to_string(), "0-centered".to_string()])]
        penalty: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.3)]
        eps_norm: f64,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        psi: f64,
        #[arg(long, value_enum, default_value_t = IntegratorArg::Alternating)]
        integrator: IntegratorArg,
        #[arg(long, default_value_t = 1.0)]
        eta_m: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train eps-centred models over a grid of eps norms and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 1.0, 5.0])]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses a penalty name as accepted by the config file.
pub fn parse_penalty(name: &str, gamma: f64, eps_norm: f64) -> Result<Penalty, CliError> {
    let kind = match name {
        "none" => return Ok(Penalty::none()),
        "1-centered" | "c1" => PenaltyKind::Centered1,
        "0-centered" | "c0" => PenaltyKind::Centered0,
        "eps-centered" | "eps" => PenaltyKind::CenteredEps { eps_norm },
        other => return Err(CliError::Usage(format!("unknown penalty `{other}`"))),
    };
    Penalty::new(kind, gamma).map_err(|e| CliError::Usage(e.to_string()))
}

fn load(config: &std::path::Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ConfigFile, CliError> {
    let mut cfg = parse_config(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(o) = out {
        cfg.output.dir = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Executes a parsed command and returns its exit code.
pub fn execute(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Data {
            dataset,
            n,
            seed,
            out,
            svg,
        } => {
            commands::cmd_data(dataset, n, seed, &out, svg.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Train { config, seed, out } => {
            let cfg = load(&config, seed, out)?;
            let outcome = commands::cmd_train(&cfg)?;
            if let TrainOutcome::Trained(row) = &outcome {
                println!("{}\n{}", commands::EvalRow::HEADER, row.csv());
            } else if let TrainOutcome::Untrained { epoch, quantity } = &outcome {
                println!("untrained at epoch {epoch} ({quantity})");
            }
            Ok(outcome.exit_code())
        }
        Command::Nsize { config, seed, out } => {
            let mut cfg = load(&config, None, out)?;
            if let Some(s) = seed {
                cfg.nsize.options.seed = s;
            }
            for (label, r) in commands::cmd_nsize(&cfg)? {
                println!("{label},{r:.6e}");
            }
            Ok(EXIT_OK)
        }
        Command::Metrics {
            real,
            fake,
            dataset,
            k,
            min_count,
        } => {
            print!("{}", commands::cmd_metrics(&real, &fake, dataset, k, min_count)?);
            Ok(EXIT_OK)
        }
        Command::Dynamics {
            penalty,
            gamma,
            eps_norm,
            lr,
            steps,
            theta,
            psi,
            integrator,
            eta_m,
            delta,
            out,
        } => {
            let penalties = penalty
                .iter()
                .map(|p| parse_penalty(p, gamma, eps_norm))
                .collect::<Result<Vec<_>, _>>()?;
            let args = DynamicsArgs {
                penalties,
                steps,
                lr,
                init: (theta, psi),
                integrator: match integrator {
                    IntegratorArg::Simultaneous => Integrator::Simultaneous,
                    IntegratorArg::Alternating => Integrator::Alternating,
                },
                eta_m,
                delta,
                out,
            };
            for line in commands::cmd_dynamics(&args)? {
                println!("{line}");
            }
            Ok(EXIT_OK)
        }
        Command::Sweep {
            config,
            eps,
            seeds,
            out,
        } => {
            let cfg = load(&config, None, out)?;
            let seeds = if seeds.is_empty() { cfg.nsize.seeds.clone() } else { seeds };
            commands::cmd_sweep(&cfg, &eps, &seeds)?;
            print!(
                "{}",
                std::fs::read_to_string(cfg.output.dir.join("sweep.csv")).unwrap_or_default()
            );
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
