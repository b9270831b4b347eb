//! Command-line experiment runner for the miolab laboratory.
//!
//! Every subcommand is deterministic given its inputs and seed, and exits
//! with 0 on success, 1 when a check or tolerance fails, 2 on usage or
//! config errors, and 3 when training diverges.

pub mod config;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod manifest;
pub mod mibound;
pub mod plot;
pub mod run;
pub mod sweep;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use miolab_core::fn_geometry::WeightMode;
use miolab_core::losses::{LossKind, SimilarityMode};

use crate::config::LoadedConfig;
pub use crate::error::{CliError, CliResult};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "MIO_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "miolab",
    version,
    about = "Binary-contrastive learning laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Mio,
    Infonce,
    MioL2,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Dot,
    Cosine,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Self-supervised pre-training; writes metrics.csv, checkpoints and model.json.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, instead of the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Linear probe on a checkpoint's frozen encoder; writes probe.csv.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also probe the untrained encoder the run started from.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides probe.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Analytic loss gradients against central finite differences.
    Gradcheck {
        #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
        loss: Vec<LossArg>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
        mode: Vec<ModeArg>,
        /// Batch sizes N (2N views each), at most 16.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        sizes: Vec<usize>,
        /// Feature widths, at most 64.
        #[arg(long, value_delimiter = ',', default_value = "4,16")]
        dims: Vec<usize>,
        /// Random batches per (loss, mode, N, D).
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        /// Tolerance of the whole-model audit (batch-standardized projector).
        #[arg(long, default_value_t = 1e-4)]
        model_tolerance: f64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 0.3)]
        lambda: f64,
        #[arg(long)]
        no_model_audit: bool,
        #[arg(long, hide = true)]
        inject_fault: bool,
        /// Per-trial CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss against the mutual-information bound on random discrete joints.
    Mibound {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo deviation angle of sampled false negatives.
    Geometry {
        /// `x,y`.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "10,0",
            allow_hyphen_values = true
        )]
        centroid: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Positive pairs per batch.
        #[arg(long, default_value_t = 256)]
        t_p: usize,
        /// `uniform:<p>` or `random`.
        #[arg(long, default_value = "uniform:1")]
        weights: String,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        eta: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-eta summary CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-trial CSV.
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// One-parameter ablation; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV columns to an SVG line chart.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

fn losses(args: &[LossArg]) -> Vec<LossKind> {
    let mut out = Vec::new();
    for a in args {
        let kinds: &[LossKind] = match a {
            LossArg::Mio => &[LossKind::Mio],
            LossArg::Infonce => &[LossKind::Infonce],
            LossArg::MioL2 => &[LossKind::MioL2],
            LossArg::All => &LossKind::ALL,
        };
        for k in kinds {
            if !out.contains(k) {
                out.push(*k);
            }
        }
    }
    out
}

fn modes(args: &[ModeArg]) -> Vec<SimilarityMode> {
    let mut out = Vec::new();
    for a in args {
        let ms: &[SimilarityMode] = match a {
            ModeArg::Dot => &[SimilarityMode::Dot],
            ModeArg::Cosine => &[SimilarityMode::Cosine],
            ModeArg::All => &[SimilarityMode::Dot, SimilarityMode::Cosine],
        };
        for m in ms {
            if !out.contains(m) {
                out.push(*m);
            }
        }
    }
    out
}

fn parse_weights(s: &str) -> CliResult<WeightMode> {
    match s.split_once(':') {
        None if s == "random" => Ok(WeightMode::Random),
        Some(("uniform", p)) => p
            .parse()
            .map(WeightMode::Uniform)
            .map_err(|_| CliError::usage(format!("--weights: '{p}' is not a number"))),
        _ => Err(CliError::usage(format!(
            "--weights: expected uniform:<p> or random, got '{s}'"
        ))),
    }
}

/// Applies `MIO_LAB_THREADS` to the global worker pool.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::usage(format!(
                "{THREADS_ENV} must be a positive integer, got '{value}'"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("{THREADS_ENV}: {e}")))
}

fn dispatch(command: Command) -> CliResult<String> {
    match command {
        Command::Pretrain { config, out, seed } => {
            let mut loaded = LoadedConfig::load(&config)?;
            if let Some(s) = seed {
                loaded.config.train.seed = s;
            }
            let out_dir = loaded.output_dir(out.as_deref());
            let (_, summary) = run::run_pretrain(
                &loaded.config,
                &loaded.base_dir,
                &out_dir,
                loaded.text.as_bytes(),
            )?;
            Ok(format!(
                "pretrained {} epochs ({} steps) into {}; final gap {}",
                summary.epochs,
                summary.steps,
                out_dir.display(),
                summary.gap.map_or("n/a".into(), |g| format!("{g:.4}"))
            ))
        }
        Command::Probe {
            config,
            checkpoint,
            baseline,
            out,
            seed,
        } => {
            let mut loaded = LoadedConfig::load(&config)?;
            if let Some(s) = seed {
                loaded.config.probe.seed = s;
            }
            let out_dir = loaded.output_dir(out.as_deref());
            let rows = run::run_probe(
                &loaded.config,
                &loaded.base_dir,
                &checkpoint,
                &out_dir,
                loaded.text.as_bytes(),
                baseline,
            )?;
            Ok(rows
                .iter()
                .map(|r| {
                    format!(
                        "{:<8} test accuracy {:.4} (train {:.4}, val {:.4})",
                        r.encoder, r.test_accuracy, r.train_accuracy, r.val_accuracy
                    )
                })
                .collect::<Vec<_>>()
                .join("\n"))
        }
        Command::Gradcheck {
            loss,
            mode,
            sizes,
            dims,
            trials,
            seed,
            tolerance,
            model_tolerance,
            tau,
            lambda,
            no_model_audit,
            inject_fault,
            out,
        } => gradcheck::run(&gradcheck::GradcheckOptions {
            losses: losses(&loss),
            modes: modes(&mode),
            sizes,
            dims,
            trials,
            seed,
            tolerance,
            model_tolerance,
            tau,
            lambda,
            model_audit: !no_model_audit,
            inject_fault,
            out,
        }),
        Command::Mibound {
            k,
            trials,
            seed,
            out,
        } => mibound::run(&mibound::MiboundOptions {
            ks: k,
            trials,
            seed,
            out,
        }),
        Command::Geometry {
            centroid,
            sigma,
            t_p,
            weights,
            eta,
            trials,
            seed,
            out,
            trials_out,
        } => {
            let [cx, cy] = centroid[..] else {
                return Err(CliError::usage(format!(
                    "--centroid: expected x,y, got {} values",
                    centroid.len()
                )));
            };
            geometry::run(&geometry::GeometryOptions {
                centroid: (cx, cy),
                sigma,
                t_p,
                weights: parse_weights(&weights)?,
                etas: eta,
                trials,
                seed,
                out,
                trials_out,
            })
        }
        Command::Sweep { config, out } => {
            let (rows, path) = sweep::run(&config, out.as_deref())?;
            Ok(format!(
                "{} sweep runs written to {}",
                rows.len(),
                path.display()
            ))
        }
        Command::Plot {
            csv,
            x,
            y,
            out,
            title,
        } => {
            plot::run(&csv, &x, &y, &out, title.as_deref())?;
            Ok(format!("wrote {}", out.display()))
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli.command) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{}", msg.trim_end());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_modes_parse() {
        assert_eq!(parse_weights("random").unwrap(), WeightMode::Random);
        assert_eq!(
            parse_weights("uniform:0.5").unwrap(),
            WeightMode::Uniform(0.5)
        );
        assert!(parse_weights("uniform:x").is_err());
        assert!(parse_weights("gaussian").is_err());
    }

    #[test]
    fn loss_lists_expand_without_duplicates() {
        assert_eq!(
            losses(&[LossArg::Mio, LossArg::All]),
            vec![LossKind::Mio, LossKind::Infonce, LossKind::MioL2]
        );
        assert_eq!(modes(&[ModeArg::Cosine]), vec![SimilarityMode::Cosine]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
