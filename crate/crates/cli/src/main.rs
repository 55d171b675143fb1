//! `lbbp`: register non-isometric surfaces by conformally deforming the
//! target's Laplace–Beltrami basis.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EigsArgs, EvaluateArgs, RegisterArgs};
use config::FlagOverrides;
use error::CliResult;

#[derive(Parser)]
#[command(name = "lbbp", version, about = "Conformal Laplace–Beltrami basis pursuit for surface registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct SolveFlags {
    /// Number of basis functions (the config file takes precedence).
    #[arg(long)]
    k: Option<usize>,
    /// Outer iteration cap (the config file takes precedence).
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Start from the native target basis instead of the reduced problem.
    #[arg(long)]
    no_warm_start: bool,
}

impl From<SolveFlags> for FlagOverrides {
    fn from(f: SolveFlags) -> Self {
        FlagOverrides {
            k: f.k,
            max_iterations: f.max_iterations,
            no_warm_start: f.no_warm_start,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the first k Laplace–Beltrami eigenpairs of a mesh.
    Eigs {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        k: usize,
        /// Per-vertex metric scale w² (one value per line).
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        /// Binary eigensystem output.
        #[arg(long)]
        out: PathBuf,
        /// Also write the eigensystem as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Register a source mesh onto a target mesh.
    Register {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// "source target" vertex pairs, one per line.
        #[arg(long)]
        landmarks: PathBuf,
        /// TOML or JSON solver configuration; must set `seed`.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Score a correspondence against ground truth.
    Evaluate {
        #[arg(long)]
        corr: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Source mesh, for comparing a recovered w with the first-ring reference.
        #[arg(long, requires = "w")]
        source: Option<PathBuf>,
        /// Recovered conformal factor (one value per target vertex).
        #[arg(long, requires = "source")]
        w: Option<PathBuf>,
    },
    /// Farthest-point sample hierarchy of a mesh, written as JSON.
    Sample {
        #[arg(long)]
        mesh: PathBuf,
        /// Comma-separated decreasing level sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the stretched-sphere test pair, its ground truth and landmarks.
    Fixture {
        #[arg(long, default_value_t = 12)]
        frequency: usize,
        #[arg(long, default_value_t = 0.3)]
        amplitude: f64,
        #[arg(long, default_value_t = 50)]
        landmarks: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the registrations listed in a batch file concurrently.
    Batch {
        /// TOML file with [[run]] tables (source, target, landmarks, config, out).
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        flags: SolveFlags,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Eigs {
            mesh,
            k,
            weights,
            seed,
            tolerance,
            out,
            csv,
        } => commands::eigs(&EigsArgs {
            mesh,
            k,
            weights,
            seed,
            tolerance,
            out,
            csv,
        }),
        Command::Register {
            source,
            target,
            landmarks,
            config,
            out,
            flags,
        } => {
            let args = RegisterArgs {
                source,
                target,
                landmarks,
                config,
                out,
            };
            commands::register(&args, &flags.into())?;
            println!("{}", args.out.join(manifest::MANIFEST_NAME).display());
            Ok(())
        }
        Command::Evaluate {
            corr,
            truth,
            target,
            out,
            source,
            w,
        } => {
            let s = commands::evaluate(&EvaluateArgs {
                corr,
                truth,
                target,
                out,
                source,
                w,
            })?;
            println!(
                "mean {:.6} exact {:.4} within 0.05 {:.4}",
                s.errors.mean, s.errors.fraction_exact, s.errors.fraction_within_5pct
            );
            Ok(())
        }
        Command::Sample { mesh, counts, seed, out } => commands::sample(&mesh, &counts, seed, &out),
        Command::Fixture {
            frequency,
            amplitude,
            landmarks,
            seed,
            out,
        } => commands::fixture(frequency, amplitude, landmarks, seed, &out),
        Command::Batch { file, jobs, flags } => {
            let results = commands::batch(&file, jobs, &flags.into())?;
            let mut failed = 0;
            for r in &results {
                match &r.error {
                    None => println!("ok     {}", r.out.display()),
                    Some(e) => {
                        failed += 1;
                        println!("failed {}: {e}", r.out.display());
                    }
                }
            }
            if failed > 0 {
                return Err(error::CliError::Runtime(format!("{failed} of {} runs failed", results.len())));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LBBP_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lbbp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
