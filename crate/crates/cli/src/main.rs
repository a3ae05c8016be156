use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dyadic_core::experiment::{
    parse_config, read_trajectory, run_alpha_sweep, run_dispersion, run_experiment,
    verify_manifest, ExperimentError, RunArtifacts, SWEEP_ALPHAS,
};
use dyadic_core::lattice::{enumerate_cascades, LatticeConfig};
use dyadic_core::regularity::{bad_cubes, BadnessNormalization, RegularityParams};

#[derive(Parser)]
#[command(name = "dyadic", version, about = "Dyadic cascade experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    AlphaSweep,
    Dispersion,
}

#[derive(Clone, Copy, ValueEnum)]
enum Normalization {
    Balanced,
    Literal,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configured experiment and write its output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.directory`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides `initial.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `run.workers`.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Bad-cube analysis of a stored trajectory.
    Analyze {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        badness_constant: f64,
        #[arg(long, default_value_t = 1.0)]
        critical_constant: f64,
        #[arg(long, value_enum, default_value = "balanced")]
        normalization: Normalization,
        #[arg(long)]
        fit_min: Option<u32>,
        #[arg(long)]
        fit_max: Option<u32>,
        /// Write CSV instead of the text report.
        #[arg(long)]
        csv: bool,
    },
    /// Print the cascade table, one triple per line.
    Cascades {
        #[arg(long = "dim", short = 'd')]
        dim: usize,
        #[arg(long)]
        max_level: u32,
    },
    /// Check the checksums in a run directory's manifest.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn summary(art: &RunArtifacts) {
    eprintln!("{}: {}", art.directory.display(), art.status.as_str());
    if let Some(note) = &art.note {
        eprintln!("  {note}");
    }
    if let Some(r) = &art.report {
        eprintln!(
            "  bad cubes {}, dimension estimate {}",
            r.total_bad(),
            r.dimension_estimate
                .map_or("undefined".to_string(), |x| format!("{x:.4}"))
        );
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            output,
            seed,
            workers,
            preset,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("{}: {e}", config.display()))?;
            let mut cfg = parse_config(&text)?;
            if let Some(dir) = output {
                cfg.output.directory = dir;
            }
            if let Some(seed) = seed {
                cfg.initial.seed = seed;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let code = match preset {
                None => {
                    let art = run_experiment(&cfg)?;
                    summary(&art);
                    art.status.exit_code()
                }
                Some(Preset::Dispersion) => {
                    let art = run_dispersion(&cfg)?;
                    summary(&art);
                    art.status.exit_code()
                }
                Some(Preset::AlphaSweep) => {
                    let runs = run_alpha_sweep(&cfg, &SWEEP_ALPHAS)?;
                    for (_, art) in &runs {
                        summary(art);
                    }
                    runs.iter()
                        .map(|(_, a)| a.status.exit_code())
                        .max()
                        .unwrap_or(0)
                }
            };
            Ok(ExitCode::from(code as u8))
        }
        Command::Analyze {
            trajectory,
            badness_constant,
            critical_constant,
            normalization,
            fit_min,
            fit_max,
            csv,
        } => {
            let traj = read_trajectory(&trajectory)?;
            let params = RegularityParams {
                alpha: traj.params.alpha,
                badness_constant,
                critical_constant,
                normalization: match normalization {
                    Normalization::Balanced => BadnessNormalization::Balanced,
                    Normalization::Literal => BadnessNormalization::Literal,
                },
            };
            let j = traj.config.max_level();
            let fit = (fit_min.unwrap_or(1.min(j)), fit_max.unwrap_or(j));
            let report = bad_cubes(&traj, &params, Some(fit)).map_err(ExperimentError::from)?;
            print!(
                "{}",
                if csv {
                    report.to_csv()
                } else {
                    report.to_text()
                }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Cascades { dim, max_level } => {
            let config = LatticeConfig::new(dim, max_level)?;
            print!("{}", enumerate_cascades(&config).dump());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { dir } => {
            let bad = verify_manifest(&dir)?;
            if bad.is_empty() {
                println!("ok");
                Ok(ExitCode::SUCCESS)
            } else {
                for name in bad {
                    println!("mismatch {name}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
