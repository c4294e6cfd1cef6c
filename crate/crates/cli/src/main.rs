use std::path::PathBuf;
use std::process::ExitCode;

use bodyfit_cli::commands::{self, MeasureSource};
use bodyfit_cli::config::Config;
use bodyfit_cli::error::{CliError, CliResult, Context};
use bodyfit_cli::pipeline::{parse_edit, FitOptions};
use clap::{Args, Parser, Subcommand};

/// Body fitting from joints, twists and garment landmarks.
#[derive(Parser)]
#[command(name = "bodyfit", version)]
struct Cli {
    /// JSON config with camera, anchors, weights, bands and landmark map; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FitFlags {
    /// Anchor bones for depth estimation, by child joint name or index.
    #[arg(long, value_delimiter = ',')]
    anchors: Option<Vec<String>>,
    /// Scale of the shape draw around the posterior mean (0 gives the mean).
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitFlags {
    fn options(&self, config: &Config) -> CliResult<FitOptions> {
        FitOptions::from_config(config, self.seed, self.temperature, self.anchors.clone())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario with ground truth and a pose database.
    Synth {
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        pose_db_size: usize,
    },
    /// Fit shape, pose and placement to a scenario.
    Fit {
        scenario: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        flags: FitFlags,
    },
    /// Fit, then write pose variants that keep the covered joints.
    Evolve {
        scenario: PathBuf,
        database: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Largest geodesic displacement (radians) of a mutated joint.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        flags: FitFlags,
    },
    /// Edit measurements and refit the shape.
    Measure {
        output: PathBuf,
        #[arg(long, conflicts_with = "beta", required_unless_present = "beta")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        beta: Option<PathBuf>,
        /// Body model seed when measuring a shape file.
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
        /// `name=value` in meters, repeatable.
        #[arg(long = "edit")]
        edits: Vec<String>,
        /// Also write the refit rest-pose mesh.
        #[arg(long)]
        mesh: bool,
        #[command(flatten)]
        flags: FitFlags,
    },
    /// Compare a fit directory with a scenario's ground truth.
    Eval {
        pred: PathBuf,
        scenario: PathBuf,
        output: PathBuf,
    },
    /// Write the mesh of a shape, optionally posed and translated.
    ExportMesh {
        output: PathBuf,
        #[arg(long)]
        beta: PathBuf,
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long)]
        translation: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let config = Config::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Synth {
            output,
            seed,
            pose_db_size,
        } => commands::synth(&config, seed, pose_db_size, &output),
        Command::Fit {
            scenario,
            output,
            flags,
        } => commands::fit(&scenario, &flags.options(&config)?, &output).map(|_| ()),
        Command::Evolve {
            scenario,
            database,
            output,
            count,
            epsilon,
            k,
            flags,
        } => commands::evolve(&scenario, &database, &flags.options(&config)?, count, epsilon, k, &output).map(|_| ()),
        Command::Measure {
            output,
            scenario,
            beta,
            model_seed,
            edits,
            mesh,
            flags,
        } => {
            let source = match (scenario, beta) {
                (Some(path), _) => MeasureSource::Scenario(path),
                (None, Some(path)) => MeasureSource::Beta { path, model_seed },
                (None, None) => unreachable!("clap requires one source"),
            };
            let edits = edits
                .iter()
                .map(|e| parse_edit(e))
                .collect::<bodyfit::Result<Vec<_>>>()
                .context("parsing --edit")?;
            commands::measure(&source, &edits, &flags.options(&config)?, mesh, &output).map(|_| ())
        }
        Command::Eval {
            pred,
            scenario,
            output,
        } => commands::eval(&pred, &scenario, &output).map(|_| ()),
        Command::ExportMesh {
            output,
            beta,
            pose,
            translation,
            model_seed,
        } => commands::export_mesh(&beta, pose.as_deref(), translation.as_deref(), model_seed, &output),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}
