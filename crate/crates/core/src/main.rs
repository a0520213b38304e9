//! `fenceflow`: batch CLI over the analytics pipeline.
//!
//! Exit codes: 0 ok, 2 config error, 3 input error, 4 internal invariant
//! violation. Failures print a machine-readable JSON line to stderr naming
//! the stage and cause.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use fenceflow_core::config::{RunConfig, TimeWindow};
use fenceflow_core::output::error_json;
use fenceflow_core::pipeline::{self, Command as PipelineCommand, StagedError};
use fenceflow_core::synth::SynthSpec;

#[derive(Parser)]
#[command(
    name = "fenceflow",
    version,
    about = "Trip reconstruction, parking-spot congestion metrics, and congested-spot clustering for dockless bike-sharing feeds"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Load and validate all configured inputs; write reject reports, no analysis.
    Validate(RunArgs),
    /// Reconstruct, filter, and summarize trips (trips.csv, summary.json).
    Trips(RunArgs),
    /// Add per-fence flow grids and congested spots (flows.csv, congested_spots.csv).
    Congestion(RunArgs),
    /// Full pipeline: features, clustering, labels (clusters.csv, clusters.geojson, model_report.json).
    Classify(RunArgs),
    /// Generate a seeded synthetic dataset with ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config JSON; relative input paths resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Events CSV (overrides config).
    #[arg(long)]
    events: Option<PathBuf>,
    /// Fences GeoJSON or CSV (overrides config).
    #[arg(long)]
    fences: Option<PathBuf>,
    /// POI CSV (overrides config).
    #[arg(long)]
    pois: Option<PathBuf>,
    /// Transit CSV (overrides config).
    #[arg(long)]
    transit: Option<PathBuf>,
    /// Trajectory CSV for polyline distances (overrides config).
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Worker threads; 0 means one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// PRNG seed for clustering.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated bin widths in seconds, e.g. 300,900,1800.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<u32>>,
    /// Analysis window, e.g. 06:00-10:00.
    #[arg(long)]
    window: Option<TimeWindow>,
    /// Comma-separated dates to exclude, e.g. 2020-12-23.
    #[arg(long, value_delimiter = ',')]
    exclude_dates: Option<Vec<NaiveDate>>,
    /// Also write the dense heatmap export.
    #[arg(long)]
    emit_heatmap: bool,
    /// Also report the silhouette on raw (unstandardized) features.
    #[arg(long)]
    silhouette_raw: bool,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory the dataset is written into.
    #[arg(long, default_value = "synth-data")]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    fences: usize,
    #[arg(long, default_value_t = 50)]
    bikes: usize,
    #[arg(long, default_value_t = 200)]
    trips: usize,
    #[arg(long, default_value_t = 60)]
    pois: usize,
    /// Fences with heavy destination bias.
    #[arg(long, default_value_t = 2)]
    over_fences: usize,
    /// Fences with moderate destination bias.
    #[arg(long, default_value_t = 4)]
    semi_fences: usize,
    /// Lone lock pings on dedicated bikes (discard-path exercise).
    #[arg(long, default_value_t = 4)]
    noise: usize,
}

fn effective_config(args: &RunArgs) -> Result<RunConfig, StagedError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|source| StagedError {
            stage: "config",
            source,
        })?,
        None => RunConfig::default(),
    };
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &args.events {
        cfg.inputs.events = v.clone();
    }
    if let Some(v) = &args.fences {
        cfg.inputs.fences = v.clone();
    }
    if let Some(v) = &args.pois {
        cfg.inputs.pois = v.clone();
    }
    if let Some(v) = &args.transit {
        cfg.inputs.transit = Some(v.clone());
    }
    if let Some(v) = &args.trajectories {
        cfg.inputs.trajectories = Some(v.clone());
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.widths {
        cfg.widths_s = v.clone();
    }
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if let Some(v) = &args.exclude_dates {
        cfg.excluded_dates = v.iter().copied().collect::<BTreeSet<_>>();
    }
    if args.emit_heatmap {
        cfg.emit_heatmap = true;
    }
    if args.silhouette_raw {
        cfg.silhouette_raw = true;
    }
    Ok(cfg)
}

fn run(cmd: PipelineCommand, args: &RunArgs) -> Result<(), StagedError> {
    let cfg = effective_config(args)?;
    if args.print_config {
        println!("{}", cfg.to_pretty_json());
        return Ok(());
    }
    let manifest = pipeline::run_command(cmd, &cfg)?;
    eprintln!(
        "{}: ok ({} outputs in {})",
        cmd.as_str(),
        manifest.outputs.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        CliCommand::Validate(args) => run(PipelineCommand::Validate, args),
        CliCommand::Trips(args) => run(PipelineCommand::Trips, args),
        CliCommand::Congestion(args) => run(PipelineCommand::Congestion, args),
        CliCommand::Classify(args) => run(PipelineCommand::Classify, args),
        CliCommand::Synth(args) => {
            let spec = SynthSpec {
                seed: args.seed,
                fences: args.fences,
                bikes: args.bikes,
                trips: args.trips,
                pois: args.pois,
                over_fences: args.over_fences.min(args.fences),
                semi_fences: args.semi_fences,
                noise_events: args.noise,
                ..Default::default()
            };
            pipeline::run_synth(&spec, &args.out).map(|files| {
                eprintln!("synth: wrote {} files to {}", files.len(), args.out.display());
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", error_json(e.stage, &e.source.to_string(), code));
            ExitCode::from(code as u8)
        }
    }
}
