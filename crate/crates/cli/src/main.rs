//! `seafloor` command-line entry point.
//!
//! Every subcommand reads and writes only the files named by its flags,
//! prints a one-line JSON summary on stdout and exits 0. Failures print a
//! JSON object on stderr and exit 2 (usage), 3 (I/O) or 4 (domain).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "seafloor", version, about = "Seafloor complexity from side-scan sonar: PD maps, terrain classes and repair plans")]
pub struct Cli {
    /// Seed for every stochastic step; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads. Falls back to SEAFLOOR_JOBS, then to all cores.
    #[arg(long, global = true, env = "SEAFLOOR_JOBS")]
    pub jobs: Option<usize>,
    /// TOML file with optional sections: mission, detector, montecarlo, snippet, texture, kmeans, repair.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Images to draw snippets from: a simulated mission directory and/or single images.
#[derive(Debug, Clone, Args)]
pub struct ImageSource {
    /// Mission directory written by `simulate`.
    #[arg(long, value_name = "DIR")]
    pub missions: Option<PathBuf>,
    /// Side-scan image (PGM with its .meta.json sidecar). Repeatable.
    #[arg(long = "image", value_name = "PGM")]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    MaxVotes,
    MaxComplexity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rule {
    /// Mean PD of a repair cell below the threshold.
    Mean,
    /// More than --fraction of its PD cells below the threshold.
    Fraction,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one synthetic mission per terrain archetype.
    Simulate {
        /// Output directory for images, truth rasters and manifest.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Pings per mission.
        #[arg(long)]
        pings: Option<usize>,
    },
    /// Insert synthetic objects into an image at random separated locations.
    Insert {
        /// Source image.
        #[arg(long, value_name = "PGM")]
        image: PathBuf,
        /// Augmented image to write (sidecar written next to it).
        #[arg(long, value_name = "PGM")]
        out: PathBuf,
        /// Insertion records JSON to write.
        #[arg(long, value_name = "JSON")]
        records: PathBuf,
        /// Number of objects.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Minimum spacing between objects in metres.
        #[arg(long)]
        min_separation: Option<f64>,
        /// Pass id stamped on every record.
        #[arg(long, default_value_t = 0)]
        pass_id: u32,
    },
    /// Run the template detector over an image.
    AtrRun {
        #[arg(long, value_name = "PGM")]
        image: PathBuf,
        /// Contacts JSON to write.
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
        /// Detection threshold in [0, 1].
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Monte-Carlo probability-of-detection map for one image.
    Perfmap {
        #[arg(long, value_name = "PGM")]
        image: PathBuf,
        /// Output directory for pd.json, pd.pgm, report.json and trials.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Truth label raster for per-class PD in the report.
        #[arg(long, value_name = "PGM")]
        truth: Option<PathBuf>,
        /// Number of passes N.
        #[arg(long)]
        passes: Option<usize>,
        /// Objects inserted per pass.
        #[arg(long)]
        contacts: Option<usize>,
        /// PD grid cell size in metres.
        #[arg(long)]
        cell_size: Option<f64>,
        /// Association radius in metres.
        #[arg(long)]
        radius: Option<f64>,
        /// Replace the detector by a stub that finds each object with probability P.
        #[arg(long, value_name = "P")]
        stub: Option<f64>,
        /// Fill empty cells from the K nearest trialed cells (0 keeps them empty).
        #[arg(long, value_name = "K", default_value_t = 0)]
        densify: usize,
    },
    /// Train the snippet clusterer.
    ClusterTrain {
        #[command(flatten)]
        source: ImageSource,
        /// Cluster model JSON to write.
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
        /// Number of clusters P.
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Stop once no centroid moves further than this (normalised units).
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Snippets closest to each centroid.
    ClusterReps {
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
        #[command(flatten)]
        source: ImageSource,
        /// Representatives JSON to write.
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
        /// Representatives per cluster.
        #[arg(short, long, default_value_t = 9)]
        k: usize,
    },
    /// Label map of an image through a model and an operator mapping.
    Classify {
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
        /// LabelMapping JSON from the labelling tool.
        #[arg(long, value_name = "JSON")]
        mapping: PathBuf,
        #[arg(long, value_name = "PGM")]
        image: PathBuf,
        /// Label map JSON to write.
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
        /// Take the grid geometry from this label map or grid JSON instead of the image footprint.
        #[arg(long, value_name = "JSON")]
        grid: Option<PathBuf>,
        /// Also render class ids as a PGM.
        #[arg(long, value_name = "PGM")]
        pgm: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        pass_id: u32,
    },
    /// Merge per-pass label maps on a shared grid.
    Merge {
        #[arg(long, value_name = "JSON")]
        mapping: PathBuf,
        /// Label map JSON. Repeatable.
        #[arg(long = "map", value_name = "JSON", required = true)]
        maps: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Policy::MaxVotes)]
        policy: Policy,
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Cluster-majority precision against simulator truth.
    Evaluate {
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
        /// Mission directory written by `simulate`.
        #[arg(long, value_name = "DIR")]
        missions: PathBuf,
        /// Precision report JSON to write.
        #[arg(long, value_name = "JSON")]
        out: Option<PathBuf>,
    },
    /// Flag low-PD areas and plan revisit legs over them.
    RepairPlan {
        /// PD grid JSON written by `perfmap`.
        #[arg(long, value_name = "JSON")]
        pd: PathBuf,
        /// Plan JSON to write.
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
        /// Repair cell size in metres.
        #[arg(long)]
        cell_size: Option<f64>,
        /// PD threshold in [0, 1].
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum)]
        rule: Option<Rule>,
        /// Fraction used by --rule fraction.
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        /// Original mission heading in radians, clockwise from north.
        #[arg(long)]
        heading: Option<f64>,
        /// Mission image; supplies heading and start (last ping) when not given.
        #[arg(long, value_name = "PGM")]
        image: Option<PathBuf>,
        /// Vehicle start as E,N in metres.
        #[arg(long, value_name = "E,N", value_parser = parse_point)]
        start: Option<[f64; 2]>,
        /// Fly legs along the original heading instead of across it.
        #[arg(long)]
        same_heading: bool,
        /// Inspection raster of flagged cells and legs.
        #[arg(long, value_name = "PGM")]
        overlay: Option<PathBuf>,
        /// Overlay pixels per repair cell edge.
        #[arg(long, default_value_t = 4)]
        oversample: usize,
    },
    /// Write the labelling bundle (representative PNGs plus manifest) for the UI.
    LabelExport {
        #[arg(long, value_name = "JSON")]
        model: PathBuf,
        #[command(flatten)]
        source: ImageSource,
        /// Bundle directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Representatives per cluster.
        #[arg(short, long, default_value_t = 9)]
        k: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Insert { .. } => "insert",
            Command::AtrRun { .. } => "atr-run",
            Command::Perfmap { .. } => "perfmap",
            Command::ClusterTrain { .. } => "cluster-train",
            Command::ClusterReps { .. } => "cluster-reps",
            Command::Classify { .. } => "classify",
            Command::Merge { .. } => "merge",
            Command::Evaluate { .. } => "evaluate",
            Command::RepairPlan { .. } => "repair-plan",
            Command::LabelExport { .. } => "label-export",
        }
    }
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected E,N, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprint!("{}", e.render());
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json(None));
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    match commands::run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json(Some(name)));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
