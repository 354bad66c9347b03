//! `mtpcr`: register aerial and terrestrial point clouds through BEV images.
//!
//! Exit codes:
//!
//! | code | meaning                                             |
//! |------|-----------------------------------------------------|
//! | 0    | success                                             |
//! | 2    | usage error (bad or missing arguments)              |
//! | 3    | I/O error                                           |
//! | 4    | malformed input (cloud, config or JSON file)        |
//! | 5    | invalid parameter                                   |
//! | 6    | empty point cloud                                   |
//! | 7    | too few points                                      |
//! | 8    | degenerate extent                                   |
//! | 9    | no ground plane consensus                           |
//! | 10   | external matcher failure                            |
//! | 11   | keypoint on an empty pixel                          |
//! | 12   | too few correspondences                             |
//! | 13   | degenerate correspondence configuration             |
//! | 14   | outlier rejection did not converge                  |
//! | 15   | no ICP correspondences in range                     |
//! | 16   | unsatisfiable overlap target                        |

mod commands;
mod config;
mod viz;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtpcr::Error;

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "mtpcr", version, about = "BEV-based registration of aerial and terrestrial point clouds")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register SOURCE onto TARGET and write the transform and stage report.
    Register {
        source: PathBuf,
        target: PathBuf,
        /// Directory receiving transform.json and report.json; without it
        /// the transform is printed.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Known source-to-target transform; adds errors to the report.
        #[arg(long, value_name = "FILE")]
        ground_truth: Option<PathBuf>,
    },
    /// Rasterize a cloud to a BEV image with a metadata sidecar.
    Bev {
        cloud: PathBuf,
        /// Output image (P5). The raw image goes next to it as *.raw.pgm and
        /// metadata as *.json.
        #[arg(long)]
        out: PathBuf,
        /// Pixels per meter; defaults to the density-adaptive value.
        #[arg(long)]
        res: Option<f64>,
        /// Rotate the fitted ground plane onto XOY before rasterizing.
        #[arg(long)]
        align: bool,
    },
    /// Generate a synthetic aerial/terrestrial scene.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// Scene specification (JSON); replaces the config file's scene.
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        /// Target overlap ratio.
        #[arg(long)]
        overlap: Option<f64>,
        #[arg(long, default_value = "ply")]
        format: mtpcr::cloud::CloudFormat,
    },
    /// Run the random-perturbation benchmark. Without clouds, a synthetic
    /// scene is generated from the configuration.
    Bench {
        #[arg(requires = "target")]
        source: Option<PathBuf>,
        target: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        ground_truth: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trials: Option<u64>,
        /// Trials run in parallel; results do not depend on it.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        /// Aggregate JSON report; printed when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-trial CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Match two images and draw the matches side by side.
    Matchviz {
        img_a: PathBuf,
        img_b: PathBuf,
        /// Composite image (P5).
        #[arg(long)]
        out: PathBuf,
        /// Match list in the external-matcher JSON format.
        #[arg(long)]
        matches: Option<PathBuf>,
    },
    /// Print the resolved configuration.
    Config,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io { .. } => 3,
        Error::Parse { .. } => 4,
        Error::InvalidParameter(_) => 5,
        Error::EmptyCloud => 6,
        Error::InsufficientPoints(_) => 7,
        Error::DegenerateExtent => 8,
        Error::NoConsensus { .. } => 9,
        Error::ExternalMatcherFailure(_) => 10,
        Error::EmptyPixel { .. } => 11,
        Error::TooFewCorrespondences(_) => 12,
        Error::DegenerateConfiguration => 13,
        Error::ConvergenceFailed => 14,
        Error::NoCorrespondencesInRange(_) => 15,
        Error::UnsatisfiableOverlap { .. } => 16,
        Error::Stage { .. } => unreachable!("root strips stage wrappers"),
    }
}

fn run(cli: Cli) -> mtpcr::Result<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Register {
            source,
            target,
            out_dir,
            ground_truth,
        } => commands::register(&cfg, &source, &target, out_dir.as_deref(), ground_truth.as_deref()),
        Command::Bev { cloud, out, res, align } => commands::bev(&cfg, &cloud, &out, res, align),
        Command::Synth {
            out_dir,
            spec,
            overlap,
            format,
        } => commands::synth(&cfg, &cli.overrides, &out_dir, spec.as_deref(), overlap, format),
        Command::Bench {
            source,
            target,
            ground_truth,
            trials,
            jobs,
            out,
            csv,
        } => {
            let clouds = source.zip(target);
            commands::bench(
                &cfg,
                clouds.as_ref().map(|(s, t)| (s.as_path(), t.as_path())),
                ground_truth.as_deref(),
                trials.map(|t| t as usize),
                jobs as usize,
                out.as_deref(),
                csv.as_deref(),
            )
        }
        Command::Matchviz {
            img_a,
            img_b,
            out,
            matches,
        } => commands::matchviz(&cfg, &img_a, &img_b, &out, matches.as_deref()),
        Command::Config => {
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
