mod bench;
mod build;
mod model;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphvid::augment::AugmentError;
use graphvid::graph::GraphError;
use graphvid::rgcn::ModelError;
use graphvid::slic::SlicError;
use graphvid::{AugmentConfig, FrameFormat};

/// Exit code for invalid inputs or configurations.
pub const EXIT_PRECONDITION: u8 = 3;

#[derive(Parser)]
#[command(name = "graphvid", version, about = "Superpixel video graphs: build, augment, train, infer, bench")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment frame sequences and write one graph file per clip.
    Build(build::BuildArgs),
    /// Apply the training augmentations to graph files.
    Augment(build::AugmentArgs),
    /// Train the relational GCN from graph files and a label manifest.
    Train(model::TrainArgs),
    /// Classify videos by averaging logits over evenly spaced clips.
    Infer(model::InferArgs),
    /// Time graph generation over a range of superpixel counts.
    Bench(bench::BenchArgs),
    /// Report sizes, compression and model cost of graph files.
    Stats(bench::StatsArgs),
}

/// Augmentation flags shared by `augment` and `train`.
#[derive(Args, Clone, Debug)]
pub struct AugmentFlags {
    /// Std of the Gaussian noise added to edge distances.
    #[arg(long, default_value_t = 0.4)]
    sigma_edge: f64,
    /// Std of the Gaussian noise added to node colors.
    #[arg(long, default_value_t = 0.2)]
    sigma_node: f64,
    /// Keep probability of each spatial edge.
    #[arg(long, default_value_t = 1.0)]
    p_edge: f64,
    /// Keep probability of each superpixel.
    #[arg(long, default_value_t = 0.8)]
    p_node: f64,
}

impl AugmentFlags {
    pub fn config(&self, seed: u64) -> anyhow::Result<AugmentConfig> {
        let config = AugmentConfig {
            sigma_edge: self.sigma_edge,
            sigma_node: self.sigma_node,
            p_edge: self.p_edge,
            p_node: self.p_node,
            seed,
        };
        config.validate().map_err(precondition)?;
        Ok(config)
    }
}

/// Marks an error as a violated precondition rather than a runtime failure.
#[derive(Debug)]
pub struct Precondition(pub String);

impl std::fmt::Display for Precondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Precondition {}

pub fn precondition(e: impl std::fmt::Display) -> anyhow::Error {
    Precondition(e.to_string()).into()
}

fn is_precondition(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Precondition>()
            || c.is::<SlicError>()
            || c.is::<AugmentError>()
            || matches!(c.downcast_ref::<GraphError>(), Some(GraphError::BadProximity(_) | GraphError::Segmentation(_)))
            || matches!(
                c.downcast_ref::<ModelError>(),
                Some(
                    ModelError::InvalidConfig(_)
                        | ModelError::UnsupportedKind(_)
                        | ModelError::BadLabel { .. }
                        | ModelError::DimensionMismatch(_)
                )
            )
    })
}

pub fn parse_format(s: &str) -> Result<FrameFormat, String> {
    s.parse()
}

/// Expands directories into their `.gvg` files, sorted by name.
pub fn graph_files(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "gvg"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        return Err(precondition("no graph files given"));
    }
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Build(args) => build::run_build(&args),
        Command::Augment(args) => build::run_augment(&args),
        Command::Train(args) => model::run_train(&args),
        Command::Infer(args) => model::run_infer(&args),
        Command::Bench(args) => bench::run_bench(&args),
        Command::Stats(args) => bench::run_stats(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_precondition(&e) {
                ExitCode::from(EXIT_PRECONDITION)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
