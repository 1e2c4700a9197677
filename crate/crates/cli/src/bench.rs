use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use graphvid::bench::{run_bench_on, BenchConfig, BenchReport};
use graphvid::graph::{representation_size, RepresentationSize};
use graphvid::media::load_frame_sequence;
use graphvid::rgcn::{count_flops, count_params};
use graphvid::store::{to_debug_json, write_atomic};
use graphvid::synth::scene_clip;
use graphvid::{read_graph, FrameFormat, ModelConfig};

use crate::{file_stem, graph_files, parse_format, precondition};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Superpixel counts to time, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "200,400,600,800,1000,1200,1400,1600,1800,2000")]
    superpixels: Vec<usize>,
    /// Frames per timed clip.
    #[arg(long, default_value_t = 4)]
    frames: usize,
    /// Timed clips per superpixel count (one extra warm-up clip is never timed).
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Synthetic frame height.
    #[arg(long, default_value_t = 224)]
    height: usize,
    /// Synthetic frame width.
    #[arg(long, default_value_t = 224)]
    width: usize,
    /// Time on this frame sequence instead of synthetic scenes.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "ppm", value_parser = parse_format)]
    format: FrameFormat,
    /// Directory for bench.json and bench.csv.
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run_bench(args: &BenchArgs) -> Result<()> {
    if args.frames == 0 || args.repetitions == 0 || args.superpixels.is_empty() {
        return Err(precondition("--frames, --repetitions and --superpixels must be non-empty"));
    }
    let clips: Vec<Vec<graphvid::Frame>> = match &args.input {
        Some(path) => {
            let frames = load_frame_sequence(path, args.format).with_context(|| format!("loading {}", path.display()))?;
            let clips: Vec<_> = frames.chunks_exact(args.frames).map(|c| c.to_vec()).collect();
            if clips.is_empty() {
                return Err(precondition(format!("{} has fewer than {} frames", path.display(), args.frames)));
            }
            clips
        }
        None => (0..=args.repetitions as u64)
            .map(|i| scene_clip(args.height, args.width, args.frames, args.seed.wrapping_add(i)))
            .collect(),
    };
    let config = BenchConfig {
        superpixels: args.superpixels.clone(),
        height: clips[0][0].height(),
        width: clips[0][0].width(),
        frames: args.frames,
        repetitions: args.repetitions,
        seed: args.seed,
    };
    let report: BenchReport = run_bench_on(&config, &clips)?;
    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("bench.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_atomic(&args.out.join("bench.csv"), report.to_csv().as_bytes())?;
    print!("{}", report.to_csv());
    println!("# {}", report.environment);
    Ok(())
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Graph files or directories of them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Frame height of the source video, for the pixel comparison.
    #[arg(long, default_value_t = 224)]
    height: usize,
    /// Frame width of the source video.
    #[arg(long, default_value_t = 224)]
    width: usize,
    /// Classes of the reference model used for FLOP counts.
    #[arg(long, default_value_t = 400)]
    classes: usize,
    /// Also write a human-readable `<name>.json` next to each graph.
    #[arg(long)]
    dump_json: bool,
}

pub fn run_stats(args: &StatsArgs) -> Result<()> {
    let config = ModelConfig::standard(args.classes);
    println!("model parameters {}", count_params(&config));
    println!("file\tnodes\tspatial\ttemporal\tvalues\tpixel_values\tratio\tgflops");
    for path in graph_files(&args.inputs)? {
        let graph = read_graph(&path).with_context(|| path.display().to_string())?;
        let size = RepresentationSize::new(&graph, args.height, args.width);
        debug_assert_eq!(size.total(), representation_size(&graph));
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.2}\t{:.3}",
            file_stem(&path),
            graph.node_count(),
            graph.spatial_edges.len(),
            graph.temporal_edges.len(),
            size.total(),
            size.pixel_values,
            size.compression_ratio(),
            count_flops(&config, &graph).total() as f64 / 1e9
        );
        if args.dump_json {
            write_atomic(&path.with_extension("json"), to_debug_json(&graph).as_bytes())?;
        }
    }
    Ok(())
}
