use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use graphvid::augment::{augment, clip_seed};
use graphvid::graph::{build_video_graph, BuilderConfig, RepresentationSize};
use graphvid::media::{clip_specs, load_frame_sequence, video_id, ClipSpec};
use graphvid::store::{decode_graph, encode_graph, write_atomic, write_graph};
use graphvid::{read_graph, Frame, FrameFormat, SlicConfig, VideoGraph};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::{file_stem, graph_files, parse_format, precondition, AugmentFlags};

pub const CACHE_ENV: &str = "GRAPHVID_CACHE_DIR";

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Frame sequences: PPM directories or raw RGB24 dumps.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory for `<video>_<start>.gvg` files.
    #[arg(long, short)]
    out: PathBuf,
    /// Frame sequence format: ppm or raw_rgb.
    #[arg(long, default_value = "ppm", value_parser = parse_format)]
    format: FrameFormat,
    /// Target superpixels per frame.
    #[arg(long, default_value_t = 800)]
    superpixels: usize,
    /// Temporal matching radius in normalized units [default: min(1, 2/sqrt(S))].
    #[arg(long)]
    d_proximity: Option<f64>,
    /// Frames per clip.
    #[arg(long, default_value_t = 20)]
    window: usize,
    /// Step between consecutive frames of a clip.
    #[arg(long, default_value_t = 2)]
    frame_stride: usize,
    /// Step between consecutive clip starts.
    #[arg(long, default_value_t = 10)]
    clip_stride: usize,
}

struct ClipJob<'a> {
    spec: ClipSpec,
    frames: Vec<&'a Frame>,
    out: PathBuf,
}

fn cache_key(frames: &[&Frame], slic: &SlicConfig, builder: &BuilderConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"gvg-cache-1");
    let params = serde_json::json!({
        "superpixels": slic.target_superpixels,
        "compactness": slic.compactness,
        "iterations": slic.iterations,
        "min_region_fraction": slic.min_region_fraction,
        "d_proximity": builder.d_proximity,
    });
    h.update(params.to_string().as_bytes());
    for f in frames {
        h.update((f.height() as u64).to_le_bytes());
        h.update((f.width() as u64).to_le_bytes());
        for v in f.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds a clip's graph, consulting the cache directory when one is set.
fn build_clip(frames: &[&Frame], slic: &SlicConfig, builder: &BuilderConfig, cache: Option<&Path>) -> Result<VideoGraph> {
    let Some(dir) = cache else {
        return Ok(build_video_graph(frames, slic, builder)?);
    };
    let path = dir.join(format!("{}.gvg", cache_key(frames, slic, builder)));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(graph) = decode_graph(&bytes) {
            return Ok(graph);
        }
    }
    let graph = build_video_graph(frames, slic, builder)?;
    fs::create_dir_all(dir).with_context(|| format!("creating cache {}", dir.display()))?;
    write_atomic(&path, &encode_graph(&graph)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(graph)
}

pub fn run_build(args: &BuildArgs) -> Result<()> {
    for (name, v) in [
        ("--window", args.window),
        ("--frame-stride", args.frame_stride),
        ("--clip-stride", args.clip_stride),
        ("--superpixels", args.superpixels),
    ] {
        if v == 0 {
            return Err(precondition(format!("{name} must be >= 1")));
        }
    }
    let slic = SlicConfig::with_superpixels(args.superpixels);
    let builder = match args.d_proximity {
        Some(d) => BuilderConfig::new(d)?,
        None => BuilderConfig::default_for(args.superpixels),
    };
    let cache = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let videos: Vec<(String, Vec<Frame>)> = args
        .inputs
        .iter()
        .map(|input| {
            let frames = load_frame_sequence(input, args.format).with_context(|| format!("loading {}", input.display()))?;
            Ok((video_id(input, args.format), frames))
        })
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for (id, frames) in &videos {
        let specs = clip_specs(id, frames.len(), args.window, args.frame_stride, args.clip_stride);
        if specs.is_empty() {
            return Err(precondition(format!(
                "{id}: {} frames, a clip spans {}",
                frames.len(),
                (args.window - 1) * args.frame_stride + 1
            )));
        }
        for spec in specs {
            let out = args.out.join(format!("{}_{}.gvg", spec.source_video_id, spec.start_frame));
            jobs.push(ClipJob {
                frames: spec.gather(frames),
                spec,
                out,
            });
        }
    }

    let sizes: Vec<RepresentationSize> = jobs
        .par_iter()
        .map(|job| {
            let graph = build_clip(&job.frames, &slic, &builder, cache.as_deref())
                .with_context(|| format!("{} clip at frame {}", job.spec.source_video_id, job.spec.start_frame))?;
            write_graph(&graph, &job.out)?;
            let f = job.frames[0];
            Ok(RepresentationSize::new(&graph, f.height(), f.width()))
        })
        .collect::<Result<_>>()?;

    let values: usize = sizes.iter().map(|s| s.total()).sum();
    let pixels: usize = sizes.iter().map(|s| s.pixel_values).sum();
    println!(
        "wrote {} graph files to {}\ngraph values {values}, pixel values {pixels}, ratio {:.2}x",
        jobs.len(),
        args.out.display(),
        pixels as f64 / values.max(1) as f64
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// Graph files or directories of them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory; files keep their names.
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    flags: AugmentFlags,
    /// Global seed; each file derives its own stream from it and its name.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run_augment(args: &AugmentArgs) -> Result<()> {
    let base = args.flags.config(args.seed)?;
    let files = graph_files(&args.inputs)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    files.par_iter().try_for_each(|path| -> Result<()> {
        let graph = read_graph(path)?;
        let config = graphvid::AugmentConfig {
            seed: clip_seed(args.seed, &file_stem(path)),
            ..base
        };
        let out = augment(&graph, &config)?;
        let name = path.file_name().context("input without file name")?;
        write_graph(&out.graph, &args.out.join(name))?;
        Ok(())
    })?;
    println!("augmented {} graph files into {}", files.len(), args.out.display());
    Ok(())
}
