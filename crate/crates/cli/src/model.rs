use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use graphvid::augment::{augment, clip_seed};
use graphvid::rgcn::{load_checkpoint, save_checkpoint, AdamState, MessageGraph, Mode};
use graphvid::{read_graph, ModelConfig, RgcnModel, VideoGraph};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::{file_stem, graph_files, precondition, AugmentFlags};

#[derive(Debug, Deserialize)]
struct ManifestRow {
    file: PathBuf,
    label: usize,
}

/// Reads a `file,label` CSV. Relative paths resolve against the manifest's
/// directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, usize)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening manifest {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| precondition(format!("manifest row {}: {e}", i + 1)))?;
        let file = if row.file.is_absolute() { row.file } else { base.join(row.file) };
        if !file.is_file() {
            return Err(precondition(format!("manifest row {}: {} does not exist", i + 1, file.display())));
        }
        rows.push((file, row.label));
    }
    if rows.is_empty() {
        return Err(precondition(format!("manifest {} lists no files", path.display())));
    }
    Ok(rows)
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// CSV with columns `file,label`.
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint to write.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Adam learning rate, held constant.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Number of classes [default: largest label + 1].
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 256)]
    embed_dim: usize,
    #[arg(long, default_value_t = 512)]
    hidden_dim: usize,
    /// Relational layers.
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[command(flatten)]
    augment: AugmentFlags,
    /// Train on the stored graphs as they are.
    #[arg(long)]
    no_augment: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn eval_accuracy(model: &RgcnModel<f32>, graphs: &[MessageGraph<f32>], labels: &[usize]) -> Result<f64> {
    let hits = graphs
        .par_iter()
        .zip(labels)
        .map(|(g, &l)| Ok(usize::from(argmax(model.forward(g, Mode::Eval)?.as_slice().unwrap_or(&[])) == l)))
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / graphs.len() as f64)
}

fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    if args.batch_size == 0 || args.epochs == 0 {
        return Err(precondition("--epochs and --batch-size must be >= 1"));
    }
    let rows = read_manifest(&args.manifest)?;
    let max_label = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let classes = args.classes.unwrap_or(max_label + 1);
    if max_label >= classes {
        return Err(precondition(format!("label {max_label} does not fit {classes} classes")));
    }
    let config = ModelConfig {
        gnn_layers: args.layers,
        dropout_p: args.dropout,
        ..ModelConfig::small(args.embed_dim, args.hidden_dim, classes)
    };
    let augment_base = args.augment.config(args.seed)?;
    let mut model = RgcnModel::<f32>::new(config, args.seed)?;
    let graphs: Vec<(String, VideoGraph)> = rows
        .par_iter()
        .map(|(path, _)| Ok((file_stem(path), read_graph(path).with_context(|| path.display().to_string())?)))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let clean: Vec<MessageGraph<f32>> = graphs
        .iter()
        .map(|(_, g)| MessageGraph::new(g, model.config.relations))
        .collect::<Result<_, _>>()?;

    let mut adam = AdamState::new(&model.config);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    for epoch in 0..args.epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for batch in order.chunks(args.batch_size) {
            let inputs: Vec<MessageGraph<f32>> = batch
                .par_iter()
                .map(|&i| {
                    if args.no_augment {
                        return Ok(clean[i].clone());
                    }
                    let (name, graph) = &graphs[i];
                    let config = graphvid::AugmentConfig {
                        seed: clip_seed(args.seed.wrapping_add(epoch as u64), name),
                        ..augment_base
                    };
                    let aug = augment(graph, &config)?;
                    // superpixel removal can empty a tiny graph; keep the original then
                    if aug.graph.is_empty() {
                        return Ok(clean[i].clone());
                    }
                    Ok(MessageGraph::new(&aug.graph, model.config.relations)?)
                })
                .collect::<Result<_>>()?;
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            losses.push(model.train_step(&inputs, &batch_labels, &mut adam, args.lr, &mut rng)?);
        }
        println!(
            "epoch {:>3}  loss {:.4}",
            epoch + 1,
            losses.iter().sum::<f64>() / losses.len() as f64
        );
    }
    println!("train accuracy {:.4}", eval_accuracy(&model, &clean, &labels)?);
    save_checkpoint(&model, &args.out)?;
    println!("saved {}", args.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Graph files or directories. Files named `<video>_<start>.gvg` are
    /// grouped by video and ordered by start frame.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Clips averaged per video, evenly spaced over its clips.
    #[arg(long, default_value_t = 8)]
    views: usize,
    /// Optional `file,label` CSV to score top-1/top-5 accuracy.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// `video_12` -> (`video`, 12); names without a numeric suffix form their
/// own group.
pub fn split_clip_name(stem: &str) -> (String, usize) {
    match stem.rsplit_once('_') {
        Some((video, start)) if !video.is_empty() => match start.parse() {
            Ok(n) => (video.to_string(), n),
            Err(_) => (stem.to_string(), 0),
        },
        _ => (stem.to_string(), 0),
    }
}

pub fn run_infer(args: &InferArgs) -> Result<()> {
    if args.views == 0 {
        return Err(precondition("--views must be >= 1"));
    }
    let model: RgcnModel<f32> = load_checkpoint(&args.checkpoint)?;
    let files = graph_files(&args.inputs)?;
    let mut videos: BTreeMap<String, Vec<(usize, PathBuf)>> = BTreeMap::new();
    for f in files {
        let (video, start) = split_clip_name(&file_stem(&f));
        videos.entry(video).or_default().push((start, f));
    }
    let labels: Option<BTreeMap<PathBuf, usize>> = match &args.manifest {
        Some(m) => Some(
            read_manifest(m)?
                .into_iter()
                .map(|(p, l)| (p.canonicalize().unwrap_or(p), l))
                .collect(),
        ),
        None => None,
    };

    let (mut top1, mut top5, mut scored) = (0usize, 0usize, 0usize);
    for (video, mut clips) in videos {
        clips.sort();
        let graphs: Vec<MessageGraph<f32>> = clips
            .iter()
            .map(|(_, p)| {
                let g = read_graph(p).with_context(|| p.display().to_string())?;
                Ok(MessageGraph::new(&g, model.config.relations)?)
            })
            .collect::<Result<_>>()?;
        let view = model.infer_views(&graphs, args.views)?;
        let best = view.top_k(5);
        let mut line = format!("{video}\tclips {}\ttop1 {}\ttop5 {:?}", clips.len(), best[0], best);
        if let Some(labels) = &labels {
            let mut truth = None;
            for (_, p) in &clips {
                let key = p.canonicalize().unwrap_or(p.clone());
                let l = *labels
                    .get(&key)
                    .ok_or_else(|| precondition(format!("{} is missing from the manifest", p.display())))?;
                if truth.is_some_and(|t| t != l) {
                    return Err(precondition(format!("clips of {video} carry different labels")));
                }
                truth = Some(l);
            }
            let truth = truth.expect("every video has a clip");
            top1 += usize::from(best[0] == truth);
            top5 += usize::from(best.contains(&truth));
            scored += 1;
            line.push_str(&format!("\tlabel {truth}"));
        }
        println!("{line}");
    }
    if scored > 0 {
        println!(
            "top-1 {:.4}  top-5 {:.4}  over {scored} videos",
            top1 as f64 / scored as f64,
            top5 as f64 / scored as f64
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_names_split_on_last_underscore() {
        assert_eq!(split_clip_name("walk_dog_30"), ("walk_dog".into(), 30));
        assert_eq!(split_clip_name("clip"), ("clip".into(), 0));
        assert_eq!(split_clip_name("a_b"), ("a_b".into(), 0));
        assert_eq!(split_clip_name("_5"), ("_5".into(), 0));
    }
}
