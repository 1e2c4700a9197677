//! Generation-time benchmark over a range of superpixel counts.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::graph::{build_from_segmentations, segment_frames, BuilderConfig, GraphError};
use crate::media::Frame;
use crate::slic::SlicConfig;
use crate::synth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub superpixels: Vec<usize>,
    pub height: usize,
    pub width: usize,
    /// Frames per clip.
    pub frames: usize,
    /// Timed clips per superpixel count, after one untimed warm-up clip.
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            superpixels: (1..=10).map(|k| 200 * k).collect(),
            height: 224,
            width: 224,
            frames: 4,
            repetitions: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub superpixels: usize,
    /// Mean seconds per clip for segmentation plus graph construction.
    pub mean_seconds: f64,
    /// Population standard deviation; 0 for a single clip.
    pub std_seconds: f64,
    pub clips: usize,
    pub segmentation_mean_seconds: f64,
    pub graph_mean_seconds: f64,
    pub mean_nodes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Sorted by ascending superpixel count.
    pub rows: Vec<BenchRow>,
    pub environment: String,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "superpixels,mean_seconds,std_seconds,clips,segmentation_mean_seconds,graph_mean_seconds,mean_nodes\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{:.6},{:.6},{:.1}\n",
                r.superpixels,
                r.mean_seconds,
                r.std_seconds,
                r.clips,
                r.segmentation_mean_seconds,
                r.graph_mean_seconds,
                r.mean_nodes
            ));
        }
        out
    }

    /// Whether mean time rises with every step in superpixel count.
    pub fn strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mean_seconds > w[0].mean_seconds)
    }
}

pub fn environment_note() -> String {
    format!(
        "{} {}, {} worker threads; absolute times depend on the machine",
        std::env::consts::OS,
        std::env::consts::ARCH,
        rayon::current_num_threads()
    )
}

/// Seconds spent in segmentation and in graph construction for one clip,
/// plus the node count.
pub fn time_clip(frames: &[Frame], superpixels: usize) -> Result<(f64, f64, usize), GraphError> {
    let refs: Vec<&Frame> = frames.iter().collect();
    let slic = SlicConfig::with_superpixels(superpixels);
    let builder = BuilderConfig::default_for(superpixels);
    let t0 = Instant::now();
    let segs = segment_frames(&refs, &slic)?;
    let t1 = Instant::now();
    let graph = build_from_segmentations(&segs, &builder);
    let t2 = Instant::now();
    Ok(((t1 - t0).as_secs_f64(), (t2 - t1).as_secs_f64(), graph.node_count()))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the benchmark on synthetic scenes. Clips are rendered before
/// timing starts.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, GraphError> {
    let clips: Vec<Vec<Frame>> = (0..=config.repetitions as u64)
        .map(|i| synth::scene_clip(config.height, config.width, config.frames, config.seed.wrapping_add(i)))
        .collect();
    run_bench_on(config, &clips)
}

/// Like [`run_bench`] over caller-provided clips. `clips[0]` is the warm-up
/// clip and is never timed; the rest are cycled to reach `repetitions`.
pub fn run_bench_on(config: &BenchConfig, clips: &[Vec<Frame>]) -> Result<BenchReport, GraphError> {
    if clips.is_empty() {
        return Err(GraphError::NoFrames);
    }
    let timed: Vec<&Vec<Frame>> = if clips.len() > 1 {
        clips[1..].iter().cycle().take(config.repetitions).collect()
    } else {
        std::iter::repeat_n(&clips[0], config.repetitions).collect()
    };
    let mut sizes = config.superpixels.clone();
    sizes.sort_unstable();
    sizes.dedup();
    for &s in &sizes {
        time_clip(&clips[0], s)?;
    }
    // Each repetition sweeps every size so slow drift in machine speed
    // spreads evenly over the rows.
    let mut samples = vec![Vec::with_capacity(timed.len()); sizes.len()];
    for clip in &timed {
        for (i, &s) in sizes.iter().enumerate() {
            samples[i].push(time_clip(clip, s)?);
        }
    }
    let rows = sizes
        .iter()
        .zip(&samples)
        .map(|(&s, runs)| {
            let totals: Vec<f64> = runs.iter().map(|r| r.0 + r.1).collect();
            let (mean, std) = mean_std(&totals);
            let k = runs.len().max(1) as f64;
            BenchRow {
                superpixels: s,
                mean_seconds: mean,
                std_seconds: std,
                clips: runs.len(),
                segmentation_mean_seconds: runs.iter().map(|r| r.0).sum::<f64>() / k,
                graph_mean_seconds: runs.iter().map(|r| r.1).sum::<f64>() / k,
                mean_nodes: runs.iter().map(|r| r.2 as f64).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(BenchReport {
        rows,
        environment: environment_note(),
    })
}
