//! Video graphs: superpixels as nodes, region adjacency inside a frame as
//! spatial edges, and color matching within a proximity ball between
//! consecutive frames as temporal edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::Frame;
use crate::slic::{self, Segmentation, SlicConfig, SlicError};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("a video graph needs at least one frame")]
    NoFrames,
    #[error("frames differ in size: {0:?} vs {1:?}")]
    MixedDimensions((usize, usize), (usize, usize)),
    #[error("d_proximity must lie in (0, 1], got {0}")]
    BadProximity(f64),
    #[error(transparent)]
    Segmentation(#[from] SlicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Spatial,
    Temporal,
}

impl Relation {
    pub const ALL: [Relation; 2] = [Relation::Spatial, Relation::Temporal];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub frame_index: u32,
    /// Centroid row divided by frame height.
    pub norm_y: f32,
    /// Centroid column divided by frame width.
    pub norm_x: f32,
    pub color: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: u32,
    pub target: u32,
    pub relation: Relation,
    /// Normalized centroid distance between the endpoints.
    pub distance: f32,
}

/// `G = (V, E, R)` with `R = {spatial, temporal}`.
///
/// Spatial edges are undirected and stored once as `(low id, high id)`.
/// Temporal edges are directed from frame `t` to frame `t + 1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoGraph {
    pub nodes: Vec<Node>,
    pub spatial_edges: Vec<Edge>,
    pub temporal_edges: Vec<Edge>,
    pub frame_count: usize,
}

impl VideoGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.spatial_edges.len() + self.temporal_edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.spatial_edges.iter().chain(&self.temporal_edges)
    }

    pub fn edges_of(&self, relation: Relation) -> &[Edge] {
        match relation {
            Relation::Spatial => &self.spatial_edges,
            Relation::Temporal => &self.temporal_edges,
        }
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id as usize != i {
                return Err(format!("node at position {i} carries id {}", n.id));
            }
            if !(0.0..=1.0).contains(&n.norm_y) || !(0.0..=1.0).contains(&n.norm_x) {
                return Err(format!("node {i} has coordinates outside [0, 1]"));
            }
            if self.frame_count > 0 && n.frame_index as usize >= self.frame_count {
                return Err(format!("node {i} lies in frame {} of {}", n.frame_index, self.frame_count));
            }
        }
        let node = |id: u32| {
            self.nodes
                .get(id as usize)
                .ok_or_else(|| format!("edge references missing node {id}"))
        };
        for e in &self.spatial_edges {
            let (a, b) = (node(e.source)?, node(e.target)?);
            if e.relation != Relation::Spatial || e.source >= e.target {
                return Err(format!("bad spatial edge {e:?}"));
            }
            if a.frame_index != b.frame_index {
                return Err(format!("spatial edge {e:?} crosses frames"));
            }
        }
        for e in &self.temporal_edges {
            let (a, b) = (node(e.source)?, node(e.target)?);
            if e.relation != Relation::Temporal || b.frame_index != a.frame_index + 1 {
                return Err(format!("bad temporal edge {e:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuilderConfig {
    /// Radius of the temporal matching ball, in normalized units.
    pub d_proximity: f64,
}

impl BuilderConfig {
    pub fn new(d_proximity: f64) -> Result<Self, GraphError> {
        if d_proximity > 0.0 && d_proximity <= 1.0 {
            Ok(Self { d_proximity })
        } else {
            Err(GraphError::BadProximity(d_proximity))
        }
    }

    /// `2 / sqrt(S)` capped at 1: about one superpixel diameter.
    pub fn default_for(superpixels: usize) -> Self {
        Self {
            d_proximity: (2.0 / (superpixels.max(1) as f64).sqrt()).min(1.0),
        }
    }
}

/// Euclidean distance between two pixel-space centroids after dividing rows
/// by `height` and columns by `width`.
pub fn normalized_distance(a: (f64, f64), b: (f64, f64), height: f64, width: f64) -> f64 {
    let dy = (a.0 - b.0) / height;
    let dx = (a.1 - b.1) / width;
    (dy * dy + dx * dx).sqrt()
}

/// Distance between two nodes' normalized centroids.
pub fn centroid_distance(a: &Node, b: &Node) -> f64 {
    let dy = f64::from(a.norm_y) - f64::from(b.norm_y);
    let dx = f64::from(a.norm_x) - f64::from(b.norm_x);
    (dy * dy + dx * dx).sqrt()
}

fn color_distance_sq(a: &Node, b: &Node) -> f64 {
    a.color
        .iter()
        .zip(&b.color)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum()
}

/// Turns one frame's regions into nodes with ids starting at `first_id`.
pub fn frame_nodes(segmentation: &Segmentation, frame_index: usize, first_id: u32) -> Vec<Node> {
    let h = segmentation.height() as f64;
    let w = segmentation.width() as f64;
    segmentation
        .regions()
        .iter()
        .enumerate()
        .map(|(i, r)| Node {
            id: first_id + i as u32,
            frame_index: frame_index as u32,
            norm_y: (r.centroid_y / h) as f32,
            norm_x: (r.centroid_x / w) as f32,
            color: r.mean_color.map(|c| c as f32),
        })
        .collect()
}

/// Region adjacency under 4-connectivity. `nodes[k]` must describe region
/// `k` of `segmentation`. Each adjacent pair is emitted once, low id first,
/// sorted.
pub fn build_spatial_edges(segmentation: &Segmentation, nodes: &[Node]) -> Vec<Edge> {
    let (h, w) = (segmentation.height(), segmentation.width());
    let labels = segmentation.labels();
    let mut adjacent: Vec<Vec<u32>> = vec![Vec::new(); segmentation.region_count()];
    let mut link = |a: u32, b: u32| {
        if a == b {
            return;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let list = &mut adjacent[lo as usize];
        if !list.contains(&hi) {
            list.push(hi);
        }
    };
    for y in 0..h {
        let row = &labels[y * w..(y + 1) * w];
        for x in 0..w {
            if x + 1 < w {
                link(row[x], row[x + 1]);
            }
            if y + 1 < h {
                link(row[x], labels[(y + 1) * w + x]);
            }
        }
    }
    let mut edges = Vec::new();
    for (lo, list) in adjacent.iter_mut().enumerate() {
        list.sort_unstable();
        for &hi in list.iter() {
            let (a, b) = (&nodes[lo], &nodes[hi as usize]);
            edges.push(Edge {
                source: a.id,
                target: b.id,
                relation: Relation::Spatial,
                distance: centroid_distance(a, b) as f32,
            });
        }
    }
    edges
}

/// For each node of frame `t`, links to the most similarly colored node of
/// frame `t + 1` among those strictly closer than `d_proximity`. Nodes with
/// no candidate get no edge. Equal color distances are resolved by the
/// smaller centroid distance, then by the lowest id.
pub fn build_temporal_edges(current: &[Node], next: &[Node], d_proximity: f64) -> Vec<Edge> {
    current
        .iter()
        .filter_map(|a| {
            let mut best: Option<(&Node, f64, f64)> = None;
            for b in next {
                let d = centroid_distance(a, b);
                if d >= d_proximity {
                    continue;
                }
                let c = color_distance_sq(a, b);
                match best {
                    Some((prev, pc, pd))
                        if (pc, pd, prev.id) <= (c, d, b.id) => {}
                    _ => best = Some((b, c, d)),
                }
            }
            best.map(|(b, _, d)| Edge {
                source: a.id,
                target: b.id,
                relation: Relation::Temporal,
                distance: d as f32,
            })
        })
        .collect()
}

/// Compiles already segmented frames into a video graph. Node ids are dense
/// and frame-major.
pub fn build_from_segmentations(segmentations: &[Segmentation], builder: &BuilderConfig) -> VideoGraph {
    let mut offsets = Vec::with_capacity(segmentations.len());
    let mut next = 0u32;
    for s in segmentations {
        offsets.push(next);
        next += s.region_count() as u32;
    }
    let per_frame: Vec<(Vec<Node>, Vec<Edge>)> = segmentations
        .par_iter()
        .enumerate()
        .map(|(t, seg)| {
            let nodes = frame_nodes(seg, t, offsets[t]);
            let spatial = build_spatial_edges(seg, &nodes);
            (nodes, spatial)
        })
        .collect();
    let temporal: Vec<Vec<Edge>> = per_frame
        .par_windows(2)
        .map(|pair| build_temporal_edges(&pair[0].0, &pair[1].0, builder.d_proximity))
        .collect();

    let mut graph = VideoGraph {
        frame_count: segmentations.len(),
        ..VideoGraph::default()
    };
    for (nodes, spatial) in per_frame {
        graph.nodes.extend(nodes);
        graph.spatial_edges.extend(spatial);
    }
    graph.temporal_edges = temporal.into_iter().flatten().collect();
    graph
}

/// Segments every frame (in parallel) and compiles the clip's video graph.
pub fn build_video_graph(
    frames: &[&Frame],
    slic_config: &SlicConfig,
    builder: &BuilderConfig,
) -> Result<VideoGraph, GraphError> {
    let segmentations = segment_frames(frames, slic_config)?;
    BuilderConfig::new(builder.d_proximity)?;
    Ok(build_from_segmentations(&segmentations, builder))
}

/// Segments a clip's frames, validating that they share one size.
pub fn segment_frames(frames: &[&Frame], slic_config: &SlicConfig) -> Result<Vec<Segmentation>, GraphError> {
    let first = frames.first().ok_or(GraphError::NoFrames)?;
    let dims = (first.height(), first.width());
    if let Some(f) = frames.iter().find(|f| (f.height(), f.width()) != dims) {
        return Err(GraphError::MixedDimensions(dims, (f.height(), f.width())));
    }
    frames
        .par_iter()
        .enumerate()
        .map(|(t, f)| {
            let mut s = slic::segment(f, slic_config)?;
            s.set_frame_index(t);
            Ok(s)
        })
        .collect()
}

/// Value count of a graph next to the raw pixel count it replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentationSize {
    /// Three values per edge: distance, source, target.
    pub edge_values: usize,
    /// Three color values plus two centroid values per node.
    pub node_values: usize,
    /// `T * C * H * W` of the clip the graph came from.
    pub pixel_values: usize,
}

impl RepresentationSize {
    pub fn new(graph: &VideoGraph, height: usize, width: usize) -> Self {
        Self {
            edge_values: 3 * graph.edge_count(),
            node_values: 5 * graph.node_count(),
            pixel_values: graph.frame_count * Frame::CHANNELS * height * width,
        }
    }

    pub fn total(&self) -> usize {
        self.edge_values + self.node_values
    }

    /// How many times smaller the graph is than the raw pixels.
    pub fn compression_ratio(&self) -> f64 {
        self.pixel_values as f64 / self.total().max(1) as f64
    }
}

/// Number of values needed to store the graph: `3|E| + 3|V| + 2|V|`.
pub fn representation_size(graph: &VideoGraph) -> usize {
    3 * graph.edge_count() + 5 * graph.node_count()
}

/// The closed-form budget `3(4S + (T-1)S) + C*T*S` for `S` superpixels over
/// `T` frames with `C` channels.
pub fn nominal_value_budget(superpixels: usize, frames: usize, channels: usize) -> usize {
    let s = superpixels;
    3 * (4 * s + frames.saturating_sub(1) * s) + channels * frames * s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u32, t: u32, y: f32, x: f32, color: [f32; 3]) -> Node {
        Node {
            id,
            frame_index: t,
            norm_y: y,
            norm_x: x,
            color,
        }
    }

    #[test]
    fn eq1_values() {
        let d = normalized_distance((10.0, 20.0), (40.0, 60.0), 100.0, 100.0);
        assert!((d - 0.5).abs() < 1e-12);
        let a = node(0, 0, 0.0, 0.0, [0.0; 3]);
        let b = node(1, 0, 1.0, 1.0, [0.0; 3]);
        assert_eq!(centroid_distance(&a, &a), 0.0);
        assert!((centroid_distance(&a, &b) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(centroid_distance(&a, &b), centroid_distance(&b, &a));
    }

    #[test]
    fn temporal_match_prefers_closest_color() {
        let a = node(0, 0, 0.5, 0.5, [0.5, 0.5, 0.5]);
        let b = node(1, 1, 0.55, 0.5, [0.4, 0.5, 0.5]);
        let c = node(2, 1, 0.5, 0.55, [0.9, 0.5, 0.5]);
        let edges = build_temporal_edges(&[a], &[b, c], 0.2);
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].source, edges[0].target), (0, 1));
        assert!((f64::from(edges[0].distance) - centroid_distance(&a, &b)).abs() < 1e-7);

        let far = node(3, 1, 0.9, 0.9, [0.5; 3]);
        assert!(build_temporal_edges(&[a], &[far], 0.2).is_empty());
    }

    #[test]
    fn temporal_ties_go_to_lowest_id() {
        let a = node(0, 0, 0.5, 0.5, [0.5; 3]);
        let b = node(7, 1, 0.5, 0.52, [0.6, 0.5, 0.5]);
        let c = node(4, 1, 0.52, 0.5, [0.4, 0.5, 0.5]);
        let edges = build_temporal_edges(&[a], &[b, c], 0.2);
        assert_eq!(edges[0].target, 4);
    }

    #[test]
    fn proximity_ball_is_open() {
        let a = node(0, 0, 0.0, 0.0, [0.0; 3]);
        let b = node(1, 1, 0.0, 0.5, [0.0; 3]);
        assert!(build_temporal_edges(&[a], &[b], 0.5).is_empty());
        assert_eq!(build_temporal_edges(&[a], &[b], 0.5001).len(), 1);
    }

    #[test]
    fn builder_config_bounds() {
        assert!(BuilderConfig::new(0.0).is_err());
        assert!(BuilderConfig::new(1.5).is_err());
        assert!(BuilderConfig::new(1.0).is_ok());
        assert_eq!(BuilderConfig::default_for(1).d_proximity, 1.0);
        assert!((BuilderConfig::default_for(400).d_proximity - 0.1).abs() < 1e-12);
    }

    #[test]
    fn uniform_two_frame_clip() {
        let f = Frame::filled(100, 100, [0.2, 0.4, 0.6]).unwrap();
        let g = build_video_graph(&[&f, &f], &SlicConfig::with_superpixels(4), &BuilderConfig::default_for(4)).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.spatial_edges.len(), 8);
        assert_eq!(g.temporal_edges.len(), 4);
        for e in &g.temporal_edges {
            assert_eq!(e.target, e.source + 4);
            assert_eq!(e.distance, 0.0);
        }
        assert_eq!(representation_size(&g), 76);
        g.check_invariants().unwrap();
    }

    #[test]
    fn single_frame_has_no_temporal_edges() {
        let f = Frame::filled(10, 10, [0.5; 3]).unwrap();
        let g = build_video_graph(&[&f], &SlicConfig::with_superpixels(4), &BuilderConfig::default_for(4)).unwrap();
        assert!(g.temporal_edges.is_empty());
        assert!(matches!(
            build_video_graph(&[], &SlicConfig::default(), &BuilderConfig::default_for(4)),
            Err(GraphError::NoFrames)
        ));
    }

    #[test]
    fn spatial_edge_small_cases() {
        let f = Frame::filled(2, 1, [0.0; 3]).unwrap();
        let one = Segmentation::from_labels(&f, vec![0, 0]).unwrap();
        assert!(build_spatial_edges(&one, &frame_nodes(&one, 0, 0)).is_empty());
        let two = Segmentation::from_labels(&f, vec![0, 1]).unwrap();
        let edges = build_spatial_edges(&two, &frame_nodes(&two, 0, 10));
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].source, edges[0].target), (10, 11));
        assert!((edges[0].distance - 0.5).abs() < 1e-7);
    }

    #[test]
    fn representation_accounting() {
        assert_eq!(representation_size(&VideoGraph::default()), 0);
        assert_eq!(nominal_value_budget(800, 20, 3), 103_200);
        let report = RepresentationSize {
            edge_values: 30,
            node_values: 70,
            pixel_values: 3_010_560,
        };
        assert_eq!(report.total(), 100);
        assert!((report.compression_ratio() - 30_105.6).abs() < 1e-9);
    }
}
