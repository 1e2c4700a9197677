//! Training-time graph augmentations: superpixel removal, spatial edge
//! removal, and additive Gaussian noise on edge distances and node colors.
//!
//! Randomness comes from [`ChaCha8Rng`] seeded with [`rng_for`]; normal
//! variates are drawn with `rand_distr`'s ziggurat sampler
//! ([`StandardNormal`]) and scaled by the standard deviation. Both are
//! platform independent, so a seed fixes the output bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, VideoGraph};

pub type AugmentRng = ChaCha8Rng;

pub fn rng_for(seed: u64) -> AugmentRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable per-clip seed: FNV-1a over the clip id folded into the global seed
/// and finished with a splitmix64 round.
pub fn clip_seed(global_seed: u64, clip_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in clip_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = global_seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("{name} must be a finite value >= 0, got {value}")]
    BadSigma { name: &'static str, value: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    BadProbability { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub sigma_edge: f64,
    pub sigma_node: f64,
    /// Keep probability of each spatial edge.
    pub p_edge: f64,
    /// Keep probability of each superpixel.
    pub p_node: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    /// The tuned values: `sigma_edge = 0.4`, `sigma_node = 0.2`,
    /// `p_edge = 1`, `p_node = 0.8`.
    fn default() -> Self {
        Self {
            sigma_edge: 0.4,
            sigma_node: 0.2,
            p_edge: 1.0,
            p_node: 0.8,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// No-op configuration.
    pub fn identity(seed: u64) -> Self {
        Self {
            sigma_edge: 0.0,
            sigma_node: 0.0,
            p_edge: 1.0,
            p_node: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        check_sigma("sigma_edge", self.sigma_edge)?;
        check_sigma("sigma_node", self.sigma_node)?;
        check_probability("p_edge", self.p_edge)?;
        check_probability("p_node", self.p_node)
    }
}

fn check_sigma(name: &'static str, value: f64) -> Result<(), AugmentError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AugmentError::BadSigma { name, value })
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), AugmentError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AugmentError::BadProbability { name, value })
    }
}

fn normal(rng: &mut AugmentRng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sigma
}

/// `rng.random::<f64>() < p`: one uniform draw per element, always.
fn keep(rng: &mut AugmentRng, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Adds `N(0, sigma_edge)` to every edge distance (spatial edges first, then
/// temporal, in storage order). Topology is untouched.
pub fn apply_agen(graph: &VideoGraph, sigma_edge: f64, rng: &mut AugmentRng) -> Result<VideoGraph, AugmentError> {
    check_sigma("sigma_edge", sigma_edge)?;
    let mut out = graph.clone();
    if sigma_edge == 0.0 {
        return Ok(out);
    }
    for e in out.spatial_edges.iter_mut().chain(out.temporal_edges.iter_mut()) {
        e.distance = (f64::from(e.distance) + normal(rng, sigma_edge)) as f32;
    }
    Ok(out)
}

/// Adds independent `N(0, sigma_node)` noise to each color channel of every
/// node. Colors are not clamped afterwards.
pub fn apply_agnn(graph: &VideoGraph, sigma_node: f64, rng: &mut AugmentRng) -> Result<VideoGraph, AugmentError> {
    check_sigma("sigma_node", sigma_node)?;
    let mut out = graph.clone();
    if sigma_node == 0.0 {
        return Ok(out);
    }
    for n in &mut out.nodes {
        for c in &mut n.color {
            *c = (f64::from(*c) + normal(rng, sigma_node)) as f32;
        }
    }
    Ok(out)
}

/// Keeps each spatial edge independently with probability `p_edge`.
/// Temporal edges pass through unchanged.
pub fn apply_rrse(graph: &VideoGraph, p_edge: f64, rng: &mut AugmentRng) -> Result<VideoGraph, AugmentError> {
    check_probability("p_edge", p_edge)?;
    let mut out = graph.clone();
    out.spatial_edges.retain(|_| keep(rng, p_edge));
    Ok(out)
}

/// Old-to-new node id mapping produced by superpixel removal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRemap {
    /// `new_id[old]` is `None` for dropped nodes.
    pub new_id: Vec<Option<u32>>,
}

impl NodeRemap {
    pub fn identity(n: usize) -> Self {
        Self {
            new_id: (0..n as u32).map(Some).collect(),
        }
    }

    pub fn kept(&self) -> usize {
        self.new_id.iter().filter(|m| m.is_some()).count()
    }

    /// Composes `self` (applied first) with `next`.
    pub fn then(&self, next: &NodeRemap) -> NodeRemap {
        NodeRemap {
            new_id: self
                .new_id
                .iter()
                .map(|m| m.and_then(|mid| next.new_id[mid as usize]))
                .collect(),
        }
    }
}

/// Keeps each node independently with probability `p_node`, drops every edge
/// touching a removed node, and renumbers survivors densely in their
/// original order.
pub fn apply_rrs(
    graph: &VideoGraph,
    p_node: f64,
    rng: &mut AugmentRng,
) -> Result<(VideoGraph, NodeRemap), AugmentError> {
    check_probability("p_node", p_node)?;
    let mut new_id = Vec::with_capacity(graph.node_count());
    let mut nodes = Vec::new();
    for node in &graph.nodes {
        if keep(rng, p_node) {
            new_id.push(Some(nodes.len() as u32));
            nodes.push(crate::graph::Node {
                id: nodes.len() as u32,
                ..*node
            });
        } else {
            new_id.push(None);
        }
    }
    let remap_edges = |edges: &[Edge]| -> Vec<Edge> {
        edges
            .iter()
            .filter_map(|e| {
                let s = new_id[e.source as usize]?;
                let t = new_id[e.target as usize]?;
                Some(Edge {
                    source: s,
                    target: t,
                    ..*e
                })
            })
            .collect()
    };
    let out = VideoGraph {
        spatial_edges: remap_edges(&graph.spatial_edges),
        temporal_edges: remap_edges(&graph.temporal_edges),
        nodes,
        frame_count: graph.frame_count,
    };
    Ok((out, NodeRemap { new_id }))
}

/// Result of the full augmentation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub graph: VideoGraph,
    pub remap: NodeRemap,
}

/// Runs RRS, RRSE, AGEN, AGNN in that order on one RNG stream seeded from
/// `config.seed`.
pub fn augment(graph: &VideoGraph, config: &AugmentConfig) -> Result<Augmented, AugmentError> {
    let mut rng = rng_for(config.seed);
    augment_with(graph, config, &mut rng)
}

/// Same pipeline as [`augment`] with a caller-provided stream.
pub fn augment_with(
    graph: &VideoGraph,
    config: &AugmentConfig,
    rng: &mut AugmentRng,
) -> Result<Augmented, AugmentError> {
    config.validate()?;
    let (g, remap) = apply_rrs(graph, config.p_node, rng)?;
    let g = apply_rrse(&g, config.p_edge, rng)?;
    let g = apply_agen(&g, config.sigma_edge, rng)?;
    let graph = apply_agnn(&g, config.sigma_node, rng)?;
    Ok(Augmented { graph, remap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Node, Relation};

    fn chain_graph(nodes: usize, frames: usize) -> VideoGraph {
        let per = nodes / frames;
        let mut g = VideoGraph {
            frame_count: frames,
            ..VideoGraph::default()
        };
        for i in 0..nodes {
            g.nodes.push(Node {
                id: i as u32,
                frame_index: (i / per) as u32,
                norm_y: (i % 7) as f32 / 7.0,
                norm_x: (i % 5) as f32 / 5.0,
                color: [0.5, 0.25, 0.75],
            });
        }
        for i in 0..nodes {
            let t = i / per;
            if (i + 1) % per != 0 {
                g.spatial_edges.push(Edge {
                    source: i as u32,
                    target: i as u32 + 1,
                    relation: Relation::Spatial,
                    distance: 0.5,
                });
            }
            if t + 1 < frames {
                g.temporal_edges.push(Edge {
                    source: i as u32,
                    target: (i + per) as u32,
                    relation: Relation::Temporal,
                    distance: 0.1,
                });
            }
        }
        g
    }

    #[test]
    fn zero_strength_is_identity() {
        let g = chain_graph(40, 4);
        let mut rng = rng_for(1);
        assert_eq!(apply_agen(&g, 0.0, &mut rng).unwrap(), g);
        assert_eq!(apply_agnn(&g, 0.0, &mut rng).unwrap(), g);
        assert_eq!(apply_rrse(&g, 1.0, &mut rng).unwrap(), g);
        let (same, remap) = apply_rrs(&g, 1.0, &mut rng).unwrap();
        assert_eq!(same, g);
        assert_eq!(remap, NodeRemap::identity(40));
        assert_eq!(augment(&g, &AugmentConfig::identity(9)).unwrap().graph, g);
    }

    #[test]
    fn agen_adds_the_seeded_stream() {
        let mut g = chain_graph(2, 1);
        g.spatial_edges[0].distance = 0.5;
        let out = apply_agen(&g, 0.4, &mut rng_for(42)).unwrap();
        let mut reference = ChaCha8Rng::seed_from_u64(42);
        let z: f64 = reference.sample(StandardNormal);
        assert_eq!(out.spatial_edges[0].distance, (0.5 + 0.4 * z) as f32);
    }

    #[test]
    fn agnn_adds_the_next_three_draws() {
        let mut g = chain_graph(1, 1);
        g.nodes[0].color = [0.5; 3];
        let out = apply_agnn(&g, 0.2, &mut rng_for(3)).unwrap();
        let mut reference = ChaCha8Rng::seed_from_u64(3);
        for c in 0..3 {
            let z: f64 = reference.sample(StandardNormal);
            assert_eq!(out.nodes[0].color[c], (0.5 + 0.2 * z) as f32);
        }
    }

    #[test]
    fn agen_statistics() {
        let mut g = chain_graph(10_001, 1);
        g.temporal_edges.clear();
        assert_eq!(g.spatial_edges.len(), 10_000);
        let out = apply_agen(&g, 0.4, &mut rng_for(7)).unwrap();
        let diffs: Vec<f64> = out
            .spatial_edges
            .iter()
            .zip(&g.spatial_edges)
            .map(|(a, b)| f64::from(a.distance) - f64::from(b.distance))
            .collect();
        let (mean, std) = mean_std(&diffs);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((std / 0.4 - 1.0).abs() < 0.05, "std {std}");
    }

    #[test]
    fn agnn_channels_are_independent() {
        let g = chain_graph(10_000, 1);
        let out = apply_agnn(&g, 0.2, &mut rng_for(5)).unwrap();
        let noise: Vec<[f64; 3]> = out
            .nodes
            .iter()
            .zip(&g.nodes)
            .map(|(a, b)| std::array::from_fn(|c| f64::from(a.color[c]) - f64::from(b.color[c])))
            .collect();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let xi: Vec<f64> = noise.iter().map(|z| z[i]).collect();
            let xj: Vec<f64> = noise.iter().map(|z| z[j]).collect();
            let (mi, _) = mean_std(&xi);
            let (mj, _) = mean_std(&xj);
            let cov = xi.iter().zip(&xj).map(|(a, b)| (a - mi) * (b - mj)).sum::<f64>() / xi.len() as f64;
            assert!(cov.abs() < 0.02, "cov({i},{j}) = {cov}");
        }
    }

    #[test]
    fn rrse_touches_spatial_edges_only() {
        let g = chain_graph(10_001, 1);
        let none = apply_rrse(&g, 0.0, &mut rng_for(1)).unwrap();
        assert!(none.spatial_edges.is_empty());
        assert_eq!(none.temporal_edges, g.temporal_edges);

        let g = chain_graph(20_002, 2);
        assert_eq!(g.spatial_edges.len(), 20_000);
        let half = apply_rrse(&g, 0.5, &mut rng_for(2)).unwrap();
        let frac = half.spatial_edges.len() as f64 / 20_000.0;
        assert!((0.47..=0.53).contains(&frac), "{frac}");
        assert_eq!(half.temporal_edges, g.temporal_edges);
    }

    #[test]
    fn rrs_drops_incident_edges() {
        let g = chain_graph(30, 3);
        let (empty, remap) = apply_rrs(&g, 0.0, &mut rng_for(0)).unwrap();
        assert!(empty.is_empty() && empty.edge_count() == 0);
        assert_eq!(remap.kept(), 0);

        // find a seed whose first draws drop exactly one node
        let seed = (0..10_000u64)
            .find(|&s| apply_rrs(&g, 0.9, &mut rng_for(s)).unwrap().1.kept() == 29)
            .expect("a seed dropping one node");
        let (out, remap) = apply_rrs(&g, 0.9, &mut rng_for(seed)).unwrap();
        let dropped = remap.new_id.iter().position(Option::is_none).unwrap() as u32;
        let shift = |id: u32| if id > dropped { id - 1 } else { id };
        let expect: Vec<(u32, u32)> = g
            .edges()
            .filter(|e| e.source != dropped && e.target != dropped)
            .map(|e| (shift(e.source), shift(e.target)))
            .collect();
        let got: Vec<(u32, u32)> = out.edges().map(|e| (e.source, e.target)).collect();
        assert_eq!(got, expect);
        out.check_invariants().unwrap();
    }

    #[test]
    fn pipeline_is_reproducible_and_never_grows() {
        let g = chain_graph(300, 3);
        let config = AugmentConfig {
            seed: 77,
            ..AugmentConfig::default()
        };
        let a = augment(&g, &config).unwrap();
        let b = augment(&g, &config).unwrap();
        assert_eq!(a, b);
        assert!(a.graph.node_count() <= g.node_count());
        assert!(a.graph.edge_count() <= g.edge_count());
        a.graph.check_invariants().unwrap();
        let c = augment(&g, &AugmentConfig { seed: 78, ..config }).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn config_json_field_names() {
        let c = AugmentConfig::default();
        let json = serde_json::to_value(c).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"sigma_edge": 0.4, "sigma_node": 0.2, "p_edge": 1.0, "p_node": 0.8, "seed": 0})
        );
        let back: AugmentConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
        assert!(AugmentConfig { p_node: 1.2, ..c }.validate().is_err());
        assert!(AugmentConfig { sigma_edge: -0.1, ..c }.validate().is_err());
    }

    #[test]
    fn clip_seeds_are_stable_and_distinct() {
        assert_eq!(clip_seed(1, "a_0"), clip_seed(1, "a_0"));
        assert_ne!(clip_seed(1, "a_0"), clip_seed(1, "a_10"));
        assert_ne!(clip_seed(1, "a_0"), clip_seed(2, "a_0"));
    }

    fn mean_std(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}
