//! Brute-force references shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use graphvid::graph::{build_from_segmentations, segment_frames, BuilderConfig};
use graphvid::rgcn::{cross_entropy, MessageGraph, Mode};
use graphvid::synth::block_clip;
use graphvid::{Edge, Frame, Node, Relation, RgcnModel, Segmentation, SlicConfig, VideoGraph};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nodes recomputed from the label maps alone.
pub fn oracle_nodes(frames: &[Frame], segs: &[Segmentation]) -> Vec<Node> {
    let mut nodes = Vec::new();
    for (t, (frame, seg)) in frames.iter().zip(segs).enumerate() {
        let (h, w) = (frame.height(), frame.width());
        let count = *seg.labels().iter().max().unwrap() as usize + 1;
        let mut sum = vec![[0f64; 6]; count];
        for y in 0..h {
            for x in 0..w {
                let s = &mut sum[seg.label(y, x) as usize];
                let px = frame.pixel(y, x);
                s[0] += y as f64;
                s[1] += x as f64;
                for c in 0..3 {
                    s[2 + c] += f64::from(px[c]);
                }
                s[5] += 1.0;
            }
        }
        for s in sum {
            nodes.push(Node {
                id: nodes.len() as u32,
                frame_index: t as u32,
                norm_y: (s[0] / s[5] / h as f64) as f32,
                norm_x: (s[1] / s[5] / w as f64) as f32,
                color: [s[2] / s[5], s[3] / s[5], s[4] / s[5]].map(|c| c as f32),
            });
        }
    }
    nodes
}

pub fn dist(a: &Node, b: &Node) -> f64 {
    (f64::from(a.norm_y) - f64::from(b.norm_y)).hypot(f64::from(a.norm_x) - f64::from(b.norm_x))
}

pub fn oracle_spatial(segs: &[Segmentation], offsets: &[u32]) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for (seg, &off) in segs.iter().zip(offsets) {
        let (h, w) = (seg.height(), seg.width());
        for y1 in 0..h {
            for x1 in 0..w {
                for (y2, x2) in [(y1 + 1, x1), (y1, x1 + 1)] {
                    if y2 >= h || x2 >= w {
                        continue;
                    }
                    let (a, b) = (seg.label(y1, x1) + off, seg.label(y2, x2) + off);
                    if a != b {
                        out.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    out
}

/// Candidates strictly inside the proximity ball, most similar color wins;
/// exact ties go to the closer centroid, then the lower id.
pub fn oracle_temporal(nodes: &[Node], d: f64) -> BTreeMap<u32, u32> {
    let mut out = BTreeMap::new();
    for a in nodes {
        let candidates = nodes
            .iter()
            .filter(|b| b.frame_index == a.frame_index + 1 && dist(a, b) < d);
        let key = |b: &&Node| {
            let c: f64 = (0..3).map(|k| (f64::from(a.color[k]) - f64::from(b.color[k])).powi(2)).sum();
            (c, dist(a, b), b.id)
        };
        if let Some(b) = candidates.min_by(|x, y| key(x).partial_cmp(&key(y)).unwrap()) {
            out.insert(a.id, b.id);
        }
    }
    out
}

pub fn check_clip(frames: &[Frame], slic: &SlicConfig, builder: &BuilderConfig) {
    let refs: Vec<&Frame> = frames.iter().collect();
    let segs = segment_frames(&refs, slic).unwrap();
    let graph = build_from_segmentations(&segs, builder);
    graph.check_invariants().unwrap();

    let nodes = oracle_nodes(frames, &segs);
    assert_eq!(graph.nodes.len(), nodes.len());
    for (g, o) in graph.nodes.iter().zip(&nodes) {
        assert_eq!(g.frame_index, o.frame_index);
        assert!((g.norm_y - o.norm_y).abs() < 1e-6 && (g.norm_x - o.norm_x).abs() < 1e-6);
        for c in 0..3 {
            assert!((g.color[c] - o.color[c]).abs() < 1e-6);
        }
    }

    let mut offsets = vec![0u32];
    for s in &segs {
        offsets.push(offsets.last().unwrap() + s.region_count() as u32);
    }
    let spatial: BTreeSet<(u32, u32)> = graph.spatial_edges.iter().map(|e| (e.source, e.target)).collect();
    assert_eq!(spatial.len(), graph.spatial_edges.len(), "duplicate spatial edges");
    assert_eq!(spatial, oracle_spatial(&segs, &offsets));
    for e in &graph.spatial_edges {
        let d = dist(&nodes[e.source as usize], &nodes[e.target as usize]);
        assert!((f64::from(e.distance) - d).abs() < 1e-5);
    }

    // The oracle runs on the graph's own node attributes so candidate
    // gating sees exactly the same coordinates.
    let temporal: BTreeMap<u32, u32> = graph.temporal_edges.iter().map(|e| (e.source, e.target)).collect();
    assert_eq!(temporal.len(), graph.temporal_edges.len(), "temporal out-degree above one");
    assert_eq!(temporal, oracle_temporal(&graph.nodes, builder.d_proximity));
    for e in &graph.temporal_edges {
        assert!(f64::from(e.distance) < builder.d_proximity);
        assert_eq!(e.relation, Relation::Temporal);
    }
}

/// `count` random block clips of at most 32x32 pixels, 6 frames and 16
/// superpixels, each checked against the references above.
pub fn check_random_clips(count: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let h = rng.random_range(4..=32);
        let w = rng.random_range(4..=32);
        let t = rng.random_range(1..=6);
        let s = rng.random_range(1..=16);
        let frames = block_clip(h, w, t, &mut rng);
        let builder = BuilderConfig::new(rng.random_range(0.05..=1.0)).unwrap();
        check_clip(&frames, &SlicConfig::with_superpixels(s), &builder);
    }
}

pub fn random_graph(n: usize, spatial: usize, temporal: usize, seed: u64) -> VideoGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|i| Node {
            id: i as u32,
            frame_index: 0,
            norm_y: rng.random(),
            norm_x: rng.random(),
            color: [rng.random(), rng.random(), rng.random()],
        })
        .collect();
    let pairs = |count: usize, relation: Relation, rng: &mut ChaCha8Rng| {
        let mut seen = std::collections::BTreeSet::new();
        let mut edges = Vec::new();
        while edges.len() < count {
            let a = rng.random_range(0..n as u32);
            let b = rng.random_range(0..n as u32);
            if a == b || !seen.insert((a.min(b), a.max(b))) {
                continue;
            }
            edges.push(Edge {
                source: a,
                target: b,
                relation,
                distance: rng.random_range(0.0..1.4),
            });
        }
        edges
    };
    let spatial_edges = pairs(spatial, Relation::Spatial, &mut rng);
    let temporal_edges = pairs(temporal, Relation::Temporal, &mut rng);
    VideoGraph {
        nodes,
        spatial_edges,
        temporal_edges,
        frame_count: 1,
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn assert_close(a: f64, b: f64, rel: f64, what: &str) {
    let scale = a.abs().max(b.abs()).max(1e-6);
    assert!((a - b).abs() <= rel * scale, "{what}: {a} vs {b}");
}

/// Full adjacency per relation, dense matrix products.
pub fn dense_layers(model: &RgcnModel<f64>, graph: &VideoGraph) -> Vec<Array2<f64>> {
    let n = graph.node_count();
    let p = &model.params;
    let x = Array2::from_shape_fn((n, 3), |(i, c)| f64::from(graph.nodes[i].color[c]));
    let act = |m: Array2<f64>| m.mapv(elu);
    let h1 = act(x.dot(&p.fc1.weight) + &p.fc1.bias);
    let mut h = act(h1.dot(&p.fc2.weight) + &p.fc2.bias);

    let mut adj = vec![Array2::<f64>::zeros((n, n)); 2];
    let mut feat = vec![Array2::<f64>::zeros((n, n)); 2];
    for e in graph.edges() {
        let r = e.relation as usize;
        let (a, b) = (e.source as usize, e.target as usize);
        for (i, j) in [(a, b), (b, a)] {
            adj[r][[i, j]] = 1.0;
            feat[r][[i, j]] = f64::from(e.distance);
        }
    }
    let mut outputs = Vec::new();
    for layer in &p.layers {
        let in_dim = h.ncols();
        let mut pre = h.dot(&layer.self_weight) + &layer.bias;
        for r in 0..2 {
            let w = &layer.relation_weights[r];
            let degree = adj[r].sum_axis(ndarray::Axis(1));
            let inv = degree.mapv(|d| if d > 0.0 { 1.0 / d } else { 0.0 });
            let neighbor = adj[r].dot(&h).dot(&w.slice(s![..in_dim, ..]));
            let edge_sum = feat[r].sum_axis(ndarray::Axis(1));
            let edge_row = w.row(in_dim);
            for i in 0..n {
                for o in 0..pre.ncols() {
                    pre[[i, o]] += inv[i] * (neighbor[[i, o]] + edge_sum[i] * edge_row[o]);
                }
            }
        }
        h = act(pre);
        outputs.push(h.clone());
    }
    outputs
}

/// Every sparse layer output against [`dense_layers`].
pub fn check_dense_equivalence(n: usize, seed: u64) {
    let graph = random_graph(n, n * 2, n / 2, seed);
    let model = RgcnModel::<f64>::new(graphvid::ModelConfig::small(8, 12, 5), seed).unwrap();
    let mg = MessageGraph::new(&graph, 2).unwrap();
    let trace = model.forward_traced(&mg, Mode::Eval).unwrap();
    let dense = dense_layers(&model, &graph);
    for (l, (a, b)) in trace.layer_outputs.iter().zip(&dense).enumerate() {
        for (x, y) in a.iter().zip(b) {
            assert_close(*x, *y, 1e-5, &format!("layer {l}"));
        }
    }
}

pub fn loss_of(model: &RgcnModel<f64>, graph: &MessageGraph<f64>, label: usize) -> f64 {
    let logits = model.forward(graph, Mode::Eval).unwrap();
    cross_entropy(logits.view(), label).unwrap().0
}

/// Analytic gradients of every parameter against central differences on a
/// 20-node graph.
pub fn check_gradients() {
    let graph = random_graph(20, 30, 10, 11);
    let mg = MessageGraph::new(&graph, 2).unwrap();
    let mut model = RgcnModel::<f64>::new(graphvid::ModelConfig::small(4, 6, 3), 7).unwrap();
    // jitter everything, biases included, away from the zero init
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in model.params.tensors_mut() {
        for x in t.iter_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
    let label = 2;
    let trace = model.forward_traced(&mg, Mode::Eval).unwrap();
    let (_, dlogits) = cross_entropy(trace.logits.view(), label).unwrap();
    let grads = model.backward(&mg, &trace, dlogits.view()).unwrap();

    let eps = 1e-3;
    let names = model.params.names();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|(_, d)| d.to_vec()).collect();
    for (t, (name, tensor)) in names.iter().zip(&analytic).enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let mut plus = model.clone();
            plus.params.tensors_mut()[t][i] += eps;
            let mut minus = model.clone();
            minus.params.tensors_mut()[t][i] -= eps;
            let fd = (loss_of(&plus, &mg, label) - loss_of(&minus, &mg, label)) / (2.0 * eps);
            assert!(
                (fd - a).abs() <= 1e-4 * fd.abs().max(a.abs()) + 1e-8,
                "{name}[{i}]: analytic {a} vs numeric {fd}"
            );
        }
    }
}
