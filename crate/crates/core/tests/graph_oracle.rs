//! Graph construction against brute-force references.

mod support;

use std::collections::BTreeMap;

use graphvid::graph::{build_from_segmentations, BuilderConfig};
use graphvid::synth::block_clip;
use graphvid::{Frame, Relation, Segmentation, SlicConfig, VideoGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hundred_random_clips_match_brute_force() {
    support::check_random_clips(100, 2024);
}

fn attribute_multiset(g: &VideoGraph) -> Vec<(Relation, i64)> {
    let mut v: Vec<(Relation, i64)> = g
        .edges()
        .map(|e| (e.relation, (f64::from(e.distance) * 1e5).round() as i64))
        .collect();
    v.sort();
    v
}

fn rotate_labels(labels: &[u32], h: usize, w: usize) -> Vec<u32> {
    // clockwise: (y, x) -> (x, h - 1 - y) in a w x h image
    let mut out = vec![0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[x * h + (h - 1 - y)] = labels[y * w + x];
        }
    }
    out
}

#[test]
fn rotation_preserves_edge_attributes() {
    let (h, w) = (12, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frames = block_clip(h, w, 3, &mut rng);
    // vertical bands and a horizontal split, shifting per frame
    let labels: Vec<Vec<u32>> = (0..3)
        .map(|t| {
            (0..h * w)
                .map(|p| {
                    let (y, x) = (p / w, p % w);
                    let band = ((x + t) / 5).min(4) as u32;
                    band * 2 + u32::from(y >= 6)
                })
                .collect()
        })
        .collect();
    let dense = |l: Vec<u32>| {
        let mut map = BTreeMap::new();
        l.into_iter()
            .map(|v| {
                let n = map.len() as u32;
                *map.entry(v).or_insert(n)
            })
            .collect::<Vec<u32>>()
    };
    let builder = BuilderConfig::new(0.4).unwrap();
    let segs: Vec<Segmentation> = frames
        .iter()
        .zip(&labels)
        .map(|(f, l)| Segmentation::from_labels(f, dense(l.clone())).unwrap())
        .collect();
    let rotated: Vec<Segmentation> = frames
        .iter()
        .zip(&labels)
        .map(|(f, l)| Segmentation::from_labels(&f.rotated_cw(), dense(rotate_labels(l, h, w))).unwrap())
        .collect();
    let a = build_from_segmentations(&segs, &builder);
    let b = build_from_segmentations(&rotated, &builder);
    assert_eq!(a.node_count(), b.node_count());
    assert_eq!(attribute_multiset(&a), attribute_multiset(&b));
}

#[test]
fn construction_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let frames = block_clip(32, 32, 4, &mut rng);
    let refs: Vec<&Frame> = frames.iter().collect();
    let slic = SlicConfig::with_superpixels(16);
    let builder = BuilderConfig::default_for(16);
    let a = graphvid::graph::build_video_graph(&refs, &slic, &builder).unwrap();
    let b = graphvid::graph::build_video_graph(&refs, &slic, &builder).unwrap();
    assert_eq!(
        graphvid::store::encode_graph(&a).unwrap(),
        graphvid::store::encode_graph(&b).unwrap()
    );
}
