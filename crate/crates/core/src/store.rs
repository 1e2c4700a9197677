//! Binary graph files.
//!
//! ```text
//! header   "GVG1" | nodes u32 | spatial u32 | temporal u32 | frames u16 | flags u16
//! node     frame u16 | norm_y f32 | norm_x f32 | r g b f32
//! edge     src idx | dst idx | distance f32
//! ```
//!
//! Everything is little-endian. Edge indices are u16 when the graph has
//! fewer than 65536 nodes and u32 otherwise; flag bit 0 marks the wide form.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Edge, Node, Relation, VideoGraph};

pub const MAGIC: [u8; 4] = *b"GVG1";
pub const HEADER_BYTES: usize = 20;
pub const NODE_BYTES: usize = 22;
const FLAG_WIDE: u16 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("not a graph file")]
    BadMagic,
    #[error("reserved flag bits set: {0:#06x}")]
    ReservedFlags(u16),
    #[error("graph file truncated: {section} needs {needed} bytes, {available} available")]
    Truncated {
        section: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after the edge tables")]
    TrailingBytes(usize),
    #[error("{relation:?} edge {index} references node {node}, graph has {node_count}")]
    IndexOutOfBounds {
        relation: Relation,
        index: usize,
        node: u32,
        node_count: u32,
    },
    #[error("node {index} lies in frame {frame}, graph has {frame_count} frames")]
    FrameOutOfBounds { index: usize, frame: u16, frame_count: u16 },
    #[error("graph does not fit the format: {0}")]
    TooLarge(String),
}

/// Fixed-size file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphFileHeader {
    pub node_count: u32,
    pub spatial_edge_count: u32,
    pub temporal_edge_count: u32,
    pub frame_count: u16,
    /// Bytes per edge index, 2 or 4.
    pub index_width: usize,
}

impl GraphFileHeader {
    pub fn for_graph(graph: &VideoGraph) -> Result<Self, StoreError> {
        let count = |n: usize, what: &str| {
            u32::try_from(n).map_err(|_| StoreError::TooLarge(format!("{n} {what}")))
        };
        let node_count = count(graph.node_count(), "nodes")?;
        Ok(Self {
            node_count,
            spatial_edge_count: count(graph.spatial_edges.len(), "spatial edges")?,
            temporal_edge_count: count(graph.temporal_edges.len(), "temporal edges")?,
            frame_count: u16::try_from(graph.frame_count)
                .map_err(|_| StoreError::TooLarge(format!("{} frames", graph.frame_count)))?,
            index_width: index_width(graph.node_count()),
        })
    }

    pub fn edge_bytes(&self) -> usize {
        2 * self.index_width + 4
    }

    /// Total file size implied by the header.
    pub fn file_bytes(&self) -> usize {
        HEADER_BYTES
            + NODE_BYTES * self.node_count as usize
            + self.edge_bytes() * (self.spatial_edge_count as usize + self.temporal_edge_count as usize)
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.node_count.to_le_bytes());
        out.extend_from_slice(&self.spatial_edge_count.to_le_bytes());
        out.extend_from_slice(&self.temporal_edge_count.to_le_bytes());
        out.extend_from_slice(&self.frame_count.to_le_bytes());
        let flags = if self.index_width == 4 { FLAG_WIDE } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
    }

    fn decode(bytes: &[u8]) -> Result<Self, StoreError> {
        if bytes.len() < MAGIC.len() || bytes[..4] != MAGIC {
            return Err(StoreError::BadMagic);
        }
        let mut r = Reader::new(bytes, "header");
        r.need(HEADER_BYTES)?;
        r.skip(4);
        let node_count = r.u32();
        let spatial_edge_count = r.u32();
        let temporal_edge_count = r.u32();
        let frame_count = r.u16();
        let flags = r.u16();
        if flags & !FLAG_WIDE != 0 {
            return Err(StoreError::ReservedFlags(flags));
        }
        Ok(Self {
            node_count,
            spatial_edge_count,
            temporal_edge_count,
            frame_count,
            index_width: if flags & FLAG_WIDE != 0 { 4 } else { 2 },
        })
    }
}

/// 2 bytes when every node id fits in u16.
pub fn index_width(node_count: usize) -> usize {
    if node_count < 1 << 16 {
        2
    } else {
        4
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], section: &'static str) -> Self {
        Self { bytes, pos: 0, section }
    }

    fn need(&self, n: usize) -> Result<(), StoreError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(StoreError::Truncated {
                section: self.section,
                needed: n,
                available,
            });
        }
        Ok(())
    }

    fn skip(&mut self, n: usize) {
        self.pos += n;
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }

    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }

    fn index(&mut self, width: usize) -> u32 {
        if width == 2 {
            u32::from(self.u16())
        } else {
            self.u32()
        }
    }
}

pub fn encode_graph(graph: &VideoGraph) -> Result<Vec<u8>, StoreError> {
    let header = GraphFileHeader::for_graph(graph)?;
    let mut out = Vec::with_capacity(header.file_bytes());
    header.encode(&mut out);
    for (i, n) in graph.nodes.iter().enumerate() {
        let frame = u16::try_from(n.frame_index)
            .map_err(|_| StoreError::TooLarge(format!("node {i} in frame {}", n.frame_index)))?;
        out.extend_from_slice(&frame.to_le_bytes());
        out.extend_from_slice(&n.norm_y.to_le_bytes());
        out.extend_from_slice(&n.norm_x.to_le_bytes());
        for c in n.color {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for relation in Relation::ALL {
        for (i, e) in graph.edges_of(relation).iter().enumerate() {
            for id in [e.source, e.target] {
                if id >= header.node_count {
                    return Err(StoreError::IndexOutOfBounds {
                        relation,
                        index: i,
                        node: id,
                        node_count: header.node_count,
                    });
                }
                if header.index_width == 2 {
                    out.extend_from_slice(&(id as u16).to_le_bytes());
                } else {
                    out.extend_from_slice(&id.to_le_bytes());
                }
            }
            out.extend_from_slice(&e.distance.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), header.file_bytes());
    Ok(out)
}

/// Inverse of [`encode_graph`]. Node ids are the table positions.
pub fn decode_graph(bytes: &[u8]) -> Result<VideoGraph, StoreError> {
    let header = GraphFileHeader::decode(bytes)?;
    let mut r = Reader::new(bytes, "node table");
    r.skip(HEADER_BYTES);
    let n = header.node_count as usize;
    r.need(n.saturating_mul(NODE_BYTES))?;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let frame = r.u16();
        if header.frame_count > 0 && frame >= header.frame_count {
            return Err(StoreError::FrameOutOfBounds {
                index: i,
                frame,
                frame_count: header.frame_count,
            });
        }
        nodes.push(Node {
            id: i as u32,
            frame_index: u32::from(frame),
            norm_y: r.f32(),
            norm_x: r.f32(),
            color: [r.f32(), r.f32(), r.f32()],
        });
    }
    let mut tables = Vec::with_capacity(2);
    for (relation, count, section) in [
        (Relation::Spatial, header.spatial_edge_count, "spatial edge table"),
        (Relation::Temporal, header.temporal_edge_count, "temporal edge table"),
    ] {
        r.section = section;
        let count = count as usize;
        r.need(count.saturating_mul(header.edge_bytes()))?;
        let mut edges = Vec::with_capacity(count);
        for index in 0..count {
            let source = r.index(header.index_width);
            let target = r.index(header.index_width);
            for node in [source, target] {
                if node >= header.node_count {
                    return Err(StoreError::IndexOutOfBounds {
                        relation,
                        index,
                        node,
                        node_count: header.node_count,
                    });
                }
            }
            edges.push(Edge {
                source,
                target,
                relation,
                distance: r.f32(),
            });
        }
        tables.push(edges);
    }
    let trailing = bytes.len() - r.pos;
    if trailing > 0 {
        return Err(StoreError::TrailingBytes(trailing));
    }
    let temporal_edges = tables.pop().expect("two tables");
    let spatial_edges = tables.pop().expect("two tables");
    Ok(VideoGraph {
        nodes,
        spatial_edges,
        temporal_edges,
        frame_count: usize::from(header.frame_count),
    })
}

/// Writes `bytes` to a temp file next to `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Returns the number of bytes written.
pub fn write_graph(graph: &VideoGraph, path: &Path) -> Result<u64, StoreError> {
    let bytes = encode_graph(graph)?;
    write_atomic(path, &bytes).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(bytes.len() as u64)
}

pub fn read_graph(path: &Path) -> Result<VideoGraph, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_graph(&bytes)
}

#[derive(Serialize)]
struct JsonEdge {
    source: u32,
    target: u32,
    distance: f32,
}

#[derive(Serialize)]
struct JsonGraph<'a> {
    node_count: usize,
    frame_count: usize,
    nodes: &'a [Node],
    spatial_edges: Vec<JsonEdge>,
    temporal_edges: Vec<JsonEdge>,
}

/// Human-readable dump for debugging. Not meant to be read back.
pub fn to_debug_json(graph: &VideoGraph) -> String {
    let edges = |es: &[Edge]| {
        es.iter()
            .map(|e| JsonEdge {
                source: e.source,
                target: e.target,
                distance: e.distance,
            })
            .collect()
    };
    let doc = JsonGraph {
        node_count: graph.node_count(),
        frame_count: graph.frame_count,
        nodes: &graph.nodes,
        spatial_edges: edges(&graph.spatial_edges),
        temporal_edges: edges(&graph.temporal_edges),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(nodes: usize, frames: usize) -> VideoGraph {
        let per = nodes.div_ceil(frames.max(1)).max(1);
        let nodes: Vec<Node> = (0..nodes)
            .map(|i| Node {
                id: i as u32,
                frame_index: (i / per) as u32,
                norm_y: (i % 7) as f32 / 7.0,
                norm_x: (i % 11) as f32 / 11.0,
                color: [0.1, (i % 3) as f32 / 3.0, f32::from_bits(0x3e80_0001)],
            })
            .collect();
        let spatial_edges = (1..nodes.len())
            .filter(|&i| nodes[i].frame_index == nodes[i - 1].frame_index)
            .map(|i| Edge {
                source: i as u32 - 1,
                target: i as u32,
                relation: Relation::Spatial,
                distance: 0.01 * (i % 5) as f32,
            })
            .collect();
        let temporal_edges = (per..nodes.len())
            .map(|i| Edge {
                source: (i - per) as u32,
                target: i as u32,
                relation: Relation::Temporal,
                distance: 0.3,
            })
            .collect();
        VideoGraph {
            nodes,
            spatial_edges,
            temporal_edges,
            frame_count: frames,
        }
    }

    #[test]
    fn empty_graph_is_header_only() {
        let bytes = encode_graph(&VideoGraph::default()).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], b"GVG1");
        assert_eq!(decode_graph(&bytes).unwrap(), VideoGraph::default());
    }

    #[test]
    fn index_width_threshold() {
        assert_eq!(index_width(65_535), 2);
        assert_eq!(index_width(65_536), 4);
        let g = sample(70_000, 2);
        let header = GraphFileHeader::for_graph(&g).unwrap();
        assert_eq!(header.index_width, 4);
        let bytes = encode_graph(&g).unwrap();
        assert_eq!(bytes[18] & 1, 1);
        assert_eq!(bytes.len(), header.file_bytes());
        assert_eq!(decode_graph(&bytes).unwrap(), g);
    }

    #[test]
    fn size_arithmetic() {
        let g = sample(10, 2);
        let bytes = encode_graph(&g).unwrap();
        assert_eq!(bytes.len(), 20 + 22 * 10 + 8 * g.edge_count());
    }

    #[test]
    fn rejects_corruption() {
        let g = sample(6, 2);
        let good = encode_graph(&g).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        let e = decode_graph(&bad).unwrap_err();
        assert_eq!(e.to_string(), "not a graph file");

        let mut bad = good.clone();
        bad[19] = 0x80;
        assert!(matches!(decode_graph(&bad), Err(StoreError::ReservedFlags(_))));

        // first spatial edge target := node_count
        let mut bad = good.clone();
        let at = HEADER_BYTES + 6 * NODE_BYTES + 2;
        bad[at..at + 2].copy_from_slice(&6u16.to_le_bytes());
        assert!(matches!(
            decode_graph(&bad),
            Err(StoreError::IndexOutOfBounds { node: 6, .. })
        ));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode_graph(&bad), Err(StoreError::TrailingBytes(1))));
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample(40, 4);
        let a = dir.path().join("a.gvg");
        let b = dir.path().join("b.gvg");
        let n = write_graph(&g, &a).unwrap();
        let back = read_graph(&a).unwrap();
        write_graph(&back, &b).unwrap();
        assert_eq!(back, g);
        assert_eq!(n, fs::metadata(&a).unwrap().len());
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn debug_json_lists_everything() {
        let g = sample(4, 2);
        let v: serde_json::Value = serde_json::from_str(&to_debug_json(&g)).unwrap();
        assert_eq!(v["node_count"], 4);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 4);
        assert_eq!(v["temporal_edges"].as_array().unwrap().len(), g.temporal_edges.len());
    }

    proptest! {
        #[test]
        fn truncation_always_errors(nodes in 0usize..30, frames in 1usize..4, cut in 0.0f64..1.0) {
            let bytes = encode_graph(&sample(nodes, frames)).unwrap();
            let len = ((bytes.len() as f64) * cut) as usize;
            prop_assert!(len < bytes.len());
            prop_assert!(decode_graph(&bytes[..len]).is_err());
        }

        #[test]
        fn random_bytes_never_panic(mut bytes in proptest::collection::vec(any::<u8>(), 0..200), magic in any::<bool>()) {
            if magic && bytes.len() >= 4 {
                bytes[..4].copy_from_slice(b"GVG1");
            }
            let _ = decode_graph(&bytes);
        }
    }
}
