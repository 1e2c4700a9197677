//! Superpixel video graphs.
//!
//! A clip of frames is segmented into superpixels ([`slic`]), compiled into a
//! graph with spatial and temporal relations ([`graph`]), optionally
//! perturbed ([`augment`]), stored compactly ([`store`]) and classified by a
//! relational graph convolutional network ([`rgcn`]).

pub mod augment;
pub mod bench;
pub mod graph;
pub mod media;
pub mod rgcn;
pub mod slic;
pub mod store;
pub mod synth;

pub use augment::{AugmentConfig, NodeRemap};
pub use graph::{BuilderConfig, Edge, Node, Relation, VideoGraph};
pub use media::{ClipSpec, Frame, FrameFormat};
pub use rgcn::{GnnKind, ModelConfig, RgcnModel};
pub use slic::{Segmentation, SlicConfig, Superpixel};
pub use store::{read_graph, write_graph};
