//! Relational graph convolutional network over video graphs.
//!
//! Architecture: two dense layers with ELU lift the node colors into an
//! embedding; a stack of relational layers then updates every node as
//!
//! ```text
//! h_i <- ELU( sum_r sum_{j in N_i^r} (1 / c_{i,r}) W_r [h_j, e_ij] + W_0 h_i + b )
//! ```
//!
//! with `c_{i,r} = |N_i^r|` and neighborhoods symmetrized over the stored
//! edge direction. A global mean pool, dropout and a linear head produce the
//! logits.

mod checkpoint;
mod engine;
mod train;

use ndarray::{Array1, Array2, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::VideoGraph;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader, TensorEntry};
pub use engine::{ForwardTrace, MessageGraph, Mode, RelationMessages};
pub use train::{cross_entropy, view_indices, AdamState, LogitsView, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

/// Floating point type the engine runs on.
pub trait Scalar:
    LinalgScalar
    + ScalarOperand
    + Float
    + FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unsupported layer type {0:?}: only the relational (RGCN) variant is implemented")]
    UnsupportedKind(GnnKind),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot run the network on an empty graph")]
    EmptyGraph,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("forward trace does not belong to this graph/model: {0}")]
    TraceMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("{0}")]
    EmptyInput(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnnKind {
    Rgcn,
    Gcn,
    Gat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: GnnKind,
    pub input_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub gnn_layers: usize,
    pub relations: usize,
    pub edge_feature_dim: usize,
    pub dropout_p: f64,
    pub num_classes: usize,
    /// Only meaningful for attention layers, which are not supported.
    pub attention_heads: Option<usize>,
}

impl ModelConfig {
    /// 3 -> 256 -> 256, four relational layers of width 512 over
    /// {spatial, temporal}, dropout 0.2.
    pub fn standard(num_classes: usize) -> Self {
        Self {
            kind: GnnKind::Rgcn,
            input_dim: 3,
            embed_dim: 256,
            hidden_dim: 512,
            gnn_layers: 4,
            relations: 2,
            edge_feature_dim: 1,
            dropout_p: 0.2,
            num_classes,
            attention_heads: None,
        }
    }

    /// Same topology with narrower layers, for tests and desk-scale runs.
    pub fn small(embed_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            embed_dim,
            hidden_dim,
            ..Self::standard(num_classes)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.kind != GnnKind::Rgcn {
            return Err(ModelError::UnsupportedKind(self.kind));
        }
        if self.attention_heads.is_some() {
            return Err(ModelError::InvalidConfig(
                "attention heads are not supported by relational layers".into(),
            ));
        }
        let dims = [
            ("input_dim", self.input_dim),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("gnn_layers", self.gnn_layers),
            ("relations", self.relations),
            ("edge_feature_dim", self.edge_feature_dim),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be >= 1")));
        }
        if self.relations > 2 {
            return Err(ModelError::InvalidConfig(
                "video graphs carry at most two relations".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ModelError::InvalidConfig("dropout_p must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Input width of relational layer `l`.
    pub fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.embed_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Closed-form trainable parameter count, biases included.
pub fn count_params(config: &ModelConfig) -> usize {
    let dense = |i: usize, o: usize| i * o + o;
    let mut total = dense(config.input_dim, config.embed_dim) + dense(config.embed_dim, config.embed_dim);
    for l in 0..config.gnn_layers {
        let (i, o) = (config.layer_input(l), config.hidden_dim);
        total += config.relations * (i + config.edge_feature_dim) * o + i * o + o;
    }
    total + dense(config.hidden_dim, config.num_classes)
}

/// Floating point operations of one forward pass, as `2 * multiply-adds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCount {
    /// The two dense layers applied to every node.
    pub embedding: u64,
    /// `W_r [h_j, e_ij]` for every directed message of every layer.
    pub message_passing: u64,
    /// `W_0 h_i` for every node of every layer.
    pub self_transform: u64,
    /// The classification head, applied once per graph.
    pub readout: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.embedding + self.message_passing + self.self_transform + self.readout
    }

    /// Everything that scales with the graph (all but the head).
    pub fn graph_dependent(&self) -> u64 {
        self.embedding + self.message_passing + self.self_transform
    }
}

/// Number of directed messages after symmetrization: two per edge, one for
/// a self loop.
pub fn message_count(graph: &VideoGraph) -> u64 {
    graph
        .edges()
        .map(|e| if e.source == e.target { 1 } else { 2 })
        .sum()
}

pub fn count_flops(config: &ModelConfig, graph: &VideoGraph) -> FlopCount {
    let n = graph.node_count() as u64;
    let messages = message_count(graph);
    let (i, e, h) = (config.input_dim as u64, config.embed_dim as u64, config.hidden_dim as u64);
    let edge = config.edge_feature_dim as u64;
    let mut message_passing = 0;
    let mut self_transform = 0;
    for l in 0..config.gnn_layers {
        let input = config.layer_input(l) as u64;
        message_passing += messages * 2 * (input + edge) * h;
        self_transform += n * 2 * input * h;
    }
    FlopCount {
        embedding: n * 2 * (i * e + e * e),
        message_passing,
        self_transform,
        readout: 2 * h * config.num_classes as u64,
    }
}

/// Dense layer `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }
}

/// One relational layer. `relation_weights[r]` is `(in + edge_dim) x out`;
/// its last `edge_dim` rows multiply the edge feature.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalLayer<F> {
    pub relation_weights: Vec<Array2<F>>,
    pub self_weight: Array2<F>,
    pub bias: Array1<F>,
}

/// Every trainable tensor of the network. Also used for gradients and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub fc1: Dense<F>,
    pub fc2: Dense<F>,
    pub layers: Vec<RelationalLayer<F>>,
    pub head: Dense<F>,
}

impl<F: Scalar> Params<F> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let layers = (0..config.gnn_layers)
            .map(|l| {
                let i = config.layer_input(l);
                RelationalLayer {
                    relation_weights: (0..config.relations)
                        .map(|_| Array2::zeros((i + config.edge_feature_dim, config.hidden_dim)))
                        .collect(),
                    self_weight: Array2::zeros((i, config.hidden_dim)),
                    bias: Array1::zeros(config.hidden_dim),
                }
            })
            .collect();
        Self {
            fc1: Dense::zeros(config.input_dim, config.embed_dim),
            fc2: Dense::zeros(config.embed_dim, config.embed_dim),
            layers,
            head: Dense::zeros(config.hidden_dim, config.num_classes),
        }
    }

    /// Tensor names in a fixed order, matching [`Params::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["fc1.weight".to_string(), "fc1.bias".into(), "fc2.weight".into(), "fc2.bias".into()];
        for (l, layer) in self.layers.iter().enumerate() {
            for r in 0..layer.relation_weights.len() {
                names.push(format!("layers.{l}.relation.{r}.weight"));
            }
            names.push(format!("layers.{l}.self.weight"));
            names.push(format!("layers.{l}.bias"));
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    /// `(shape, data)` of every tensor in [`Params::names`] order.
    pub fn tensors(&self) -> Vec<(Vec<usize>, &[F])> {
        fn m<F>(a: &Array2<F>) -> (Vec<usize>, &[F]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v<F>(a: &Array1<F>) -> (Vec<usize>, &[F]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out = vec![m(&self.fc1.weight), v(&self.fc1.bias), m(&self.fc2.weight), v(&self.fc2.bias)];
        for layer in &self.layers {
            out.extend(layer.relation_weights.iter().map(m));
            out.push(m(&layer.self_weight));
            out.push(v(&layer.bias));
        }
        out.push(m(&self.head.weight));
        out.push(v(&self.head.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        let Params { fc1, fc2, layers, head } = self;
        for d in [fc1, fc2] {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        for layer in layers {
            for w in &mut layer.relation_weights {
                out.push(w.as_slice_mut().expect("standard layout"));
            }
            out.push(layer.self_weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(head.weight.as_slice_mut().expect("standard layout"));
        out.push(head.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, d)| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: F, other: &Params<F>) {
        let src: Vec<Vec<F>> = other.tensors().into_iter().map(|(_, d)| d.to_vec()).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += alpha * b;
            }
        }
    }

    pub fn cast<G: Scalar>(&self) -> Params<G> {
        let conv = |x: &F| G::of(x.to_f64().expect("finite"));
        Params {
            fc1: Dense {
                weight: self.fc1.weight.map(conv),
                bias: self.fc1.bias.map(conv),
            },
            fc2: Dense {
                weight: self.fc2.weight.map(conv),
                bias: self.fc2.bias.map(conv),
            },
            layers: self
                .layers
                .iter()
                .map(|l| RelationalLayer {
                    relation_weights: l.relation_weights.iter().map(|w| w.map(conv)).collect(),
                    self_weight: l.self_weight.map(conv),
                    bias: l.bias.map(conv),
                })
                .collect(),
            head: Dense {
                weight: self.head.weight.map(conv),
                bias: self.head.bias.map(conv),
            },
        }
    }
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RgcnModel<F> {
    pub config: ModelConfig,
    pub params: Params<F>,
}

impl<F: Scalar> RgcnModel<F> {
    /// Glorot-uniform weights from a seeded stream, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = Params::zeros(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes: Vec<Vec<usize>> = params.tensors().into_iter().map(|(s, _)| s).collect();
        for (data, shape) in params.tensors_mut().into_iter().zip(shapes) {
            if shape.len() == 2 {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                for x in data {
                    *x = F::of(rng.random_range(-limit..limit));
                }
            }
        }
        Ok(Self { config, params })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self {
            params: Params::zeros(&config),
            config,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<G: Scalar>(&self) -> RgcnModel<G> {
        RgcnModel {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}
