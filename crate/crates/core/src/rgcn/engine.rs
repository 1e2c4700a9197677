use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, Params, RgcnModel, Scalar};
use crate::graph::{Relation, VideoGraph};

/// Directed messages of one relation after symmetrization.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMessages<F> {
    pub targets: Vec<u32>,
    pub sources: Vec<u32>,
    pub features: Vec<F>,
    /// `1 / |N_i^r|`, or zero for nodes without neighbors in this relation.
    pub inv_degree: Vec<F>,
}

/// A video graph laid out for message passing.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageGraph<F> {
    /// `N x 3` node colors.
    pub features: Array2<F>,
    pub relations: Vec<RelationMessages<F>>,
}

impl<F: Scalar> MessageGraph<F> {
    /// Every stored edge `(u, v)` becomes the messages `v -> u` and `u -> v`.
    /// With a single relation, spatial and temporal edges share it.
    pub fn new(graph: &VideoGraph, relations: usize) -> Result<Self, ModelError> {
        if graph.is_empty() {
            return Err(ModelError::EmptyGraph);
        }
        if !(1..=2).contains(&relations) {
            return Err(ModelError::DimensionMismatch(format!(
                "video graphs have 1 or 2 relations, model expects {relations}"
            )));
        }
        let n = graph.node_count();
        let mut features = Array2::zeros((n, 3));
        for (mut row, node) in features.rows_mut().into_iter().zip(&graph.nodes) {
            for c in 0..3 {
                row[c] = F::of(f64::from(node.color[c]));
            }
        }
        let mut rel: Vec<RelationMessages<F>> = (0..relations)
            .map(|_| RelationMessages {
                targets: Vec::new(),
                sources: Vec::new(),
                features: Vec::new(),
                inv_degree: vec![F::zero(); n],
            })
            .collect();
        for relation in Relation::ALL {
            let r = if relations == 1 { 0 } else { relation as usize };
            let m = &mut rel[r];
            for e in graph.edges_of(relation) {
                if e.source as usize >= n || e.target as usize >= n {
                    return Err(ModelError::DimensionMismatch(format!(
                        "edge {}-{} references a node beyond {n}",
                        e.source, e.target
                    )));
                }
                let d = F::of(f64::from(e.distance));
                m.targets.push(e.target);
                m.sources.push(e.source);
                m.features.push(d);
                if e.source != e.target {
                    m.targets.push(e.source);
                    m.sources.push(e.target);
                    m.features.push(d);
                }
            }
        }
        for m in &mut rel {
            let mut degree = vec![0usize; n];
            for &t in &m.targets {
                degree[t as usize] += 1;
            }
            for (inv, d) in m.inv_degree.iter_mut().zip(degree) {
                if d > 0 {
                    *inv = F::one() / F::of(d as f64);
                }
            }
        }
        Ok(Self { features, relations: rel })
    }

    pub fn node_count(&self) -> usize {
        self.features.nrows()
    }
}

pub enum Mode<'a> {
    Eval,
    /// Dropout active, mask drawn from the given stream.
    Train(&'a mut ChaCha8Rng),
}

/// Activations kept by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub node_count: usize,
    /// ELU outputs of the two embedding layers.
    pub fc1_out: Array2<F>,
    pub fc2_out: Array2<F>,
    /// ELU outputs of each relational layer.
    pub layer_outputs: Vec<Array2<F>>,
    pub pooled: Array1<F>,
    /// Inverted-dropout scale per pooled unit (`None` in eval mode).
    pub dropout_mask: Option<Array1<F>>,
    pub head_input: Array1<F>,
    pub logits: Array1<F>,
}

fn elu<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// ELU derivative expressed through its output.
fn elu_grad<F: Scalar>(y: F) -> F {
    if y > F::zero() {
        F::one()
    } else {
        y + F::one()
    }
}

fn dense_forward<F: Scalar>(x: &Array2<F>, w: &Array2<F>, b: &Array1<F>) -> Array2<F> {
    let mut y = x.dot(w);
    y += b;
    y
}

impl<F: Scalar> RgcnModel<F> {
    fn check_graph(&self, graph: &MessageGraph<F>) -> Result<(), ModelError> {
        if graph.node_count() == 0 {
            return Err(ModelError::EmptyGraph);
        }
        if graph.features.ncols() != self.config.input_dim {
            return Err(ModelError::DimensionMismatch(format!(
                "node features have {} channels, model expects {}",
                graph.features.ncols(),
                self.config.input_dim
            )));
        }
        if graph.relations.len() != self.config.relations {
            return Err(ModelError::DimensionMismatch(format!(
                "graph has {} relations, model expects {}",
                graph.relations.len(),
                self.config.relations
            )));
        }
        if self.config.edge_feature_dim != 1 {
            return Err(ModelError::DimensionMismatch(format!(
                "edges carry one scalar feature, model expects {}",
                self.config.edge_feature_dim
            )));
        }
        Ok(())
    }

    /// Logits for one graph.
    pub fn forward(&self, graph: &MessageGraph<F>, mode: Mode<'_>) -> Result<Array1<F>, ModelError> {
        self.forward_traced(graph, mode).map(|t| t.logits)
    }

    pub fn forward_traced(&self, graph: &MessageGraph<F>, mode: Mode<'_>) -> Result<ForwardTrace<F>, ModelError> {
        self.check_graph(graph)?;
        let p = &self.params;
        let fc1_out = dense_forward(&graph.features, &p.fc1.weight, &p.fc1.bias).mapv_into(elu);
        let fc2_out = dense_forward(&fc1_out, &p.fc2.weight, &p.fc2.bias).mapv_into(elu);

        let mut layer_outputs = Vec::with_capacity(p.layers.len());
        for layer in &p.layers {
            let input = layer_outputs.last().unwrap_or(&fc2_out);
            let in_dim = input.ncols();
            let mut pre = dense_forward(input, &layer.self_weight, &layer.bias);
            for (w, msgs) in layer.relation_weights.iter().zip(&graph.relations) {
                let projected = input.dot(&w.slice(s![..in_dim, ..]));
                let edge_row = w.row(in_dim);
                for k in 0..msgs.targets.len() {
                    let t = msgs.targets[k] as usize;
                    let coef = msgs.inv_degree[t];
                    let mut row = pre.row_mut(t);
                    row.scaled_add(coef, &projected.row(msgs.sources[k] as usize));
                    row.scaled_add(coef * msgs.features[k], &edge_row);
                }
            }
            layer_outputs.push(pre.mapv_into(elu));
        }

        let last = layer_outputs.last().unwrap_or(&fc2_out);
        let pooled = last.mean_axis(Axis(0)).expect("non-empty graph");
        let dropout_mask = match mode {
            Mode::Train(rng) if self.config.dropout_p > 0.0 => {
                let keep = 1.0 - self.config.dropout_p;
                let scale = F::of(1.0 / keep);
                Some(Array1::from_shape_fn(pooled.len(), |_| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        F::zero()
                    }
                }))
            }
            _ => None,
        };
        let head_input = match &dropout_mask {
            Some(m) => &pooled * m,
            None => pooled.clone(),
        };
        let logits = head_input.dot(&p.head.weight) + &p.head.bias;
        Ok(ForwardTrace {
            node_count: graph.node_count(),
            fc1_out,
            fc2_out,
            layer_outputs,
            pooled,
            dropout_mask,
            head_input,
            logits,
        })
    }

    /// Exact reverse-mode gradients of `sum_k loss_grad[k] * logits[k]` with
    /// respect to every parameter, using activations from `trace`.
    pub fn backward(
        &self,
        graph: &MessageGraph<F>,
        trace: &ForwardTrace<F>,
        loss_grad: ArrayView1<'_, F>,
    ) -> Result<Params<F>, ModelError> {
        self.check_graph(graph)?;
        if trace.node_count != graph.node_count() || trace.layer_outputs.len() != self.params.layers.len() {
            return Err(ModelError::TraceMismatch(format!(
                "trace covers {} nodes / {} layers, graph has {} nodes and the model {} layers",
                trace.node_count,
                trace.layer_outputs.len(),
                graph.node_count(),
                self.params.layers.len()
            )));
        }
        if loss_grad.len() != self.config.num_classes {
            return Err(ModelError::DimensionMismatch(format!(
                "loss gradient has {} entries for {} classes",
                loss_grad.len(),
                self.config.num_classes
            )));
        }
        let p = &self.params;
        let mut g = Params::zeros(&self.config);
        let n = graph.node_count();

        // head
        let hi = trace.head_input.view().insert_axis(Axis(1));
        g.head.weight.assign(&hi.dot(&loss_grad.insert_axis(Axis(0))));
        g.head.bias = loss_grad.to_owned();
        let mut d_pooled = p.head.weight.dot(&loss_grad);
        if let Some(mask) = &trace.dropout_mask {
            d_pooled *= mask;
        }
        // mean pool spreads 1/N to every node
        let d_pooled = d_pooled / F::of(n as f64);
        let mut d_out = Array2::from_shape_fn((n, d_pooled.len()), |(_, j)| d_pooled[j]);

        for (l, layer) in p.layers.iter().enumerate().rev() {
            let out = &trace.layer_outputs[l];
            let input = if l == 0 { &trace.fc2_out } else { &trace.layer_outputs[l - 1] };
            let in_dim = input.ncols();
            let d_pre = &d_out * &out.mapv(elu_grad);
            let grads = &mut g.layers[l];
            grads.self_weight.assign(&input.t().dot(&d_pre));
            grads.bias = d_pre.sum_axis(Axis(0));
            let mut d_in = d_pre.dot(&layer.self_weight.t());
            for (r, (w, msgs)) in layer.relation_weights.iter().zip(&graph.relations).enumerate() {
                let mut d_projected = Array2::<F>::zeros((n, out.ncols()));
                let mut d_edge_row = Array1::<F>::zeros(out.ncols());
                for k in 0..msgs.targets.len() {
                    let t = msgs.targets[k] as usize;
                    let coef = msgs.inv_degree[t];
                    let src = d_pre.row(t);
                    d_projected.row_mut(msgs.sources[k] as usize).scaled_add(coef, &src);
                    d_edge_row.scaled_add(coef * msgs.features[k], &src);
                }
                let gw = &mut grads.relation_weights[r];
                gw.slice_mut(s![..in_dim, ..]).assign(&input.t().dot(&d_projected));
                gw.row_mut(in_dim).assign(&d_edge_row);
                d_in += &d_projected.dot(&w.slice(s![..in_dim, ..]).t());
            }
            d_out = d_in;
        }

        let d_pre2 = &d_out * &trace.fc2_out.mapv(elu_grad);
        g.fc2.weight.assign(&trace.fc1_out.t().dot(&d_pre2));
        g.fc2.bias = d_pre2.sum_axis(Axis(0));
        let d_fc1 = d_pre2.dot(&p.fc2.weight.t());
        let d_pre1 = &d_fc1 * &trace.fc1_out.mapv(elu_grad);
        g.fc1.weight.assign(&graph.features.t().dot(&d_pre1));
        g.fc1.bias = d_pre1.sum_axis(Axis(0));
        Ok(g)
    }
}
