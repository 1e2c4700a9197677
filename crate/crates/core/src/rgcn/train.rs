use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::engine::{MessageGraph, Mode};
use super::{ModelConfig, ModelError, Params, RgcnModel, Scalar};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Softmax cross-entropy of one example. Returns the loss and its gradient
/// with respect to the logits.
pub fn cross_entropy<F: Scalar>(logits: ArrayView1<'_, F>, label: usize) -> Result<(f64, Array1<F>), ModelError> {
    if label >= logits.len() {
        return Err(ModelError::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    let exp = logits.mapv(|z| (z - max).exp());
    let sum: F = exp.sum();
    let loss = (sum.ln() + max - logits[label]).to_f64().unwrap_or(f64::NAN);
    let mut grad = exp / sum;
    grad[label] -= F::one();
    Ok((loss, grad))
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Params<F>,
    pub v: Params<F>,
    pub step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            m: Params::zeros(config),
            v: Params::zeros(config),
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn update(&mut self, params: &mut Params<F>, grads: &Params<F>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (F::of(ADAM_BETA1), F::of(ADAM_BETA2));
        let c1 = F::of(1.0 - ADAM_BETA1.powi(t));
        let c2 = F::of(1.0 - ADAM_BETA2.powi(t));
        let (lr, eps) = (F::of(lr), F::of(ADAM_EPSILON));
        let grads = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (F::one() - b1) * g[i];
                v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Logits of every selected view and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsView<F> {
    pub per_view: Vec<Array1<F>>,
    pub aggregated: Array1<F>,
}

impl<F: Scalar> LogitsView<F> {
    /// Class indices sorted by descending aggregated logit.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.aggregated.len()).collect();
        order.sort_by(|&a, &b| {
            self.aggregated[b]
                .partial_cmp(&self.aggregated[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(k);
        order
    }
}

/// Evenly spaced clip indices over `0..clips`, first and last included.
/// A single view picks the middle clip. More views than clips repeat
/// indices.
pub fn view_indices(clips: usize, views: usize) -> Vec<usize> {
    if clips == 0 || views == 0 {
        return Vec::new();
    }
    if views == 1 {
        return vec![clips / 2];
    }
    let last = (clips - 1) as f64;
    (0..views)
        .map(|k| (k as f64 * last / (views - 1) as f64).round() as usize)
        .collect()
}

impl<F: Scalar> RgcnModel<F> {
    /// Mean cross-entropy over the batch followed by one Adam step.
    /// Each graph gets its own dropout stream seeded from `rng`, so the
    /// result does not depend on thread scheduling.
    pub fn train_step(
        &mut self,
        graphs: &[MessageGraph<F>],
        labels: &[usize],
        adam: &mut AdamState<F>,
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, ModelError> {
        if graphs.is_empty() {
            return Err(ModelError::EmptyInput("training batch is empty"));
        }
        if graphs.len() != labels.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "{} graphs but {} labels",
                graphs.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.config.num_classes) {
            return Err(ModelError::BadLabel {
                label,
                classes: self.config.num_classes,
            });
        }
        let seeds: Vec<u64> = graphs.iter().map(|_| rng.random()).collect();
        let model = &*self;
        let results: Vec<Result<(f64, Params<F>), ModelError>> = graphs
            .par_iter()
            .zip(labels.par_iter())
            .zip(seeds.par_iter())
            .map(|((graph, &label), &seed)| {
                let mut drop_rng = ChaCha8Rng::seed_from_u64(seed);
                let trace = model.forward_traced(graph, Mode::Train(&mut drop_rng))?;
                let (loss, dlogits) = cross_entropy(trace.logits.view(), label)?;
                let grads = model.backward(graph, &trace, dlogits.view())?;
                Ok((loss, grads))
            })
            .collect();

        let scale = F::of(1.0 / graphs.len() as f64);
        let mut total = Params::zeros(&self.config);
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l;
            total.add_scaled(scale, &g);
        }
        loss /= graphs.len() as f64;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss(loss));
        }
        adam.update(&mut self.params, &total, lr);
        Ok(loss)
    }

    /// Eval-mode logits averaged over evenly spaced views of a video.
    pub fn infer_views(&self, clips: &[MessageGraph<F>], views: usize) -> Result<LogitsView<F>, ModelError> {
        if clips.is_empty() {
            return Err(ModelError::EmptyInput("no clips to infer on"));
        }
        if views == 0 {
            return Err(ModelError::EmptyInput("at least one view is required"));
        }
        let per_view = view_indices(clips.len(), views)
            .into_par_iter()
            .map(|i| self.forward(&clips[i], Mode::Eval))
            .collect::<Result<Vec<_>, _>>()?;
        let mut aggregated = Array1::zeros(self.config.num_classes);
        for l in &per_view {
            aggregated += l;
        }
        aggregated.mapv_inplace(|x| x / F::of(per_view.len() as f64));
        Ok(LogitsView { per_view, aggregated })
    }
}
