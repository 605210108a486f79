//! The dialect-style residual mixture-of-experts text-embedding layer.
//!
//! Pipeline: symbol ids are looked up in an embedding table, the sequence is
//! mean-pooled into a single vector, a linear gate scores one expert per
//! dialect, the top-k experts are run on every time step and combined with
//! softmax-renormalized weights, and the result is added back onto the
//! embeddings (residual). An auxiliary cross-entropy loss on the full gate
//! logits supervises dialect identity.
//!
//! Routing is per utterance: the gate sees the pooled sequence, so one expert
//! mixture applies to all time steps of an input.

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::nn::{gaussian_matrix, gelu, gelu_prime, log_sum_exp, softmax, Linear};
use crate::phoneme::{IpaSequence, PAD_ID};
use crate::train::Stage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MoeError {
    #[error("symbol id {id} out of range for table with {rows} rows")]
    IdOutOfRange { id: u32, rows: usize },
    #[error("cannot pool an empty sequence")]
    EmptySequence,
    #[error("top-k must satisfy 1 <= k <= {experts}, got {k}")]
    BadK { k: usize, experts: usize },
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("dialect label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
}

/// The text-embedding table, `V x D`. The PAD row is all zeros and never
/// receives gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(vocab: usize, dim: usize, std: f64, rng: &mut impl Rng) -> Self {
        let mut weights = gaussian_matrix(vocab, dim, std, rng);
        weights.row_mut(PAD_ID as usize).fill(0.0);
        Self { weights }
    }

    pub fn vocab(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Row lookup. PAD ids produce zero rows regardless of table contents.
    pub fn embed(&self, seq: &IpaSequence) -> Result<EmbeddingSequence, MoeError> {
        let dim = self.dim();
        let mut h = Array2::zeros((seq.len(), dim));
        for (t, &id) in seq.ids.iter().enumerate() {
            if id as usize >= self.vocab() {
                return Err(MoeError::IdOutOfRange {
                    id,
                    rows: self.vocab(),
                });
            }
            if id != PAD_ID {
                h.row_mut(t).assign(&self.weights.row(id as usize));
            }
        }
        Ok(EmbeddingSequence {
            h,
            valid_len: seq.len(),
        })
    }

    /// Accumulates `grad_h` into the looked-up rows. PAD rows are skipped.
    pub fn backward(&self, seq: &IpaSequence, grad_h: &Array2<f64>, grad_table: &mut Array2<f64>) {
        for (t, &id) in seq.ids.iter().enumerate() {
            if id != PAD_ID {
                let mut row = grad_table.row_mut(id as usize);
                row += &grad_h.row(t);
            }
        }
    }
}

/// A `T x D` hidden-state sequence with an explicit valid length; rows at or
/// beyond `valid_len` are padding and stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub h: Array2<f64>,
    pub valid_len: usize,
}

impl EmbeddingSequence {
    pub fn dim(&self) -> usize {
        self.h.ncols()
    }
}

/// Mean of the first `valid_len` rows.
pub fn mean_pool(es: &EmbeddingSequence) -> Result<Array1<f64>, MoeError> {
    if es.valid_len == 0 {
        return Err(MoeError::EmptySequence);
    }
    let mut s = Array1::zeros(es.dim());
    for t in 0..es.valid_len {
        s += &es.h.row(t);
    }
    Ok(s / es.valid_len as f64)
}

/// Distributes a pooled gradient back over the contributing rows.
pub fn mean_pool_backward(grad_s: &Array1<f64>, valid_len: usize, grad_h: &mut Array2<f64>) {
    let scaled = grad_s / valid_len as f64;
    for t in 0..valid_len {
        let mut row = grad_h.row_mut(t);
        row += &scaled;
    }
}

/// Two-layer feed-forward expert, `D -> hidden -> D` with GELU. The output
/// layer is zero-initialized so a freshly added expert leaves the residual
/// stream untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertNetwork {
    pub l1: Linear,
    pub l2: Linear,
}

/// Per-expert forward cache: pre-activations, activations, outputs.
#[derive(Debug, Clone)]
pub struct ExpertCache {
    z1: Array2<f64>,
    a1: Array2<f64>,
    pub y: Array2<f64>,
}

impl ExpertNetwork {
    pub fn new(dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            l1: Linear::gaussian(dim, hidden, (2.0 / dim as f64).sqrt(), rng),
            l2: Linear::zeros(hidden, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.l1.d_in()
    }

    /// Applies the expert to the first `valid_len` rows of `h`.
    pub fn forward_rows(&self, h: &Array2<f64>, valid_len: usize) -> ExpertCache {
        let hidden = self.l1.d_out();
        let dim = self.l2.d_out();
        let mut z1 = Array2::zeros((h.nrows(), hidden));
        let mut a1 = Array2::zeros((h.nrows(), hidden));
        let mut y = Array2::zeros((h.nrows(), dim));
        for t in 0..valid_len {
            let x = h.row(t).to_owned();
            let z = self.l1.forward(&x);
            let a = z.mapv(gelu);
            y.row_mut(t).assign(&self.l2.forward(&a));
            z1.row_mut(t).assign(&z);
            a1.row_mut(t).assign(&a);
        }
        ExpertCache { z1, a1, y }
    }

    /// Backward through the expert for the first `valid_len` rows; returns
    /// the gradient with respect to the input rows.
    pub fn backward_rows(
        &self,
        h_in: &Array2<f64>,
        cache: &ExpertCache,
        grad_y: &Array2<f64>,
        valid_len: usize,
        grads: &mut ExpertNetwork,
    ) -> Array2<f64> {
        let mut grad_in = Array2::zeros(h_in.raw_dim());
        for t in 0..valid_len {
            let gy = grad_y.row(t).to_owned();
            let a1 = cache.a1.row(t).to_owned();
            let da1 = self.l2.backward(&a1, &gy, &mut grads.l2.w, &mut grads.l2.b);
            let z1 = cache.z1.row(t);
            let dz1 = Array1::from_shape_fn(da1.len(), |i| da1[i] * gelu_prime(z1[i]));
            let x = h_in.row(t).to_owned();
            let dx = self.l1.backward(&x, &dz1, &mut grads.l1.w, &mut grads.l1.b);
            grad_in.row_mut(t).assign(&dx);
        }
        grad_in
    }
}

/// Linear gate producing one logit per dialect expert.
#[derive(Debug, Clone, PartialEq)]
pub struct GateNetwork {
    pub proj: Linear,
}

impl GateNetwork {
    pub fn new(dim: usize, experts: usize, std: f64, rng: &mut impl Rng) -> Self {
        Self {
            proj: Linear::gaussian(dim, experts, std, rng),
        }
    }

    pub fn classes(&self) -> usize {
        self.proj.d_out()
    }
}

/// Result of one gate decision: the pooled vector it saw, the full logits,
/// the selected expert ids (ascending), and their renormalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutput {
    pub pooled: Array1<f64>,
    pub logits: Array1<f64>,
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Indices of the k largest logits; ties broken in favor of the lower index.
/// The returned ids are sorted ascending.
pub fn select_top_k(logits: &[f64], k: usize) -> Result<Vec<usize>, MoeError> {
    let n = logits.len();
    if k == 0 || k > n {
        return Err(MoeError::BadK { k, experts: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .expect("logits must not be NaN")
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order.into_iter().take(k).collect();
    selected.sort_unstable();
    Ok(selected)
}

/// The residual MoE layer: experts plus gate plus the top-k count.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeLayer {
    pub experts: Vec<ExpertNetwork>,
    pub gate: GateNetwork,
    pub top_k: usize,
}

/// Forward cache for [`MoeLayer::forward`], one entry per selected expert.
#[derive(Debug, Clone)]
pub struct MoeCache {
    pub expert_caches: Vec<ExpertCache>,
}

impl MoeLayer {
    pub fn new(dim: usize, experts: usize, top_k: usize, rng: &mut impl Rng) -> Result<Self, MoeError> {
        if top_k == 0 || top_k > experts {
            return Err(MoeError::BadK { k: top_k, experts });
        }
        Ok(Self {
            experts: (0..experts)
                .map(|_| ExpertNetwork::new(dim, 2 * dim, rng))
                .collect(),
            gate: GateNetwork::new(dim, experts, 0.3, rng),
            top_k,
        })
    }

    pub fn expert_count(&self) -> usize {
        self.experts.len()
    }

    /// Computes gate logits from the pooled vector and selects the top-k
    /// experts with softmax weights renormalized over the selection.
    pub fn gate_forward(&self, pooled: &Array1<f64>) -> Result<GateOutput, MoeError> {
        if pooled.len() != self.gate.proj.d_in() {
            return Err(MoeError::WidthMismatch {
                expected: self.gate.proj.d_in(),
                got: pooled.len(),
            });
        }
        let logits = self.gate.proj.forward(pooled);
        let selected = select_top_k(logits.as_slice().unwrap(), self.top_k)?;
        let picked: Vec<f64> = selected.iter().map(|&i| logits[i]).collect();
        let weights = softmax(&picked);
        Ok(GateOutput {
            pooled: pooled.clone(),
            logits,
            selected,
            weights,
        })
    }

    /// `h'_t = sum_k w_k Expert_k(h_t) + h_t` over the valid rows; padding
    /// rows stay zero.
    pub fn forward(
        &self,
        es: &EmbeddingSequence,
        gate_out: &GateOutput,
    ) -> Result<(EmbeddingSequence, MoeCache), MoeError> {
        let dim = es.dim();
        if self.experts.is_empty() || self.experts[0].dim() != dim {
            return Err(MoeError::WidthMismatch {
                expected: self.experts.first().map_or(0, ExpertNetwork::dim),
                got: dim,
            });
        }
        let mut out = es.h.clone();
        let mut expert_caches = Vec::with_capacity(gate_out.selected.len());
        for (&idx, &w) in gate_out.selected.iter().zip(&gate_out.weights) {
            let cache = self.experts[idx].forward_rows(&es.h, es.valid_len);
            for t in 0..es.valid_len {
                let mut row = out.row_mut(t);
                row.scaled_add(w, &cache.y.row(t));
            }
            expert_caches.push(cache);
        }
        Ok((
            EmbeddingSequence {
                h: out,
                valid_len: es.valid_len,
            },
            MoeCache { expert_caches },
        ))
    }

    /// Backward through the residual mixture. Accumulates expert gradients,
    /// returns the gradient with respect to the input rows together with the
    /// gradient on the selected routing weights.
    pub fn backward(
        &self,
        es_in: &EmbeddingSequence,
        gate_out: &GateOutput,
        cache: &MoeCache,
        grad_out: &Array2<f64>,
        grads: &mut MoeLayer,
    ) -> (Array2<f64>, Vec<f64>) {
        // residual path
        let mut grad_in = grad_out.clone();
        let mut grad_weights = vec![0.0; gate_out.selected.len()];
        for (slot, (&idx, &w)) in gate_out.selected.iter().zip(&gate_out.weights).enumerate() {
            let ecache = &cache.expert_caches[slot];
            // dL/dw_j = sum_t grad_out_t . y_jt
            let mut gw = 0.0;
            for t in 0..es_in.valid_len {
                gw += grad_out.row(t).dot(&ecache.y.row(t));
            }
            grad_weights[slot] = gw;
            // dL/dy_jt = w_j * grad_out_t
            let grad_y = grad_out.mapv(|g| g * w);
            let dx = self.experts[idx].backward_rows(
                &es_in.h,
                ecache,
                &grad_y,
                es_in.valid_len,
                &mut grads.experts[idx],
            );
            grad_in += &dx;
        }
        (grad_in, grad_weights)
    }
}

/// Jacobian of `weights = softmax(selected logits)` applied to a gradient on
/// the weights: `d logit_i = w_i (d w_i - sum_j d w_j w_j)`.
pub fn softmax_selected_backward(weights: &[f64], grad_weights: &[f64]) -> Vec<f64> {
    let dot: f64 = weights
        .iter()
        .zip(grad_weights)
        .map(|(&w, &g)| w * g)
        .sum();
    weights
        .iter()
        .zip(grad_weights)
        .map(|(&w, &g)| w * (g - dot))
        .collect()
}

/// Mean-reduced cross-entropy of the full gate logits against dialect labels.
pub fn dialect_loss(logits: &[Array1<f64>], labels: &[u32]) -> Result<f64, MoeError> {
    assert_eq!(logits.len(), labels.len(), "one label per logit vector");
    let n = logits.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (g, &y) in logits.iter().zip(labels) {
        if y as usize >= g.len() {
            return Err(MoeError::LabelOutOfRange {
                label: y,
                classes: g.len(),
            });
        }
        let lse = log_sum_exp(g.as_slice().unwrap());
        total += lse - g[y as usize];
    }
    Ok(total / n as f64)
}

/// Per-example gradient of the (unscaled) cross-entropy term:
/// `softmax(g) - onehot(y)`. The caller applies the `1/N` batch factor.
pub fn dialect_loss_grad(logits: &Array1<f64>, label: u32) -> Result<Array1<f64>, MoeError> {
    if label as usize >= logits.len() {
        return Err(MoeError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let mut g = Array1::from_vec(softmax(logits.as_slice().unwrap()));
    g[label as usize] -= 1.0;
    Ok(g)
}

/// The components of one optimization step's objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_task: f64,
    pub l_dialect: f64,
    pub lambda: f64,
    pub total: f64,
    pub batch_size: usize,
}

/// Combines the flow-matching task loss with the auxiliary dialect loss.
/// The dialect weight is 0.1 in the gate-supervised joint stage and 0
/// everywhere else.
pub fn total_loss(l_task: f64, l_dialect: f64, stage: Stage, batch_size: usize) -> LossBreakdown {
    combine_losses(l_task, l_dialect, stage.lambda(), batch_size)
}

/// [`total_loss`] with an explicit weight instead of a stage.
pub fn combine_losses(l_task: f64, l_dialect: f64, lambda: f64, batch_size: usize) -> LossBreakdown {
    LossBreakdown {
        l_task,
        l_dialect,
        lambda,
        total: l_task + lambda * l_dialect,
        batch_size,
    }
}
