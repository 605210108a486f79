//! The toy conditional-generation model: embedding table, optional residual
//! MoE with gate, optional conditioning adapter, a small attention backbone,
//! and an MLP head predicting a vector field from `(x_t, t, condition)`.
//!
//! Forward passes record caches; [`TtsModel::loss_and_grad`] replays them to
//! produce analytic gradients for every parameter. Gradients are returned in
//! a zeroed clone of the model so parameters and gradients always iterate in
//! the same named order.

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::moe::{
    dialect_loss_grad, mean_pool, mean_pool_backward, softmax_selected_backward, EmbeddingSequence,
    EmbeddingTable, GateOutput, LossBreakdown, MoeCache, MoeError, MoeLayer,
};
use crate::nn::{gaussian_matrix, gelu, gelu_prime, softmax, Linear};
use crate::peft::{AdapterCache, ConditioningAdapter, LoraAdapter};
use crate::phoneme::IpaSequence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("mixture-of-experts layer is already attached")]
    MoeAlreadyAttached,
}

/// Sizes and defaults for the toy model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Symbol inventory size (embedding rows).
    pub vocab: usize,
    /// Hidden width D shared by embedding, MoE, and attention.
    pub model_dim: usize,
    /// Output feature width F (the mel surrogate).
    pub feature_dim: usize,
    /// Number of self-attention blocks in the backbone.
    pub attn_blocks: usize,
    /// Hidden width of the field-prediction head.
    pub head_hidden: usize,
    /// Dialect count K used when the MoE layer is attached.
    pub n_experts: usize,
    /// Experts activated per utterance.
    pub top_k: usize,
    /// Low-rank adapter rank.
    pub lora_rank: usize,
    /// Low-rank adapter numerator; the applied scale is `alpha / rank`.
    pub lora_alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab: 64,
            model_dim: 16,
            feature_dim: 8,
            attn_blocks: 1,
            head_hidden: 32,
            n_experts: 3,
            top_k: 2,
            lora_rank: 16,
            lora_alpha: 1.0,
        }
    }
}

/// Single-head self-attention with residual connection. Low-rank adapters
/// may be registered on the query and value projections only.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub lora_q: Option<LoraAdapter>,
    pub lora_v: Option<LoraAdapter>,
}

#[derive(Debug, Clone)]
pub struct AttnCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    p: Array2<f64>,
    c: Array2<f64>,
    u_q: Option<Array2<f64>>,
    u_v: Option<Array2<f64>>,
}

impl AttentionBlock {
    pub fn new(dim: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / dim as f64).sqrt();
        Self {
            wq: gaussian_matrix(dim, dim, std, rng),
            wk: gaussian_matrix(dim, dim, std, rng),
            wv: gaussian_matrix(dim, dim, std, rng),
            wo: gaussian_matrix(dim, dim, std, rng),
            lora_q: None,
            lora_v: None,
        }
    }

    /// `h` holds only valid rows here (`T x D`).
    fn forward(&self, h: &Array2<f64>) -> (Array2<f64>, AttnCache) {
        let scale = 1.0 / (h.ncols() as f64).sqrt();
        let mut q = h.dot(&self.wq.t());
        let mut u_q = None;
        if let Some(lora) = &self.lora_q {
            let (delta, u) = lora.delta_rows(h);
            q += &delta;
            u_q = Some(u);
        }
        let k = h.dot(&self.wk.t());
        let mut v = h.dot(&self.wv.t());
        let mut u_v = None;
        if let Some(lora) = &self.lora_v {
            let (delta, u) = lora.delta_rows(h);
            v += &delta;
            u_v = Some(u);
        }
        let scores = q.dot(&k.t()) * scale;
        let mut p = Array2::zeros(scores.raw_dim());
        for (i, row) in scores.rows().into_iter().enumerate() {
            let soft = softmax(row.as_slice().unwrap());
            p.row_mut(i).assign(&Array1::from_vec(soft));
        }
        let c = p.dot(&v);
        let y = h + &c.dot(&self.wo.t());
        (
            y,
            AttnCache {
                q,
                k,
                v,
                p,
                c,
                u_q,
                u_v,
            },
        )
    }

    fn backward(
        &self,
        h_in: &Array2<f64>,
        cache: &AttnCache,
        grad_y: &Array2<f64>,
        grads: &mut AttentionBlock,
    ) -> Array2<f64> {
        let scale = 1.0 / (h_in.ncols() as f64).sqrt();
        let mut grad_h = grad_y.clone();

        grads.wo += &grad_y.t().dot(&cache.c);
        let grad_c = grad_y.dot(&self.wo);

        let grad_p = grad_c.dot(&cache.v.t());
        let grad_v = cache.p.t().dot(&grad_c);

        // softmax rows: ds = p * (dp - (dp . p))
        let mut grad_s = Array2::zeros(grad_p.raw_dim());
        for i in 0..grad_p.nrows() {
            let p = cache.p.row(i);
            let dp = grad_p.row(i);
            let dot = dp.dot(&p);
            for j in 0..p.len() {
                grad_s[[i, j]] = p[j] * (dp[j] - dot);
            }
        }

        let grad_q = grad_s.dot(&cache.k) * scale;
        let grad_k = grad_s.t().dot(&cache.q) * scale;

        grads.wq += &grad_q.t().dot(h_in);
        grads.wk += &grad_k.t().dot(h_in);
        grads.wv += &grad_v.t().dot(h_in);

        grad_h += &grad_q.dot(&self.wq);
        grad_h += &grad_k.dot(&self.wk);
        grad_h += &grad_v.dot(&self.wv);

        if let (Some(lora), Some(u)) = (&self.lora_q, &cache.u_q) {
            let g = grads.lora_q.as_mut().expect("grads mirror the model");
            grad_h += &lora.backward_rows(h_in, u, &grad_q, g);
        }
        if let (Some(lora), Some(u)) = (&self.lora_v, &cache.u_v) {
            let g = grads.lora_v.as_mut().expect("grads mirror the model");
            grad_h += &lora.backward_rows(h_in, u, &grad_v, g);
        }
        grad_h
    }
}

/// Two-layer GELU MLP mapping `[x_t; t; condition]` to the predicted field.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub l1: Linear,
    pub l2: Linear,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    z_in: Array1<f64>,
    z1: Array1<f64>,
    a1: Array1<f64>,
}

impl MlpHead {
    pub fn new(d_in: usize, hidden: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            l1: Linear::gaussian(d_in, hidden, (2.0 / d_in as f64).sqrt(), rng),
            l2: Linear::gaussian(hidden, d_out, (1.0 / hidden as f64).sqrt(), rng),
        }
    }

    fn forward(&self, z_in: Array1<f64>) -> (Array1<f64>, HeadCache) {
        let z1 = self.l1.forward(&z_in);
        let a1 = z1.mapv(gelu);
        let out = self.l2.forward(&a1);
        (out, HeadCache { z_in, z1, a1 })
    }

    fn backward(&self, cache: &HeadCache, grad_out: &Array1<f64>, grads: &mut MlpHead) -> Array1<f64> {
        let da1 = self
            .l2
            .backward(&cache.a1, grad_out, &mut grads.l2.w, &mut grads.l2.b);
        let dz1 = Array1::from_shape_fn(da1.len(), |i| da1[i] * gelu_prime(cache.z1[i]));
        self.l1
            .backward(&cache.z_in, &dz1, &mut grads.l1.w, &mut grads.l1.b)
    }
}

/// Attention blocks plus the field-prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub blocks: Vec<AttentionBlock>,
    pub head: MlpHead,
}

/// The full model. MoE and adapters are absent until their stage attaches
/// them; attaching never changes outputs (zero-initialized deltas).
#[derive(Debug, Clone, PartialEq)]
pub struct TtsModel {
    pub config: ModelConfig,
    pub embedding: EmbeddingTable,
    pub moe: Option<MoeLayer>,
    pub adapter: Option<ConditioningAdapter>,
    pub backbone: Backbone,
}

/// One training example as the loss sees it: the IPA ids, the dialect label,
/// the noise/data endpoints and the flow time.
#[derive(Debug, Clone)]
pub struct LossItem {
    pub seq: IpaSequence,
    pub label: u32,
    pub x0: Array1<f64>,
    pub x1: Array1<f64>,
    pub t: f64,
}

/// Cache of one example's forward pass.
pub struct ExampleCache {
    es0: EmbeddingSequence,
    gate: Option<GateOutput>,
    moe_cache: Option<MoeCache>,
    es1_valid: Array2<f64>,
    adapter_cache: Option<AdapterCache>,
    attn_inputs: Vec<Array2<f64>>,
    attn_caches: Vec<AttnCache>,
    head_cache: HeadCache,
    v_hat: Array1<f64>,
    u: Array1<f64>,
}

impl TtsModel {
    pub fn new(config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let embedding = EmbeddingTable::new(config.vocab, config.model_dim, 0.2, rng);
        let blocks = (0..config.attn_blocks)
            .map(|_| AttentionBlock::new(config.model_dim, rng))
            .collect();
        let head = MlpHead::new(
            config.feature_dim + 1 + config.model_dim,
            config.head_hidden,
            config.feature_dim,
            rng,
        );
        Self {
            config: config.clone(),
            embedding,
            moe: None,
            adapter: None,
            backbone: Backbone { blocks, head },
        }
    }

    /// Adds the residual MoE layer with zero-initialized expert outputs, so
    /// the model function is unchanged at the moment of attachment.
    pub fn attach_moe(&mut self, rng: &mut impl Rng) -> Result<(), ModelError> {
        if self.moe.is_some() {
            return Err(ModelError::MoeAlreadyAttached);
        }
        let layer = MoeLayer::new(
            self.config.model_dim,
            self.config.n_experts,
            self.config.top_k,
            rng,
        )
        .expect("config top_k validated against n_experts");
        self.moe = Some(layer);
        Ok(())
    }

    /// Embedding -> MoE -> adapter -> attention -> mean pool. Returns the
    /// conditioning vector and the cache needed for the backward pass.
    pub fn condition_forward(
        &self,
        seq: &IpaSequence,
    ) -> Result<(Array1<f64>, ExampleCachePartial), MoeError> {
        if seq.is_empty() {
            return Err(MoeError::EmptySequence);
        }
        let es0 = self.embedding.embed(seq)?;

        let (es1, gate, moe_cache) = match &self.moe {
            Some(layer) => {
                let pooled = mean_pool(&es0)?;
                let gate = layer.gate_forward(&pooled)?;
                let (es1, cache) = layer.forward(&es0, &gate)?;
                (es1, Some(gate), Some(cache))
            }
            None => (es0.clone(), None, None),
        };

        let valid = es1.valid_len;
        let es1_valid = es1.h.slice(ndarray::s![..valid, ..]).to_owned();
        let (es2_valid, adapter_cache) = match &self.adapter {
            Some(adapter) => {
                let (out, cache) = adapter.forward_rows(&es1_valid, valid);
                (out, Some(cache))
            }
            None => (es1_valid.clone(), None),
        };

        let mut attn_inputs = Vec::with_capacity(self.backbone.blocks.len());
        let mut attn_caches = Vec::with_capacity(self.backbone.blocks.len());
        let mut h = es2_valid;
        for block in &self.backbone.blocks {
            attn_inputs.push(h.clone());
            let (y, cache) = block.forward(&h);
            attn_caches.push(cache);
            h = y;
        }

        let pooled = mean_pool(&EmbeddingSequence {
            h: h.clone(),
            valid_len: valid,
        })?;

        Ok((
            pooled,
            ExampleCachePartial {
                es0,
                gate,
                moe_cache,
                es1_valid,
                adapter_cache,
                attn_inputs,
                attn_caches,
            },
        ))
    }

    /// Evaluates the predicted vector field at `(x, t)` under a conditioning
    /// vector.
    pub fn predict_field(&self, x: &Array1<f64>, t: f64, cond: &Array1<f64>) -> Array1<f64> {
        let (out, _) = self.backbone.head.forward(head_input(x, t, cond));
        out
    }

    /// Forward pass of the combined objective on a batch. `lambda` weighs the
    /// dialect cross-entropy; when it is zero the gate loss is skipped (and
    /// labels may lie outside the gate's classes).
    pub fn batch_loss(&self, items: &[LossItem], lambda: f64) -> Result<LossBreakdown, MoeError> {
        let (breakdown, _) = self.batch_forward(items, lambda)?;
        Ok(breakdown)
    }

    fn batch_forward(
        &self,
        items: &[LossItem],
        lambda: f64,
    ) -> Result<(LossBreakdown, Vec<ExampleCache>), MoeError> {
        let n = items.len();
        assert!(n > 0, "empty batch");
        let f_dim = self.config.feature_dim;
        let mut l_task = 0.0;
        let mut l_dialect = 0.0;
        let mut caches = Vec::with_capacity(n);
        for item in items {
            let (cond, partial) = self.condition_forward(&item.seq)?;
            let x_t = (1.0 - item.t) * &item.x0 + item.t * &item.x1;
            let u = &item.x1 - &item.x0;
            let (v_hat, head_cache) = self
                .backbone
                .head
                .forward(head_input(&x_t, item.t, &cond));
            l_task += (&v_hat - &u).mapv(|d| d * d).sum() / f_dim as f64;

            if lambda != 0.0 {
                if let Some(gate) = &partial.gate {
                    if item.label as usize >= gate.logits.len() {
                        return Err(MoeError::LabelOutOfRange {
                            label: item.label,
                            classes: gate.logits.len(),
                        });
                    }
                    let lse = crate::nn::log_sum_exp(gate.logits.as_slice().unwrap());
                    l_dialect += lse - gate.logits[item.label as usize];
                }
            }

            caches.push(ExampleCache {
                es0: partial.es0,
                gate: partial.gate,
                moe_cache: partial.moe_cache,
                es1_valid: partial.es1_valid,
                adapter_cache: partial.adapter_cache,
                attn_inputs: partial.attn_inputs,
                attn_caches: partial.attn_caches,
                head_cache,
                v_hat,
                u,
            });
        }
        l_task /= n as f64;
        l_dialect /= n as f64;
        Ok((
            crate::moe::combine_losses(l_task, l_dialect, lambda, n),
            caches,
        ))
    }

    /// Forward plus analytic backward. Returns the loss breakdown and the
    /// gradients in a zeroed model-shaped container, iterable in the same
    /// named order as the parameters.
    pub fn loss_and_grad(
        &self,
        items: &[LossItem],
        lambda: f64,
    ) -> Result<(LossBreakdown, TtsModel), MoeError> {
        let (breakdown, caches) = self.batch_forward(items, lambda)?;
        let n = items.len() as f64;
        let f_dim = self.config.feature_dim as f64;
        let mut grads = self.zeros_like();

        for (item, cache) in items.iter().zip(&caches) {
            // task head: d l_task / d v_hat = 2 (v_hat - u) / (F * N)
            let grad_v = (&cache.v_hat - &cache.u).mapv(|d| 2.0 * d / (f_dim * n));
            let grad_z = self
                .backbone
                .head
                .backward(&cache.head_cache, &grad_v, &mut grads.backbone.head);
            let d_model = self.config.model_dim;
            let f = self.config.feature_dim;
            let grad_cond = grad_z.slice(ndarray::s![f + 1..f + 1 + d_model]).to_owned();

            // pooled condition over the attention output rows
            let valid = cache.es0.valid_len;
            let mut grad_h = Array2::zeros((valid, d_model));
            mean_pool_backward(&grad_cond, valid, &mut grad_h);

            // attention blocks, last to first
            for (idx, block) in self.backbone.blocks.iter().enumerate().rev() {
                grad_h = block.backward(
                    &cache.attn_inputs[idx],
                    &cache.attn_caches[idx],
                    &grad_h,
                    &mut grads.backbone.blocks[idx],
                );
            }

            // conditioning adapter
            if let Some(adapter) = &self.adapter {
                let acache = cache.adapter_cache.as_ref().expect("cache mirrors model");
                grad_h = adapter.backward_rows(
                    &cache.es1_valid,
                    acache,
                    &grad_h,
                    valid,
                    grads.adapter.as_mut().expect("grads mirror the model"),
                );
            }

            // MoE layer plus gate paths
            if let Some(layer) = &self.moe {
                let gate = cache.gate.as_ref().expect("cache mirrors model");
                let moe_cache = cache.moe_cache.as_ref().expect("cache mirrors model");
                let gmoe = grads.moe.as_mut().expect("grads mirror the model");
                let (mut grad_h0, grad_weights) =
                    layer.backward(&cache.es0, gate, moe_cache, &grad_h, gmoe);

                // routing weights -> selected logits -> full logits
                let d_sel = softmax_selected_backward(&gate.weights, &grad_weights);
                let mut grad_logits = Array1::zeros(gate.logits.len());
                for (slot, &expert) in gate.selected.iter().enumerate() {
                    grad_logits[expert] += d_sel[slot];
                }
                // auxiliary dialect cross-entropy on the full logits
                if breakdown.lambda != 0.0 {
                    let ce = dialect_loss_grad(&gate.logits, item.label)?;
                    grad_logits += &(ce * (breakdown.lambda / n));
                }
                // gate projection and the pooled vector it consumed
                let grad_s = layer.gate.proj.backward(
                    &gate.pooled,
                    &grad_logits,
                    &mut gmoe.gate.proj.w,
                    &mut gmoe.gate.proj.b,
                );
                mean_pool_backward(&grad_s, valid, &mut grad_h0);
                grad_h = grad_h0;
            }

            self.embedding
                .backward(&item.seq, &grad_h, &mut grads.embedding.weights);
        }
        Ok((breakdown, grads))
    }

    /// A clone with every parameter set to zero; used as a gradient container.
    pub fn zeros_like(&self) -> TtsModel {
        let mut clone = self.clone();
        for (_, mut view) in clone.named_params_mut() {
            view.fill(0.0);
        }
        clone
    }

    /// Names of all parameters in iteration order.
    pub fn param_names(&self) -> Vec<String> {
        self.named_params().into_iter().map(|(n, _)| n).collect()
    }

    /// Immutable views of all parameters with stable names and order.
    pub fn named_params(&self) -> Vec<(String, ndarray::ArrayViewD<'_, f64>)> {
        let mut out: Vec<(String, ndarray::ArrayViewD<'_, f64>)> = Vec::new();
        out.push(("embedding.table".into(), self.embedding.weights.view().into_dyn()));
        if let Some(moe) = &self.moe {
            for (i, expert) in moe.experts.iter().enumerate() {
                out.push((format!("moe.expert.{i}.l1.w"), expert.l1.w.view().into_dyn()));
                out.push((format!("moe.expert.{i}.l1.b"), expert.l1.b.view().into_dyn()));
                out.push((format!("moe.expert.{i}.l2.w"), expert.l2.w.view().into_dyn()));
                out.push((format!("moe.expert.{i}.l2.b"), expert.l2.b.view().into_dyn()));
            }
            out.push(("moe.gate.w".into(), moe.gate.proj.w.view().into_dyn()));
            out.push(("moe.gate.b".into(), moe.gate.proj.b.view().into_dyn()));
        }
        if let Some(adapter) = &self.adapter {
            out.push(("adapter.down.w".into(), adapter.down.w.view().into_dyn()));
            out.push(("adapter.down.b".into(), adapter.down.b.view().into_dyn()));
            out.push(("adapter.up.w".into(), adapter.up.w.view().into_dyn()));
            out.push(("adapter.up.b".into(), adapter.up.b.view().into_dyn()));
        }
        for (i, block) in self.backbone.blocks.iter().enumerate() {
            out.push((format!("backbone.block.{i}.wq"), block.wq.view().into_dyn()));
            out.push((format!("backbone.block.{i}.wk"), block.wk.view().into_dyn()));
            out.push((format!("backbone.block.{i}.wv"), block.wv.view().into_dyn()));
            out.push((format!("backbone.block.{i}.wo"), block.wo.view().into_dyn()));
            if let Some(lora) = &block.lora_q {
                out.push((format!("backbone.block.{i}.lora_q.a"), lora.a.view().into_dyn()));
                out.push((format!("backbone.block.{i}.lora_q.b"), lora.b.view().into_dyn()));
            }
            if let Some(lora) = &block.lora_v {
                out.push((format!("backbone.block.{i}.lora_v.a"), lora.a.view().into_dyn()));
                out.push((format!("backbone.block.{i}.lora_v.b"), lora.b.view().into_dyn()));
            }
        }
        out.push(("backbone.head.l1.w".into(), self.backbone.head.l1.w.view().into_dyn()));
        out.push(("backbone.head.l1.b".into(), self.backbone.head.l1.b.view().into_dyn()));
        out.push(("backbone.head.l2.w".into(), self.backbone.head.l2.w.view().into_dyn()));
        out.push(("backbone.head.l2.b".into(), self.backbone.head.l2.b.view().into_dyn()));
        out
    }

    /// Mutable views of all parameters; same names and order as
    /// [`TtsModel::named_params`].
    pub fn named_params_mut(&mut self) -> Vec<(String, ndarray::ArrayViewMutD<'_, f64>)> {
        let mut out: Vec<(String, ndarray::ArrayViewMutD<'_, f64>)> = Vec::new();
        out.push(("embedding.table".into(), self.embedding.weights.view_mut().into_dyn()));
        if let Some(moe) = &mut self.moe {
            for (i, expert) in moe.experts.iter_mut().enumerate() {
                out.push((format!("moe.expert.{i}.l1.w"), expert.l1.w.view_mut().into_dyn()));
                out.push((format!("moe.expert.{i}.l1.b"), expert.l1.b.view_mut().into_dyn()));
                out.push((format!("moe.expert.{i}.l2.w"), expert.l2.w.view_mut().into_dyn()));
                out.push((format!("moe.expert.{i}.l2.b"), expert.l2.b.view_mut().into_dyn()));
            }
            out.push(("moe.gate.w".into(), moe.gate.proj.w.view_mut().into_dyn()));
            out.push(("moe.gate.b".into(), moe.gate.proj.b.view_mut().into_dyn()));
        }
        if let Some(adapter) = &mut self.adapter {
            out.push(("adapter.down.w".into(), adapter.down.w.view_mut().into_dyn()));
            out.push(("adapter.down.b".into(), adapter.down.b.view_mut().into_dyn()));
            out.push(("adapter.up.w".into(), adapter.up.w.view_mut().into_dyn()));
            out.push(("adapter.up.b".into(), adapter.up.b.view_mut().into_dyn()));
        }
        for (i, block) in self.backbone.blocks.iter_mut().enumerate() {
            out.push((format!("backbone.block.{i}.wq"), block.wq.view_mut().into_dyn()));
            out.push((format!("backbone.block.{i}.wk"), block.wk.view_mut().into_dyn()));
            out.push((format!("backbone.block.{i}.wv"), block.wv.view_mut().into_dyn()));
            out.push((format!("backbone.block.{i}.wo"), block.wo.view_mut().into_dyn()));
            if let Some(lora) = &mut block.lora_q {
                out.push((format!("backbone.block.{i}.lora_q.a"), lora.a.view_mut().into_dyn()));
                out.push((format!("backbone.block.{i}.lora_q.b"), lora.b.view_mut().into_dyn()));
            }
            if let Some(lora) = &mut block.lora_v {
                out.push((format!("backbone.block.{i}.lora_v.a"), lora.a.view_mut().into_dyn()));
                out.push((format!("backbone.block.{i}.lora_v.b"), lora.b.view_mut().into_dyn()));
            }
        }
        out.push(("backbone.head.l1.w".into(), self.backbone.head.l1.w.view_mut().into_dyn()));
        out.push(("backbone.head.l1.b".into(), self.backbone.head.l1.b.view_mut().into_dyn()));
        out.push(("backbone.head.l2.w".into(), self.backbone.head.l2.w.view_mut().into_dyn()));
        out.push(("backbone.head.l2.b".into(), self.backbone.head.l2.b.view_mut().into_dyn()));
        out
    }

    /// A copy of all parameter values, for freeze checks and determinism
    /// comparisons.
    pub fn snapshot(&self) -> Vec<(String, Vec<f64>)> {
        self.named_params()
            .into_iter()
            .map(|(name, view)| (name, view.iter().copied().collect()))
            .collect()
    }
}

/// Zeroes gradient entries whose names are not in the trainable set.
pub fn zero_frozen_grads(grads: &mut TtsModel, trainable: &std::collections::BTreeSet<String>) {
    for (name, mut view) in grads.named_params_mut() {
        if !trainable.contains(&name) {
            view.fill(0.0);
        }
    }
}

fn head_input(x: &Array1<f64>, t: f64, cond: &Array1<f64>) -> Array1<f64> {
    let mut z = Array1::zeros(x.len() + 1 + cond.len());
    z.slice_mut(ndarray::s![..x.len()]).assign(x);
    z[x.len()] = t;
    z.slice_mut(ndarray::s![x.len() + 1..]).assign(cond);
    z
}

/// Intermediate bundle produced by [`TtsModel::condition_forward`].
pub struct ExampleCachePartial {
    es0: EmbeddingSequence,
    gate: Option<GateOutput>,
    moe_cache: Option<MoeCache>,
    es1_valid: Array2<f64>,
    adapter_cache: Option<AdapterCache>,
    attn_inputs: Vec<Array2<f64>>,
    attn_caches: Vec<AttnCache>,
}
