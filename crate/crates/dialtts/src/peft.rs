//! Parameter-efficient adaptation: low-rank adapters on the attention query
//! and value projections, a zero-initialized conditioning adapter on the
//! embedding path, and the stage-dependent trainable-parameter sets.
//!
//! Fresh adapters are exact no-ops (LoRA `B` and adapter output layers start
//! at zero), so attaching them never changes model outputs.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::model::TtsModel;
use crate::nn::{gaussian_matrix, gelu, gelu_prime, Linear};
use crate::train::Stage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PeftError {
    #[error("adapters are already attached")]
    AlreadyAttached,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("rank must be at least 1")]
    BadRank,
}

/// Low-rank delta `scaling * B A` on a frozen base weight, with
/// `A: r x d_in`, `B: d_out x r`, `scaling = alpha / r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    /// `A ~ N(0, 0.02)`, `B = 0`: the fresh adapter contributes nothing.
    pub fn new(d_in: usize, d_out: usize, rank: usize, alpha: f64, rng: &mut impl Rng) -> Result<Self, PeftError> {
        if rank == 0 {
            return Err(PeftError::BadRank);
        }
        Ok(Self {
            a: gaussian_matrix(rank, d_in, 0.02, rng),
            b: Array2::zeros((d_out, rank)),
            rank,
            alpha,
        })
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// Zero-valued clone used as a gradient container.
    pub fn zeros_like(&self) -> Self {
        Self {
            a: Array2::zeros(self.a.raw_dim()),
            b: Array2::zeros(self.b.raw_dim()),
            rank: self.rank,
            alpha: self.alpha,
        }
    }

    /// `y = W x + scaling * B (A x)`.
    pub fn forward(&self, w: &Array2<f64>, x: &Array1<f64>) -> Result<Array1<f64>, PeftError> {
        if w.ncols() != x.len() || self.a.ncols() != x.len() || self.b.nrows() != w.nrows() {
            return Err(PeftError::ShapeMismatch(format!(
                "W {}x{}, A {}x{}, B {}x{}, x {}",
                w.nrows(),
                w.ncols(),
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols(),
                x.len()
            )));
        }
        let u = self.a.dot(x);
        Ok(w.dot(x) + self.scaling() * self.b.dot(&u))
    }

    /// Row-wise delta only: `scaling * X A^T B^T`. The caller adds the base
    /// projection. Returns the delta and the intermediate `U = X A^T` needed
    /// for the backward pass.
    pub fn delta_rows(&self, xs: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let u = xs.dot(&self.a.t());
        let delta = self.scaling() * u.dot(&self.b.t());
        (delta, u)
    }

    /// Backward through the low-rank path. Accumulates `dA`, `dB` and returns
    /// the input gradient contribution of the delta path.
    pub fn backward_rows(
        &self,
        xs: &Array2<f64>,
        u: &Array2<f64>,
        grad_y: &Array2<f64>,
        grads: &mut LoraAdapter,
    ) -> Array2<f64> {
        let s = self.scaling();
        // dB += s * dY^T U
        grads.b.scaled_add(s, &grad_y.t().dot(u));
        // dA += s * (dY B)^T X
        let gyb = grad_y.dot(&self.b);
        grads.a.scaled_add(s, &gyb.t().dot(xs));
        // dX = s * (dY B) A
        s * gyb.dot(&self.a)
    }

    /// `W + scaling * B A`; forwarding with the merged weight equals the
    /// adapted forward.
    pub fn merge(&self, w: &Array2<f64>) -> Result<Array2<f64>, PeftError> {
        if self.b.nrows() != w.nrows() || self.a.ncols() != w.ncols() {
            return Err(PeftError::ShapeMismatch(format!(
                "W {}x{} vs B A {}x{}",
                w.nrows(),
                w.ncols(),
                self.b.nrows(),
                self.a.ncols()
            )));
        }
        Ok(w + &(self.scaling() * self.b.dot(&self.a)))
    }
}

/// Residual bottleneck `D -> D/4 -> D` with GELU on the embedding path.
/// The up-projection starts at zero, making the fresh adapter an identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningAdapter {
    pub down: Linear,
    pub up: Linear,
}

/// Forward cache for the adapter (pre-activations and activations per row).
#[derive(Debug, Clone)]
pub struct AdapterCache {
    z: Array2<f64>,
    a: Array2<f64>,
}

impl ConditioningAdapter {
    pub fn new(dim: usize, rng: &mut impl Rng) -> Self {
        let hidden = (dim / 4).max(1);
        Self {
            down: Linear::gaussian(dim, hidden, (1.0 / dim as f64).sqrt(), rng),
            up: Linear::zeros(hidden, dim),
        }
    }

    /// `y_t = x_t + up(gelu(down(x_t)))` over the valid rows.
    pub fn forward_rows(&self, h: &Array2<f64>, valid_len: usize) -> (Array2<f64>, AdapterCache) {
        let hidden = self.down.d_out();
        let mut z = Array2::zeros((h.nrows(), hidden));
        let mut a = Array2::zeros((h.nrows(), hidden));
        let mut out = h.clone();
        for t in 0..valid_len {
            let x = h.row(t).to_owned();
            let zt = self.down.forward(&x);
            let at = zt.mapv(gelu);
            let mut row = out.row_mut(t);
            row += &self.up.forward(&at);
            z.row_mut(t).assign(&zt);
            a.row_mut(t).assign(&at);
        }
        (out, AdapterCache { z, a })
    }

    pub fn backward_rows(
        &self,
        h_in: &Array2<f64>,
        cache: &AdapterCache,
        grad_out: &Array2<f64>,
        valid_len: usize,
        grads: &mut ConditioningAdapter,
    ) -> Array2<f64> {
        let mut grad_in = grad_out.clone();
        for t in 0..valid_len {
            let gy = grad_out.row(t).to_owned();
            let at = cache.a.row(t).to_owned();
            let da = self.up.backward(&at, &gy, &mut grads.up.w, &mut grads.up.b);
            let zt = cache.z.row(t);
            let dz = Array1::from_shape_fn(da.len(), |i| da[i] * gelu_prime(zt[i]));
            let x = h_in.row(t).to_owned();
            let dx = self
                .down
                .backward(&x, &dz, &mut grads.down.w, &mut grads.down.b);
            let mut row = grad_in.row_mut(t);
            row += &dx;
        }
        grad_in
    }
}

/// Registers fresh low-rank adapters on the query and value projections of
/// every attention block. Key and output projections are never adapted.
/// Returns the number of adapters created.
pub fn attach_lora(
    model: &mut TtsModel,
    rank: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<usize, PeftError> {
    if model
        .backbone
        .blocks
        .iter()
        .any(|b| b.lora_q.is_some() || b.lora_v.is_some())
    {
        return Err(PeftError::AlreadyAttached);
    }
    let dim = model.config.model_dim;
    let mut created = 0;
    for block in &mut model.backbone.blocks {
        block.lora_q = Some(LoraAdapter::new(dim, dim, rank, alpha, rng)?);
        block.lora_v = Some(LoraAdapter::new(dim, dim, rank, alpha, rng)?);
        created += 2;
    }
    Ok(created)
}

/// Inserts a fresh conditioning adapter after the MoE output on the
/// embedding path.
pub fn attach_conditioning_adapter(
    model: &mut TtsModel,
    rng: &mut impl Rng,
) -> Result<(), PeftError> {
    if model.adapter.is_some() {
        return Err(PeftError::AlreadyAttached);
    }
    model.adapter = Some(ConditioningAdapter::new(model.config.model_dim, rng));
    Ok(())
}

/// Returns whether a named parameter belongs to a low-rank adapter.
pub fn is_lora_param(name: &str) -> bool {
    name.contains(".lora_")
}

/// Returns whether a named parameter belongs to the conditioning adapter.
pub fn is_adapter_param(name: &str) -> bool {
    name.starts_with("adapter.")
}

/// Returns whether a named parameter belongs to the MoE layer (experts or
/// gate).
pub fn is_moe_param(name: &str) -> bool {
    name.starts_with("moe.")
}

/// The set of parameter names trained in a given stage:
///
/// - joint base training: embedding and backbone;
/// - gate-supervised joint training: embedding, backbone, experts, gate;
/// - adaptation: LoRA and conditioning adapter only, everything else frozen;
/// - the initialization stage trains nothing.
pub fn trainable_params(model: &TtsModel, stage: Stage) -> BTreeSet<String> {
    model
        .param_names()
        .into_iter()
        .filter(|name| match stage {
            Stage::Init => false,
            Stage::Joint => {
                !is_lora_param(name) && !is_adapter_param(name) && !is_moe_param(name)
            }
            Stage::JointMoe => !is_lora_param(name) && !is_adapter_param(name),
            Stage::Adapt => is_lora_param(name) || is_adapter_param(name),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scaling_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lora = LoraAdapter::new(8, 8, 16, 1.0, &mut rng).unwrap();
        assert_eq!(lora.scaling(), 1.0 / 16.0);
    }

    #[test]
    fn fresh_lora_is_base_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lora = LoraAdapter::new(3, 2, 2, 1.0, &mut rng).unwrap();
        let w = gaussian_matrix(2, 3, 0.5, &mut rng);
        let x = array![0.3, -1.0, 0.7];
        let y = lora.forward(&w, &x).unwrap();
        assert_eq!(y, w.dot(&x));
    }

    #[test]
    fn lora_forward_hand_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lora = LoraAdapter::new(2, 2, 1, 1.0, &mut rng).unwrap();
        lora.a = array![[1.0, 0.0]];
        lora.b = array![[0.0], [1.0]];
        let w = Array2::eye(2);
        let y = lora.forward(&w, &array![1.0, 0.0]).unwrap();
        assert_eq!(y, array![1.0, 1.0]);
    }

    #[test]
    fn lora_zero_input_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lora = LoraAdapter::new(2, 2, 1, 2.0, &mut rng).unwrap();
        lora.b = gaussian_matrix(2, 1, 0.5, &mut rng);
        let w = gaussian_matrix(2, 2, 0.5, &mut rng);
        let y = lora.forward(&w, &array![0.0, 0.0]).unwrap();
        assert_eq!(y, array![0.0, 0.0]);
    }

    #[test]
    fn lora_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lora = LoraAdapter::new(3, 2, 1, 1.0, &mut rng).unwrap();
        let w = Array2::eye(2);
        assert!(matches!(
            lora.forward(&w, &array![1.0, 0.0]),
            Err(PeftError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn merge_fresh_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lora = LoraAdapter::new(3, 3, 2, 1.0, &mut rng).unwrap();
        let w = gaussian_matrix(3, 3, 0.5, &mut rng);
        assert_eq!(lora.merge(&w).unwrap(), w);
    }

    #[test]
    fn merge_hand_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut lora = LoraAdapter::new(2, 2, 1, 1.0, &mut rng).unwrap();
        lora.a = array![[1.0, 0.0]];
        lora.b = array![[0.0], [1.0]];
        let merged = lora.merge(&Array2::eye(2)).unwrap();
        assert_eq!(merged, array![[1.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn merge_equivalence_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut lora = LoraAdapter::new(5, 4, 2, 1.5, &mut rng).unwrap();
            lora.b = gaussian_matrix(4, 2, 0.4, &mut rng);
            let w = gaussian_matrix(4, 5, 0.6, &mut rng);
            let merged = lora.merge(&w).unwrap();
            let x = crate::nn::gaussian_vector(5, 1.0, &mut rng);
            let adapted = lora.forward(&w, &x).unwrap();
            let direct = merged.dot(&x);
            let max = (&adapted - &direct).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(max < 1e-9);
        }
    }

    #[test]
    fn fresh_conditioning_adapter_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let adapter = ConditioningAdapter::new(8, &mut rng);
        let h = gaussian_matrix(4, 8, 1.0, &mut rng);
        let (out, _) = adapter.forward_rows(&h, 4);
        assert_eq!(out, h);
    }

    fn tiny_model(blocks: usize) -> TtsModel {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        TtsModel::new(
            &ModelConfig {
                vocab: 8,
                model_dim: 4,
                feature_dim: 3,
                attn_blocks: blocks,
                head_hidden: 6,
                ..ModelConfig::default()
            },
            &mut rng,
        )
    }

    #[test]
    fn attach_creates_two_adapters_per_block() {
        let mut model = tiny_model(2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let created = attach_lora(&mut model, 2, 1.0, &mut rng).unwrap();
        assert_eq!(created, 4);
        for block in &model.backbone.blocks {
            assert!(block.lora_q.is_some());
            assert!(block.lora_v.is_some());
        }
    }

    #[test]
    fn attach_twice_fails() {
        let mut model = tiny_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        attach_lora(&mut model, 2, 1.0, &mut rng).unwrap();
        assert_eq!(
            attach_lora(&mut model, 2, 1.0, &mut rng).unwrap_err(),
            PeftError::AlreadyAttached
        );
        attach_conditioning_adapter(&mut model, &mut rng).unwrap();
        assert_eq!(
            attach_conditioning_adapter(&mut model, &mut rng).unwrap_err(),
            PeftError::AlreadyAttached
        );
    }

    #[test]
    fn trainable_sets_follow_stage_semantics() {
        let mut model = tiny_model(1);
        let mut rng = ChaCha8Rng::seed_from_u64(12);

        // before adapters exist the joint stage owns no adapter params
        let joint = trainable_params(&model, Stage::Joint);
        assert!(joint.iter().all(|n| !is_lora_param(n) && !is_adapter_param(n)));

        model.attach_moe(&mut rng).unwrap();
        attach_lora(&mut model, 2, 1.0, &mut rng).unwrap();
        attach_conditioning_adapter(&mut model, &mut rng).unwrap();

        let joint = trainable_params(&model, Stage::Joint);
        let joint_moe = trainable_params(&model, Stage::JointMoe);
        let adapt = trainable_params(&model, Stage::Adapt);

        // the gate-supervised stage trains everything the base stage does
        // plus the MoE parameters
        assert!(joint_moe.is_superset(&joint));
        assert!(joint_moe.iter().any(|n| is_moe_param(n)));
        assert!(joint.iter().all(|n| !is_moe_param(n)));

        // adaptation trains only adapters: no overlap with base parameters
        assert!(adapt
            .iter()
            .all(|n| is_lora_param(n) || is_adapter_param(n)));
        assert!(adapt.is_disjoint(&joint_moe));
        assert!(!adapt.is_empty());

        assert!(trainable_params(&model, Stage::Init).is_empty());
    }
}
