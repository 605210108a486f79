//! The staged training curriculum on synthetic data.
//!
//! Stages: checkpoint initialization (no training), joint training of
//! embedding and backbone, joint training with the MoE layer added and the
//! dialect loss enabled at weight 0.1, and finally frozen-backbone
//! adaptation where only LoRA and the conditioning adapter move.
//!
//! The optimizer is Adam with decoupled weight decay and a linear
//! warmup/linear decay schedule that restarts each stage. Everything is
//! driven by seeded ChaCha streams, so identical configurations produce
//! byte-identical loss curves and checkpoints.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::config::RunConfig;
use crate::model::{zero_frozen_grads, LossItem, ModelConfig, ModelError, TtsModel};
use crate::moe::{mean_pool, MoeError};
use crate::peft::{attach_conditioning_adapter, attach_lora, trainable_params, PeftError};
use crate::phoneme::IpaSequence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad dialect count {k}: need 2..={max}")]
    BadK { k: usize, max: usize },
    #[error("stage {0} does not exist")]
    UnknownStage(u8),
    #[error("the initialization stage performs no training")]
    InitStageDoesNotTrain,
    #[error("the gate-supervised stage requires an attached MoE layer")]
    MoeNotAttached,
    #[error(transparent)]
    Moe(#[from] MoeError),
}

/// The four curriculum stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Checkpoint initialization; no parameters train.
    Init,
    /// Joint multidialect training of embedding and backbone.
    Joint,
    /// Joint training with the MoE layer and the auxiliary dialect loss.
    JointMoe,
    /// Low-resource adaptation: LoRA and conditioning adapter only.
    Adapt,
}

impl Stage {
    /// Weight of the auxiliary dialect loss: 0.1 in the gate-supervised
    /// joint stage, 0 in all others.
    pub fn lambda(self) -> f64 {
        match self {
            Stage::JointMoe => 0.1,
            _ => 0.0,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Stage::Init => 0,
            Stage::Joint => 1,
            Stage::JointMoe => 2,
            Stage::Adapt => 3,
        }
    }

    pub fn from_index(i: u8) -> Result<Self, TrainError> {
        match i {
            0 => Ok(Stage::Init),
            1 => Ok(Stage::Joint),
            2 => Ok(Stage::JointMoe),
            3 => Ok(Stage::Adapt),
            other => Err(TrainError::UnknownStage(other)),
        }
    }
}

/// Runtime settings for one training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub stage: Stage,
    pub steps: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl StageConfig {
    pub fn lambda(&self) -> f64 {
        self.stage.lambda()
    }

    pub fn from_section(stage: Stage, s: &crate::config::StageSection) -> Self {
        Self {
            stage,
            steps: s.steps,
            lr: s.lr,
            warmup_steps: s.warmup,
            batch_size: s.batch,
            weight_decay: s.weight_decay,
            seed: s.seed,
        }
    }
}

/// Linear warmup to the peak rate, then linear decay toward zero at the end
/// of the stage.
pub fn lr_at(step: usize, total: usize, warmup: usize, peak: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    if step < warmup {
        peak * (step + 1) as f64 / warmup.max(1) as f64
    } else if total > warmup {
        peak * (1.0 - (step - warmup) as f64 / (total - warmup) as f64)
    } else {
        peak
    }
}

/// Adam with decoupled weight decay. Moment state is aligned with the
/// model's parameter iteration order; frozen tensors are never touched.
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
    t: usize,
}

impl AdamW {
    pub fn new(model: &TtsModel) -> Self {
        let zeros: Vec<ArrayD<f64>> = model
            .named_params()
            .iter()
            .map(|(_, view)| ArrayD::zeros(view.raw_dim()))
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(
        &mut self,
        model: &mut TtsModel,
        grads: &TtsModel,
        lr: f64,
        weight_decay: f64,
        trainable: &BTreeSet<String>,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let grad_views = grads.named_params();
        for (idx, (name, mut param)) in model.named_params_mut().into_iter().enumerate() {
            if !trainable.contains(&name) {
                continue;
            }
            debug_assert_eq!(name, grad_views[idx].0);
            let g = &grad_views[idx].1;
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for (((p, &g), m), v) in param
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * (m_hat / (v_hat.sqrt() + self.eps) + weight_decay * *p);
            }
        }
    }
}

/// One synthetic aligned example: IPA ids, dialect label, target features.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyExample {
    pub ipa: IpaSequence,
    pub dialect: u32,
    pub target: Array1<f64>,
}

/// Shape of the synthetic data generator. Each dialect owns a pool of
/// symbols and shares a common pool; targets are dialect-centered Gaussians
/// with a small zero-mean phoneme-dependent offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataConfig {
    pub feature_dim: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub pool_size: usize,
    pub shared_size: usize,
    pub max_dialects: usize,
    pub noise_std: f64,
    pub phoneme_coupling: f64,
    pub own_pool_prob: f64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        Self {
            feature_dim: 8,
            min_len: 4,
            max_len: 8,
            pool_size: 5,
            shared_size: 5,
            max_dialects: 8,
            noise_std: 0.1,
            phoneme_coupling: 0.05,
            own_pool_prob: 0.7,
        }
    }
}

impl ToyDataConfig {
    /// Reserved symbols plus every dialect pool plus the shared pool.
    pub fn vocab_size(&self) -> usize {
        3 + self.max_dialects * self.pool_size + self.shared_size
    }

    fn own_pool(&self, dialect: u32) -> std::ops::Range<u32> {
        let start = 3 + dialect * self.pool_size as u32;
        start..start + self.pool_size as u32
    }

    fn shared_pool(&self) -> std::ops::Range<u32> {
        let start = 3 + (self.max_dialects * self.pool_size) as u32;
        start..start + self.shared_size as u32
    }

    /// Fixed per-symbol feature offsets, independent of dataset seeds.
    fn symbol_offsets(&self) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xD1A1_EC70);
        crate::nn::gaussian_matrix(
            self.vocab_size(),
            self.feature_dim,
            self.phoneme_coupling,
            &mut rng,
        )
    }

    /// Expected symbol offset under the dialect's sampling mixture; removed
    /// from targets so each dialect's mean is exactly its center.
    fn expected_offset(&self, offsets: &Array2<f64>, dialect: u32) -> Array1<f64> {
        let mean_over = |range: std::ops::Range<u32>| {
            let mut acc = Array1::zeros(self.feature_dim);
            let n = range.len().max(1) as f64;
            for id in range {
                acc += &offsets.row(id as usize);
            }
            acc / n
        };
        let own = mean_over(self.own_pool(dialect));
        let shared = mean_over(self.shared_pool());
        self.own_pool_prob * own + (1.0 - self.own_pool_prob) * shared
    }
}

/// Deterministic center of a dialect's target distribution.
pub fn dialect_mean(dialect: u32, feature_dim: usize) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3EA0_0000 + dialect as u64);
    let v = crate::nn::gaussian_vector(feature_dim, 1.0, &mut rng);
    let norm = v.dot(&v).sqrt().max(1e-12);
    v * (1.2 / norm)
}

/// Synthetic examples for one dialect. Deterministic per seed.
pub fn dialect_examples(
    dialect: u32,
    n: usize,
    seed: u64,
    cfg: &ToyDataConfig,
) -> Result<Vec<ToyExample>, TrainError> {
    if (dialect as usize) >= cfg.max_dialects {
        return Err(TrainError::BadK {
            k: dialect as usize + 1,
            max: cfg.max_dialects,
        });
    }
    let offsets = cfg.symbol_offsets();
    let expected = cfg.expected_offset(&offsets, dialect);
    let mu = dialect_mean(dialect, cfg.feature_dim);
    let own = cfg.own_pool(dialect);
    let shared = cfg.shared_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut ids = Vec::with_capacity(len);
        for _ in 0..len {
            let id = if rng.gen::<f64>() < cfg.own_pool_prob {
                rng.gen_range(own.clone())
            } else {
                rng.gen_range(shared.clone())
            };
            ids.push(id);
        }
        let mut offset = Array1::zeros(cfg.feature_dim);
        for &id in &ids {
            offset += &offsets.row(id as usize);
        }
        offset = offset / len as f64 - &expected;
        let noise = crate::nn::gaussian_vector(cfg.feature_dim, cfg.noise_std, &mut rng);
        let target = &mu + &offset + noise;
        out.push(ToyExample {
            ipa: IpaSequence::new(ids),
            dialect,
            target,
        });
    }
    Ok(out)
}

/// Synthetic multidialect dataset: `n_per` examples for each of `k`
/// dialects, grouped by dialect.
pub fn make_toy_dataset(
    k: usize,
    n_per: usize,
    seed: u64,
    cfg: &ToyDataConfig,
) -> Result<Vec<ToyExample>, TrainError> {
    if k < 2 || k > cfg.max_dialects {
        return Err(TrainError::BadK {
            k,
            max: cfg.max_dialects,
        });
    }
    let mut out = Vec::with_capacity(k * n_per);
    for d in 0..k {
        out.extend(dialect_examples(
            d as u32,
            n_per,
            seed.wrapping_add(7919 * d as u64),
            cfg,
        )?);
    }
    Ok(out)
}

/// One optimizer step's loss components.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub l_task: f64,
    pub l_dialect: f64,
    /// Dialect-loss weight applied at this step.
    pub lambda: f64,
    pub total: f64,
}

/// Per-stage training log.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub stage: Stage,
    pub records: Vec<StepRecord>,
    /// Mean entropy of the gate's full softmax over a dataset sample,
    /// recorded as a routing diagnostic (useful for dialects the gate was
    /// never trained on).
    pub mean_gate_entropy: Option<f64>,
}

impl TrainReport {
    /// Writes `step,l_task,l_dialect,total` lines.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut text = String::from("step,l_task,l_dialect,total\n");
        for r in &self.records {
            text.push_str(&format!(
                "{},{},{},{}\n",
                r.step, r.l_task, r.l_dialect, r.total
            ));
        }
        std::fs::write(path, text)
    }

    /// Mean task loss over the first `k` steps; 0 for an empty report.
    pub fn first_k_mean(&self, k: usize) -> f64 {
        let k = k.min(self.records.len());
        if k == 0 {
            return 0.0;
        }
        self.records[..k].iter().map(|r| r.l_task).sum::<f64>() / k as f64
    }

    /// Mean task loss over the last `k` steps; 0 for an empty report.
    pub fn last_k_mean(&self, k: usize) -> f64 {
        let n = self.records.len();
        let k = k.min(n);
        if k == 0 {
            return 0.0;
        }
        self.records[n - k..].iter().map(|r| r.l_task).sum::<f64>() / k as f64
    }

    /// Fractional drop of the smoothed task loss: first-10-step average vs
    /// last-10-step average.
    pub fn smoothed_drop(&self) -> f64 {
        let first = self.first_k_mean(10);
        if first == 0.0 {
            return 0.0;
        }
        1.0 - self.last_k_mean(10) / first
    }
}

/// Runs one stage of the curriculum: samples seeded batches, computes the
/// combined loss, applies AdamW to the stage's trainable set, and records
/// every step's loss breakdown.
pub fn train_stage(
    model: &mut TtsModel,
    dataset: &[ToyExample],
    cfg: &StageConfig,
) -> Result<TrainReport, TrainError> {
    if cfg.stage == Stage::Init {
        return Err(TrainError::InitStageDoesNotTrain);
    }
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let lambda = cfg.lambda();
    if lambda != 0.0 {
        let classes = model
            .moe
            .as_ref()
            .ok_or(TrainError::MoeNotAttached)?
            .expert_count() as u32;
        for ex in dataset {
            if ex.dialect >= classes {
                return Err(TrainError::Moe(MoeError::LabelOutOfRange {
                    label: ex.dialect,
                    classes: classes as usize,
                }));
            }
        }
    }

    let trainable = trainable_params(model, cfg.stage);
    let mut opt = AdamW::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f_dim = model.config.feature_dim;
    let mut records = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mut items = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let ex = &dataset[rng.gen_range(0..dataset.len())];
            let x0 = crate::nn::gaussian_vector(f_dim, 1.0, &mut rng);
            let t = rng.gen::<f64>();
            items.push(LossItem {
                seq: ex.ipa.clone(),
                label: ex.dialect,
                x0,
                x1: ex.target.clone(),
                t,
            });
        }
        let (breakdown, mut grads) = model.loss_and_grad(&items, lambda)?;
        zero_frozen_grads(&mut grads, &trainable);
        let lr = lr_at(step, cfg.steps, cfg.warmup_steps, cfg.lr);
        opt.step(model, &grads, lr, cfg.weight_decay, &trainable);
        records.push(StepRecord {
            step,
            l_task: breakdown.l_task,
            l_dialect: breakdown.l_dialect,
            lambda: breakdown.lambda,
            total: breakdown.total,
        });
    }

    let mean_gate_entropy = mean_gate_entropy(model, &dataset[..dataset.len().min(64)]);
    Ok(TrainReport {
        stage: cfg.stage,
        records,
        mean_gate_entropy,
    })
}

/// Fraction of examples whose gate argmax equals their dialect label.
/// `None` when no MoE layer is attached.
pub fn gate_accuracy(model: &TtsModel, examples: &[ToyExample]) -> Option<f64> {
    let moe = model.moe.as_ref()?;
    if examples.is_empty() {
        return Some(0.0);
    }
    let mut hits = 0usize;
    for ex in examples {
        let es = model.embedding.embed(&ex.ipa).ok()?;
        let pooled = mean_pool(&es).ok()?;
        let gate = moe.gate_forward(&pooled).ok()?;
        let argmax = gate
            .logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i as u32)
            .unwrap();
        if argmax == ex.dialect {
            hits += 1;
        }
    }
    Some(hits as f64 / examples.len() as f64)
}

/// Mean entropy (nats) of the gate's full softmax over the given examples.
pub fn mean_gate_entropy(model: &TtsModel, examples: &[ToyExample]) -> Option<f64> {
    let moe = model.moe.as_ref()?;
    if examples.is_empty() {
        return None;
    }
    let mut acc = 0.0;
    for ex in examples {
        let es = model.embedding.embed(&ex.ipa).ok()?;
        let pooled = mean_pool(&es).ok()?;
        let gate = moe.gate_forward(&pooled).ok()?;
        let p = crate::nn::softmax(gate.logits.as_slice().unwrap());
        acc += -p
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| x * x.ln())
            .sum::<f64>();
    }
    Some(acc / examples.len() as f64)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Peft(#[from] PeftError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Outcome of a full curriculum run.
#[derive(Debug)]
pub struct CurriculumSummary {
    pub reports: Vec<TrainReport>,
    /// Gate argmax accuracy on held-out examples after the gate-supervised
    /// stage.
    pub gate_accuracy: f64,
    /// Fractional smoothed task-loss drop in the first joint stage.
    pub stage1_drop: f64,
    /// Fractional smoothed task-loss drop on the new dialect in adaptation.
    pub stage3_drop: f64,
    /// Whether every frozen tensor was bit-identical before and after the
    /// adaptation stage.
    pub frozen_identical: bool,
}

/// Runs the full curriculum on synthetic data, writing per-stage loss CSVs
/// (`stage{n}_loss.csv`), full checkpoints (`stage{n}.ckpt`), and an
/// adapter-only checkpoint (`adapters.ckpt`) into `out_dir`.
pub fn run_curriculum(cfg: &RunConfig, out_dir: &Path) -> Result<CurriculumSummary, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let data_cfg = ToyDataConfig {
        feature_dim: cfg.model.feature_dim,
        ..ToyDataConfig::default()
    };
    let k = cfg.data.dialects;
    let model_cfg = ModelConfig {
        vocab: data_cfg.vocab_size(),
        model_dim: cfg.model.model_dim,
        feature_dim: cfg.model.feature_dim,
        attn_blocks: cfg.model.attn_blocks,
        head_hidden: cfg.model.head_hidden,
        n_experts: k,
        top_k: cfg.model.top_k.min(k),
        lora_rank: cfg.model.lora_rank,
        lora_alpha: cfg.model.lora_alpha,
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.data.seed);
    let mut model = TtsModel::new(&model_cfg, &mut init_rng);
    if let Some(path) = &cfg.model.init_checkpoint {
        checkpoint::load_model(&mut model, path)?;
    }

    let train_set = make_toy_dataset(k, cfg.data.train_per_dialect, cfg.data.seed, &data_cfg)?;
    let holdout = make_toy_dataset(
        k,
        cfg.data.holdout_per_dialect,
        cfg.data.seed.wrapping_add(1),
        &data_cfg,
    )?;

    // joint base training
    let stage1_cfg = StageConfig::from_section(Stage::Joint, &cfg.stage1);
    let report1 = train_stage(&mut model, &train_set, &stage1_cfg)?;
    report1.write_csv(out_dir.join("stage1_loss.csv"))?;
    checkpoint::save_model(&model, out_dir.join("stage1.ckpt"))?;

    // gate-supervised joint training
    let mut moe_rng = ChaCha8Rng::seed_from_u64(cfg.data.seed.wrapping_add(500_000));
    model.attach_moe(&mut moe_rng)?;
    let stage2_cfg = StageConfig::from_section(Stage::JointMoe, &cfg.stage2);
    let report2 = train_stage(&mut model, &train_set, &stage2_cfg)?;
    report2.write_csv(out_dir.join("stage2_loss.csv"))?;
    checkpoint::save_model(&model, out_dir.join("stage2.ckpt"))?;
    let gate_acc = gate_accuracy(&model, &holdout).unwrap_or(0.0);

    // frozen-backbone adaptation on the next dialect id
    let mut peft_rng = ChaCha8Rng::seed_from_u64(cfg.data.seed.wrapping_add(600_000));
    attach_lora(&mut model, model_cfg.lora_rank, model_cfg.lora_alpha, &mut peft_rng)?;
    attach_conditioning_adapter(&mut model, &mut peft_rng)?;
    let new_dialect = k as u32;
    let adapt_set = dialect_examples(
        new_dialect,
        cfg.data.new_dialect_examples,
        cfg.data.seed.wrapping_add(2),
        &data_cfg,
    )?;
    let stage3_cfg = StageConfig::from_section(Stage::Adapt, &cfg.stage3);
    let trainable3 = trainable_params(&model, Stage::Adapt);
    let frozen_before: Vec<(String, Vec<u64>)> = model
        .named_params()
        .into_iter()
        .filter(|(name, _)| !trainable3.contains(name))
        .map(|(name, view)| (name, view.iter().map(|x| x.to_bits()).collect()))
        .collect();
    let report3 = train_stage(&mut model, &adapt_set, &stage3_cfg)?;
    report3.write_csv(out_dir.join("stage3_loss.csv"))?;
    checkpoint::save_model(&model, out_dir.join("stage3.ckpt"))?;
    checkpoint::save_adapters(&model, out_dir.join("adapters.ckpt"))?;

    let frozen_after: Vec<(String, Vec<u64>)> = model
        .named_params()
        .into_iter()
        .filter(|(name, _)| !trainable3.contains(name))
        .map(|(name, view)| (name, view.iter().map(|x| x.to_bits()).collect()))
        .collect();
    let frozen_identical = frozen_before == frozen_after;

    let stage1_drop = report1.smoothed_drop();
    let stage3_drop = report3.smoothed_drop();
    Ok(CurriculumSummary {
        reports: vec![report1, report2, report3],
        gate_accuracy: gate_acc,
        stage1_drop,
        stage3_drop,
        frozen_identical,
    })
}
