//! # dialtts
//!
//! A compact research toolkit for multi-dialect text-to-speech mechanics:
//!
//! - a unified IPA front-end ([`phoneme`], [`lexicon`]) that tokenizes every
//!   dialect into one shared symbol space,
//! - a residual mixture-of-experts text-embedding layer with a mean-pooled
//!   gate and auxiliary dialect-classification loss ([`moe`]),
//! - parameter-efficient adaptation via low-rank adapters on attention
//!   query/value projections plus a conditioning adapter, with stage-based
//!   freeze semantics ([`peft`]),
//! - a small conditional flow-matching backbone and a staged training
//!   curriculum on synthetic data ([`model`], [`cfm`], [`train`]),
//! - waveform augmentation (WSOLA time stretch, pitch shift) ([`audio`],
//!   [`augment`]),
//! - manifest building/validation and word-error-rate scoring ([`manifest`],
//!   [`wer`]).
//!
//! All numerics are `f64` with hand-written analytic gradients; the test
//! suites verify them against central finite differences.

pub mod audio;
pub mod augment;
pub mod cfm;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod lexicon;
pub mod manifest;
pub mod model;
pub mod moe;
pub mod nn;
pub mod peft;
pub mod phoneme;
pub mod train;
pub mod wer;

pub use model::TtsModel;
pub use phoneme::{IpaSequence, PhonemeInventory};
pub use train::Stage;
