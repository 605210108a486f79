//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"DTTSCKPT"
//! version u32      currently 1
//! count   u32      number of tensors
//! per tensor:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, dims u64 * ndim
//!   data     f64 * product(dims), row-major
//! ```
//!
//! Tensors are written in the model's parameter iteration order, so
//! identical models serialize to identical bytes. Loading restores tensors
//! by name; names absent from the file (for example MoE tensors before
//! their stage) keep their current values and are reported as missing.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

use crate::model::TtsModel;
use crate::peft::{is_adapter_param, is_lora_param};

const MAGIC: &[u8; 8] = b"DTTSCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(String),
    #[error("bad or unsupported checkpoint header: {0}")]
    VersionMismatch(String),
    #[error("tensor {name}: shape {got:?} does not match model shape {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// What a load call restored, left untouched, and ignored.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub restored: Vec<String>,
    pub missing: Vec<String>,
    pub unused: Vec<String>,
}

/// Serializes named tensors in the given order.
pub fn write_tensors(
    tensors: &[(String, ndarray::ArrayViewD<'_, f64>)],
    path: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, view) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(view.ndim() as u32).to_le_bytes());
        for &d in view.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in view.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path.as_ref())
        .map_err(|e| CheckpointError::Io(format!("{}: {e}", path.as_ref().display())))?;
    file.write_all(&buf)
        .map_err(|e| CheckpointError::Io(e.to_string()))
}

/// Reads all tensors from a checkpoint file.
pub fn read_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, ArrayD<f64>)>, CheckpointError> {
    let mut data = Vec::new();
    std::fs::File::open(path.as_ref())
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| CheckpointError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_tensors(&data)
}

fn parse_tensors(data: &[u8]) -> Result<Vec<(String, ArrayD<f64>)>, CheckpointError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *pos + n > data.len() {
            return Err(CheckpointError::Corrupt("unexpected end of file".into()));
        }
        let slice = &data[*pos..*pos + n];
        *pos += n;
        Ok(slice)
    };

    let magic = take(&mut pos, 8)?;
    if magic != MAGIC {
        return Err(CheckpointError::VersionMismatch("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch(format!(
            "file version {version}, supported {VERSION}"
        )));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("non-UTF-8 tensor name".into()))?;
        let ndim = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let n_elems: usize = dims.iter().product();
        let raw = take(&mut pos, n_elems * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&dims), values)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        out.push((name, arr));
    }
    if pos != data.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    Ok(out)
}

/// Saves every model parameter.
pub fn save_model(model: &TtsModel, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    write_tensors(&model.named_params(), path)
}

/// Restores model parameters by name. Tensors in the model but absent from
/// the file (e.g. MoE or adapter weights before their stage) are left at
/// their current values.
pub fn load_model(model: &mut TtsModel, path: impl AsRef<Path>) -> Result<LoadReport, CheckpointError> {
    let tensors = read_tensors(path)?;
    let mut report = LoadReport::default();
    let mut by_name: std::collections::HashMap<String, ArrayD<f64>> = tensors.into_iter().collect();
    for (name, mut view) in model.named_params_mut() {
        match by_name.remove(&name) {
            Some(arr) => {
                if arr.shape() != view.shape() {
                    return Err(CheckpointError::ShapeMismatch {
                        name,
                        expected: view.shape().to_vec(),
                        got: arr.shape().to_vec(),
                    });
                }
                view.assign(&arr);
                report.restored.push(name);
            }
            None => report.missing.push(name),
        }
    }
    let mut unused: Vec<String> = by_name.into_keys().collect();
    unused.sort();
    report.unused = unused;
    Ok(report)
}

/// Saves only LoRA and conditioning-adapter tensors, plus two one-element
/// meta tensors `peft.rank` and `peft.alpha` recording the adapter config.
pub fn save_adapters(model: &TtsModel, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let rank = ArrayD::from_elem(IxDyn(&[1]), model.config.lora_rank as f64);
    let alpha = ArrayD::from_elem(IxDyn(&[1]), model.config.lora_alpha);
    let mut tensors: Vec<(String, ndarray::ArrayViewD<'_, f64>)> = vec![
        ("peft.rank".into(), rank.view()),
        ("peft.alpha".into(), alpha.view()),
    ];
    let params = model.named_params();
    for (name, view) in &params {
        if is_lora_param(name) || is_adapter_param(name) {
            tensors.push((name.clone(), view.clone()));
        }
    }
    write_tensors(&tensors, path)
}

/// Loads an adapter-only checkpoint on top of a model whose adapters are
/// already attached. Base tensors are untouched.
pub fn load_adapters(model: &mut TtsModel, path: impl AsRef<Path>) -> Result<LoadReport, CheckpointError> {
    let tensors = read_tensors(path)?;
    let mut report = LoadReport::default();
    let mut by_name: std::collections::HashMap<String, ArrayD<f64>> = tensors.into_iter().collect();
    if let Some(rank) = by_name.remove("peft.rank") {
        let expected = model.config.lora_rank as f64;
        if rank[[0]] != expected {
            return Err(CheckpointError::ShapeMismatch {
                name: "peft.rank".into(),
                expected: vec![expected as usize],
                got: vec![rank[[0]] as usize],
            });
        }
    }
    by_name.remove("peft.alpha");
    for (name, mut view) in model.named_params_mut() {
        if !(is_lora_param(&name) || is_adapter_param(&name)) {
            continue;
        }
        match by_name.remove(&name) {
            Some(arr) => {
                if arr.shape() != view.shape() {
                    return Err(CheckpointError::ShapeMismatch {
                        name,
                        expected: view.shape().to_vec(),
                        got: arr.shape().to_vec(),
                    });
                }
                view.assign(&arr);
                report.restored.push(name);
            }
            None => report.missing.push(name),
        }
    }
    report.unused = by_name.into_keys().collect();
    report.unused.sort();
    Ok(report)
}

/// Names present in a checkpoint file without loading tensor data into a
/// model; used to decide which optional modules to attach before loading.
pub fn tensor_names(path: impl AsRef<Path>) -> Result<BTreeSet<String>, CheckpointError> {
    Ok(read_tensors(path)?.into_iter().map(|(n, _)| n).collect())
}
