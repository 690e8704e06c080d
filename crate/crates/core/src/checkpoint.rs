//! Tensor checkpoints: `<stem>.bin` holds every tensor as little-endian
//! `f64` values back to back, `<stem>.json` records the shapes and an
//! arbitrary metadata object.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::teachers::{GnnModel, TeacherBank, TeacherConfig};
use crate::tensor::DenseMatrix;

#[derive(Serialize, Deserialize)]
struct Sidecar<M> {
    shapes: Vec<(usize, usize)>,
    meta: M,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn save_tensors<M: Serialize>(stem: impl AsRef<Path>, tensors: &[DenseMatrix], meta: &M) -> Result<()> {
    let (bin, json) = paths(stem.as_ref());
    if let Some(parent) = bin.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut bytes = Vec::with_capacity(8 * tensors.iter().map(DenseMatrix::len).sum::<usize>());
    for t in tensors {
        for x in t.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    let sidecar = Sidecar {
        shapes: tensors.iter().map(DenseMatrix::shape).collect(),
        meta,
    };
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&json, text).map_err(|e| Error::io(&json, e))
}

pub fn load_tensors<M: DeserializeOwned>(stem: impl AsRef<Path>) -> Result<(Vec<DenseMatrix>, M)> {
    let (bin, json) = paths(stem.as_ref());
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let sidecar: Sidecar<M> = serde_json::from_str(&text).map_err(|e| Error::Format {
        file: json.display().to_string(),
        message: e.to_string(),
    })?;
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected: usize = sidecar.shapes.iter().map(|(r, c)| r * c * 8).sum();
    if bytes.len() != expected {
        return Err(Error::Format {
            file: bin.display().to_string(),
            message: format!("expected {expected} bytes for the recorded shapes, found {}", bytes.len()),
        });
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
    let tensors = sidecar
        .shapes
        .iter()
        .map(|&(r, c)| DenseMatrix::from_vec(r, c, values.by_ref().take(r * c).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((tensors, sidecar.meta))
}

#[derive(Serialize, Deserialize)]
struct TeacherMeta {
    kind: String,
    config: TeacherConfig,
    in_dim: usize,
    num_classes: usize,
    val_accuracy: f64,
    mode: Mode,
}

pub fn save_teacher(stem: impl AsRef<Path>, model: &GnnModel, val_accuracy: f64) -> Result<()> {
    let meta = TeacherMeta {
        kind: "teacher".into(),
        config: model.config.clone(),
        in_dim: model.in_dim,
        num_classes: model.num_classes,
        val_accuracy,
        mode: Mode::Eval,
    };
    save_tensors(stem, &model.params, &meta)
}

/// Returns the model and its recorded validation accuracy.
pub fn load_teacher(stem: impl AsRef<Path>) -> Result<(GnnModel, f64)> {
    let (params, meta): (_, TeacherMeta) = load_tensors(stem)?;
    let model = GnnModel::from_params(meta.config, meta.in_dim, meta.num_classes, params)?;
    Ok((model, meta.val_accuracy))
}

#[derive(Serialize, Deserialize)]
struct BankMeta {
    kind: String,
    val_accuracy: Vec<f64>,
    configs: Vec<TeacherConfig>,
}

pub fn save_bank(stem: impl AsRef<Path>, bank: &TeacherBank) -> Result<()> {
    let meta = BankMeta {
        kind: "teacher_bank".into(),
        val_accuracy: bank.val_accuracy().to_vec(),
        configs: bank.configs().to_vec(),
    };
    save_tensors(stem, bank.all_soft_labels(), &meta)
}

pub fn load_bank(stem: impl AsRef<Path>) -> Result<TeacherBank> {
    let (soft, meta): (_, BankMeta) = load_tensors(stem)?;
    TeacherBank::new(soft, meta.val_accuracy, meta.configs)
}
