//! Versioned binary archive of named `f32` tensors plus a JSON metadata block.
//! Used for training checkpoints and PCA models.
//!
//! Layout, little-endian: `b"PLIC"`, `u16` version, kind (`u16` length +
//! UTF-8), metadata (`u32` length + UTF-8 JSON), `u32` tensor count, then per
//! tensor: name (`u16` length + UTF-8), `u16` rank, `u32` dims, `f32` data.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::raster::{read_string, read_u16, read_u32};
use crate::contrastive::{AdamState, EncoderConfig, EncoderParams, Standardizer, Tensor, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::pipeline::PcaModel;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"PLIC";
pub const ARCHIVE_VERSION: u16 = 1;

pub const KIND_TRAIN_STATE: &str = "train_state";
pub const KIND_PCA: &str = "pca_model";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: &[usize], data: &[f64]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            data: data.iter().map(|v| *v as f32).collect(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.data.iter().map(|v| *v as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorArchive {
    pub kind: String,
    pub meta: Value,
    pub tensors: Vec<NamedTensor>,
}

impl TensorArchive {
    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("archive has no tensor {name:?}")))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected a {kind} archive, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(ARCHIVE_MAGIC)?;
        w.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
        write_string(&mut w, &self.kind)?;
        let meta = serde_json::to_string(&self.meta).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(meta.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::shape(format!("{:?}", t.shape), t.data.len()));
            }
            write_string(&mut w, &t.name)?;
            w.write_all(&(t.shape.len() as u16).to_le_bytes())?;
            for d in &t.shape {
                w.write_all(&(*d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.data.len() * 4);
            for v in &t.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("not a tensor archive".into()))?;
        if &magic != ARCHIVE_MAGIC {
            return Err(Error::Format("not a tensor archive".into()));
        }
        let version = read_u16(&mut r)?;
        if version != ARCHIVE_VERSION {
            return Err(Error::Format(format!("unsupported archive version {version}")));
        }
        let kind = read_string(&mut r)?;
        let len = read_u32(&mut r)? as usize;
        let mut meta = Vec::new();
        (&mut r).take(len as u64).read_to_end(&mut meta)?;
        if meta.len() != len {
            return Err(Error::Format("archive metadata is truncated".into()));
        }
        let meta: Value = serde_json::from_slice(&meta).map_err(|e| Error::Format(format!("archive metadata: {e}")))?;
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = read_string(&mut r)?;
            let rank = read_u16(&mut r)? as usize;
            let shape = (0..rank)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut bytes = Vec::new();
            (&mut r).take(4 * n as u64).read_to_end(&mut bytes)?;
            if bytes.len() != 4 * n {
                return Err(Error::Format(format!("tensor {name:?} is truncated")));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        Ok(Self { kind, meta, tensors })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Format("name too long".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn from_meta<T: for<'de> Deserialize<'de>>(meta: &Value, key: &str) -> Result<T> {
    let v = meta
        .get(key)
        .ok_or_else(|| Error::Format(format!("archive metadata lacks {key:?}")))?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("{key}: {e}")))
}

fn to_tensor(t: &NamedTensor, shape: &[usize]) -> Result<Tensor> {
    if t.shape != shape {
        return Err(Error::shape(format!("{} {shape:?}", t.name), format!("{:?}", t.shape)));
    }
    Tensor::from_vec(shape, t.values())
}

#[derive(Serialize, Deserialize)]
struct StandardizerMeta {
    batches_seen: u64,
    max_batches: u64,
}

/// Checkpoint of a training state. Values are stored as `f32`.
pub fn train_state_archive(state: &TrainState) -> Result<TensorArchive> {
    let meta = serde_json::json!({
        "encoder": state.encoder,
        "config": state.config,
        "adam_step": state.adam.step,
        "standardizer": StandardizerMeta {
            batches_seen: state.standardizer.batches_seen,
            max_batches: state.standardizer.max_batches,
        },
    });
    let mut tensors = Vec::new();
    for (name, t) in state.params.names.iter().zip(&state.params.tensors) {
        tensors.push(NamedTensor::new(format!("param/{name}"), &t.shape, &t.data));
    }
    for (name, t) in state.params.names.iter().zip(&state.adam.m) {
        tensors.push(NamedTensor::new(format!("adam.m/{name}"), &t.shape, &t.data));
    }
    for (name, t) in state.params.names.iter().zip(&state.adam.v) {
        tensors.push(NamedTensor::new(format!("adam.v/{name}"), &t.shape, &t.data));
    }
    let s = &state.standardizer;
    let c = s.channels();
    tensors.push(NamedTensor::new("standardizer/count", &[c], &s.count));
    tensors.push(NamedTensor::new("standardizer/mean", &[c], &s.mean));
    tensors.push(NamedTensor::new("standardizer/m2", &[c], &s.m2));
    Ok(TensorArchive {
        kind: KIND_TRAIN_STATE.into(),
        meta,
        tensors,
    })
}

pub fn train_state_from_archive(a: &TensorArchive) -> Result<TrainState> {
    a.expect_kind(KIND_TRAIN_STATE)?;
    let encoder: EncoderConfig = from_meta(&a.meta, "encoder")?;
    encoder.validate()?;
    let config: TrainConfig = from_meta(&a.meta, "config")?;
    let step: u64 = from_meta(&a.meta, "adam_step")?;
    let sm: StandardizerMeta = from_meta(&a.meta, "standardizer")?;
    let mut names = Vec::new();
    let mut params = Vec::new();
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, shape) in encoder.parameter_shapes() {
        params.push(to_tensor(a.get(&format!("param/{name}"))?, &shape)?);
        m.push(to_tensor(a.get(&format!("adam.m/{name}"))?, &shape)?);
        v.push(to_tensor(a.get(&format!("adam.v/{name}"))?, &shape)?);
        names.push(name);
    }
    let c = encoder.in_channels;
    let stat = |n: &str| to_tensor(a.get(&format!("standardizer/{n}"))?, &[c]).map(|t| t.data);
    let standardizer = Standardizer {
        count: stat("count")?,
        mean: stat("mean")?,
        m2: stat("m2")?,
        batches_seen: sm.batches_seen,
        max_batches: sm.max_batches,
    };
    Ok(TrainState {
        encoder,
        params: EncoderParams { names, tensors: params },
        adam: AdamState { m, v, step },
        standardizer,
        config,
    })
}

pub fn pca_archive(model: &PcaModel) -> TensorArchive {
    let (k, c) = (model.k(), model.channels());
    let flat: Vec<f64> = model.components.iter().flatten().copied().collect();
    TensorArchive {
        kind: KIND_PCA.into(),
        meta: serde_json::json!({ "rank_deficient": model.rank_deficient }),
        tensors: vec![
            NamedTensor::new("mean", &[c], &model.mean),
            NamedTensor::new("components", &[k, c], &flat),
            NamedTensor::new("explained_variance", &[k], &model.explained_variance),
            NamedTensor::new("explained_variance_ratio", &[k], &model.explained_variance_ratio),
        ],
    }
}

pub fn pca_from_archive(a: &TensorArchive) -> Result<PcaModel> {
    a.expect_kind(KIND_PCA)?;
    let mean = a.get("mean")?;
    let comps = a.get("components")?;
    if mean.shape.len() != 1 || comps.shape.len() != 2 || comps.shape[1] != mean.shape[0] {
        return Err(Error::Format("inconsistent PCA tensor shapes".into()));
    }
    let (k, c) = (comps.shape[0], comps.shape[1]);
    let vector = |n: &str| -> Result<Vec<f64>> {
        let t = a.get(n)?;
        if t.shape != [k] {
            return Err(Error::shape(format!("{n} [{k}]"), format!("{:?}", t.shape)));
        }
        Ok(t.values())
    };
    let values = comps.values();
    Ok(PcaModel {
        mean: mean.values(),
        components: values.chunks(c).map(<[f64]>::to_vec).collect(),
        explained_variance: vector("explained_variance")?,
        explained_variance_ratio: vector("explained_variance_ratio")?,
        rank_deficient: from_meta(&a.meta, "rank_deficient")?,
    })
}

pub fn save_train_state(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    train_state_archive(state)?.save(path)
}

pub fn load_train_state(path: impl AsRef<Path>) -> Result<TrainState> {
    train_state_from_archive(&TensorArchive::load(path)?)
}

pub fn save_pca(model: &PcaModel, path: impl AsRef<Path>) -> Result<()> {
    pca_archive(model).save(path)
}

pub fn load_pca(path: impl AsRef<Path>) -> Result<PcaModel> {
    pca_from_archive(&TensorArchive::load(path)?)
}
