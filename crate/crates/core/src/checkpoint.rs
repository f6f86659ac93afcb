//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MLLG" | version u32 | total_len u64 | json_len u64 | json
//!        | tensor_count u32 | tensors... | crc32 u32
//! tensor = name_len u32 | name | ndim u32 | dims u64 * ndim | f64 * prod(dims)
//! ```
//!
//! The CRC covers every byte before it. Reading checks, in order: minimum
//! length, magic, version, declared length, checksum, then structure.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::cooccur::NormalizedCorrelation;
use crate::corpus::Vocabulary;
use crate::encoder::{DenseLayer, Encoder};
use crate::error::{CheckpointError, Error, Result};
use crate::glove::EmbeddingMatrix;
use crate::graph::{GcnLayer, GcnStack};
use crate::model::{Head, LabelGraph, Model};
use crate::relabel::ClusterModel;
use crate::trainer::{TrainConfig, VariantSpec};

pub const MAGIC: [u8; 4] = *b"MLLG";
pub const FORMAT_VERSION: u32 = 1;
const FIXED_HEADER: usize = 4 + 4 + 8 + 8;
const MIN_LEN: usize = FIXED_HEADER + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn matrix(name: &str, m: &Array2<f64>) -> Self {
        Tensor {
            name: name.to_string(),
            shape: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }

    pub fn vector(name: &str, v: &Array1<f64>) -> Self {
        Tensor {
            name: name.to_string(),
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    fn to_matrix(&self) -> std::result::Result<Array2<f64>, CheckpointError> {
        match self.shape[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), self.data.clone()).expect("checked size")),
            _ => Err(CheckpointError::Malformed(format!(
                "tensor '{}' should be 2-D, has shape {:?}",
                self.name, self.shape
            ))),
        }
    }

    fn to_vector(&self) -> std::result::Result<Array1<f64>, CheckpointError> {
        match self.shape[..] {
            [_] => Ok(Array1::from_vec(self.data.clone())),
            _ => Err(CheckpointError::Malformed(format!(
                "tensor '{}' should be 1-D, has shape {:?}",
                self.name, self.shape
            ))),
        }
    }
}

/// Header JSON plus tensors, with no interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub json: Vec<u8>,
    pub tensors: Vec<Tensor>,
}

pub fn encode(raw: &RawCheckpoint) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(&(raw.json.len() as u64).to_le_bytes());
    body.extend_from_slice(&raw.json);
    body.extend_from_slice(&(raw.tensors.len() as u32).to_le_bytes());
    for t in &raw.tensors {
        body.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        body.extend_from_slice(t.name.as_bytes());
        body.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            body.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            body.extend_from_slice(&v.to_le_bytes());
        }
    }
    let total = 4 + 4 + 8 + body.len() + 4;
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(total as u64).to_le_bytes());
    out.extend_from_slice(&body);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &'static str) -> std::result::Result<usize, CheckpointError> {
        usize::try_from(self.u64(what)?).map_err(|_| CheckpointError::Truncated(what))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<RawCheckpoint, CheckpointError> {
    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated("header"));
    }
    if bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < MIN_LEN {
        return Err(CheckpointError::Truncated("header"));
    }
    let declared = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if declared > bytes.len() as u64 {
        return Err(CheckpointError::Truncated("file shorter than its declared length"));
    }
    if declared < bytes.len() as u64 {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes after declared end",
            bytes.len() as u64 - declared
        )));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }

    let mut cur = Cursor {
        bytes: payload,
        pos: 16,
    };
    let json_len = cur.len("config length")?;
    let json = cur.take(json_len, "config")?.to_vec();
    let count = cur.u32("tensor count")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name_len = cur.u32("tensor name length")? as usize;
        let name = String::from_utf8(cur.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?;
        let ndim = cur.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(cur.len("tensor shape")?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| CheckpointError::Malformed(format!("tensor '{name}' is too large")))?;
        let data = cur
            .take(n, "tensor data")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if cur.pos != payload.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} unread bytes before checksum",
            payload.len() - cur.pos
        )));
    }
    Ok(RawCheckpoint { json, tensors })
}

/// Everything that is not a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub variant: String,
    pub seed: u64,
    /// Epoch (1-based) whose parameters were kept.
    pub epoch: usize,
    pub train: TrainConfig,
    pub vocabulary: Vocabulary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Model,
    pub graph: LabelGraph,
    pub clusters: Option<ClusterModel>,
}

impl Checkpoint {
    pub fn variant(&self) -> Result<VariantSpec> {
        VariantSpec::from_name(&self.meta.variant)
    }

    pub fn to_raw(&self) -> Result<RawCheckpoint> {
        let mut tensors = Vec::new();
        for (i, l) in self.model.encoder.layers.iter().enumerate() {
            tensors.push(Tensor::matrix(&format!("encoder.{i}.weight"), &l.weight));
            tensors.push(Tensor::vector(&format!("encoder.{i}.bias"), &l.bias));
        }
        match &self.model.head {
            Head::Gcn(stack) => {
                for (i, l) in stack.layers.iter().enumerate() {
                    tensors.push(Tensor::matrix(&format!("gcn.{i}.weight"), &l.weight));
                }
            }
            Head::Linear(k) => tensors.push(Tensor::matrix("linear.weight", k)),
        }
        tensors.push(Tensor::matrix("embedding", self.graph.z.matrix()));
        tensors.push(Tensor::matrix("correlation", self.graph.b.matrix()));
        if let Some(c) = &self.clusters {
            tensors.push(Tensor::matrix("centroids", &c.centroids));
        }
        Ok(RawCheckpoint {
            json: serde_json::to_vec(&self.meta)?,
            tensors,
        })
    }

    pub fn from_raw(raw: RawCheckpoint) -> std::result::Result<Self, CheckpointError> {
        let malformed = |m: String| CheckpointError::Malformed(m);
        let meta: CheckpointMeta =
            serde_json::from_slice(&raw.json).map_err(|e| malformed(format!("config: {e}")))?;
        let variant = VariantSpec::from_name(&meta.variant).map_err(|e| malformed(e.to_string()))?;
        let mut it = raw.tensors.into_iter();
        let mut next = |name: String| -> std::result::Result<Tensor, CheckpointError> {
            match it.next() {
                Some(t) if t.name == name => Ok(t),
                Some(t) => Err(malformed(format!("expected tensor '{name}', found '{}'", t.name))),
                None => Err(malformed(format!("missing tensor '{name}'"))),
            }
        };

        let enc_cfg = &meta.train.encoder;
        let n_enc = enc_cfg.layer_widths.len();
        let mut layers = Vec::with_capacity(n_enc);
        for i in 0..n_enc {
            layers.push(DenseLayer {
                weight: next(format!("encoder.{i}.weight"))?.to_matrix()?,
                bias: next(format!("encoder.{i}.bias"))?.to_vector()?,
                activation: hidden_or_identity(i + 1 == n_enc, enc_cfg.slope),
            });
        }
        let encoder = Encoder::new(layers).map_err(|e| malformed(e.to_string()))?;

        let head = if variant.use_gcn {
            let n_gcn = meta.train.gcn.dims(0, 0).len() - 1;
            let mut layers = Vec::with_capacity(n_gcn);
            for i in 0..n_gcn {
                layers.push(GcnLayer {
                    weight: next(format!("gcn.{i}.weight"))?.to_matrix()?,
                    activation: hidden_or_identity(i + 1 == n_gcn, meta.train.gcn.slope),
                });
            }
            Head::Gcn(GcnStack::new(layers).map_err(|e| malformed(e.to_string()))?)
        } else {
            Head::Linear(next("linear.weight".into())?.to_matrix()?)
        };

        let z = EmbeddingMatrix::new(next("embedding".into())?.to_matrix()?)
            .map_err(|e| malformed(e.to_string()))?;
        let b = NormalizedCorrelation::from_matrix(next("correlation".into())?.to_matrix()?)
            .map_err(|e| malformed(e.to_string()))?;
        let graph = LabelGraph { z, b };
        let clusters = match it.next() {
            Some(t) if t.name == "centroids" => Some(ClusterModel {
                centroids: t.to_matrix()?,
            }),
            Some(t) => return Err(malformed(format!("unexpected tensor '{}'", t.name))),
            None => None,
        };
        if let Some(t) = it.next() {
            return Err(malformed(format!("unexpected tensor '{}'", t.name)));
        }
        if graph.z.num_classes() != meta.vocabulary.len() {
            return Err(malformed("embedding rows do not match the vocabulary".into()));
        }
        let model = Model::new(encoder, head, &graph).map_err(|e| malformed(e.to_string()))?;
        Ok(Checkpoint {
            meta,
            model,
            graph,
            clusters,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(encode(&self.to_raw()?))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(Checkpoint::from_raw(decode(bytes)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn hidden_or_identity(last: bool, slope: f64) -> Activation {
    if last {
        Activation::Identity
    } else {
        Activation::LeakyRelu { slope }
    }
}
