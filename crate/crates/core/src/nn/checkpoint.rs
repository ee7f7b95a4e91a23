//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, u32 version, a JSON descriptor block (architecture,
//! training provenance, caller metadata), the flat little-endian f64 weight
//! payload in `param_slices` order, and a SHA-256 checksum over everything
//! before it. Save followed by load reproduces forward outputs bitwise.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::nn::mlp::MlpClassifier;
use crate::nn::transformer::{TinyTransformer, TransformerConfig};
use crate::tensor::RNG_ALGORITHM;

const MAGIC: &[u8; 8] = b"CTXNNCKP";
const VERSION: u32 = 1;

/// Architecture descriptor stored in the checkpoint header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Arch {
    Mlp { widths: Vec<usize> },
    Transformer { config: TransformerConfig },
}

/// Training provenance recorded alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub rng_algorithm: String,
    pub config_digest: String,
    /// Final training accuracy (classifier) or final batch loss (transformer).
    pub final_metric: Option<f64>,
}

impl Provenance {
    pub fn new(seed: u64, config_digest: impl Into<String>, final_metric: Option<f64>) -> Self {
        Self {
            seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            config_digest: config_digest.into(),
            final_metric,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Descriptor {
    #[serde(flatten)]
    arch: Arch,
    provenance: Provenance,
    /// Caller extras, e.g. the vocabulary for a transformer.
    metadata: serde_json::Value,
}

/// A model plus its provenance, ready to persist.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub arch: Arch,
    pub provenance: Provenance,
    pub metadata: serde_json::Value,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn of_mlp(
        model: &MlpClassifier,
        provenance: Provenance,
        metadata: serde_json::Value,
    ) -> Self {
        Self {
            arch: Arch::Mlp {
                widths: model.widths().to_vec(),
            },
            provenance,
            metadata,
            params: flat_params(&model.param_slices()),
        }
    }

    pub fn of_transformer(
        model: &TinyTransformer,
        provenance: Provenance,
        metadata: serde_json::Value,
    ) -> Self {
        Self {
            arch: Arch::Transformer {
                config: model.config().clone(),
            },
            provenance,
            metadata,
            params: flat_params(&model.param_slices()),
        }
    }

    pub fn to_mlp(&self) -> Result<MlpClassifier> {
        let Arch::Mlp { widths } = &self.arch else {
            return Err(Error::Format("checkpoint does not hold an mlp".into()));
        };
        let mut model = MlpClassifier::zeros(widths.clone())?;
        load_flat(&mut model.param_slices_mut(), &self.params)?;
        Ok(model)
    }

    pub fn to_transformer(&self) -> Result<TinyTransformer> {
        let Arch::Transformer { config } = &self.arch else {
            return Err(Error::Format("checkpoint does not hold a transformer".into()));
        };
        let mut model = TinyTransformer::zeros(config.clone())?;
        load_flat(&mut model.param_slices_mut(), &self.params)?;
        Ok(model)
    }

    pub fn encode(&self) -> Vec<u8> {
        let descriptor = Descriptor {
            arch: self.arch.clone(),
            provenance: self.provenance.clone(),
            metadata: self.metadata.clone(),
        };
        let desc_json = serde_json::to_string(&descriptor).expect("descriptor serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        binio::put_u32(&mut buf, VERSION);
        binio::put_string(&mut buf, &desc_json);
        binio::put_u64(&mut buf, self.params.len() as u64);
        binio::put_f64_slice(&mut buf, &self.params);
        let checksum = binio::sha256_hex(&buf);
        binio::put_string(&mut buf, &checksum);
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let desc_json = r.string()?;
        let n = r.u64()? as usize;
        let params = r.f64_vec(n)?;
        let body_len = bytes.len() - r.remaining();
        let checksum = r.string()?;
        if checksum != binio::sha256_hex(&bytes[..body_len]) {
            return Err(Error::Format("checkpoint checksum mismatch".into()));
        }
        let descriptor: Descriptor = serde_json::from_str(&desc_json)
            .map_err(|e| Error::Format(format!("bad checkpoint descriptor: {e}")))?;
        Ok(Self {
            arch: descriptor.arch,
            provenance: descriptor.provenance,
            metadata: descriptor.metadata,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes)
    }

    /// Short content digest over architecture and weights, independent of
    /// provenance and metadata. Used to bind caches and sweep manifests to a
    /// model.
    pub fn model_digest(&self) -> String {
        model_digest_of(&self.arch, &self.params)
    }
}

fn flat_params(slices: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(slices.iter().map(|s| s.len()).sum());
    for s in slices {
        out.extend_from_slice(s);
    }
    out
}

fn load_flat(slices: &mut [&mut [f64]], flat: &[f64]) -> Result<()> {
    let want: usize = slices.iter().map(|s| s.len()).sum();
    if want != flat.len() {
        return Err(Error::Format(format!(
            "weight payload holds {} values, architecture needs {want}",
            flat.len()
        )));
    }
    let mut offset = 0;
    for s in slices.iter_mut() {
        s.copy_from_slice(&flat[offset..offset + s.len()]);
        offset += s.len();
    }
    Ok(())
}

fn model_digest_of(arch: &Arch, params: &[f64]) -> String {
    let mut bytes = serde_json::to_vec(arch).expect("arch serializes");
    for p in params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    binio::short_digest(&bytes)
}

/// Content digest of a live classifier.
pub fn mlp_digest(model: &MlpClassifier) -> String {
    model_digest_of(
        &Arch::Mlp {
            widths: model.widths().to_vec(),
        },
        &flat_params(&model.param_slices()),
    )
}

/// Content digest of a live transformer.
pub fn transformer_digest(model: &TinyTransformer) -> String {
    model_digest_of(
        &Arch::Transformer {
            config: model.config().clone(),
        },
        &flat_params(&model.param_slices()),
    )
}
