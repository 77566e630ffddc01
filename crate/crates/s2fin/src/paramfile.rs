//! Parameter file: 8-byte magic, `u32` version, `u64` manifest length, a JSON
//! manifest, then every leaf as little-endian `f32` in manifest order.

use std::fs;
use std::path::Path;

use s2fin_core::data::Normalization;
use s2fin_core::hfset::{GateMode, WeightAlignment};
use s2fin_core::{ModelConfig, ModelParams, Module, ModuleSet, S2Fin, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"S2FINPRM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSpec {
    Soft { steepness: f64 },
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub spectral_bands: usize,
    pub active_channels: usize,
    pub classes: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub cut_index: usize,
    pub alpha: f64,
    pub top_fraction: f64,
    pub beta: f64,
    pub state_dim: usize,
    pub expand: usize,
    pub mixer_depth: usize,
    pub gate: GateSpec,
    pub spectral_alignment: bool,
    pub f_cutoff_init: f64,
    pub g_amp_init: f64,
    pub disabled: Vec<String>,
}

impl From<&ModelConfig> for ModelSpec {
    fn from(c: &ModelConfig) -> Self {
        Self {
            spectral_bands: c.spectral_bands,
            active_channels: c.active_channels,
            classes: c.classes,
            window: c.window,
            embed_dim: c.embed_dim,
            cut_index: c.cut_index,
            alpha: c.alpha,
            top_fraction: c.top_fraction,
            beta: c.beta,
            state_dim: c.state_dim,
            expand: c.expand,
            mixer_depth: c.mixer_depth,
            gate: match c.gate {
                GateMode::Soft { steepness } => GateSpec::Soft { steepness },
                GateMode::Hard => GateSpec::Hard,
            },
            spectral_alignment: c.alignment == WeightAlignment::Spectral,
            f_cutoff_init: c.f_cutoff_init,
            g_amp_init: c.g_amp_init,
            disabled: c.disabled.iter().map(|m| m.name().to_string()).collect(),
        }
    }
}

impl ModelSpec {
    pub fn to_config(&self) -> Result<ModelConfig> {
        let mut c = ModelConfig::new(self.spectral_bands, self.active_channels, self.classes, self.window);
        c.embed_dim = self.embed_dim;
        c.cut_index = self.cut_index;
        c.alpha = self.alpha;
        c.top_fraction = self.top_fraction;
        c.beta = self.beta;
        c.state_dim = self.state_dim;
        c.expand = self.expand;
        c.mixer_depth = self.mixer_depth;
        c.gate = match self.gate {
            GateSpec::Soft { steepness } => GateMode::Soft { steepness },
            GateSpec::Hard => GateMode::Hard,
        };
        c.alignment = if self.spectral_alignment {
            WeightAlignment::Spectral
        } else {
            WeightAlignment::Spatial
        };
        c.f_cutoff_init = self.f_cutoff_init;
        c.g_amp_init = self.g_amp_init;
        c.disabled = self
            .disabled
            .iter()
            .map(|name| Module::parse(name).ok_or_else(|| Error::format("parameter manifest", format!("unknown module `{name}`"))))
            .collect::<Result<ModuleSet>>()?;
        Ok(c)
    }
}

/// How the stored parameters were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    pub seed: u64,
    pub samples_per_class: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafEntry {
    pub path: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub model: ModelSpec,
    /// Per-channel `[mean, std]` applied to the scene before patch extraction.
    pub spectral_normalization: Vec<[f64; 2]>,
    pub active_normalization: Vec<[f64; 2]>,
    pub training: TrainingSpec,
    pub leaves: Vec<LeafEntry>,
}

/// A model restored from disk.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub model: S2Fin,
    pub params: ModelParams,
    pub normalization: Normalization,
    pub training: TrainingSpec,
}

pub fn encode(model: &S2Fin, params: &ModelParams, normalization: &Normalization, training: &TrainingSpec) -> Result<Vec<u8>> {
    let mut offset = 0u64;
    let leaves = params
        .leaves()
        .iter()
        .map(|l| {
            let e = LeafEntry {
                path: l.path.clone(),
                shape: l.value.shape().to_vec(),
                offset,
                trainable: l.trainable,
            };
            offset += 4 * l.value.len() as u64;
            e
        })
        .collect();
    let pairs = |v: &[(f64, f64)]| v.iter().map(|&(m, s)| [m, s]).collect();
    let manifest = ParamManifest {
        model: ModelSpec::from(&model.config),
        spectral_normalization: pairs(&normalization.spectral),
        active_normalization: pairs(&normalization.active),
        training: training.clone(),
        leaves,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::format("parameter manifest", e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for leaf in params.leaves() {
        for &v in leaf.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<StoredModel> {
    let bad = |m: String| Error::format("parameter file", m);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(20..20 + len)
        .ok_or_else(|| bad(format!("manifest of {len} bytes is truncated")))?;
    let manifest: ParamManifest = serde_json::from_slice(json).map_err(|e| bad(e.to_string()))?;
    let payload = &bytes[20 + len..];

    let config = manifest.model.to_config()?;
    let (model, mut params) = S2Fin::new(config, 0)?;
    if manifest.leaves.len() != params.len() {
        return Err(Error::Dimension(format!(
            "parameter file has {} leaves, model has {}",
            manifest.leaves.len(),
            params.len()
        )));
    }
    let expected: u64 = manifest.leaves.iter().map(|l| 4 * l.shape.iter().product::<usize>() as u64).sum();
    if payload.len() as u64 != expected {
        return Err(Error::PayloadSize {
            file: "parameter payload".into(),
            expected,
            actual: payload.len() as u64,
        });
    }
    for entry in &manifest.leaves {
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let raw = payload
            .get(start..start + 4 * n)
            .ok_or_else(|| bad(format!("leaf `{}` lies outside the payload", entry.path)))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let tensor = Tensor::from_vec(&entry.shape, data)?;
        let leaf = params
            .get(&entry.path)
            .ok_or_else(|| Error::Dimension(format!("model has no parameter `{}`", entry.path)))?;
        if leaf.value.shape() != entry.shape.as_slice() {
            return Err(Error::Dimension(format!(
                "parameter `{}`: file shape {:?}, model shape {:?}",
                entry.path,
                entry.shape,
                leaf.value.shape()
            )));
        }
        params.set_value(&entry.path, tensor)?;
    }
    let pairs = |v: &[[f64; 2]]| v.iter().map(|p| (p[0], p[1])).collect();
    Ok(StoredModel {
        model,
        params,
        normalization: Normalization {
            spectral: pairs(&manifest.spectral_normalization),
            active: pairs(&manifest.active_normalization),
        },
        training: manifest.training,
    })
}

pub fn save(path: &Path, model: &S2Fin, params: &ModelParams, normalization: &Normalization, training: &TrainingSpec) -> Result<()> {
    let bytes = encode(model, params, normalization, training)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<StoredModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
