//! Named parameter tensors, seeded initialization and the `SSAF` weight file.
//!
//! `SSAF` layout:
//!
//! ```text
//! b"SSAF" | u32 manifest_len (LE) | manifest JSON (UTF-8) | f32 LE blob
//! ```
//!
//! The manifest records the network configuration and, per tensor, its name,
//! shape, dtype (`"f32"`) and byte offset into the blob.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SsafnConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSAF_MAGIC: &[u8; 4] = b"SSAF";

/// Shape and initialization fan-in of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

impl ParamSpec {
    fn new(name: String, shape: Vec<usize>, fan_in: usize) -> Self {
        Self { name, shape, fan_in }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn linear_specs(out: &mut Vec<ParamSpec>, prefix: &str, in_dim: usize, out_dim: usize) {
    out.push(ParamSpec::new(format!("{prefix}.weight"), vec![in_dim, out_dim], in_dim));
    out.push(ParamSpec::new(format!("{prefix}.bias"), vec![out_dim], in_dim));
}

/// Every parameter tensor implied by `cfg`, in canonical order.
pub fn param_specs(cfg: &SsafnConfig) -> Vec<ParamSpec> {
    let c = cfg.channels;
    let cr = cfg.reduced_channels();
    let f = cfg.bins;
    let mut specs = Vec::new();
    if cfg.use_joint_attention {
        for block in 0..2 {
            for inner in 0..2 {
                let k = cfg.cbam_kernels[2 * block + inner];
                let p = format!("joint{block}.cbam{inner}");
                linear_specs(&mut specs, &format!("{p}.fc1"), c, cr);
                linear_specs(&mut specs, &format!("{p}.fc2"), cr, c);
                specs.push(ParamSpec::new(format!("{p}.conv.weight"), vec![2, k, k], 2 * k * k));
                specs.push(ParamSpec::new(format!("{p}.conv.bias"), vec![1], 2 * k * k));
            }
            let p = format!("joint{block}.coord");
            linear_specs(&mut specs, &format!("{p}.reduce"), c, cr);
            linear_specs(&mut specs, &format!("{p}.time"), cr, c);
            linear_specs(&mut specs, &format!("{p}.freq"), cr, c);
        }
    }
    if cfg.use_rsacc {
        linear_specs(&mut specs, "rsacc.query", f, cfg.embed_dim);
        linear_specs(&mut specs, "rsacc.key", f, cfg.embed_dim);
        linear_specs(&mut specs, "rsacc.value", f, 1);
    }
    if cfg.use_mhsa {
        linear_specs(&mut specs, "mhsa.query", f, cfg.attn_dim);
        linear_specs(&mut specs, "mhsa.key", f, cfg.attn_dim);
        linear_specs(&mut specs, "mhsa.value", f, cfg.attn_dim);
        linear_specs(&mut specs, "mhsa.out", cfg.attn_dim, f);
        linear_specs(&mut specs, "mhsa.ffn1", f, cfg.ffn_dim);
        linear_specs(&mut specs, "mhsa.ffn2", cfg.ffn_dim, f);
    }
    specs
}

/// Complete parameter set for one network configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SsafnWeights {
    config: SsafnConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl SsafnWeights {
    /// Checks that `tensors` holds exactly the tensors `config` requires.
    pub fn new(config: SsafnConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != tensors.len() {
            return Err(Error::WeightFormat(format!(
                "expected {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for spec in &specs {
            let t = tensors
                .get(&spec.name)
                .ok_or_else(|| Error::WeightFormat(format!("missing tensor {}", spec.name)))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::WeightFormat(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::WeightFormat(format!("tensor {} is not finite", spec.name)));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &SsafnConfig {
        &self.config
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> &[f64] {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("weight set validated without tensor {name}"))
            .data()
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.tensors)
    }

    /// Mutable access for hand-set weights in tests and experiments; shapes
    /// cannot change.
    pub fn set(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let t = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::WeightFormat(format!("unknown tensor {name}")))?;
        if data.len() != t.len() {
            return Err(Error::Shape(format!(
                "tensor {name} holds {} values, got {}",
                t.len(),
                data.len()
            )));
        }
        t.data_mut().copy_from_slice(&data);
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut blob = Vec::new();
        for (name, t) in &self.tensors {
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
                offset: blob.len() as u64,
            });
            for &v in t.data() {
                blob.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let manifest = serde_json::to_vec(&Manifest {
            format_version: 1,
            config: self.config,
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(8 + manifest.len() + blob.len());
        out.extend_from_slice(SSAF_MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::WeightFormat(m);
        if bytes.len() < 8 || &bytes[..4] != SSAF_MAGIC {
            return Err(bad("missing SSAF magic".into()));
        }
        let mlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let manifest_bytes = bytes
            .get(8..8 + mlen)
            .ok_or_else(|| bad("truncated manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(manifest_bytes)
            .map_err(|e| bad(format!("unreadable manifest: {e}")))?;
        if manifest.format_version != 1 {
            return Err(bad(format!("unsupported version {}", manifest.format_version)));
        }
        let blob = &bytes[8 + mlen..];
        let mut expected_len = 0usize;
        let mut tensors = BTreeMap::new();
        for e in manifest.tensors {
            if e.dtype != "f32" {
                return Err(bad(format!("tensor {} has unsupported dtype {}", e.name, e.dtype)));
            }
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let raw = start
                .checked_add(n * 4)
                .and_then(|end| blob.get(start..end))
                .ok_or_else(|| bad(format!("tensor {} lies outside the blob", e.name)))?;
            expected_len += n * 4;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            if tensors.insert(e.name.clone(), Tensor::new(e.shape, data)?).is_some() {
                return Err(bad(format!("duplicate tensor {}", e.name)));
            }
        }
        if expected_len != blob.len() {
            return Err(bad(format!(
                "blob has {} bytes, manifest describes {expected_len}",
                blob.len()
            )));
        }
        Self::new(manifest.config, tensors).map_err(|e| match e {
            Error::WeightFormat(_) => e,
            other => bad(other.to_string()),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: SsafnConfig,
    tensors: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

/// Seeded `U(-a, a)` initialization with `a = sqrt(1 / fan_in)`. Values are
/// rounded to `f32` so that saving and loading is lossless.
pub fn init_weights(cfg: &SsafnConfig, seed: u64) -> Result<SsafnWeights> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for spec in param_specs(cfg) {
        let a = (1.0 / spec.fan_in as f64).sqrt();
        let data = (0..spec.numel())
            .map(|_| rng.random_range(-a..a) as f32 as f64)
            .collect();
        tensors.insert(spec.name.clone(), Tensor::new(spec.shape, data)?);
    }
    SsafnWeights::new(*cfg, tensors)
}

/// Total number of scalar parameters.
pub fn param_count(tensors: &BTreeMap<String, Tensor>) -> usize {
    tensors.values().map(Tensor::len).sum()
}
