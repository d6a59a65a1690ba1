//! Noise fields on disk: raw float32 little-endian payload plus a TOML
//! sidecar with the same stem.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{NoiseField, Shape};
use crate::harness::config::RunConfig;
use crate::harness::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMeta {
    /// `[C, H, W]`.
    pub shape: [usize; 3],
    /// What the field is, e.g. `best` or `final`.
    pub role: String,
    pub seed: u64,
    /// [`RunConfig::digest`] of the config that produced the field.
    pub config_digest: String,
}

impl FieldMeta {
    pub fn new(shape: Shape, role: &str, config: &RunConfig) -> Result<Self> {
        Ok(Self {
            shape: shape.as_array(),
            role: role.to_string(),
            seed: config.seed,
            config_digest: config.digest()?,
        })
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.shape[0], self.shape[1], self.shape[2])
    }

    /// Check that the field came from `config`.
    pub fn verify(&self, config: &RunConfig) -> Result<()> {
        let want = config.digest()?;
        if self.config_digest != want {
            return Err(Error::Config(format!(
                "field digest {} does not match config digest {want}",
                self.config_digest
            )));
        }
        Ok(())
    }
}

/// `best.f32` → `best.toml`.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("toml")
}

pub fn write_field(payload: &Path, x: &NoiseField, meta: &FieldMeta) -> Result<()> {
    if meta.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            expected: meta.shape().to_string(),
            actual: x.shape().to_string(),
        });
    }
    let mut bytes = Vec::with_capacity(4 * x.shape().len());
    for &v in x.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let sidecar = toml::to_string(meta).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(payload, &bytes)?;
    write_atomic(&sidecar_path(payload), sidecar.as_bytes())
}

pub fn read_field(payload: &Path) -> Result<(NoiseField, FieldMeta)> {
    let side = sidecar_path(payload);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: FieldMeta =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", side.display())))?;
    let bytes = fs::read(payload).map_err(|e| Error::io(payload, e))?;
    let expected = 4 * meta.shape().len();
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((NoiseField::from_vec(meta.shape(), data)?, meta))
}
