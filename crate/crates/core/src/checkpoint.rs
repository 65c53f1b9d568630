//! Model checkpoints: a TOML manifest next to a binary parameter blob.
//!
//! Blob layout (little-endian): magic `DMPCCK01`, `u64` parameter count,
//! `u64` number of optimizer moment sections (0 or 2), the parameters in
//! declaration order, then the Adam first and second moments if present.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, NormalizationStats};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DMPCCK01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Drifting,
    DriftingPrior,
    Ddpm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Drifting => "drifting",
            ModelKind::DriftingPrior => "drifting-prior",
            ModelKind::Ddpm => "ddpm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drifting" => Ok(ModelKind::Drifting),
            "drifting-prior" => Ok(ModelKind::DriftingPrior),
            "ddpm" => Ok(ModelKind::Ddpm),
            other => Err(Error::Config(format!(
                "unknown model kind `{other}` (expected drifting, drifting-prior or ddpm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub magic: String,
    pub kind: ModelKind,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    /// Noise dimension for drifting models; time-feature count for ddpm.
    pub d_eps: usize,
    pub cond_dim: usize,
    pub out_dim: usize,
    pub horizon: usize,
    pub d_x: usize,
    pub d_u: usize,
    /// Relabeled costs are divided by this before tilting or guidance.
    pub cost_scale: f64,
    pub seed: u64,
    pub epochs_done: usize,
    pub param_count: usize,
    pub norm: NormalizationStats,
    /// Training configuration, stored as a TOML table so each model kind can
    /// keep its own schema.
    pub train: toml::Table,
    pub optimizer: Option<AdamState>,
    /// Diffusion noise schedule `β_1..β_S`.
    pub ddpm_betas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub params: Vec<f64>,
    pub moments: Option<(Vec<f64>, Vec<f64>)>,
}

/// `(manifest, blob)` paths for a checkpoint stem; a trailing `.toml` or `.bin` is ignored.
pub fn checkpoint_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".toml"), with(".bin"))
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let (mpath, bpath) = checkpoint_paths(path);
        if let Some(dir) = mpath.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = toml::to_string(&self.manifest).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;

        let sections: u64 = if self.moments.is_some() { 2 } else { 0 };
        let mut buf = Vec::with_capacity(24 + 8 * self.params.len() * (1 + sections as usize));
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        buf.extend_from_slice(&sections.to_le_bytes());
        let mut push = |vals: &[f64]| {
            vals.iter()
                .for_each(|v| buf.extend_from_slice(&v.to_le_bytes()))
        };
        push(&self.params);
        if let Some((m, v)) = &self.moments {
            push(m);
            push(v);
        }
        fs::write(&bpath, buf).map_err(|e| Error::io(&bpath, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (mpath, bpath) = checkpoint_paths(path);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: CheckpointManifest =
            toml::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
        if manifest.magic.as_bytes() != CHECKPOINT_MAGIC {
            return Err(Error::format(
                &mpath,
                format!("manifest magic `{}`", manifest.magic),
            ));
        }
        let bytes = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        if bytes.len() < 24 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::format(&bpath, "missing DMPCCK01 header"));
        }
        let word = |i: usize| {
            u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes")) as usize
        };
        let (count, sections) = (word(0), word(1));
        if count != manifest.param_count {
            return Err(Error::format(
                &bpath,
                format!(
                    "blob holds {count} parameters, manifest says {}",
                    manifest.param_count
                ),
            ));
        }
        if sections != 0 && sections != 2 {
            return Err(Error::format(
                &bpath,
                format!("{sections} optimizer sections"),
            ));
        }
        if bytes.len() != 24 + 8 * count * (1 + sections) {
            return Err(Error::format(
                &bpath,
                "blob length does not match its header",
            ));
        }
        let floats: Vec<f64> = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if floats[..count].iter().any(|v| !v.is_finite()) {
            return Err(Error::format(&bpath, "non-finite parameter"));
        }
        let params = floats[..count].to_vec();
        let moments = (sections == 2).then(|| {
            (
                floats[count..2 * count].to_vec(),
                floats[2 * count..].to_vec(),
            )
        });
        Ok(Self {
            manifest,
            params,
            moments,
        })
    }

    /// Adam state with moments restored from the blob.
    pub fn adam_state(&self) -> Option<AdamState> {
        let mut adam = self.manifest.optimizer.clone()?;
        let (m, v) = self.moments.clone()?;
        adam.m = m;
        adam.v = v;
        Some(adam)
    }
}
