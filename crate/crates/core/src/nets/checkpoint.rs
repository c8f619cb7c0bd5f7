//! Checkpoint container.
//!
//! ```text
//! magic      8 bytes  "TLOCCKPT"
//! version    u32 LE
//! header_len u64 LE
//! header     JSON: component, config, provenance, [(name, shape)]
//! payload    every array as f32 LE, in header order
//! digest     32 bytes, SHA-256 of everything above
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::models::{DiscriminatorConfig, LocalizationConfig, RestorationConfig};
use super::params::NamedTensor;
use crate::error::{invalid, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TLOCCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "R")]
    Restoration,
    #[serde(rename = "L")]
    Localization,
    #[serde(rename = "D")]
    Discriminator,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Restoration => "R",
            Component::Localization => "L",
            Component::Discriminator => "D",
        })
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(Component::Restoration),
            "L" | "l" => Ok(Component::Localization),
            "D" | "d" => Ok(Component::Discriminator),
            other => Err(invalid!("unknown component tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "component", content = "config")]
pub enum NetConfig {
    #[serde(rename = "R")]
    Restoration(RestorationConfig),
    #[serde(rename = "L")]
    Localization(LocalizationConfig),
    #[serde(rename = "D")]
    Discriminator(DiscriminatorConfig),
}

impl NetConfig {
    pub fn component(&self) -> Component {
        match self {
            NetConfig::Restoration(_) => Component::Restoration,
            NetConfig::Localization(_) => Component::Localization,
            NetConfig::Discriminator(_) => Component::Discriminator,
        }
    }
}

/// Where a set of weights came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Training regime, e.g. `pretrain_plain` or `reloc_alternate`.
    pub phase: String,
    pub epoch: usize,
    pub seed: u64,
}

impl Provenance {
    pub fn new(phase: impl Into<String>, epoch: usize, seed: u64) -> Self {
        Self {
            phase: phase.into(),
            epoch,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub provenance: Provenance,
    /// `(name, shape, values)` sorted by name.
    pub params: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(flatten)]
    config: NetConfig,
    provenance: Provenance,
    arrays: Vec<(String, Vec<usize>)>,
}

impl Checkpoint {
    pub fn component(&self) -> Component {
        self.config.component()
    }

    /// Fails unless the checkpoint holds the given component.
    pub fn expect(&self, component: Component) -> Result<&Self> {
        if self.component() == component {
            Ok(self)
        } else {
            Err(Error::Checkpoint(format!(
                "expected a {component} checkpoint, found {}",
                self.component()
            )))
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config,
            provenance: self.provenance.clone(),
            arrays: self
                .params
                .iter()
                .map(|(n, s, _)| (n.clone(), s.clone()))
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, values) in &self.params {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::Checkpoint(format!("corrupt checkpoint: {what}"));
        if bytes.len() < 8 + 4 + 8 + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic or too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("digest mismatch (truncated or modified)"));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length"))?;
        let header: Header = serde_json::from_slice(&body[20..header_end])?;
        let mut payload = &body[header_end..];
        let mut params = Vec::with_capacity(header.arrays.len());
        for (name, shape) in header.arrays {
            let n: usize = shape.iter().product();
            if payload.len() < n * 4 {
                return Err(corrupt("payload shorter than declared arrays"));
            }
            let (chunk, rest) = payload.split_at(n * 4);
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            params.push((name, shape, values));
            payload = rest;
        }
        if !payload.is_empty() {
            return Err(corrupt("trailing payload bytes"));
        }
        Ok(Self {
            config: header.config,
            provenance: header.provenance,
            params,
        })
    }
}

/// Writes atomically: the bytes go to `<path>.partial` first, then get renamed.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let partial = path.with_extension("partial");
    fs::write(&partial, bytes).map_err(|e| Error::io(&partial, e))?;
    fs::rename(&partial, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
