//! Binary checkpoint format.
//!
//! ```text
//! "PSEG"                      magic
//! u32 format_version
//! u32 len, len bytes          UTF-8 config, one `key=value` per line;
//!                             metadata entries use `meta.<key>=<value>`
//! u32 array_count
//! per array:
//!   u32 len, len bytes        UTF-8 name
//!   u8 rank, rank × u32       dims
//!   product(dims) × f32       payload
//! ```
//! All integers and floats are little-endian.

use std::collections::{BTreeMap, HashSet};

use super::unet::{UNet, ENCODER_PREFIX};
use super::{ModelConfig, NamedArray};
use crate::error::{CheckpointError, ModelError};

pub const MAGIC: &[u8; 4] = b"PSEG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub arrays: Vec<NamedArray>,
    pub metadata: BTreeMap<String, String>,
}

fn escape(v: &str) -> String {
    v.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    let mut chars = v.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &'static str) -> Result<&'a str, CheckpointError> {
        let len = self.u32(what)? as usize;
        std::str::from_utf8(self.take(len, what)?).map_err(|_| CheckpointError::Utf8(what))
    }
}

impl Checkpoint {
    pub fn from_model(model: &UNet, metadata: BTreeMap<String, String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: model.config().clone(),
            arrays: model.named_arrays(),
            metadata,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut text = String::new();
        for (k, v) in self.config.to_kv() {
            text.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.metadata {
            text.push_str(&format!("meta.{}={}\n", escape(k).replace('=', "\\="), escape(v)));
        }

        let payload: usize = self.arrays.iter().map(|a| a.name.len() + 5 + 4 * (a.shape.len() + a.values.len())).sum();
        let mut out = Vec::with_capacity(16 + text.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.shape.len() as u8);
            for &d in &a.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &a.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }

        let text = r.string("config")?;
        let mut config = ModelConfig::default();
        let mut metadata = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = split_key(line)
                .ok_or_else(|| CheckpointError::InvalidConfig(format!("line {line:?} lacks '='")))?;
            if let Some(meta) = k.strip_prefix("meta.") {
                metadata.insert(unescape(meta), unescape(v));
            } else {
                config.set_kv(k, v).map_err(CheckpointError::InvalidConfig)?;
            }
        }

        let count = r.u32("array count")? as usize;
        let mut arrays = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string("array name")?.to_string();
            let rank = r.u8("array rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("array dims")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or(CheckpointError::Truncated("array payload"))?;
            let raw = r.take(n.checked_mul(4).ok_or(CheckpointError::Truncated("array payload"))?, "array payload")?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            arrays.push(NamedArray { name, shape, values });
        }
        Ok(Self {
            format_version: version,
            config,
            arrays,
            metadata,
        })
    }

    /// Only the arrays whose names start with the encoder prefix.
    pub fn encoder_only(&self) -> Self {
        Self {
            arrays: self
                .arrays
                .iter()
                .filter(|a| a.name.starts_with(ENCODER_PREFIX))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// Element count of the trainable arrays (running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.arrays.iter().filter(|a| !a.is_buffer()).map(|a| a.values.len()).sum()
    }

    fn check_unique(&self) -> Result<(), CheckpointError> {
        let mut seen = HashSet::new();
        for a in &self.arrays {
            if !seen.insert(a.name.as_str()) {
                return Err(CheckpointError::DuplicateArray(a.name.clone()));
            }
        }
        Ok(())
    }

    /// Builds the model described by the config and loads every array. The
    /// checkpoint must contain exactly the model's arrays.
    pub fn to_model(&self) -> Result<UNet, ModelError> {
        self.check_unique()?;
        let mut model = UNet::build(self.config.clone())?;
        let expected: HashSet<String> = model.named_arrays().into_iter().map(|a| a.name).collect();
        for a in &self.arrays {
            if !expected.contains(&a.name) {
                return Err(CheckpointError::UnknownArray(a.name.clone()).into());
            }
        }
        let present: HashSet<&str> = self.arrays.iter().map(|a| a.name.as_str()).collect();
        if let Some(missing) = model.named_arrays().into_iter().find(|a| !present.contains(a.name.as_str())) {
            return Err(CheckpointError::MissingArray(missing.name).into());
        }
        for a in &self.arrays {
            model.set_array(&a.name, &a.shape, &a.values)?;
        }
        Ok(model)
    }

    /// Loads an encoder-only checkpoint into `model`, leaving every other
    /// array untouched. Returns the number of arrays loaded.
    pub fn load_encoder_into(&self, model: &mut UNet) -> Result<usize, CheckpointError> {
        self.check_unique()?;
        if let Some(a) = self.arrays.iter().find(|a| !a.name.starts_with(ENCODER_PREFIX)) {
            return Err(CheckpointError::NotEncoderArray {
                prefix: ENCODER_PREFIX.to_string(),
                name: a.name.clone(),
            });
        }
        for a in &self.arrays {
            model.set_array(&a.name, &a.shape, &a.values)?;
        }
        Ok(self.arrays.len())
    }
}

/// Splits at the first '=' not preceded by a backslash.
fn split_key(line: &str) -> Option<(&str, &str)> {
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'=' => return Some((&line[..i], &line[i + 1..])),
            _ => i += 1,
        }
    }
    None
}

pub fn save_checkpoint(model: &UNet, metadata: BTreeMap<String, String>) -> Vec<u8> {
    Checkpoint::from_model(model, metadata).to_bytes()
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<UNet, ModelError> {
    Checkpoint::from_bytes(bytes)?.to_model()
}
