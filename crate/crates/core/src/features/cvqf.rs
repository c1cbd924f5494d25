//! The CVQF embedding container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CVQF"
//! 4       2     version (u16 LE) = 1
//! 6       1     modality code
//! 7       1     reserved, written as 0
//! 8       4     vector count (u32 LE)
//! 12      4     dimension (u32 LE)
//! 16      4*n   count*dim f32 LE, vector-major
//! 16+4n   4     CRC-32 (IEEE) of the f32 payload
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};

pub const MAGIC: &[u8; 4] = b"CVQF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const FOOTER_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Modality {
    Img = 0,
    Qlt = 1,
    Art = 2,
    Slowfast = 3,
    Swint = 4,
    Content = 5,
    Fused = 6,
}

impl Modality {
    pub const ALL: [Modality; 7] = [
        Modality::Img,
        Modality::Qlt,
        Modality::Art,
        Modality::Slowfast,
        Modality::Swint,
        Modality::Content,
        Modality::Fused,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Img => "img",
            Modality::Qlt => "qlt",
            Modality::Art => "art",
            Modality::Slowfast => "slowfast",
            Modality::Swint => "swint",
            Modality::Content => "content",
            Modality::Fused => "fused",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown modality {s:?}")))
    }
}

/// A sequence of equal-length embedding vectors for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub video_id: String,
    pub modality: Modality,
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

impl EmbeddingRecord {
    pub fn new(
        video_id: impl Into<String>,
        modality: Modality,
        vectors: Vec<Vec<f32>>,
    ) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        let r = EmbeddingRecord {
            video_id: video_id.into(),
            modality,
            dim,
            vectors,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vectors.is_empty() {
            return Err(Error::InvalidData(format!(
                "{}/{}: record has no vectors",
                self.video_id, self.modality
            )));
        }
        if self.dim == 0 || self.dim > u32::MAX as usize || self.vectors.len() > u32::MAX as usize {
            return Err(Error::InvalidData(format!(
                "{}/{}: unsupported shape {}x{}",
                self.video_id,
                self.modality,
                self.vectors.len(),
                self.dim
            )));
        }
        if let Some(i) = self.vectors.iter().position(|v| v.len() != self.dim) {
            return Err(Error::Dim(format!(
                "{}/{}: vector {i} has length {}, expected {}",
                self.video_id,
                self.modality,
                self.vectors[i].len(),
                self.dim
            )));
        }
        if self.vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!(
                "{}/{}: non-finite value",
                self.video_id, self.modality
            )));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.vectors.len()
    }
}

/// Conventional file name `{video_id}.{modality}.cvqf`.
pub fn cvqf_file_name(video_id: &str, modality: Modality) -> String {
    format!("{video_id}.{modality}.cvqf")
}

pub fn encode_cvqf(record: &EmbeddingRecord) -> Result<Vec<u8>> {
    record.validate()?;
    let n = record.count() * record.dim;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n + FOOTER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(record.modality.code());
    out.push(0);
    out.extend_from_slice(&(record.count() as u32).to_le_bytes());
    out.extend_from_slice(&(record.dim as u32).to_le_bytes());
    for x in record.vectors.iter().flatten() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parses a CVQF buffer. `video_id` is not stored on the wire and is
/// supplied by the caller.
pub fn decode_cvqf(bytes: &[u8], video_id: &str) -> Result<EmbeddingRecord> {
    if bytes.len() < HEADER_LEN + FOOTER_LEN {
        return Err(Error::Format(format!(
            "{} bytes is too short for CVQF",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let modality = Modality::from_code(bytes[6])
        .ok_or_else(|| Error::Format(format!("unknown modality code {}", bytes[6])))?;
    let count = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    if count == 0 || dim == 0 {
        return Err(Error::Format(format!("empty shape {count}x{dim}")));
    }
    let payload_len = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("shape {count}x{dim} overflows")))?;
    let expected = HEADER_LEN
        .checked_add(payload_len)
        .and_then(|n| n.checked_add(FOOTER_LEN))
        .ok_or_else(|| Error::Format(format!("shape {count}x{dim} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "shape {count}x{dim} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + payload_len];
    let stored = u32_at(HEADER_LEN + payload_len);
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::CorruptFile(format!(
            "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if floats.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidData("non-finite value in payload".into()));
    }
    Ok(EmbeddingRecord {
        video_id: video_id.to_string(),
        modality,
        dim,
        vectors: floats.chunks_exact(dim).map(<[f32]>::to_vec).collect(),
    })
}

pub fn write_cvqf(record: &EmbeddingRecord, path: &Path) -> Result<()> {
    let bytes = encode_cvqf(record)?;
    write_file(path, &bytes)
}

/// Reads a CVQF file. The video id is the file stem with a trailing
/// `.{modality}` removed, matching [`cvqf_file_name`].
pub fn read_cvqf(path: &Path) -> Result<EmbeddingRecord> {
    let bytes = read_file(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut record = decode_cvqf(&bytes, &stem).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::CorruptFile(m) => Error::CorruptFile(format!("{}: {m}", path.display())),
        Error::InvalidData(m) => Error::InvalidData(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let suffix = format!(".{}", record.modality);
    if let Some(id) = stem.strip_suffix(&suffix) {
        record.video_id = id.to_string();
    }
    Ok(record)
}
