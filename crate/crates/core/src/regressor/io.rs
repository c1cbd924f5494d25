//! Binary parameter files.
//!
//! Layout, little-endian: magic `CVQP`, `u16` version, `u16` reserved,
//! `u32` header length, a JSON header describing shapes and named
//! sections, the `f64` section payload in header order, and a CRC32 of all
//! preceding bytes.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::{Normalization, RegressorParams};
use crate::error::{read_file, write_file, Error, Result};

const MAGIC: &[u8; 4] = b"CVQP";
const VERSION: u16 = 1;
const PREFIX_LEN: usize = 12;

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Section {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    d_in: usize,
    hidden: Vec<usize>,
    dropout: f64,
    seed: u64,
    config_hash: String,
    sections: Vec<Section>,
}

fn sections(p: &RegressorParams) -> Vec<(String, Vec<f64>)> {
    let n = &p.norm;
    let mut out = vec![
        ("norm.input_mean".to_string(), n.input_mean.clone()),
        ("norm.input_scale".to_string(), n.input_scale.clone()),
        (
            "norm.target".to_string(),
            vec![n.target_mean, n.target_scale],
        ),
    ];
    for (l, h) in p.mlp.hidden.iter().enumerate() {
        let t = |name: &str, a: &[f64]| (format!("hidden.{l}.{name}"), a.to_vec());
        out.push(t(
            "weight",
            h.dense.weight.as_slice().expect("standard layout"),
        ));
        out.push(t("bias", h.dense.bias.as_slice().expect("standard layout")));
        out.push(t("gamma", h.bn.gamma.as_slice().expect("standard layout")));
        out.push(t("beta", h.bn.beta.as_slice().expect("standard layout")));
        out.push(t(
            "running_mean",
            h.bn.running_mean.as_slice().expect("standard layout"),
        ));
        out.push(t(
            "running_var",
            h.bn.running_var.as_slice().expect("standard layout"),
        ));
    }
    out.push((
        "output.weight".into(),
        p.mlp.output.weight.iter().copied().collect(),
    ));
    out.push(("output.bias".into(), p.mlp.output.bias.to_vec()));
    out
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("parameter file: {}", msg.into()))
}

impl RegressorParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let secs = sections(self);
        let header = Header {
            d_in: self.d_in(),
            hidden: self.mlp.hidden_sizes(),
            dropout: self.mlp.dropout,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            sections: secs
                .iter()
                .map(|(name, v)| Section {
                    name: name.clone(),
                    len: v.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(PREFIX_LEN + json.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, v) in &secs {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREFIX_LEN + 4 {
            return Err(format_err(format!("{} bytes is too short", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
            return Err(Error::CorruptFile(
                "parameter file checksum mismatch".into(),
            ));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = PREFIX_LEN
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| format_err("header length exceeds file"))?;
        let header: Header = serde_json::from_slice(&body[PREFIX_LEN..header_end])
            .map_err(|e| format_err(format!("header: {e}")))?;
        if header.d_in == 0 || header.hidden.is_empty() || header.hidden.contains(&0) {
            return Err(format_err("invalid network shape"));
        }
        if !(0.0..1.0).contains(&header.dropout) {
            return Err(format_err(format!("invalid dropout {}", header.dropout)));
        }

        let mut params = RegressorParams {
            mlp: Mlp::zeros(header.d_in, &header.hidden, header.dropout),
            norm: Normalization::identity(header.d_in),
            seed: header.seed,
            config_hash: header.config_hash,
        };
        let expected = sections(&params);
        let layout_ok = expected.len() == header.sections.len()
            && expected
                .iter()
                .zip(&header.sections)
                .all(|((name, v), s)| *name == s.name && v.len() == s.len);
        if !layout_ok {
            return Err(format_err("sections do not match the declared shapes"));
        }
        let total: usize = expected.iter().map(|(_, v)| v.len()).sum();
        let payload = &body[header_end..];
        if payload.len() != total * 8 {
            return Err(format_err(format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                total * 8
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "parameter file contains non-finite values".into(),
            ));
        }

        let mut rest = &values[..];
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let d = header.d_in;
        params.norm.input_mean = take(d);
        params.norm.input_scale = take(d);
        let t = take(2);
        params.norm.target_mean = t[0];
        params.norm.target_scale = t[1];
        for h in &mut params.mlp.hidden {
            let shape = h.dense.weight.raw_dim();
            h.dense.weight =
                Array2::from_shape_vec(shape, take(shape[0] * shape[1])).expect("shape");
            let k = shape[0];
            h.dense.bias = Array1::from(take(k));
            h.bn.gamma = Array1::from(take(k));
            h.bn.beta = Array1::from(take(k));
            h.bn.running_mean = Array1::from(take(k));
            h.bn.running_var = Array1::from(take(k));
        }
        let shape = params.mlp.output.weight.raw_dim();
        params.mlp.output.weight = Array2::from_shape_vec(shape, take(shape[1])).expect("shape");
        params.mlp.output.bias = Array1::from(take(1));
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> RegressorParams {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut mlp = Mlp::new(5, &[4, 3], 0.1, &mut rng);
        for h in &mut mlp.hidden {
            h.bn.running_mean
                .mapv_inplace(|_| rng.random_range(-1.0..1.0));
            h.bn.running_var
                .mapv_inplace(|_| rng.random_range(0.1..2.0));
        }
        RegressorParams {
            mlp,
            norm: Normalization {
                input_mean: vec![0.5; 5],
                input_scale: vec![2.0; 5],
                target_mean: 3.2,
                target_scale: 0.7,
            },
            seed: 42,
            config_hash: "abc".into(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let p = sample();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"CVQP");
        let q = RegressorParams::from_bytes(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.to_bytes(), bytes);

        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("params.cvqp");
        p.save(&path).unwrap();
        assert_eq!(RegressorParams::load(&path).unwrap(), p);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes();
        let mut flipped = bytes.clone();
        let mid = bytes.len() - 20;
        flipped[mid] ^= 1;
        assert!(matches!(
            RegressorParams::from_bytes(&flipped),
            Err(Error::CorruptFile(_))
        ));
        assert!(matches!(
            RegressorParams::from_bytes(&bytes[..10]),
            Err(Error::Format(_))
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(
            RegressorParams::from_bytes(&magic),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncated_prefixes_never_panic() {
        let bytes = sample().to_bytes();
        for n in 0..bytes.len() {
            assert!(RegressorParams::from_bytes(&bytes[..n]).is_err());
        }
    }
}
