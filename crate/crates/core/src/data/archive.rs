//! Model archives.
//!
//! An archive is UTF-8 text in two parts:
//!
//! ```text
//! {"format":"nss-model","version":1,"checksum":"<sha256 of the payload bytes, lowercase hex>"}
//! <payload: pretty-printed JSON>
//! ```
//!
//! The first line is the header; everything after the first `\n` is the
//! payload, hashed byte for byte. In the payload every float (weights,
//! biases, normalization statistics) is stored as 16 lowercase hex digits
//! of its IEEE-754 bit pattern, big-endian; weight matrices are row-major
//! (`outputs x inputs`) and concatenated into one string per matrix.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::composition::{CompositionPlan, QuantileModel};
use crate::error::{Error, Result};
use crate::neural::{Layer, NetworkSpec, NetworkState};

use super::dataset::NormStats;

pub const ARCHIVE_FORMAT: &str = "nss-model";
pub const ARCHIVE_VERSION: u32 = 1;

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    /// SHA-256 of the resolved run configuration.
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    checksum: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
    weights: String,
    bias: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageRecord {
    spec: NetworkSpec,
    layers: Vec<LayerRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsRecord {
    feature_mean: String,
    feature_std: String,
    target_mean: String,
    target_std: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Payload {
    plan: CompositionPlan,
    stages: Vec<StageRecord>,
    stats: StatsRecord,
    fingerprint: Fingerprint,
}

/// Hex encoding of the bit patterns of `values`.
pub fn encode_floats(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_bits().to_be_bytes()).collect();
    hex::encode(bytes)
}

pub fn decode_floats(text: &str) -> Result<Vec<f64>> {
    let bytes = hex::decode(text).map_err(|e| Error::Archive(format!("bad float encoding: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Archive(format!(
            "float field has {} bytes, not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_bits(u64::from_be_bytes(c.try_into().expect("8-byte chunk"))))
        .collect())
}

fn decode_scalar(text: &str) -> Result<f64> {
    match decode_floats(text)?.as_slice() {
        [v] => Ok(*v),
        other => Err(Error::Archive(format!("expected one float, found {}", other.len()))),
    }
}

/// Serializes `model` into archive text.
pub fn encode_model(model: &QuantileModel, fingerprint: &Fingerprint) -> Result<String> {
    let payload = Payload {
        plan: model.plan.clone(),
        stages: model
            .networks
            .iter()
            .map(|n| StageRecord {
                spec: n.spec.clone(),
                layers: n
                    .layers
                    .iter()
                    .map(|l| LayerRecord {
                        inputs: l.inputs,
                        outputs: l.outputs,
                        weights: encode_floats(&l.weights),
                        bias: encode_floats(&l.bias),
                    })
                    .collect(),
            })
            .collect(),
        stats: StatsRecord {
            feature_mean: encode_floats(&model.stats.feature_mean),
            feature_std: encode_floats(&model.stats.feature_std),
            target_mean: encode_floats(&[model.stats.target_mean]),
            target_std: encode_floats(&[model.stats.target_std]),
        },
        fingerprint: fingerprint.clone(),
    };
    let mut body = serde_json::to_string_pretty(&payload).map_err(|e| Error::Archive(e.to_string()))?;
    body.push('\n');
    let header = Header {
        format: ARCHIVE_FORMAT.into(),
        version: ARCHIVE_VERSION,
        checksum: hex::encode(Sha256::digest(body.as_bytes())),
    };
    let head = serde_json::to_string(&header).map_err(|e| Error::Archive(e.to_string()))?;
    Ok(format!("{head}\n{body}"))
}

/// Parses archive text back into a model.
pub fn decode_model(text: &str) -> Result<(QuantileModel, Fingerprint)> {
    let (head, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::Archive("missing header line".into()))?;
    let header: Header = serde_json::from_str(head).map_err(|e| Error::Archive(format!("unreadable header: {e}")))?;
    if header.format != ARCHIVE_FORMAT {
        return Err(Error::Archive(format!(
            "not a model archive (format '{}')",
            header.format
        )));
    }
    if header.version > ARCHIVE_VERSION || header.version == 0 {
        return Err(Error::ArchiveVersion {
            found: header.version,
            supported: ARCHIVE_VERSION,
        });
    }
    let actual = hex::encode(Sha256::digest(body.as_bytes()));
    if actual != header.checksum {
        return Err(Error::Archive(format!(
            "checksum mismatch: header says {}, payload hashes to {actual}",
            header.checksum
        )));
    }
    let payload: Payload =
        serde_json::from_str(body).map_err(|e| Error::Archive(format!("unreadable payload: {e}")))?;
    let networks = payload
        .stages
        .into_iter()
        .map(|s| {
            let layers = s
                .layers
                .into_iter()
                .map(|l| {
                    Ok(Layer {
                        inputs: l.inputs,
                        outputs: l.outputs,
                        weights: decode_floats(&l.weights)?,
                        bias: decode_floats(&l.bias)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            NetworkState::from_layers(s.spec, layers)
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = NormStats {
        feature_mean: decode_floats(&payload.stats.feature_mean)?,
        feature_std: decode_floats(&payload.stats.feature_std)?,
        target_mean: decode_scalar(&payload.stats.target_mean)?,
        target_std: decode_scalar(&payload.stats.target_std)?,
    };
    let model = QuantileModel::from_parts(payload.plan, networks, stats)
        .map_err(|e| Error::Archive(format!("archive does not describe a valid model: {e}")))?;
    Ok((model, payload.fingerprint))
}

pub fn save_model(model: &QuantileModel, fingerprint: &Fingerprint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model, fingerprint)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(QuantileModel, Fingerprint)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::{Mode, NetworkOptions, StageSpec};
    use crate::neural::Matrix;
    use crate::spline::BasisKind;

    fn model() -> QuantileModel {
        let plan = CompositionPlan::chain(
            Mode::XChain,
            vec![
                StageSpec::new(BasisKind::CSpline, 3),
                StageSpec::new(BasisKind::PSpline, 2),
            ],
        );
        let stats = NormStats {
            feature_mean: vec![0.1, -3.0],
            feature_std: vec![2.0, 0.3],
            target_mean: 1.0 / 3.0,
            target_std: 7.0,
        };
        let opts = NetworkOptions {
            hidden: vec![5],
            ..NetworkOptions::default()
        };
        QuantileModel::new(plan, stats, &opts, 11).unwrap()
    }

    #[test]
    fn floats_round_trip_bitwise() {
        let v = [0.1, -0.0, f64::MIN_POSITIVE, 1e300, std::f64::consts::PI];
        let back = decode_floats(&encode_floats(&v)).unwrap();
        assert_eq!(
            v.map(f64::to_bits).to_vec(),
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn round_trip_predicts_identically() {
        let m = model();
        let fp = Fingerprint {
            config_hash: "abc".into(),
            seed: 11,
        };
        let (back, fp2) = decode_model(&encode_model(&m, &fp).unwrap()).unwrap();
        assert_eq!(fp, fp2);
        let xs = Matrix::from_rows(&[vec![0.3, -2.9], vec![5.0, 1.0]]);
        let levels = [0.05, 0.5, 0.95];
        let a = m.quantiles(&xs, &levels).unwrap();
        let b = back.quantiles(&xs, &levels).unwrap();
        assert_eq!(
            a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn tampering_is_detected() {
        let text = encode_model(&model(), &Fingerprint::default()).unwrap();
        let pos = text.find("\"weights\": \"").unwrap() + 14;
        let mut bytes = text.into_bytes();
        bytes[pos] = if bytes[pos] == b'0' { b'1' } else { b'0' };
        let err = decode_model(&String::from_utf8(bytes).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Archive(ref m) if m.contains("checksum")), "{err}");
    }

    #[test]
    fn newer_version_is_refused() {
        let text = encode_model(&model(), &Fingerprint::default()).unwrap();
        let text = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            decode_model(&text),
            Err(Error::ArchiveVersion { found: 2, supported: 1 })
        ));
    }
}
