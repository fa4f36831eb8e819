//! Versioned, checksummed model files.
//!
//! Layout: one ASCII header line
//! `urbanflow-model <format_version> <kind> <payload_len> <sha256-hex>`
//! followed by a JSON payload of exactly `payload_len` bytes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use urbanflow_core::kmeans::KMeansParams;
use urbanflow_core::linreg::{EvalMetrics, LinRegModel};
use urbanflow_core::regimes::CongestionRegimes;
use urbanflow_core::spatiotemporal::GridSpec;
use urbanflow_core::trips::{Feature, NormStats};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "urbanflow-model";

#[derive(Debug, Error, PartialEq)]
pub enum ModelFileError {
    #[error("not a model file: {0}")]
    BadHeader(String),
    #[error("model format version {found} is not supported (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model file truncated: header promises {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("model checksum mismatch: header {expected}, payload {actual}")]
    Checksum { expected: String, actual: String },
    #[error("header says `{header}` but payload holds `{payload}`")]
    KindMismatch { header: String, payload: String },
    #[error("malformed model payload: {0}")]
    Payload(String),
}

/// Trip-duration regression with everything needed to score raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    pub features: Vec<Feature>,
    pub norm: NormStats,
    /// Coefficients are in normalized feature space; the target is minutes.
    pub linreg: LinRegModel,
    pub seed: u64,
    pub split_ratio: f64,
    pub train_rows: usize,
    pub test_metrics: Option<EvalMetrics>,
    pub timezone: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionModel {
    pub regimes: CongestionRegimes,
    pub grid: GridSpec,
    pub min_support: usize,
    pub seed: u64,
    pub restarts: usize,
    pub params: KMeansParams,
    pub timezone: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum ModelPayload {
    Duration(DurationModel),
    Congestion(CongestionModel),
}

impl ModelPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelPayload::Duration(_) => "duration",
            ModelPayload::Congestion(_) => "congestion",
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_model(model: &ModelPayload) -> Vec<u8> {
    save_with_version(model, FORMAT_VERSION)
}

fn save_with_version(model: &ModelPayload, version: u32) -> Vec<u8> {
    let payload = serde_json::to_vec(model).expect("models serialize");
    let mut out = format!(
        "{MAGIC} {version} {} {} {}\n",
        model.kind(),
        payload.len(),
        sha256_hex(&payload)
    )
    .into_bytes();
    out.extend_from_slice(&payload);
    out
}

pub fn load_model(bytes: &[u8]) -> Result<ModelPayload, ModelFileError> {
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| ModelFileError::BadHeader("no header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| ModelFileError::BadHeader("header is not UTF-8".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 5 || parts[0] != MAGIC {
        return Err(ModelFileError::BadHeader(header.chars().take(80).collect()));
    }
    let version: u32 = parts[1]
        .parse()
        .map_err(|_| ModelFileError::BadHeader(format!("bad version `{}`", parts[1])))?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len: usize = parts[3]
        .parse()
        .map_err(|_| ModelFileError::BadHeader(format!("bad length `{}`", parts[3])))?;
    let payload = &bytes[nl + 1..];
    if payload.len() != len {
        return Err(ModelFileError::Truncated {
            expected: len,
            found: payload.len(),
        });
    }
    let actual = sha256_hex(payload);
    if actual != parts[4] {
        return Err(ModelFileError::Checksum {
            expected: parts[4].to_string(),
            actual,
        });
    }
    let model: ModelPayload = serde_json::from_slice(payload).map_err(|e| ModelFileError::Payload(e.to_string()))?;
    if model.kind() != parts[2] {
        return Err(ModelFileError::KindMismatch {
            header: parts[2].to_string(),
            payload: model.kind().to_string(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> ModelPayload {
        ModelPayload::Duration(DurationModel {
            features: Feature::DURATION_BASE.to_vec(),
            norm: NormStats {
                names: Feature::DURATION_BASE.iter().map(|f| f.name()).collect(),
                mean: vec![2.9, -73.97, 40.75, -73.97, 40.75, 1.6],
                std: vec![3.1, 0.03, 0.027, 0.031, 0.03, 1.27],
            },
            linreg: LinRegModel {
                intercept: 13.370_000_000_000_001,
                coefficients: vec![0.1 + 0.2, -1e-300, 5e-324, 1.0 / 3.0, 2.0f64.sqrt(), -0.0],
                feature_names: Feature::DURATION_BASE.iter().map(|f| f.name()).collect(),
                ridge_epsilon: 0.0,
            },
            seed: 7,
            split_ratio: 0.8,
            train_rows: 800,
            test_metrics: None,
            timezone: "America/New_York".into(),
        })
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let bytes = save_model(&m);
        let back = load_model(&bytes).unwrap();
        let (ModelPayload::Duration(a), ModelPayload::Duration(b)) = (&m, &back) else { panic!() };
        for (x, y) in a.linreg.coefficients.iter().zip(&b.linreg.coefficients) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.linreg.intercept.to_bits(), b.linreg.intercept.to_bits());
        assert_eq!(save_model(&back), bytes);
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = save_model(&sample());
        let last = bytes.len() - 5;
        bytes[last] ^= 0x01;
        assert!(matches!(load_model(&bytes), Err(ModelFileError::Checksum { .. })));
    }

    #[test]
    fn truncation_is_reported() {
        let bytes = save_model(&sample());
        assert!(matches!(load_model(&bytes[..bytes.len() - 10]), Err(ModelFileError::Truncated { .. })));
    }

    #[test]
    fn old_version_names_both_versions() {
        let bytes = save_with_version(&sample(), 0);
        let err = load_model(&bytes).unwrap_err();
        assert_eq!(err, ModelFileError::Version { found: 0, expected: 1 });
        let msg = err.to_string();
        assert!(msg.contains('0') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn garbage_is_not_a_model() {
        assert!(matches!(load_model(b"hello\nworld"), Err(ModelFileError::BadHeader(_))));
        assert!(matches!(load_model(b""), Err(ModelFileError::BadHeader(_))));
    }
}
