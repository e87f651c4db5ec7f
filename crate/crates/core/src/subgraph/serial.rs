//! Versioned subgraph documents.
//!
//! A document is one compact JSON header line followed by the JSON payload:
//!
//! ```text
//! {"schema_version":"1","length":1234,"sha256":"<hex>"}
//! {"centers":[...],"nearby":[...],"onehop":[...],"edges":[...]}
//! ```
//!
//! The digest covers the payload bytes exactly, so any modified, dropped or
//! appended byte is rejected instead of silently changing the subgraph.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Subgraph;

pub const SUBGRAPH_SCHEMA_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum SubgraphFormatError {
    #[error("unsupported subgraph schema version {found:?} (expected {expected:?})")]
    Version {
        found: String,
        expected: &'static str,
    },
    #[error("malformed subgraph header: {0}")]
    Header(String),
    #[error("payload is {found} bytes, header says {expected}")]
    Length { found: usize, expected: usize },
    #[error("payload checksum mismatch")]
    Checksum,
    #[error("malformed subgraph payload: {0}")]
    Payload(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: String,
    length: usize,
    sha256: String,
}

fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn serialize_subgraph(s: &Subgraph) -> Vec<u8> {
    let payload = serde_json::to_vec(s).expect("subgraph serializes");
    let header = Header {
        schema_version: SUBGRAPH_SCHEMA_VERSION.to_string(),
        length: payload.len(),
        sha256: digest_hex(&payload),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&payload);
    out
}

pub fn parse_subgraph(bytes: &[u8]) -> Result<Subgraph, SubgraphFormatError> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| SubgraphFormatError::Header("missing header line".into()))?;
    let (head, payload) = (&bytes[..split], &bytes[split + 1..]);
    let version: serde_json::Value =
        serde_json::from_slice(head).map_err(|e| SubgraphFormatError::Header(e.to_string()))?;
    if let Some(v) = version.get("schema_version").and_then(|v| v.as_str()) {
        if v != SUBGRAPH_SCHEMA_VERSION {
            return Err(SubgraphFormatError::Version {
                found: v.to_string(),
                expected: SUBGRAPH_SCHEMA_VERSION,
            });
        }
    }
    let header: Header =
        serde_json::from_value(version).map_err(|e| SubgraphFormatError::Header(e.to_string()))?;
    if header.length != payload.len() {
        return Err(SubgraphFormatError::Length {
            found: payload.len(),
            expected: header.length,
        });
    }
    if header.sha256 != digest_hex(payload) {
        return Err(SubgraphFormatError::Checksum);
    }
    serde_json::from_slice(payload).map_err(|e| SubgraphFormatError::Payload(e.to_string()))
}
