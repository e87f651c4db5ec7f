//! Binary checkpoints: magic, a JSON header, little-endian f64 payload and a
//! SHA-256 trailer over everything before it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::params::{BlockGroup, ParamBlock};
use crate::{EncoderConfig, EncoderError, EncoderParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UGECKPT1";

/// Headers larger than this are rejected before parsing.
const MAX_HEADER: u64 = 1 << 20;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockHeader {
    name: String,
    rows: usize,
    cols: usize,
    group: BlockGroup,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: EncoderConfig,
    blocks: Vec<BlockHeader>,
}

pub fn write_checkpoint(params: &EncoderParams) -> Vec<u8> {
    let header = Header {
        config: params.config().clone(),
        blocks: params
            .blocks
            .iter()
            .map(|b| BlockHeader {
                name: b.name.clone(),
                rows: b.rows,
                cols: b.cols,
                group: b.group,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + params.num_params() * 8 + 32);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for x in params.blocks.iter().flat_map(|b| &b.data) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn bad(msg: impl Into<String>) -> EncoderError {
    EncoderError::Checkpoint(msg.into())
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<EncoderParams, EncoderError> {
    if bytes.len() < 16 + 32 {
        return Err(bad("file too short"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(bad("checksum mismatch"));
    }
    let hlen = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes"));
    if hlen > MAX_HEADER || hlen as usize > body.len() - 16 {
        return Err(bad(format!("header length {hlen} out of range")));
    }
    let hend = 16 + hlen as usize;
    let header: Header =
        serde_json::from_slice(&body[16..hend]).map_err(|e| bad(format!("header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| bad(format!("config: {e}")))?;
    let payload = &body[hend..];
    let mut expected: usize = 0;
    for b in &header.blocks {
        expected = b
            .rows
            .checked_mul(b.cols)
            .and_then(|n| expected.checked_add(n))
            .ok_or_else(|| bad("block sizes overflow"))?;
    }
    if expected.checked_mul(8) != Some(payload.len()) {
        return Err(bad(format!(
            "payload holds {} bytes, header describes {expected} values",
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let blocks = header
        .blocks
        .into_iter()
        .map(|h| ParamBlock {
            data: values.by_ref().take(h.rows * h.cols).collect(),
            name: h.name,
            rows: h.rows,
            cols: h.cols,
            group: h.group,
        })
        .collect();
    EncoderParams::from_blocks(&header.config, blocks).map_err(|e| bad(e.to_string()))
}
