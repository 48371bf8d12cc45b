//! Binary container used for model files:
//! 8-byte magic, `u32` LE header length, JSON header, then LE `f64` payload.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn encode<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[f64]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 8 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode<H: DeserializeOwned>(magic: &[u8; 8], bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(Error::Format(format!("missing {:?} magic", String::from_utf8_lossy(magic))));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[12..];
    if len > rest.len() {
        return Err(Error::Format("header length exceeds file".into()));
    }
    let header = serde_json::from_slice(&rest[..len])?;
    let blob = &rest[len..];
    if !blob.len().is_multiple_of(8) {
        return Err(Error::Format("payload is not a whole number of f64 values".into()));
    }
    let payload: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if payload.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stored parameters".into()));
    }
    Ok((header, payload))
}
