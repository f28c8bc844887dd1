//! Binary payload for feature-vector "images": `CIPV`, a little-endian u32
//! dimension, then that many little-endian f64 values.

pub const VECTOR_PAYLOAD_MAGIC: &[u8; 4] = b"CIPV";

pub fn encode_vector_payload(v: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * v.len());
    out.extend_from_slice(VECTOR_PAYLOAD_MAGIC);
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// `None` unless `bytes` is exactly a well-formed vector payload.
pub fn decode_vector_payload(bytes: &[u8]) -> Option<Vec<f64>> {
    let rest = bytes.strip_prefix(VECTOR_PAYLOAD_MAGIC)?;
    let (dim, values) = rest.split_at_checked(4)?;
    let dim = u32::from_le_bytes(dim.try_into().ok()?) as usize;
    if values.len() != dim * 8 {
        return None;
    }
    Some(values.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}
