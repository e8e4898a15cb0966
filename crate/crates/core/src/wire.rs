//! Length-prefixed record encoding used for every client/server message.
//!
//! A record is a 12-byte header `{u32 node_id, u32 hop, u32 payload_len}`
//! followed by `payload_len` little-endian f64 values. Byte counts reported
//! by the simulator are lengths of this encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hop tag of model-parameter records.
pub const HOP_MODEL: u32 = 0;
/// Hop tag of neighbor-feature-sum records.
pub const HOP_FEATURES: u32 = 1;

pub const HEADER_BYTES: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub node_id: u32,
    pub hop: u32,
    pub payload: Vec<f64>,
}

impl Record {
    pub fn new(node_id: usize, hop: u32, payload: Vec<f64>) -> Result<Self> {
        let node_id = u32::try_from(node_id)
            .map_err(|_| Error::Protocol(format!("node id {node_id} does not fit in u32")))?;
        if u32::try_from(payload.len()).is_err() {
            return Err(Error::Protocol("payload too long for a u32 length".into()));
        }
        Ok(Self {
            node_id,
            hop,
            payload,
        })
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES + 8 * self.payload.len()
    }
}

pub fn encoded_len(records: &[Record]) -> usize {
    records.iter().map(Record::encoded_len).sum()
}

pub fn encode_records(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(records));
    for r in records {
        out.extend_from_slice(&r.node_id.to_le_bytes());
        out.extend_from_slice(&r.hop.to_le_bytes());
        out.extend_from_slice(&(r.payload.len() as u32).to_le_bytes());
        for v in &r.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    let mut at = 0;
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
            .ok_or_else(|| Error::Protocol(format!("truncated record header at byte {at}")))
    };
    while at < bytes.len() {
        let (node_id, hop, len) = (word(at)?, word(at + 4)?, word(at + 8)? as usize);
        at += HEADER_BYTES;
        let body = bytes
            .get(at..at + 8 * len)
            .ok_or_else(|| Error::Protocol(format!("truncated payload for node {node_id}")))?;
        let payload = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        at += 8 * len;
        out.push(Record {
            node_id,
            hop,
            payload,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_length() {
        let recs = vec![
            Record::new(3, HOP_FEATURES, vec![1.0, -2.5, 4.0]).unwrap(),
            Record::new(0, HOP_MODEL, vec![]).unwrap(),
        ];
        let bytes = encode_records(&recs);
        assert_eq!(bytes.len(), encoded_len(&recs));
        assert_eq!(bytes.len(), 12 + 24 + 12);
        assert_eq!(decode_records(&bytes).unwrap(), recs);
    }

    #[test]
    fn truncation_is_protocol_error() {
        let bytes = encode_records(&[Record::new(1, 1, vec![1.0]).unwrap()]);
        assert!(matches!(
            decode_records(&bytes[..bytes.len() - 1]),
            Err(Error::Protocol(_))
        ));
    }
}
