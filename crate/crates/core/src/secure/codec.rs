use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-point encoding of reals into the wrapping ring `Z / 2^64`.
///
/// A value `v` maps to `round(v * 2^scale_bits)` as a two's-complement
/// residue, so ring addition of encodings is addition of values as long as
/// the true sum stays inside `(-2^(63 - scale_bits), 2^(63 - scale_bits))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    scale_bits: u32,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self { scale_bits: 20 }
    }
}

impl FixedPointCodec {
    pub fn new(scale_bits: u32) -> Result<Self> {
        if scale_bits > 62 {
            return Err(Error::Parameter(format!(
                "scale of {scale_bits} bits leaves no integer range in a 64-bit ring"
            )));
        }
        Ok(Self { scale_bits })
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    fn scale(&self) -> f64 {
        (1u64 << self.scale_bits) as f64
    }

    /// Largest magnitude that encodes without wrapping.
    pub fn max_magnitude(&self) -> f64 {
        2f64.powi(63 - self.scale_bits as i32)
    }

    pub fn encode(&self, v: f64) -> Result<u64> {
        if !v.is_finite() || v.abs() >= self.max_magnitude() {
            return Err(Error::Bounds(format!(
                "{v} outside the codec range +-{}",
                self.max_magnitude()
            )));
        }
        Ok(((v * self.scale()).round() as i64) as u64)
    }

    pub fn decode(&self, r: u64) -> f64 {
        (r as i64) as f64 / self.scale()
    }

    pub fn encode_all(&self, values: &[f64]) -> Result<Vec<u64>> {
        values.iter().map(|&v| self.encode(v)).collect()
    }

    pub fn decode_all(&self, residues: &[u64]) -> Vec<f64> {
        residues.iter().map(|&r| self.decode(r)).collect()
    }

    /// The value the codec actually transports for `v`.
    pub fn quantize(&self, v: f64) -> Result<f64> {
        Ok(self.decode(self.encode(v)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values_round_trip_exactly() {
        let c = FixedPointCodec::default();
        for v in [0.0, 1.0, -1.0, 169.0, 0.5, -1234.25, 2f64.powi(-20)] {
            assert_eq!(c.decode(c.encode(v).unwrap()), v);
        }
    }

    #[test]
    fn ring_sum_decodes_to_value_sum() {
        let c = FixedPointCodec::default();
        let vals = [3.25, -7.5, 0.125, 100.0];
        let sum = vals
            .iter()
            .fold(0u64, |acc, &v| acc.wrapping_add(c.encode(v).unwrap()));
        assert_eq!(c.decode(sum), vals.iter().sum::<f64>());
    }

    #[test]
    fn out_of_range_is_bounds_error() {
        let c = FixedPointCodec::default();
        assert!(matches!(c.encode(2f64.powi(43)), Err(Error::Bounds(_))));
        assert!(c.encode(f64::NAN).is_err());
        assert!(FixedPointCodec::new(63).is_err());
    }
}
