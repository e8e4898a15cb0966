use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const CHECKPOINT_FORMAT: &str = "fedgcn-weights";
const CHECKPOINT_VERSION: u32 = 1;

/// Layer weight matrices `d x h, h x h, ..., h x M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnWeights {
    layers: Vec<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    shapes: Vec<(usize, usize)>,
}

impl GcnWeights {
    /// Checks that consecutive layers chain and all entries are finite.
    pub fn new(layers: Vec<Matrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a model needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} columns but layer {} expects {} rows",
                    pair[0].cols(),
                    l + 1,
                    pair[1].rows()
                )));
            }
        }
        if layers.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("weights contain non-finite values".into()));
        }
        Ok(Self { layers })
    }

    /// Layer dimensions for `num_layers` layers: `in_dim -> hidden -> ... -> out_dim`.
    pub fn dims(in_dim: usize, hidden: usize, out_dim: usize, num_layers: usize) -> Vec<usize> {
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat_n(hidden, num_layers.saturating_sub(1)));
        dims.push(out_dim);
        dims
    }

    /// Glorot-uniform initialization over the layer dimensions `dims`.
    pub fn glorot(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape(
                "need at least input and output dimensions".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|p| {
                let r = (6.0 / (p[0] + p[1]) as f64).sqrt();
                let data = (0..p[0] * p[1]).map(|_| rng.random_range(-r..=r)).collect();
                Matrix::from_vec(p[0], p[1], data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Matrix] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(Matrix::shape).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|w| w.rows() * w.cols()).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.layers.iter().map(Matrix::frobenius_norm_sq).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }

    /// All entries, layer by layer, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|w| w.as_slice().iter().copied())
            .collect()
    }

    /// Inverse of [`to_flat`](Self::to_flat) for the given layer shapes.
    pub fn from_flat(shapes: &[(usize, usize)], flat: &[f64]) -> Result<Self> {
        let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if total != flat.len() {
            return Err(Error::Shape(format!(
                "{} values for {total} parameters",
                flat.len()
            )));
        }
        let mut at = 0;
        let layers = shapes
            .iter()
            .map(|&(r, c)| {
                let m = Matrix::from_vec(r, c, flat[at..at + r * c].to_vec());
                at += r * c;
                m
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn max_abs_diff(&self, other: &GcnWeights) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn check_same_shape(&self, other: &GcnWeights) -> Result<()> {
        if self.shapes() != other.shapes() {
            return Err(Error::Shape(format!(
                "weight shapes {:?} vs {:?}",
                self.shapes(),
                other.shapes()
            )));
        }
        Ok(())
    }

    /// Serialized checkpoint: u32 LE header length, JSON header with layer
    /// shapes, then every entry as f64 LE.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            shapes: self.shapes(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(4 + json.len() + 8 * self.num_params());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.to_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Integrity(format!("checkpoint: {m}"));
        let len_bytes: [u8; 4] = bytes
            .get(..4)
            .ok_or_else(|| corrupt("truncated header length"))?
            .try_into()
            .expect("four bytes");
        let hlen = u32::from_le_bytes(len_bytes) as usize;
        let json = bytes
            .get(4..4 + hlen)
            .ok_or_else(|| corrupt("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(json)?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(corrupt("unknown format or version"));
        }
        let body = &bytes[4 + hlen..];
        if !body.len().is_multiple_of(8) {
            return Err(corrupt("payload is not a whole number of f64 values"));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        Self::from_flat(&header.shapes, &flat)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_checkpoint_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// `W <- W - lr * grad`, elementwise.
pub fn sgd_step(w: &GcnWeights, grads: &GcnWeights, lr: f64) -> Result<GcnWeights> {
    w.check_same_shape(grads)?;
    let mut out = w.clone();
    for (wl, gl) in out.layers.iter_mut().zip(&grads.layers) {
        wl.add_scaled(-lr, gl)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_respects_range_and_shapes() {
        let w = GcnWeights::glorot(&GcnWeights::dims(10, 4, 3, 2), 1).unwrap();
        assert_eq!(w.shapes(), vec![(10, 4), (4, 3)]);
        let r = (6.0f64 / 14.0).sqrt();
        assert!(w.layers()[0].as_slice().iter().all(|v| v.abs() <= r));
    }

    #[test]
    fn incompatible_layers_rejected() {
        assert!(GcnWeights::new(vec![Matrix::zeros(3, 4), Matrix::zeros(5, 2)]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let w = GcnWeights::glorot(&[7, 5, 5, 2], 3).unwrap();
        let back = GcnWeights::from_checkpoint_bytes(&w.to_checkpoint_bytes()).unwrap();
        assert_eq!(w, back);
        let mut bytes = w.to_checkpoint_bytes();
        bytes.pop();
        assert!(GcnWeights::from_checkpoint_bytes(&bytes).is_err());
    }

    #[test]
    fn sgd_trivial_cases() {
        let w = GcnWeights::glorot(&[3, 2, 2], 4).unwrap();
        assert_eq!(sgd_step(&w, &w, 0.0).unwrap(), w);
        assert_eq!(sgd_step(&w, &w, 1.0).unwrap().norm_sq(), 0.0);
    }

    #[test]
    fn two_steps_equal_one_combined_step() {
        let w = GcnWeights::glorot(&[3, 2, 2], 5).unwrap();
        let g1 = GcnWeights::glorot(&[3, 2, 2], 6).unwrap();
        let g2 = GcnWeights::glorot(&[3, 2, 2], 7).unwrap();
        let two = sgd_step(&sgd_step(&w, &g1, 0.1).unwrap(), &g2, 0.1).unwrap();
        let mut sum = g1.clone();
        for (a, b) in sum.layers.iter_mut().zip(&g2.layers) {
            a.add_scaled(1.0, b).unwrap();
        }
        let one = sgd_step(&w, &sum, 0.1).unwrap();
        assert!(two.max_abs_diff(&one) < 1e-15);
    }
}
