use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

/// Stochastic block model with Gaussian class-conditional features.
///
/// Nodes in the same block connect with probability `alpha`, nodes in
/// different blocks with probability `mu * alpha`. Node features are drawn
/// from `N(H e_y, sigma^2 I)` where `H` is `feature_means` (`d x K`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub num_nodes: usize,
    pub num_blocks: usize,
    pub alpha: f64,
    pub mu: f64,
    pub block_probs: Vec<f64>,
    pub feature_dim: usize,
    pub feature_means: Matrix,
    pub feature_noise: f64,
}

impl SbmParams {
    /// Uniform block probabilities and `H` = identity padded with zeros.
    pub fn new(
        num_nodes: usize,
        num_blocks: usize,
        alpha: f64,
        mu: f64,
        feature_dim: usize,
        feature_noise: f64,
    ) -> Self {
        let mut h = Matrix::zeros(feature_dim, num_blocks);
        for k in 0..num_blocks.min(feature_dim) {
            h[(k, k)] = 1.0;
        }
        Self {
            num_nodes,
            num_blocks,
            alpha,
            mu,
            block_probs: vec![1.0 / num_blocks.max(1) as f64; num_blocks],
            feature_dim,
            feature_means: h,
            feature_noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} = {v} is not a probability"
                )))
            }
        };
        prob("alpha", self.alpha)?;
        prob("mu", self.mu)?;
        if self.num_blocks == 0 {
            return Err(Error::Parameter("need at least one block".into()));
        }
        if self.block_probs.len() != self.num_blocks {
            return Err(Error::Parameter(format!(
                "{} block probabilities for {} blocks",
                self.block_probs.len(),
                self.num_blocks
            )));
        }
        for &p in &self.block_probs {
            prob("block probability", p)?;
        }
        let total: f64 = self.block_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "block probabilities sum to {total}, not 1"
            )));
        }
        if self.feature_means.shape() != (self.feature_dim, self.num_blocks) {
            return Err(Error::Parameter(format!(
                "feature means must be {}x{}",
                self.feature_dim, self.num_blocks
            )));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::Parameter("feature noise must be nonnegative".into()));
        }
        Ok(())
    }

    /// Connection probability between blocks `a` and `b`.
    pub fn edge_prob(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.alpha
        } else {
            self.mu * self.alpha
        }
    }

    /// The `K x K` connectivity matrix.
    pub fn connectivity(&self) -> Matrix {
        let k = self.num_blocks;
        let mut b = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                b[(i, j)] = self.edge_prob(i, j);
            }
        }
        b
    }
}

/// Samples a graph. Deterministic given `seed`.
pub fn sbm_generate(params: &SbmParams, seed: u64) -> Result<Graph> {
    params.validate()?;
    let n = params.num_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = WeightedIndex::new(&params.block_probs)
        .map_err(|e| Error::Parameter(format!("block probabilities: {e}")))?;
    let labels: Vec<usize> = (0..n).map(|_| blocks.sample(&mut rng)).collect();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let p = params.edge_prob(labels[i], labels[j]);
            if p > 0.0 && rng.random::<f64>() < p {
                rows[i].push((j, 1.0));
                rows[j].push((i, 1.0));
            }
        }
    }
    let adjacency = CsrMatrix::from_rows(n, rows)?;

    let d = params.feature_dim;
    let mut features = Matrix::zeros(n, d);
    for (i, &y) in labels.iter().enumerate() {
        let row = features.row_mut(i);
        for (c, v) in row.iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            *v = params.feature_means[(c, y)] + params.feature_noise * noise;
        }
    }
    Graph::new(adjacency, features, labels, params.num_blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_edges_give_complete_graph() {
        let p = SbmParams::new(4, 2, 1.0, 1.0, 2, 0.0);
        let g = sbm_generate(&p, 3).unwrap();
        assert_eq!(g.num_edges(), 6);
    }

    #[test]
    fn zero_alpha_gives_no_edges() {
        let p = SbmParams::new(50, 3, 0.0, 0.5, 3, 1.0);
        assert_eq!(sbm_generate(&p, 1).unwrap().num_edges(), 0);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = SbmParams::new(60, 3, 0.2, 0.3, 4, 0.5);
        let a = sbm_generate(&p, 9).unwrap();
        assert_eq!(a.digest(), sbm_generate(&p, 9).unwrap().digest());
        assert_ne!(a.digest(), sbm_generate(&p, 10).unwrap().digest());
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let mut p = SbmParams::new(10, 2, 1.5, 0.1, 2, 0.0);
        assert!(matches!(sbm_generate(&p, 0), Err(Error::Parameter(_))));
        p.alpha = 0.1;
        p.block_probs = vec![0.7, 0.7];
        assert!(matches!(sbm_generate(&p, 0), Err(Error::Parameter(_))));
        p.block_probs = vec![0.5, 0.5];
        p.mu = -0.1;
        assert!(sbm_generate(&p, 0).is_err());
    }

    #[test]
    fn noiseless_features_equal_class_means() {
        let p = SbmParams::new(20, 3, 0.1, 0.1, 4, 0.0);
        let g = sbm_generate(&p, 2).unwrap();
        for i in 0..20 {
            let y = g.labels()[i];
            for c in 0..4 {
                assert_eq!(g.features()[(i, c)], if c == y { 1.0 } else { 0.0 });
            }
        }
    }
}
