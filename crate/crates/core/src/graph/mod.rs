//! Graph representation, synthetic generation, dataset ingestion and
//! client partitioning.

mod dataset;
mod partition;
mod sbm;

pub use dataset::{load_dataset, write_dataset, Dataset, DatasetStats, Manifest, Split};
pub use partition::{partition_nodes, ClientPart, Partition};
pub use sbm::{sbm_generate, SbmParams};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

/// Undirected weighted graph with node features and integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: CsrMatrix,
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    /// Validates symmetry, label range and dimensions.
    pub fn new(
        adjacency: CsrMatrix,
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::Shape("adjacency must be square".into()));
        }
        if features.rows() != n || labels.len() != n {
            return Err(Error::Shape(format!(
                "{n} nodes but {} feature rows and {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Parameter(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        for i in 0..n {
            let (cols, vals) = adjacency.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if adjacency.get(j, i) != v {
                    return Err(Error::Parameter(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            num_classes,
        })
    }

    /// Unit-weight undirected graph from an edge list. Self-loops and
    /// repeated edges are rejected.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::Parameter(format!(
                    "edge ({a}, {b}) references a node outside [0, {num_nodes})"
                )));
            }
            if a == b {
                return Err(Error::Parameter(format!("self-loop on node {a}")));
            }
            rows[a].push((b, 1.0));
            rows[b].push((a, 1.0));
        }
        let adjacency = CsrMatrix::from_rows(num_nodes, rows)
            .map_err(|_| Error::Parameter("duplicate edge in edge list".into()))?;
        Self::new(adjacency, features, labels, num_classes)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i).0
    }

    /// Number of undirected edges, self-loops excluded.
    pub fn num_edges(&self) -> usize {
        let loops = (0..self.num_nodes())
            .filter(|&i| self.neighbors(i).binary_search(&i).is_ok())
            .count();
        (self.adjacency.nnz() - loops) / 2
    }

    /// Unordered non-loop edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for i in 0..self.num_nodes() {
            for &j in self.neighbors(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.num_nodes()).all(|i| self.neighbors(i).binary_search(&i).is_ok())
    }

    /// `A + I`, touching only nodes that lack a self-loop, so every node ends
    /// up with exactly one diagonal entry.
    pub fn add_self_loops(&self) -> Graph {
        let rows = (0..self.num_nodes())
            .map(|i| {
                let (cols, vals) = self.adjacency.row(i);
                let mut row: Vec<(usize, f64)> =
                    cols.iter().copied().zip(vals.iter().copied()).collect();
                if cols.binary_search(&i).is_err() {
                    row.push((i, 1.0));
                }
                row
            })
            .collect();
        let adjacency = CsrMatrix::from_rows(self.num_nodes(), rows)
            .expect("adding missing diagonal entries keeps rows valid");
        Graph {
            adjacency,
            ..self.clone()
        }
    }

    /// `D^{-1} A`. Rows that already sum to one (up to rounding) are kept
    /// verbatim, which makes the operation idempotent.
    pub fn row_normalize(&self) -> Result<Graph> {
        let sums = self.adjacency.row_sums();
        let mut factors = Vec::with_capacity(sums.len());
        for (i, &s) in sums.iter().enumerate() {
            if s == 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "node {i} has zero degree; add self-loops before normalizing"
                )));
            }
            let len = self.neighbors(i).len() as f64;
            factors.push(if (s - 1.0).abs() <= 4.0 * len * f64::EPSILON {
                1.0
            } else {
                1.0 / s
            });
        }
        let mut adjacency = self.adjacency.clone();
        if factors.iter().any(|&f| f != 1.0) {
            adjacency = normalize_rows(&self.adjacency, &sums, &factors);
        }
        Ok(Graph {
            adjacency,
            ..self.clone()
        })
    }

    /// Divides each feature row by its sum; all-zero rows stay zero.
    pub fn normalize_features(&self) -> Graph {
        let mut features = self.features.clone();
        for i in 0..features.rows() {
            let row = features.row_mut(i);
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        Graph {
            features,
            ..self.clone()
        }
    }

    /// Hex SHA-256 over the order-normalized CSR, features and labels.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in [self.num_nodes(), self.feature_dim(), self.num_classes] {
            h.update((v as u64).to_le_bytes());
        }
        for &o in self.adjacency.row_offsets() {
            h.update((o as u64).to_le_bytes());
        }
        for &c in self.adjacency.col_indices() {
            h.update((c as u64).to_le_bytes());
        }
        for v in self.adjacency.values() {
            h.update(v.to_bits().to_le_bytes());
        }
        for v in self.features.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        for &y in &self.labels {
            h.update((y as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn normalize_rows(a: &CsrMatrix, sums: &[f64], factors: &[f64]) -> CsrMatrix {
    let rows = (0..a.nrows())
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter()
                .zip(vals)
                .map(|(&c, &v)| (c, if factors[i] == 1.0 { v } else { v / sums[i] }))
                .collect()
        })
        .collect();
    CsrMatrix::from_rows(a.ncols(), rows).expect("structure unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges, Matrix::zeros(n, 1), vec![0; n], 1).unwrap()
    }

    #[test]
    fn single_node_self_loop_normalizes_to_one() {
        let g = Graph::from_edges(1, &[], Matrix::zeros(1, 1), vec![0], 1).unwrap();
        let g = g.add_self_loops().row_normalize().unwrap();
        assert_eq!(g.adjacency().to_dense(), Matrix::identity(1));
    }

    #[test]
    fn two_node_path_rows_are_halves() {
        let g = path(2).add_self_loops().row_normalize().unwrap();
        assert_eq!(
            g.adjacency().to_dense(),
            Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
        );
    }

    #[test]
    fn zero_degree_row_is_degenerate() {
        let g = path(3);
        let isolated = Graph::from_edges(3, &[(0, 1)], Matrix::zeros(3, 1), vec![0; 3], 1).unwrap();
        assert!(g.row_normalize().is_ok());
        assert!(matches!(
            isolated.row_normalize(),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn self_loops_added_once() {
        let g = path(4).add_self_loops();
        assert!(g.has_self_loops());
        let again = g.add_self_loops();
        assert_eq!(g, again);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn rejects_asymmetric_and_bad_labels() {
        let a = CsrMatrix::from_rows(2, vec![vec![(1, 1.0)], vec![]]).unwrap();
        assert!(Graph::new(a, Matrix::zeros(2, 1), vec![0, 0], 1).is_err());
        assert!(Graph::from_edges(2, &[(0, 1)], Matrix::zeros(2, 1), vec![0, 3], 2).is_err());
        assert!(
            Graph::from_edges(2, &[(0, 1), (1, 0)], Matrix::zeros(2, 1), vec![0, 0], 1).is_err()
        );
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = path(5);
        assert_eq!(a.digest(), path(5).digest());
        assert_ne!(a.digest(), path(6).digest());
        assert_eq!(a.digest().len(), 64);
    }
}
