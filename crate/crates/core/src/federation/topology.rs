use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{CsrMatrix, Matrix};

/// Global structure derived once from a graph: `A + I`, its row sums and
/// the node features.
#[derive(Clone, Debug)]
pub struct Topology {
    looped: CsrMatrix,
    degrees: Vec<f64>,
    features: Matrix,
}

impl Topology {
    pub fn new(graph: &Graph) -> Self {
        let looped = graph.add_self_loops().adjacency().clone();
        let degrees = looped.row_sums();
        Self {
            looped,
            degrees,
            features: graph.features().clone(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.looped.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// `A + I`.
    pub fn looped(&self) -> &CsrMatrix {
        &self.looped
    }

    /// Row sums of `A + I`.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Neighbors of `i` in `A + I` (so `i` itself is included).
    pub fn closed_neighbors(&self, i: usize) -> (&[usize], &[f64]) {
        self.looped.row(i)
    }

    pub fn check_node(&self, i: usize) -> Result<()> {
        if i < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::Protocol(format!(
                "unknown node id {i} (graph has {} nodes)",
                self.num_nodes()
            )))
        }
    }

    /// Nodes within `radius` hops of `seeds`, ascending.
    pub fn neighborhood(&self, seeds: &[usize], radius: usize) -> Vec<usize> {
        let mut inside = vec![false; self.num_nodes()];
        let mut frontier: Vec<usize> = Vec::new();
        for &s in seeds {
            if !inside[s] {
                inside[s] = true;
                frontier.push(s);
            }
        }
        for _ in 0..radius {
            let mut next = Vec::new();
            for &i in &frontier {
                for &j in self.closed_neighbors(i).0 {
                    if !inside[j] {
                        inside[j] = true;
                        next.push(j);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        (0..self.num_nodes()).filter(|&i| inside[i]).collect()
    }

    /// `A + I` restricted to `nodes x nodes`, each row divided by its
    /// restricted sum.
    pub fn local_normalized(&self, nodes: &[usize]) -> Result<CsrMatrix> {
        let sub = self.looped.submatrix(nodes, nodes)?;
        let factors: Vec<f64> = sub.row_sums().iter().map(|s| 1.0 / s).collect();
        sub.scale_rows(&factors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighborhoods_grow_by_hops() {
        let edges: Vec<_> = (1..6).map(|i| (i - 1, i)).collect();
        let g = Graph::from_edges(6, &edges, Matrix::zeros(6, 1), vec![0; 6], 1).unwrap();
        let t = Topology::new(&g);
        assert_eq!(t.neighborhood(&[2], 0), vec![2]);
        assert_eq!(t.neighborhood(&[2], 1), vec![1, 2, 3]);
        assert_eq!(t.neighborhood(&[2], 2), vec![0, 1, 2, 3, 4]);
        assert_eq!(t.degrees()[0], 2.0);
        assert_eq!(t.degrees()[2], 3.0);
    }
}
