use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

/// Nodes and edges held by one client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientPart {
    /// Global ids of the client's nodes, ascending.
    pub nodes: Vec<usize>,
    /// Edges with both endpoints on this client, `(i, j)` with `i < j`.
    pub internal_edges: Vec<(usize, usize)>,
    /// Edges with exactly one endpoint on this client, `(local, remote)`.
    pub cross_edges: Vec<(usize, usize)>,
}

/// Disjoint assignment of nodes to `K` clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub clients: Vec<ClientPart>,
    pub iid_fraction: f64,
}

impl Partition {
    /// Builds the per-client node and edge sets from a node->client map.
    pub fn from_assignment(
        graph: &Graph,
        assignment: Vec<usize>,
        num_clients: usize,
        iid_fraction: f64,
    ) -> Result<Self> {
        if num_clients == 0 {
            return Err(Error::Parameter(
                "number of clients must be positive".into(),
            ));
        }
        if assignment.len() != graph.num_nodes() {
            return Err(Error::Shape(format!(
                "assignment covers {} of {} nodes",
                assignment.len(),
                graph.num_nodes()
            )));
        }
        if let Some(&c) = assignment.iter().find(|&&c| c >= num_clients) {
            return Err(Error::Parameter(format!(
                "client {c} outside [0, {num_clients})"
            )));
        }
        let mut clients = vec![
            ClientPart {
                nodes: Vec::new(),
                internal_edges: Vec::new(),
                cross_edges: Vec::new(),
            };
            num_clients
        ];
        for (i, &c) in assignment.iter().enumerate() {
            clients[c].nodes.push(i);
        }
        for (i, j) in graph.edges() {
            let (ci, cj) = (assignment[i], assignment[j]);
            if ci == cj {
                clients[ci].internal_edges.push((i, j));
            } else {
                clients[ci].cross_edges.push((i, j));
                clients[cj].cross_edges.push((j, i));
            }
        }
        Ok(Self {
            assignment,
            clients,
            iid_fraction,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    /// Number of distinct cross-client edges.
    pub fn num_cross_edges(&self) -> usize {
        self.clients
            .iter()
            .map(|c| c.cross_edges.len())
            .sum::<usize>()
            / 2
    }

    /// Fraction of each client's nodes whose label maps to that client.
    pub fn home_class_fraction(&self, graph: &Graph) -> Vec<f64> {
        let k = self.num_clients();
        self.clients
            .iter()
            .enumerate()
            .map(|(c, part)| {
                if part.nodes.is_empty() {
                    return 0.0;
                }
                let home = part
                    .nodes
                    .iter()
                    .filter(|&&i| graph.labels()[i] % k == c)
                    .count();
                home as f64 / part.nodes.len() as f64
            })
            .collect()
    }
}

/// With probability `iid_fraction` a node goes to a uniformly random client,
/// otherwise to client `label mod K`.
pub fn partition_nodes(
    graph: &Graph,
    num_clients: usize,
    iid_fraction: f64,
    seed: u64,
) -> Result<Partition> {
    if num_clients == 0 {
        return Err(Error::Parameter(
            "number of clients must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&iid_fraction) {
        return Err(Error::Parameter(format!(
            "iid fraction {iid_fraction} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = graph
        .labels()
        .iter()
        .map(|&y| {
            if rng.random::<f64>() < iid_fraction {
                rng.random_range(0..num_clients)
            } else {
                y % num_clients
            }
        })
        .collect();
    Partition::from_assignment(graph, assignment, num_clients, iid_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sbm_generate, SbmParams};

    fn graph() -> Graph {
        sbm_generate(&SbmParams::new(120, 4, 0.15, 0.2, 4, 0.1), 5).unwrap()
    }

    #[test]
    fn single_client_holds_everything() {
        let g = graph();
        for p in [0.0, 0.4, 1.0] {
            let part = partition_nodes(&g, 1, p, 3).unwrap();
            assert_eq!(part.clients[0].nodes.len(), g.num_nodes());
            assert!(part.clients[0].cross_edges.is_empty());
            assert_eq!(part.clients[0].internal_edges.len(), g.num_edges());
        }
    }

    #[test]
    fn non_iid_clients_are_label_pure() {
        let g = graph();
        let part = partition_nodes(&g, 4, 0.0, 1).unwrap();
        for (c, client) in part.clients.iter().enumerate() {
            assert!(client.nodes.iter().all(|&i| g.labels()[i] == c));
        }
    }

    #[test]
    fn edges_are_conserved() {
        let g = graph();
        let part = partition_nodes(&g, 3, 0.6, 8).unwrap();
        let internal: usize = part.clients.iter().map(|c| c.internal_edges.len()).sum();
        let cross: usize = part.clients.iter().map(|c| c.cross_edges.len()).sum();
        assert_eq!(g.num_edges(), internal + cross / 2);
        let covered: usize = part.clients.iter().map(|c| c.nodes.len()).sum();
        assert_eq!(covered, g.num_nodes());
    }

    #[test]
    fn parameter_errors() {
        let g = graph();
        assert!(matches!(
            partition_nodes(&g, 0, 0.5, 0),
            Err(Error::Parameter(_))
        ));
        assert!(partition_nodes(&g, 2, 1.5, 0).is_err());
    }
}
