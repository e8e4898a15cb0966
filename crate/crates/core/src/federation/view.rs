use std::collections::HashMap;

use super::{HopMessage, Topology};
use crate::error::{Error, Result};
use crate::gcn::Propagation;
use crate::graph::{Partition, Split};
use crate::linalg::CsrMatrix;

/// Everything a client trains on: per-layer propagation operators, the
/// first-layer input rows and the labels and masks of its own nodes.
#[derive(Clone, Debug)]
pub struct ClientView {
    pub client: usize,
    /// Output rows (the client's own nodes), global ids ascending.
    pub nodes: Vec<usize>,
    /// Global ids of the first-layer input rows.
    pub input_nodes: Vec<usize>,
    /// First-layer input features, one row per entry of `input_nodes`.
    pub features: CsrMatrix,
    pub props: Vec<Propagation>,
    /// Label per output row.
    pub labels: Vec<usize>,
    /// Local row indices into `nodes`.
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn local_mask(nodes: &[usize], ids: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = ids
        .iter()
        .filter_map(|i| nodes.binary_search(i).ok())
        .collect();
    out.sort_unstable();
    out
}

fn dense_rows_to_csr(rows: Vec<Vec<f64>>, ncols: usize) -> Result<CsrMatrix> {
    let sparse = rows
        .into_iter()
        .map(|r| {
            r.into_iter()
                .enumerate()
                .filter(|(_, v)| *v != 0.0)
                .collect()
        })
        .collect();
    CsrMatrix::from_rows(ncols, sparse)
}

impl ClientView {
    /// Builds the view of `client` for `hops`-hop training of a
    /// `num_layers`-layer model.
    ///
    /// With `h = hops >= 1`, let `O_l = N^{h-l}(V_k)` for `l < h` and
    /// `O_l = V_k` otherwise. Layer 1 passes the received normalized sums
    /// on `O_1` through unchanged, layers `2..=h` use exact normalized rows
    /// `A[O_l, O_{l-1}]` with received global degrees, and the remaining
    /// layers use the local adjacency. With `h = 0` every layer uses the
    /// local adjacency and the raw local features.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        topo: &Topology,
        partition: &Partition,
        labels: &[usize],
        split: &Split,
        client: usize,
        hops: usize,
        num_layers: usize,
        inbox: &HopMessage,
    ) -> Result<Self> {
        if hops > num_layers {
            return Err(Error::Config(format!(
                "{hops}-hop communication needs at least {hops} layers, model has {num_layers}"
            )));
        }
        if inbox.client != client {
            return Err(Error::Protocol(format!(
                "client {client} given the inbox of client {}",
                inbox.client
            )));
        }
        let nodes = partition.clients[client].nodes.clone();
        let d = topo.feature_dim();
        let local =
            || -> Result<Propagation> { Ok(Propagation::Sparse(topo.local_normalized(&nodes)?)) };

        let (input_nodes, features, props) = if hops == 0 {
            let rows = nodes
                .iter()
                .map(|&i| topo.features().row(i).to_vec())
                .collect();
            let features = dense_rows_to_csr(rows, d)?;
            let props = (0..num_layers).map(|_| local()).collect::<Result<_>>()?;
            (nodes.clone(), features, props)
        } else {
            let received: HashMap<usize, (&[f64], f64)> = inbox
                .records
                .iter()
                .map(|r| {
                    let (sum, deg) = r.payload.split_at(r.payload.len() - 1);
                    (r.node_id as usize, (sum, deg[0]))
                })
                .collect();
            let levels: Vec<Vec<usize>> = (1..=hops)
                .map(|l| topo.neighborhood(&nodes, hops - l))
                .collect();
            let first = &levels[0];
            let mut rows = Vec::with_capacity(first.len());
            for &i in first {
                let (sum, deg) = received.get(&i).ok_or_else(|| {
                    Error::Protocol(format!("client {client} did not receive node {i}"))
                })?;
                if *deg <= 0.0 {
                    return Err(Error::DegenerateInput(format!("node {i} has degree {deg}")));
                }
                if sum.len() != d {
                    return Err(Error::Protocol(format!(
                        "node {i}: payload of length {}",
                        sum.len()
                    )));
                }
                rows.push(sum.iter().map(|s| s / deg).collect());
            }
            let features = dense_rows_to_csr(rows, d)?;
            let mut props = vec![Propagation::Identity(first.len())];
            for l in 1..hops {
                let (out_rows, in_rows) = (&levels[l], &levels[l - 1]);
                let sub = topo.looped().submatrix(out_rows, in_rows)?;
                let factors = out_rows
                    .iter()
                    .map(|i| {
                        received.get(i).map(|(_, deg)| 1.0 / deg).ok_or_else(|| {
                            Error::Protocol(format!("client {client} has no degree for node {i}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                props.push(Propagation::Sparse(sub.scale_rows(&factors)?));
            }
            for _ in hops..num_layers {
                props.push(local()?);
            }
            (first.clone(), features, props)
        };

        Ok(Self {
            client,
            labels: nodes.iter().map(|&i| labels[i]).collect(),
            train: local_mask(&nodes, &split.train),
            val: local_mask(&nodes, &split.val),
            test: local_mask(&nodes, &split.test),
            nodes,
            input_nodes,
            features,
            props,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Views of all clients.
pub fn build_views(
    topo: &Topology,
    partition: &Partition,
    labels: &[usize],
    split: &Split,
    hops: usize,
    num_layers: usize,
    inboxes: &[HopMessage],
) -> Result<Vec<ClientView>> {
    if inboxes.len() != partition.num_clients() {
        return Err(Error::IncompleteRound(format!(
            "{} inboxes for {} clients",
            inboxes.len(),
            partition.num_clients()
        )));
    }
    (0..partition.num_clients())
        .map(|c| {
            ClientView::build(
                topo,
                partition,
                labels,
                split,
                c,
                hops,
                num_layers,
                &inboxes[c],
            )
        })
        .collect()
}
