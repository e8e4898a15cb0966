use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Topology;
use crate::error::{Error, Result};
use crate::graph::Partition;
use crate::secure::{Purpose, SecureChannel};
use crate::wire::{Record, HOP_FEATURES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Client to server: partial sums over locally held neighbors.
    Upload,
    /// Server to client: complete sums.
    Download,
}

/// Neighbor-feature message. Each record's payload is the feature sum
/// `sum_j (A + I)_ij x_j` followed by the degree `sum_j (A + I)_ij`, both
/// over the neighbors the sender accounts for.
#[derive(Clone, Debug, PartialEq)]
pub struct HopMessage {
    pub client: usize,
    pub direction: Direction,
    pub records: Vec<Record>,
}

impl HopMessage {
    /// Feature values carried, degrees excluded.
    pub fn feature_elements(&self, feature_dim: usize) -> usize {
        self.records.len() * feature_dim
    }
}

/// Options of the pre-training round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainOptions {
    /// Withhold a partial for a foreign node when this client holds exactly
    /// one of its neighbors, since the partial would reveal that neighbor's
    /// features.
    pub drop_single_neighbor: bool,
}

/// Partial sum and degree of node `i` over the neighbors held by `client`.
pub fn partial_sum(
    topo: &Topology,
    partition: &Partition,
    client: usize,
    i: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    topo.check_node(i)?;
    let mut sum = vec![0.0; topo.feature_dim()];
    let mut degree = 0.0;
    let mut count = 0;
    let (cols, vals) = topo.closed_neighbors(i);
    for (&j, &a) in cols.iter().zip(vals) {
        if partition.client_of(j) == client {
            for (s, x) in sum.iter_mut().zip(topo.features().row(j)) {
                *s += a * x;
            }
            degree += a;
            count += 1;
        }
    }
    Ok((sum, degree, count))
}

/// Nodes for which `client` holds at least one closed neighbor: its own
/// nodes plus their one-hop boundary.
pub fn contributing_nodes(topo: &Topology, partition: &Partition, client: usize) -> Vec<usize> {
    topo.neighborhood(&partition.clients[client].nodes, 1)
}

/// Builds the client's upload of partial neighbor sums.
pub fn pretrain_collect(
    topo: &Topology,
    partition: &Partition,
    client: usize,
    options: PretrainOptions,
) -> Result<HopMessage> {
    if client >= partition.num_clients() {
        return Err(Error::Protocol(format!("unknown client {client}")));
    }
    let mut records = Vec::new();
    for i in contributing_nodes(topo, partition, client) {
        let (mut payload, degree, count) = partial_sum(topo, partition, client, i)?;
        let foreign = partition.client_of(i) != client;
        if options.drop_single_neighbor && foreign && count == 1 {
            continue;
        }
        payload.push(degree);
        records.push(Record::new(i, HOP_FEATURES, payload)?);
    }
    Ok(HopMessage {
        client,
        direction: Direction::Upload,
        records,
    })
}

/// Per-node complete sums held by the server (payload layout as in
/// [`HopMessage`]).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ServerTotals {
    pub totals: BTreeMap<usize, Vec<f64>>,
}

impl ServerTotals {
    fn from_records(records: Vec<Record>) -> Self {
        Self {
            totals: records
                .into_iter()
                .map(|r| (r.node_id as usize, r.payload))
                .collect(),
        }
    }

    /// `(feature sum, degree)` of node `i`.
    pub fn get(&self, i: usize) -> Option<(&[f64], f64)> {
        self.totals.get(&i).map(|p| {
            let (sum, deg) = p.split_at(p.len() - 1);
            (sum, deg[0])
        })
    }
}

fn check_complete(messages: &[HopMessage], num_clients: usize) -> Result<()> {
    let mut seen = vec![false; num_clients];
    for m in messages {
        if m.client >= num_clients {
            return Err(Error::Protocol(format!("unknown client {}", m.client)));
        }
        if m.direction != Direction::Upload {
            return Err(Error::Protocol("server received a download message".into()));
        }
        if std::mem::replace(&mut seen[m.client], true) {
            return Err(Error::Protocol(format!(
                "client {} reported twice",
                m.client
            )));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::IncompleteRound(format!(
            "client {missing} did not report"
        )));
    }
    Ok(())
}

/// Plain elementwise sum of all partials per node.
pub fn pretrain_aggregate(messages: &[HopMessage], num_clients: usize) -> Result<ServerTotals> {
    check_complete(messages, num_clients)?;
    let mut ordered: Vec<&HopMessage> = messages.iter().collect();
    ordered.sort_by_key(|m| m.client);
    let mut totals: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for m in ordered {
        for r in &m.records {
            match totals.get_mut(&(r.node_id as usize)) {
                None => {
                    totals.insert(r.node_id as usize, r.payload.clone());
                }
                Some(acc) => {
                    if acc.len() != r.payload.len() {
                        return Err(Error::Protocol(format!(
                            "payload length mismatch for node {}",
                            r.node_id
                        )));
                    }
                    for (a, v) in acc.iter_mut().zip(&r.payload) {
                        *a += v;
                    }
                }
            }
        }
    }
    Ok(ServerTotals { totals })
}

/// Nodes whose complete sums client `client` receives for `hops`-hop
/// training: `N^{hops-1}(V_k)`; nothing for `hops == 0`.
pub fn requested_nodes(
    topo: &Topology,
    partition: &Partition,
    client: usize,
    hops: usize,
) -> Vec<usize> {
    if hops == 0 {
        return Vec::new();
    }
    topo.neighborhood(&partition.clients[client].nodes, hops - 1)
}

/// Server-side distribution of complete sums to every client.
pub fn pretrain_distribute(
    totals: &ServerTotals,
    topo: &Topology,
    partition: &Partition,
    hops: usize,
    num_layers: usize,
) -> Result<Vec<HopMessage>> {
    if hops > num_layers {
        return Err(Error::Config(format!(
            "{hops}-hop communication needs at least {hops} layers, model has {num_layers}"
        )));
    }
    (0..partition.num_clients())
        .map(|client| {
            let records = requested_nodes(topo, partition, client, hops)
                .into_iter()
                .map(|i| {
                    let payload = totals.totals.get(&i).ok_or_else(|| {
                        Error::Protocol(format!("no aggregate for requested node {i}"))
                    })?;
                    Record::new(i, HOP_FEATURES, payload.clone())
                })
                .collect::<Result<_>>()?;
            Ok(HopMessage {
                client,
                direction: Direction::Download,
                records,
            })
        })
        .collect()
}

/// Traffic of the pre-training round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainStats {
    pub upload_bytes: u64,
    pub download_bytes: u64,
    /// Feature values uploaded (degrees excluded).
    pub upload_elements: u64,
    pub download_elements: u64,
    pub upload_records: u64,
    pub download_records: u64,
}

impl PretrainStats {
    pub fn total_elements(&self) -> u64 {
        self.upload_elements + self.download_elements
    }

    pub fn total_bytes(&self) -> u64 {
        self.upload_bytes + self.download_bytes
    }
}

/// Result of the pre-training round: one inbox per client.
#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub inboxes: Vec<HopMessage>,
    pub stats: PretrainStats,
}

/// Runs collect, secure aggregation and distribution. With `hops == 0`
/// nothing is exchanged.
pub fn run_pretraining(
    topo: &Topology,
    partition: &Partition,
    hops: usize,
    num_layers: usize,
    channel: &dyn SecureChannel,
    options: PretrainOptions,
) -> Result<PretrainOutcome> {
    if hops > num_layers {
        return Err(Error::Config(format!(
            "{hops}-hop communication needs at least {hops} layers, model has {num_layers}"
        )));
    }
    let k = partition.num_clients();
    if hops == 0 {
        let inboxes = (0..k)
            .map(|client| HopMessage {
                client,
                direction: Direction::Download,
                records: Vec::new(),
            })
            .collect();
        return Ok(PretrainOutcome {
            inboxes,
            stats: PretrainStats::default(),
        });
    }
    let d = topo.feature_dim();
    let uploads = (0..k)
        .map(|c| pretrain_collect(topo, partition, c, options))
        .collect::<Result<Vec<_>>>()?;

    let mut participants: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for m in &uploads {
        for r in &m.records {
            participants
                .entry((r.node_id, r.hop))
                .or_default()
                .push(m.client);
        }
    }
    let session = channel.open_session(0, Purpose::NeighborFeatures, k, participants);
    let mut stats = PretrainStats::default();
    let sealed = uploads
        .iter()
        .map(|m| {
            let s = channel.encrypt(&session, m.client, &m.records)?;
            stats.upload_bytes += channel.wire_bytes(&session, &s);
            stats.upload_elements += m.feature_elements(d) as u64;
            stats.upload_records += m.records.len() as u64;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let totals =
        ServerTotals::from_records(channel.decrypt(&channel.aggregate(&session, &sealed)?)?);
    let inboxes = pretrain_distribute(&totals, topo, partition, hops, num_layers)?;
    for m in &inboxes {
        stats.download_bytes += channel.result_bytes(Purpose::NeighborFeatures, &m.records);
        stats.download_elements += m.feature_elements(d) as u64;
        stats.download_records += m.records.len() as u64;
    }
    Ok(PretrainOutcome { inboxes, stats })
}
