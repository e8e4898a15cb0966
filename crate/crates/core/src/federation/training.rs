use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_views, run_pretraining, ClientView, PretrainOptions, PretrainStats, Topology};
use crate::error::{Error, Result};
use crate::gcn::{
    gcn_backward, gcn_forward, sgd_step, xent_loss, ForwardMode, GcnWeights, Propagation,
    TrainConfig,
};
use crate::graph::{Graph, Partition, Split};
use crate::linalg::CsrMatrix;
use crate::secure::{Purpose, SecureChannel};
use crate::wire::{Record, HOP_MODEL};

const STREAM_INIT: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

/// Mixes `parts` into `base` (splitmix64 finalizer per part).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Seed of the dropout masks for one local step.
pub fn dropout_seed(seed: u64, round: usize, client: usize, step: usize) -> u64 {
    derive_seed(
        seed,
        &[STREAM_DROPOUT, round as u64, client as u64, step as u64],
    )
}

/// Initial model shared by all clients.
pub fn initial_weights(
    in_dim: usize,
    num_classes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<GcnWeights> {
    let dims = GcnWeights::dims(in_dim, cfg.hidden_dim, num_classes, cfg.num_layers);
    GcnWeights::glorot(&dims, derive_seed(seed, &[STREAM_INIT]))
}

/// Client weights in the server average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `1/K` per client.
    #[default]
    Uniform,
    /// Proportional to the client's node count.
    NodeCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub hops: usize,
    pub train: TrainConfig,
    pub weighting: Weighting,
    pub pretrain: PretrainOptions,
    pub seed: u64,
    /// Keep the global model after every round.
    pub record_weights: bool,
}

impl FedConfig {
    pub fn new(hops: usize, train: TrainConfig, seed: u64) -> Self {
        Self {
            hops,
            train,
            weighting: Weighting::Uniform,
            pretrain: PretrainOptions::default(),
            seed,
            record_weights: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.hops > self.train.num_layers {
            return Err(Error::Config(format!(
                "{} hops exceed the {} model layers",
                self.hops, self.train.num_layers
            )));
        }
        Ok(())
    }
}

/// One client's line in a round report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Local steps taken so far (`round * local_steps`).
    pub t: usize,
    pub client: usize,
    /// Training loss of the global model on the client's training nodes.
    pub loss: f64,
    /// Training accuracy of the global model on the client's nodes.
    pub acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub up_bytes: u64,
    pub down_bytes: u64,
}

pub const ROUNDS_CSV_HEADER: &str = "round,t,client,loss,acc,val_acc,test_acc,up_bytes,down_bytes";

impl RoundRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.round,
            self.t,
            self.client,
            self.loss,
            self.acc,
            self.val_acc,
            self.test_acc,
            self.up_bytes,
            self.down_bytes
        )
    }
}

/// Global metrics after one evaluated round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub round: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Correct predictions out of a mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: usize,
    pub total: usize,
}

impl Counts {
    pub fn accuracy(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::UndefinedMetric("accuracy over an empty mask".into()));
        }
        Ok(self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, o: Counts) {
        self.correct += o.correct;
        self.total += o.total;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientEval {
    /// `None` when the client has no training nodes.
    pub train_loss: Option<f64>,
    pub train: Counts,
    pub val: Counts,
    pub test: Counts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub clients: Vec<ClientEval>,
    pub train: Counts,
    pub val: Counts,
    pub test: Counts,
}

impl Evaluation {
    /// Training loss averaged over all training nodes.
    pub fn train_loss(&self, l2_term: f64) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for c in &self.clients {
            if let Some(l) = c.train_loss {
                sum += (l - l2_term) * c.train.total as f64;
                n += c.train.total;
            }
        }
        sum / n as f64 + l2_term
    }
}

fn count(pred: &[usize], labels: &[usize], mask: &[usize]) -> Counts {
    Counts {
        correct: mask.iter().filter(|&&i| pred[i] == labels[i]).count(),
        total: mask.len(),
    }
}

/// Accuracy of `w` on every client; global counts are summed over clients.
pub fn evaluate(w: &GcnWeights, views: &[ClientView], l2: f64) -> Result<Evaluation> {
    let clients = views
        .par_iter()
        .map(|v| {
            let cache = gcn_forward(&v.props, &v.features, w, ForwardMode::Eval)?;
            let pred = cache.predictions();
            let train_loss = if v.train.is_empty() {
                None
            } else {
                Some(xent_loss(&cache, &v.labels, &v.train, w, l2)?)
            };
            Ok(ClientEval {
                train_loss,
                train: count(&pred, &v.labels, &v.train),
                val: count(&pred, &v.labels, &v.val),
                test: count(&pred, &v.labels, &v.test),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Evaluation {
        clients,
        train: Counts::default(),
        val: Counts::default(),
        test: Counts::default(),
    };
    for c in out.clients.clone() {
        out.train.add(c.train);
        out.val.add(c.val);
        out.test.add(c.test);
    }
    Ok(out)
}

/// First evaluation where accuracy moved by at most 0.01.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceTime {
    /// 1-based position in the evaluation sequence.
    pub eval_index: usize,
    /// Training round of that evaluation.
    pub round: usize,
    /// False when no evaluation met the criterion; the index is then the
    /// last one.
    pub converged: bool,
}

pub const CONVERGENCE_TOLERANCE: f64 = 0.01;

/// First 1-based index `i >= 2` with `|acc_i - acc_{i-1}| <= 0.01`.
/// Differences within 1e-12 of the tolerance count as meeting it, since
/// accuracies are ratios of counts.
pub fn convergence_time(accs: &[f64], eval_every: usize) -> Result<ConvergenceTime> {
    if accs.is_empty() {
        return Err(Error::UndefinedMetric("empty accuracy sequence".into()));
    }
    let hit =
        (1..accs.len()).find(|&i| (accs[i] - accs[i - 1]).abs() <= CONVERGENCE_TOLERANCE + 1e-12);
    let (eval_index, converged) = match hit {
        Some(i) => (i + 1, true),
        None => (accs.len(), false),
    };
    Ok(ConvergenceTime {
        eval_index,
        round: eval_index * eval_every.max(1),
        converged,
    })
}

/// Byte counters. Pre-training counters are frozen once training starts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ByteLedger {
    pub pretrain: PretrainStats,
    pub training_up_bytes: u64,
    pub training_down_bytes: u64,
    /// Bytes per client per round during training.
    pub per_round_up_bytes: u64,
    pub per_round_down_bytes: u64,
    frozen: bool,
}

impl ByteLedger {
    pub fn record_pretrain(&mut self, stats: PretrainStats) -> Result<()> {
        if self.frozen {
            return Err(Error::Protocol(
                "graph data sent after training started".into(),
            ));
        }
        self.pretrain = stats;
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn record_round(&mut self, up: u64, down: u64, first: bool) -> Result<()> {
        if first {
            self.per_round_up_bytes = up;
            self.per_round_down_bytes = down;
        } else if up != self.per_round_up_bytes || down != self.per_round_down_bytes {
            return Err(Error::Protocol(format!(
                "round traffic changed from {}/{} to {up}/{down} bytes",
                self.per_round_up_bytes, self.per_round_down_bytes
            )));
        }
        self.training_up_bytes += up;
        self.training_down_bytes += down;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub records: Vec<RoundRecord>,
    pub evals: Vec<EvalPoint>,
    pub weights: GcnWeights,
    /// Global model after each round, when requested.
    pub trajectory: Vec<GcnWeights>,
    pub ledger: ByteLedger,
    pub wall_seconds: f64,
}

impl TrainingOutcome {
    pub fn final_eval(&self) -> Option<&EvalPoint> {
        self.evals.last()
    }

    pub fn val_accuracies(&self) -> Vec<f64> {
        self.evals.iter().map(|e| e.val_acc).collect()
    }
}

fn local_update(
    view: &ClientView,
    global: &GcnWeights,
    cfg: &FedConfig,
    round: usize,
) -> Result<GcnWeights> {
    let tc = &cfg.train;
    let mut w = global.clone();
    if view.train.is_empty() {
        return Ok(w);
    }
    for step in 0..tc.local_steps {
        let mode = if tc.dropout > 0.0 {
            ForwardMode::Train {
                dropout: tc.dropout,
                seed: dropout_seed(cfg.seed, round, view.client, step),
            }
        } else {
            ForwardMode::Eval
        };
        let cache = gcn_forward(&view.props, &view.features, &w, mode)?;
        let loss = xent_loss(&cache, &view.labels, &view.train, &w, tc.l2)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                round,
                message: format!("client {} step {step}: loss {loss}", view.client),
            });
        }
        let grads = gcn_backward(
            &cache,
            &view.props,
            &view.features,
            &view.labels,
            &view.train,
            &w,
            tc.l2,
        )?;
        w = sgd_step(&w, &grads, tc.lr)?;
    }
    Ok(w)
}

fn model_records(w: &GcnWeights, factor: f64) -> Result<Vec<Record>> {
    w.layers()
        .iter()
        .enumerate()
        .map(|(l, m)| {
            Record::new(
                l,
                HOP_MODEL,
                m.as_slice().iter().map(|v| factor * v).collect(),
            )
        })
        .collect()
}

fn client_factors(views: &[ClientView], weighting: Weighting) -> Vec<f64> {
    let k = views.len() as f64;
    match weighting {
        Weighting::Uniform => vec![1.0 / k; views.len()],
        Weighting::NodeCount => {
            let total: usize = views.iter().map(ClientView::num_nodes).sum();
            views
                .iter()
                .map(|v| v.num_nodes() as f64 / total as f64)
                .collect()
        }
    }
}

/// FedAvg over prepared client views: each round every client takes
/// `local_steps` SGD steps from the global model, the server forms the
/// weighted model average through `channel` and moves the global model
/// toward it by `global_lr`.
pub fn run_training(
    views: &[ClientView],
    init: GcnWeights,
    cfg: &FedConfig,
    channel: &dyn SecureChannel,
    mut ledger: ByteLedger,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    ledger.freeze();
    let start = Instant::now();
    let tc = &cfg.train;
    let k = views.len();
    if k == 0 {
        return Err(Error::Parameter("no clients".into()));
    }
    let factors = client_factors(views, cfg.weighting);
    let shapes = init.shapes();
    let all: Vec<usize> = (0..k).collect();
    let slots: BTreeMap<(u32, u32), Vec<usize>> = (0..shapes.len())
        .map(|l| ((l as u32, HOP_MODEL), all.clone()))
        .collect();

    let mut global = init;
    let mut records = Vec::new();
    let mut evals = Vec::new();
    let mut trajectory = Vec::new();
    for round in 1..=tc.rounds {
        let locals = views
            .par_iter()
            .map(|v| local_update(v, &global, cfg, round))
            .collect::<Result<Vec<_>>>()?;

        let session = channel.open_session(round as u64, Purpose::Model, k, slots.clone());
        let broadcast = channel.result_bytes(Purpose::Model, &model_records(&global, 1.0)?);
        let mut up = Vec::with_capacity(k);
        let sealed = locals
            .iter()
            .enumerate()
            .map(|(c, w)| {
                let s = channel.encrypt(&session, c, &model_records(w, factors[c])?)?;
                up.push(channel.wire_bytes(&session, &s));
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        let summed = channel.decrypt(&channel.aggregate(&session, &sealed)?)?;
        let flat: Vec<f64> = summed.into_iter().flat_map(|r| r.payload).collect();
        let average = GcnWeights::from_flat(&shapes, &flat)?;
        global = if tc.global_lr == 1.0 {
            average
        } else {
            let mut g = global.clone();
            for (gl, al) in g.layers_mut().iter_mut().zip(average.layers()) {
                let delta = al.sub(gl)?;
                gl.add_scaled(tc.global_lr, &delta)?;
            }
            g
        };
        if !global.is_finite() {
            return Err(Error::Diverged {
                round,
                message: "global model has non-finite entries".into(),
            });
        }
        for (c, &u) in up.iter().enumerate() {
            ledger.record_round(u, broadcast, round == 1 && c == 0)?;
        }
        if cfg.record_weights {
            trajectory.push(global.clone());
        }

        if round % tc.eval_every == 0 || round == tc.rounds {
            let ev = evaluate(&global, views, tc.l2)?;
            let val_acc = ev.val.accuracy()?;
            let test_acc = ev.test.accuracy()?;
            let l2_term = 0.5 * tc.l2 * global.norm_sq();
            for (c, ce) in ev.clients.iter().enumerate() {
                records.push(RoundRecord {
                    round,
                    t: round * tc.local_steps,
                    client: c,
                    loss: ce.train_loss.unwrap_or(f64::NAN),
                    acc: ce.train.accuracy().unwrap_or(f64::NAN),
                    val_acc,
                    test_acc,
                    up_bytes: up[c],
                    down_bytes: broadcast,
                });
            }
            evals.push(EvalPoint {
                round,
                train_loss: ev.train_loss(l2_term),
                train_acc: ev.train.accuracy()?,
                val_acc,
                test_acc,
            });
        }
    }
    Ok(TrainingOutcome {
        records,
        evals,
        weights: global,
        trajectory,
        ledger,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Pre-training round followed by [`run_training`].
pub fn run_federated(
    graph: &Graph,
    partition: &Partition,
    split: &Split,
    cfg: &FedConfig,
    channel: &dyn SecureChannel,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let topo = Topology::new(graph);
    let pre = run_pretraining(
        &topo,
        partition,
        cfg.hops,
        cfg.train.num_layers,
        channel,
        cfg.pretrain,
    )?;
    let mut ledger = ByteLedger::default();
    ledger.record_pretrain(pre.stats)?;
    let views = build_views(
        &topo,
        partition,
        graph.labels(),
        split,
        cfg.hops,
        cfg.train.num_layers,
        &pre.inboxes,
    )?;
    let init = initial_weights(
        graph.feature_dim(),
        graph.num_classes(),
        &cfg.train,
        cfg.seed,
    )?;
    run_training(&views, init, cfg, channel, ledger)
}

/// Full-batch training on the whole graph with the same seeds and update
/// rule as a single federated client with `hops >= 1`. Returns the model
/// after each round.
pub fn train_centralized(
    graph: &Graph,
    split: &Split,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<GcnWeights>> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::DegenerateInput("no training nodes".into()));
    }
    // First layer on precomputed `D^-1 (A + I) X`, in the same order of
    // operations a client uses for received neighbor sums.
    let topo = Topology::new(graph);
    let inv_deg: Vec<f64> = topo.degrees().iter().map(|d| 1.0 / d).collect();
    let mut s = topo.looped().spmm(topo.features())?;
    for (i, &deg) in topo.degrees().iter().enumerate() {
        for v in s.row_mut(i) {
            *v /= deg;
        }
    }
    let x = CsrMatrix::from_dense(&s);
    let adj = topo.looped().scale_rows(&inv_deg)?;
    let mut props = vec![Propagation::Identity(graph.num_nodes())];
    props.extend((1..cfg.num_layers).map(|_| Propagation::Sparse(adj.clone())));
    let mut train = split.train.clone();
    train.sort_unstable();
    let mut w = initial_weights(graph.feature_dim(), graph.num_classes(), cfg, seed)?;
    let mut out = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        for step in 0..cfg.local_steps {
            let mode = if cfg.dropout > 0.0 {
                ForwardMode::Train {
                    dropout: cfg.dropout,
                    seed: dropout_seed(seed, round, 0, step),
                }
            } else {
                ForwardMode::Eval
            };
            let cache = gcn_forward(&props, &x, &w, mode)?;
            let loss = xent_loss(&cache, graph.labels(), &train, &w, cfg.l2)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    round,
                    message: format!("step {step}: loss {loss}"),
                });
            }
            let grads = gcn_backward(&cache, &props, &x, graph.labels(), &train, &w, cfg.l2)?;
            w = sgd_step(&w, &grads, cfg.lr)?;
        }
        out.push(w.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_time_examples() {
        let c = convergence_time(&[0.3, 0.3, 0.3], 1).unwrap();
        assert_eq!((c.eval_index, c.converged), (2, true));
        let c = convergence_time(&[0.10, 0.50, 0.505, 0.60], 1).unwrap();
        assert_eq!(c.eval_index, 3);
        let c = convergence_time(&[0.1, 0.3, 0.5], 5).unwrap();
        assert_eq!((c.eval_index, c.round, c.converged), (3, 15, false));
        assert!(convergence_time(&[], 1).is_err());
    }

    #[test]
    fn empty_mask_accuracy_is_undefined() {
        assert!(matches!(
            Counts::default().accuracy(),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn seeds_differ_by_component() {
        let a = dropout_seed(1, 2, 3, 0);
        assert_ne!(a, dropout_seed(1, 2, 3, 1));
        assert_ne!(a, dropout_seed(1, 3, 2, 0));
        assert_eq!(a, dropout_seed(1, 2, 3, 0));
    }
}
