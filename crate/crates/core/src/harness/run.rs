use std::borrow::Cow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use crate::analysis::{
    comm_cost_closed_form, gradient_gap_generic, measured_comm_elements, sbm_bound_report, GapForm,
    SbmSetting, SigmaForm,
};
use crate::error::{Error, Result};
use crate::federation::{
    convergence_time, derive_seed, run_federated, run_pretraining, ConvergenceTime, FedConfig,
    PretrainStats, Topology, TrainingOutcome,
};
use crate::graph::{load_dataset, partition_nodes, sbm_generate, Graph, Partition, Split};
use crate::secure::{build_channel, SecureChannel};

const STREAM_GRAPH: u64 = 10;
const STREAM_SPLIT: u64 = 11;
const STREAM_PARTITION: u64 = 12;
const STREAM_CHANNEL: u64 = 13;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Graph source opened once; dataset graphs are shared by every seed.
pub struct Source {
    data: DataSource,
    fixed: Option<(Graph, Split)>,
}

impl Source {
    pub fn open(data: &DataSource) -> Result<Self> {
        let fixed = match data {
            DataSource::Sbm { .. } => None,
            DataSource::Dataset {
                path,
                normalize_features,
            } => {
                let ds = load_dataset(path)?;
                let split = ds.split.ok_or_else(|| {
                    Error::Config(format!("{} has no split.json", path.display()))
                })?;
                let graph = if *normalize_features {
                    ds.graph.normalize_features()
                } else {
                    ds.graph
                };
                Some((graph, split))
            }
        };
        Ok(Self {
            data: data.clone(),
            fixed,
        })
    }

    pub fn for_seed(&self, seed: u64) -> Result<Cow<'_, (Graph, Split)>> {
        if let Some(fixed) = &self.fixed {
            return Ok(Cow::Borrowed(fixed));
        }
        let DataSource::Sbm {
            num_nodes,
            train_fraction,
            val_fraction,
            ..
        } = &self.data
        else {
            unreachable!("dataset sources are loaded eagerly")
        };
        let params = self.data.sbm_params().expect("sbm source");
        let graph = sbm_generate(&params, derive_seed(seed, &[STREAM_GRAPH]))?;
        let n = *num_nodes as f64;
        let split = Split::random(
            *num_nodes,
            (train_fraction * n).round() as usize,
            (val_fraction * n).round() as usize,
            derive_seed(seed, &[STREAM_SPLIT]),
        )?;
        Ok(Cow::Owned((graph, split)))
    }
}

pub fn partition_for_seed(cfg: &ExperimentConfig, graph: &Graph, seed: u64) -> Result<Partition> {
    partition_nodes(
        graph,
        cfg.num_clients,
        cfg.iid_fraction,
        derive_seed(seed, &[STREAM_PARTITION]),
    )
}

pub fn channel_for_seed(cfg: &ExperimentConfig, seed: u64) -> Box<dyn SecureChannel> {
    build_channel(cfg.channel, derive_seed(seed, &[STREAM_CHANNEL]))
}

pub fn fed_config(cfg: &ExperimentConfig, seed: u64) -> FedConfig {
    let mut fc = FedConfig::new(cfg.hops, cfg.train_config(), seed);
    fc.weighting = cfg.training.weighting;
    fc.pretrain = cfg.pretrain;
    fc
}

/// Contents of `summary.json` for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub hops: usize,
    pub num_clients: usize,
    pub iid_fraction: f64,
    pub channel: String,
    /// `"centralized-equivalent"` for a single client, else `"federated"`.
    pub mode: String,
    pub graph_digest: String,
    pub rounds: usize,
    pub final_train_loss: f64,
    pub final_val_acc: f64,
    pub final_test_acc: f64,
    pub convergence: ConvergenceTime,
    pub pretrain: PretrainStats,
    pub training_up_bytes: u64,
    pub training_down_bytes: u64,
    pub per_round_up_bytes: u64,
    pub per_round_down_bytes: u64,
}

pub struct RunResult {
    pub summary: RunSummary,
    pub outcome: TrainingOutcome,
}

/// Pre-training plus federated training for one seed.
pub fn run_seed(cfg: &ExperimentConfig, source: &Source, seed: u64) -> Result<RunResult> {
    cfg.validate()?;
    let data = source.for_seed(seed)?;
    let (graph, split) = &*data;
    let partition = partition_for_seed(cfg, graph, seed)?;
    let channel = channel_for_seed(cfg, seed);
    let outcome = run_federated(
        graph,
        &partition,
        split,
        &fed_config(cfg, seed),
        channel.as_ref(),
    )?;
    let last = outcome
        .final_eval()
        .ok_or_else(|| Error::UndefinedMetric("no evaluation recorded".into()))?;
    let conv = convergence_time(&outcome.val_accuracies(), cfg.training.eval_every)?;
    let ledger = &outcome.ledger;
    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        config_hash: cfg.hash(),
        seed,
        hops: cfg.hops,
        num_clients: cfg.num_clients,
        iid_fraction: cfg.iid_fraction,
        channel: cfg.channel.to_string(),
        mode: if cfg.num_clients == 1 {
            "centralized-equivalent"
        } else {
            "federated"
        }
        .into(),
        graph_digest: graph.digest(),
        rounds: cfg.training.rounds,
        final_train_loss: last.train_loss,
        final_val_acc: last.val_acc,
        final_test_acc: last.test_acc,
        convergence: conv,
        pretrain: ledger.pretrain,
        training_up_bytes: ledger.training_up_bytes,
        training_down_bytes: ledger.training_down_bytes,
        per_round_up_bytes: ledger.per_round_up_bytes,
        per_round_down_bytes: ledger.per_round_down_bytes,
    };
    Ok(RunResult { summary, outcome })
}

/// Measured against expected pre-training cost of one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommRow {
    pub seed: u64,
    pub hops: usize,
    pub iid_fraction: f64,
    pub measured_upload: u64,
    pub measured_download: u64,
    pub measured_bytes: u64,
    /// Same count from the partition alone, without running the protocol.
    pub counted_total: u64,
    pub exact_expected: Option<f64>,
    pub approx_expected: Option<f64>,
}

impl CommRow {
    pub fn measured_total(&self) -> u64 {
        self.measured_upload + self.measured_download
    }

    pub fn exact_ratio(&self) -> Option<f64> {
        self.exact_expected
            .filter(|&e| e > 0.0)
            .map(|e| self.measured_total() as f64 / e)
    }

    pub fn approx_ratio(&self) -> Option<f64> {
        self.approx_expected
            .filter(|&e| e > 0.0)
            .map(|e| self.measured_total() as f64 / e)
    }
}

pub fn sbm_setting(cfg: &ExperimentConfig) -> Option<SbmSetting> {
    match &cfg.data {
        DataSource::Sbm {
            num_nodes,
            alpha,
            mu,
            ..
        } => Some(SbmSetting::new(
            *num_nodes,
            cfg.num_clients,
            *alpha,
            *mu,
            cfg.iid_fraction,
        )),
        DataSource::Dataset { .. } => None,
    }
}

/// Runs the pre-training round for every seed and hop count and compares
/// the traffic with the closed forms (SBM sources only).
pub fn analyze_comm(
    cfg: &ExperimentConfig,
    source: &Source,
    hops: &[usize],
) -> Result<Vec<CommRow>> {
    let setting = sbm_setting(cfg);
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let data = source.for_seed(seed)?;
        let graph = &data.0;
        let partition = partition_for_seed(cfg, graph, seed)?;
        let topo = Topology::new(graph);
        let channel = channel_for_seed(cfg, seed);
        for &h in hops {
            let pre = run_pretraining(
                &topo,
                &partition,
                h,
                cfg.model.num_layers.max(h),
                channel.as_ref(),
                cfg.pretrain,
            )?;
            let (up, down) = measured_comm_elements(&topo, &partition, h)?;
            let closed = match &setting {
                Some(s) if h <= 2 => Some(comm_cost_closed_form(s, graph.feature_dim(), h)?),
                _ => None,
            };
            rows.push(CommRow {
                seed,
                hops: h,
                iid_fraction: cfg.iid_fraction,
                measured_upload: pre.stats.upload_elements,
                measured_download: pre.stats.download_elements,
                measured_bytes: pre.stats.total_bytes(),
                counted_total: up + down,
                exact_expected: closed.map(|c| c.exact_total()),
                approx_expected: closed.map(|c| c.approx_total()),
            });
        }
    }
    Ok(rows)
}

/// Expected bound (SBM sources) and measured gradient gap per hop count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub hops: usize,
    pub expected_bound: Option<f64>,
    pub valid: Option<bool>,
    /// Mean over seeds of the mean per-client gap.
    pub empirical_gap_mean: f64,
    pub empirical_gap_std: f64,
}

pub fn analyze_bounds(
    cfg: &ExperimentConfig,
    source: &Source,
    form: SigmaForm,
    gap_form: GapForm,
) -> Result<Vec<BoundRow>> {
    let report = sbm_setting(cfg)
        .map(|s| sbm_bound_report(&s, form))
        .transpose()?;
    let mut per_hop = vec![Vec::new(); 3];
    for &seed in &cfg.seeds {
        let data = source.for_seed(seed)?;
        let graph = &data.0;
        let partition = partition_for_seed(cfg, graph, seed)?;
        let topo = Topology::new(graph);
        for (h, acc) in per_hop.iter_mut().enumerate() {
            let gaps = gradient_gap_generic(&topo, &partition, h, gap_form)?;
            acc.push(gaps.iter().sum::<f64>() / gaps.len() as f64);
        }
    }
    Ok(per_hop
        .into_iter()
        .enumerate()
        .map(|(h, v)| {
            let (mean, std) = mean_std(&v);
            BoundRow {
                hops: h,
                expected_bound: report.as_ref().map(|r| r.bounds[h].value),
                valid: report.as_ref().map(|r| r.bounds[h].valid),
                empirical_gap_mean: mean,
                empirical_gap_std: std,
            }
        })
        .collect())
}

/// Population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One timing point of the secure channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub elements: usize,
    pub clients: usize,
    pub plain_bytes: u64,
    pub masked_bytes: u64,
    pub bgv_bytes: u64,
    pub ckks_bytes: u64,
    pub bgv_packed_bytes: u64,
    pub seconds: f64,
    pub elements_per_second: f64,
}

/// Times a masked secure sum of `clients` vectors of each length.
pub fn bench_channel(sizes: &[usize], clients: usize, seed: u64) -> Result<Vec<BenchRow>> {
    use crate::secure::{
        estimate_ciphertext_bytes, MaskedChannel, PlainChannel, Purpose, SizeModel,
    };
    use crate::wire::{Record, HOP_MODEL};
    use rand::{Rng, SeedableRng};

    if clients == 0 {
        return Err(Error::Parameter("clients must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let masked = MaskedChannel::new(seed, false);
    let all: Vec<usize> = (0..clients).collect();
    sizes
        .iter()
        .map(|&n| {
            let inputs: Vec<Vec<Record>> = (0..clients)
                .map(|_| {
                    let v = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    Ok(vec![Record::new(0, HOP_MODEL, v)?])
                })
                .collect::<Result<_>>()?;
            let slots = [((0, HOP_MODEL), all.clone())].into_iter().collect();
            let plain_session = PlainChannel.open_session(0, Purpose::Model, clients, slots);
            let plain_sealed = PlainChannel.encrypt(&plain_session, 0, &inputs[0])?;
            let plain_bytes = PlainChannel.wire_bytes(&plain_session, &plain_sealed);

            let start = Instant::now();
            let slots = [((0, HOP_MODEL), all.clone())].into_iter().collect();
            let session = masked.open_session(1, Purpose::Model, clients, slots);
            let sealed = inputs
                .iter()
                .enumerate()
                .map(|(c, r)| masked.encrypt(&session, c, r))
                .collect::<Result<Vec<_>>>()?;
            let masked_bytes = masked.wire_bytes(&session, &sealed[0]);
            let total = masked.decrypt(&masked.aggregate(&session, &sealed)?)?;
            let seconds = start.elapsed().as_secs_f64();
            debug_assert_eq!(total[0].payload.len(), n);
            Ok(BenchRow {
                elements: n,
                clients,
                plain_bytes,
                masked_bytes,
                bgv_bytes: estimate_ciphertext_bytes(n as u64, &SizeModel::BGV, false),
                ckks_bytes: estimate_ciphertext_bytes(n as u64, &SizeModel::CKKS, false),
                bgv_packed_bytes: estimate_ciphertext_bytes(n as u64, &SizeModel::BGV, true),
                seconds,
                elements_per_second: (n * clients) as f64 / seconds.max(1e-12),
            })
        })
        .collect()
}
