use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::output::{write_atomic, write_run};
use super::run::{mean_std, run_seed, Source};
use crate::error::Result;

/// Grid of i.i.d. fractions `0, 0.1, ..., 1`.
pub fn default_iid_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub iid_fraction: f64,
    pub hops: usize,
    pub seed: u64,
    pub config_hash: String,
    pub convergence_round: usize,
    pub converged: bool,
    pub final_val_acc: f64,
    pub final_test_acc: f64,
    pub pretrain_elements: u64,
    pub pretrain_bytes: u64,
}

/// Runs every `(p, hops, seed)` point in the worker pool. When `out` is
/// given each point writes its own `rounds.csv` and `summary.json`.
pub fn run_sweep(
    base: &ExperimentConfig,
    source: &Source,
    grid: &[f64],
    hops: &[usize],
    out: Option<&Path>,
) -> Result<Vec<SweepPoint>> {
    let mut jobs = Vec::new();
    for &p in grid {
        for &h in hops {
            let mut cfg = base.clone();
            cfg.iid_fraction = p;
            cfg.hops = h;
            cfg.validate()?;
            for &seed in &base.seeds {
                jobs.push((cfg.clone(), seed));
            }
        }
    }
    jobs.par_iter()
        .map(|(cfg, seed)| {
            let run = run_seed(cfg, source, *seed)?;
            if let Some(out) = out {
                let dir = out.join(format!(
                    "p{:.2}/hops{}/seed{}",
                    cfg.iid_fraction, cfg.hops, seed
                ));
                write_run(&dir, &run)?;
            }
            let s = &run.summary;
            Ok(SweepPoint {
                iid_fraction: cfg.iid_fraction,
                hops: cfg.hops,
                seed: *seed,
                config_hash: s.config_hash.clone(),
                convergence_round: s.convergence.round,
                converged: s.convergence.converged,
                final_val_acc: s.final_val_acc,
                final_test_acc: s.final_test_acc,
                pretrain_elements: s.pretrain.total_elements(),
                pretrain_bytes: s.pretrain.total_bytes(),
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(
        "iid_fraction,hops,seed,convergence_round,converged,final_val_acc,final_test_acc,\
         pretrain_elements,pretrain_bytes,config_hash\n",
    );
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            p.iid_fraction,
            p.hops,
            p.seed,
            p.convergence_round,
            p.converged,
            p.final_val_acc,
            p.final_test_acc,
            p.pretrain_elements,
            p.pretrain_bytes,
            p.config_hash
        );
    }
    out
}

/// Seed means per `(p, hops)`, one line each.
pub fn sweep_means_csv(points: &[SweepPoint]) -> String {
    let mut keys: Vec<(f64, usize)> = points.iter().map(|p| (p.iid_fraction, p.hops)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keys.dedup();
    let mut out = String::from(
        "iid_fraction,hops,seeds,convergence_round_mean,test_acc_mean,test_acc_std,pretrain_elements_mean\n",
    );
    for (p, h) in keys {
        let sel: Vec<&SweepPoint> = points
            .iter()
            .filter(|x| x.iid_fraction == p && x.hops == h)
            .collect();
        let conv: Vec<f64> = sel.iter().map(|x| x.convergence_round as f64).collect();
        let acc: Vec<f64> = sel.iter().map(|x| x.final_test_acc).collect();
        let comm: Vec<f64> = sel.iter().map(|x| x.pretrain_elements as f64).collect();
        let (acc_mean, acc_std) = mean_std(&acc);
        let _ = writeln!(
            out,
            "{p},{h},{},{},{acc_mean},{acc_std},{}",
            sel.len(),
            mean_std(&conv).0,
            mean_std(&comm).0
        );
    }
    out
}

pub fn write_sweep(out: &Path, points: &[SweepPoint]) -> Result<()> {
    write_atomic(&out.join("sweep.csv"), sweep_csv(points).as_bytes())?;
    write_atomic(
        &out.join("sweep_means.csv"),
        sweep_means_csv(points).as_bytes(),
    )
}
