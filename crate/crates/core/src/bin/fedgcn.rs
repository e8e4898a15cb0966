//! `fedgcn` command line. Failures print one JSON object on stderr and exit
//! with status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fedgcn_core::analysis::{GapForm, SigmaForm};
use fedgcn_core::graph::write_dataset;
use fedgcn_core::harness::{
    analyze_bounds, analyze_comm, bench_channel, bench_csv, bounds_csv, comm_csv, default_iid_grid,
    mean_std, partition_for_seed, run_seed, run_sweep, write_atomic, write_run, write_sweep,
    DataSource, ExperimentConfig, Source,
};
use fedgcn_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fedgcn",
    version,
    about = "Federated GCN training and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; override the configuration's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Communication hops; overrides the configuration.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
    hops: Option<u8>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaArg {
    Interpolating,
    TableLiteral,
}

#[derive(Subcommand)]
enum Command {
    /// Write an SBM graph per seed in dataset-directory format.
    Generate(Common),
    /// Write the node-to-client assignment per seed.
    Partition(Common),
    /// Pre-training plus federated training; writes rounds.csv and summary.json.
    Train(Common),
    /// Closed-form versus measured communication, bounds and gradient gaps.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Non-i.i.d. term of the expected bound.
        #[arg(long, value_enum, default_value = "interpolating")]
        sigma: SigmaArg,
        /// Leave out the client-count factor in the gradient gap.
        #[arg(long)]
        gap_unscaled: bool,
    },
    /// Secure aggregation size and throughput.
    BenchChannel {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        clients: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Grid over the i.i.d. fraction and hop counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated i.i.d. fractions (default 0, 0.1, ..., 1).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(h) = self.hops {
            cfg.hops = h as usize;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        cfg.validate()?;
        let out = cfg
            .out_dir
            .clone()
            .ok_or_else(|| Error::Config("no output directory (use --out)".into()))?;
        Ok((cfg, out))
    }
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed{seed}"))
}

fn save_config(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_atomic(&out.join("config.json"), cfg.to_json()?.as_bytes())
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Generate(common) => {
            let (cfg, out) = common.load()?;
            if !matches!(cfg.data, DataSource::Sbm { .. }) {
                return Err(Error::Config("generate needs an sbm data source".into()));
            }
            let source = Source::open(&cfg.data)?;
            let mut dirs = Vec::new();
            for &seed in &cfg.seeds {
                let data = source.for_seed(seed)?;
                let dir = seed_dir(&out, seed);
                write_dataset(&dir, &data.0, Some(&data.1))?;
                dirs.push(dir);
            }
            save_config(&out, &cfg)?;
            Ok(json!({"command": "generate", "config_hash": cfg.hash(), "datasets": dirs}))
        }
        Command::Partition(common) => {
            let (cfg, out) = common.load()?;
            let source = Source::open(&cfg.data)?;
            for &seed in &cfg.seeds {
                let data = source.for_seed(seed)?;
                let part = partition_for_seed(&cfg, &data.0, seed)?;
                let clients: Vec<_> = part
                    .clients
                    .iter()
                    .zip(part.home_class_fraction(&data.0))
                    .map(|(c, home)| {
                        json!({
                            "nodes": c.nodes.len(),
                            "internal_edges": c.internal_edges.len(),
                            "cross_edges": c.cross_edges.len(),
                            "home_class_fraction": home,
                        })
                    })
                    .collect();
                let body = json!({
                    "config_hash": cfg.hash(),
                    "seed": seed,
                    "cross_edges": part.num_cross_edges(),
                    "clients": clients,
                    "assignment": part.assignment,
                });
                write_atomic(
                    &seed_dir(&out, seed).join("partition.json"),
                    serde_json::to_string_pretty(&body)?.as_bytes(),
                )?;
            }
            save_config(&out, &cfg)?;
            Ok(json!({"command": "partition", "config_hash": cfg.hash(), "out": out}))
        }
        Command::Train(common) => {
            let (cfg, out) = common.load()?;
            let source = Source::open(&cfg.data)?;
            let mut accs = Vec::new();
            for &seed in &cfg.seeds {
                let result = run_seed(&cfg, &source, seed)?;
                write_run(&seed_dir(&out, seed), &result)?;
                accs.push(result.summary.final_test_acc);
            }
            let (mean, std) = mean_std(&accs);
            save_config(&out, &cfg)?;
            Ok(json!({
                "command": "train",
                "config_hash": cfg.hash(),
                "mode": if cfg.num_clients == 1 { "centralized-equivalent" } else { "federated" },
                "test_acc_mean": mean,
                "test_acc_std": std,
                "out": out,
            }))
        }
        Command::Analyze {
            common,
            sigma,
            gap_unscaled,
        } => {
            let (cfg, out) = common.load()?;
            let source = Source::open(&cfg.data)?;
            let hops: Vec<usize> = (0..=cfg.model.num_layers.min(2)).collect();
            let comm = analyze_comm(&cfg, &source, &hops)?;
            let form = match sigma {
                SigmaArg::Interpolating => SigmaForm::Interpolating,
                SigmaArg::TableLiteral => SigmaForm::TableLiteral,
            };
            let gap_form = if gap_unscaled {
                GapForm::TableLiteral
            } else {
                GapForm::Scaled
            };
            let bounds = analyze_bounds(&cfg, &source, form, gap_form)?;
            let hash = cfg.hash();
            write_atomic(&out.join("comm.csv"), comm_csv(&comm, &hash).as_bytes())?;
            write_atomic(
                &out.join("bounds.csv"),
                bounds_csv(&bounds, &hash).as_bytes(),
            )?;
            save_config(&out, &cfg)?;
            Ok(json!({"command": "analyze", "config_hash": hash, "out": out}))
        }
        Command::BenchChannel {
            out,
            sizes,
            clients,
            seed,
        } => {
            let rows = bench_channel(&sizes, clients, seed)?;
            write_atomic(&out.join("bench.csv"), bench_csv(&rows).as_bytes())?;
            Ok(json!({"command": "bench-channel", "out": out}))
        }
        Command::Sweep { common, grid } => {
            let (cfg, out) = common.load()?;
            let source = Source::open(&cfg.data)?;
            let grid = grid.unwrap_or_else(default_iid_grid);
            let hops: Vec<usize> = match common.hops {
                Some(h) => vec![h as usize],
                None => (0..=cfg.model.num_layers.min(2)).collect(),
            };
            let points = run_sweep(&cfg, &source, &grid, &hops, Some(&out))?;
            write_sweep(&out, &points)?;
            save_config(&out, &cfg)?;
            Ok(
                json!({"command": "sweep", "config_hash": cfg.hash(), "points": points.len(), "out": out}),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
