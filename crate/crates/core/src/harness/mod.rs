//! Experiment orchestration behind the `fedgcn` command line: JSON
//! configuration, per-seed pipelines, sweeps and CSV/JSON artifacts.
//!
//! Every seed in a configuration derives independent streams for the graph,
//! split, partition, masks and model, so a run is reproducible from the
//! configuration alone.

mod config;
mod output;
mod run;
mod sweep;

pub use config::{DataSource, ExperimentConfig, ModelConfig, TrainingConfig};
pub use output::{bench_csv, bounds_csv, comm_csv, rounds_csv, write_atomic, write_run};
pub use run::{
    analyze_bounds, analyze_comm, bench_channel, channel_for_seed, fed_config, mean_std,
    partition_for_seed, run_seed, sbm_setting, BenchRow, BoundRow, CommRow, RunResult, RunSummary,
    Source, SUMMARY_SCHEMA_VERSION,
};
pub use sweep::{default_iid_grid, run_sweep, sweep_csv, sweep_means_csv, write_sweep, SweepPoint};
