//! Client and server logic of federated GCN training: a single pre-training
//! round that shares aggregated neighbor features, then FedAvg.
//!
//! Clients are simulated in-process. All traffic goes through a
//! [`SecureChannel`](crate::secure::SecureChannel), which also reports the
//! bytes each message would occupy on the wire.

mod pretrain;
mod topology;
mod training;
mod view;

pub use pretrain::{
    contributing_nodes, partial_sum, pretrain_aggregate, pretrain_collect, pretrain_distribute,
    requested_nodes, run_pretraining, Direction, HopMessage, PretrainOptions, PretrainOutcome,
    PretrainStats, ServerTotals,
};
pub use topology::Topology;
pub use training::{
    convergence_time, derive_seed, dropout_seed, evaluate, initial_weights, run_federated,
    run_training, train_centralized, ByteLedger, ClientEval, ConvergenceTime, Counts, EvalPoint,
    Evaluation, FedConfig, RoundRecord, TrainingOutcome, Weighting, CONVERGENCE_TOLERANCE,
    ROUNDS_CSV_HEADER,
};
pub use view::{build_views, ClientView};
