//! L-layer graph convolutional network with a hand-written backward pass.
//!
//! Layer `l` computes `Z_l = P_l (H_l W_l)`, where `P_l` is a per-layer row
//! operator. Using a different operator per layer lets a client combine
//! received neighbor aggregates (first layer) with its local adjacency
//! (later layers).

mod forward;
mod weights;

pub use forward::{gcn_backward, gcn_forward, xent_loss, ForwardCache, ForwardMode, Propagation};
pub use weights::{sgd_step, GcnWeights};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization settings shared by local and federated training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Local SGD learning rate.
    pub lr: f64,
    pub l2: f64,
    /// Local steps per round.
    pub local_steps: usize,
    /// Global rounds.
    pub rounds: usize,
    pub dropout: f64,
    /// Server step size applied to the averaged model change.
    pub global_lr: f64,
    /// Evaluate every this many rounds.
    pub eval_every: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.5,
            l2: 5e-4,
            local_steps: 3,
            rounds: 300,
            dropout: 0.5,
            global_lr: 1.0,
            eval_every: 1,
            hidden_dim: 16,
            num_layers: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be nonnegative, got {}", self.l2));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.global_lr > 0.0 && self.global_lr.is_finite()) {
            return bad(format!(
                "global_lr must be positive, got {}",
                self.global_lr
            ));
        }
        for (name, v) in [
            ("local_steps", self.local_steps),
            ("rounds", self.rounds),
            ("eval_every", self.eval_every),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}
