//! Closed-form convergence and communication expressions for stochastic
//! block model graphs, and their empirical counterparts on concrete
//! partitions.

mod bounds;
mod comm;
mod gap;

pub use bounds::{
    b4_norm, b4_norm_dense, c_alpha, c_mu, convergence_bound_eval, sbm_bound_report,
    sbm_expected_bound, sigma_from_label_frequencies, sigma_non_iid, BoundEval, BoundReport,
    SbmBound, SigmaForm,
};
pub use comm::{
    comm_cost_closed_form, expected_neighbor_counts, measured_comm_elements, CommClosedForm,
    CommReport, CountForm,
};
pub use gap::{gradient_gap_generic, hop_products, GapForm};

use crate::error::{Error, Result};

/// Parameters shared by the SBM expressions.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SbmSetting {
    pub num_nodes: f64,
    pub num_clients: f64,
    pub alpha: f64,
    pub mu: f64,
    /// Fraction of nodes placed uniformly at random.
    pub iid_fraction: f64,
}

impl SbmSetting {
    pub fn new(
        num_nodes: usize,
        num_clients: usize,
        alpha: f64,
        mu: f64,
        iid_fraction: f64,
    ) -> Self {
        Self {
            num_nodes: num_nodes as f64,
            num_clients: num_clients as f64,
            alpha,
            mu,
            iid_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} = {v} outside [0, 1]")))
            }
        };
        prob("alpha", self.alpha)?;
        prob("mu", self.mu)?;
        prob("p", self.iid_fraction)?;
        if self.num_clients < 1.0 || self.num_nodes < 1.0 {
            return Err(Error::Parameter(
                "need at least one node and one client".into(),
            ));
        }
        Ok(())
    }
}
