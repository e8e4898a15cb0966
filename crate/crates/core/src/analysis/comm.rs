use serde::{Deserialize, Serialize};

use super::{c_alpha, c_mu, SbmSetting};
use crate::error::{Error, Result};
use crate::federation::Topology;
use crate::graph::Partition;

/// Probability that a given other client holds at least one neighbor of a
/// node.
fn reach_probability(s: &SbmSetting) -> f64 {
    let (n, k, p) = (s.num_nodes, s.num_clients, s.iid_fraction);
    let same = (1.0 - s.alpha).powf(n * p / (k * k));
    let cross = (1.0 - s.mu * s.alpha).powf(n * (k - p) / (k * k));
    1.0 - same * cross
}

/// Expected pre-training traffic in feature elements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommClosedForm {
    pub exact_upload: f64,
    pub exact_download: f64,
    /// First-order expansion in `alpha`.
    pub approx_upload: f64,
    pub approx_download: f64,
}

impl CommClosedForm {
    pub fn exact_total(&self) -> f64 {
        self.exact_upload + self.exact_download
    }

    pub fn approx_total(&self) -> f64 {
        self.approx_upload + self.approx_download
    }
}

/// Upload is `N (1 + (K-1) q) d` with `q` the probability that another
/// client holds a neighbor; download is `N d` (1 hop) or the same as the
/// upload (2 hops). The approximation replaces `1 + (K-1) q` with
/// `1 + c_alpha p + c_mu`.
pub fn comm_cost_closed_form(
    s: &SbmSetting,
    feature_dim: usize,
    hops: usize,
) -> Result<CommClosedForm> {
    s.validate()?;
    let nd = s.num_nodes * feature_dim as f64;
    let k = s.num_clients;
    let exact_clients = 1.0 + (k - 1.0) * reach_probability(s);
    let approx_clients = 1.0 + c_alpha(s) * s.iid_fraction + c_mu(s);
    match hops {
        0 => Ok(CommClosedForm::default()),
        1 => Ok(CommClosedForm {
            exact_upload: exact_clients * nd,
            exact_download: nd,
            approx_upload: approx_clients * nd,
            approx_download: nd,
        }),
        2 => Ok(CommClosedForm {
            exact_upload: exact_clients * nd,
            exact_download: exact_clients * nd,
            approx_upload: approx_clients * nd,
            approx_download: approx_clients * nd,
        }),
        _ => Err(Error::Parameter(format!("no closed form for {hops} hops"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountForm {
    Exact,
    Approximate,
}

/// Expected size of a client's `hop`-hop neighborhood (own nodes
/// included): `(N/K) g^hop` with growth factor `g = 1 + (K-1) q` (exact) or
/// `1 + c_alpha p + c_mu` (first order).
pub fn expected_neighbor_counts(s: &SbmSetting, hop: usize, form: CountForm) -> Result<f64> {
    s.validate()?;
    let k = s.num_clients;
    let growth = match form {
        CountForm::Exact => 1.0 + (k - 1.0) * reach_probability(s),
        CountForm::Approximate => 1.0 + c_alpha(s) * s.iid_fraction + c_mu(s),
    };
    Ok(s.num_nodes / k * growth.powi(hop as i32))
}

/// Feature elements a concrete partition needs: upload
/// `sum_i |c(N_i)| d`, download `N d` (1 hop) or `sum_k |N(V_k)| d` (2 hops).
pub fn measured_comm_elements(
    topo: &Topology,
    partition: &Partition,
    hops: usize,
) -> Result<(u64, u64)> {
    let d = topo.feature_dim() as u64;
    let n = topo.num_nodes() as u64;
    if hops == 0 {
        return Ok((0, 0));
    }
    let mut upload = 0u64;
    let mut seen = vec![usize::MAX; partition.num_clients()];
    for i in 0..topo.num_nodes() {
        let mut distinct = 0;
        for &j in topo.closed_neighbors(i).0 {
            let c = partition.client_of(j);
            if seen[c] != i {
                seen[c] = i;
                distinct += 1;
            }
        }
        upload += distinct * d;
    }
    let download = match hops {
        1 => n * d,
        2 => upload,
        _ => {
            let mut total = 0u64;
            for part in &partition.clients {
                total += topo.neighborhood(&part.nodes, hops - 1).len() as u64 * d;
            }
            total
        }
    };
    Ok((upload, download))
}

/// Measured against expected pre-training traffic for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    pub hops: usize,
    pub measured_upload: u64,
    pub measured_download: u64,
    pub measured_bytes: u64,
    pub closed_form: Option<CommClosedForm>,
}

impl CommReport {
    pub fn measured_total(&self) -> u64 {
        self.measured_upload + self.measured_download
    }

    /// Measured over exact expectation.
    pub fn exact_ratio(&self) -> Option<f64> {
        self.closed_form
            .filter(|c| c.exact_total() > 0.0)
            .map(|c| self.measured_total() as f64 / c.exact_total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hops_costs_nothing() {
        let s = SbmSetting::new(2000, 5, 0.05, 0.1, 0.5);
        assert_eq!(comm_cost_closed_form(&s, 16, 0).unwrap().exact_total(), 0.0);
    }

    #[test]
    fn non_iid_one_hop_approximation() {
        let s = SbmSetting::new(2000, 5, 0.001, 0.1, 0.0);
        let c = comm_cost_closed_form(&s, 16, 1).unwrap();
        let expected = (c_mu(&s) + 2.0) * 2000.0 * 16.0;
        assert!((c.approx_total() - expected).abs() < 1e-6);
    }

    #[test]
    fn neighbor_counts() {
        let s = SbmSetting::new(1000, 4, 0.02, 0.0, 0.0);
        for form in [CountForm::Exact, CountForm::Approximate] {
            assert!((expected_neighbor_counts(&s, 1, form).unwrap() - 250.0).abs() < 1e-9);
        }
        let s = SbmSetting::new(1000, 4, 0.002, 0.3, 1.0);
        let one = expected_neighbor_counts(&s, 1, CountForm::Approximate).unwrap();
        let two = expected_neighbor_counts(&s, 2, CountForm::Approximate).unwrap();
        assert!((two - one * one / 250.0).abs() < 1e-9);
    }
}
