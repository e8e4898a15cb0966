use serde::{Deserialize, Serialize};

use super::SbmSetting;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `(1 - mu) alpha N (K - 1) / K^2`
pub fn c_alpha(s: &SbmSetting) -> f64 {
    let (n, k) = (s.num_nodes, s.num_clients);
    (1.0 - s.mu) * s.alpha * n * (k - 1.0) / (k * k)
}

/// `mu alpha N (K - 1) / K`
pub fn c_mu(s: &SbmSetting) -> f64 {
    let (n, k) = (s.num_nodes, s.num_clients);
    s.mu * s.alpha * n * (k - 1.0) / k
}

/// Frobenius norm of `B^4` for the `K x K` connectivity matrix with `alpha`
/// on the diagonal and `mu alpha` elsewhere, from its two eigenvalues
/// `alpha + (K-1) mu alpha` (once) and `alpha - mu alpha` (`K-1` times).
pub fn b4_norm(k: usize, alpha: f64, mu: f64) -> f64 {
    let top = alpha + (k as f64 - 1.0) * mu * alpha;
    let rest = alpha - mu * alpha;
    (top.powi(8) + (k as f64 - 1.0) * rest.powi(8)).sqrt()
}

/// Same quantity by explicit matrix powers.
pub fn b4_norm_dense(k: usize, alpha: f64, mu: f64) -> f64 {
    let mut b = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            b[(i, j)] = if i == j { alpha } else { mu * alpha };
        }
    }
    let b2 = b.matmul(&b).expect("square");
    b2.matmul(&b2).expect("square").frobenius_norm()
}

fn scale_term(s: &SbmSetting) -> f64 {
    let k = s.num_clients;
    (s.num_nodes / k).powi(5) * b4_norm(k as usize, s.alpha, s.mu)
}

/// `|diag(freqs) - diag(1/K)|_F` for the label frequencies of one client.
pub fn sigma_from_label_frequencies(freqs: &[f64]) -> f64 {
    let k = freqs.len() as f64;
    freqs
        .iter()
        .map(|f| (f - 1.0 / k).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Distribution gap of a single-class client, `|diag(1,0,..,0) - diag(1/K)|_F`,
/// scaled by `(N/K)^5 |B^4|` so it is commensurate with the other term.
pub fn sigma_non_iid(s: &SbmSetting) -> f64 {
    let k = s.num_clients as usize;
    let mut freqs = vec![0.0; k];
    freqs[0] = 1.0;
    sigma_from_label_frequencies(&freqs) * scale_term(s)
}

/// How the distribution-gap term enters the partially i.i.d. bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaForm {
    /// `(1 - p) sigma`: equals the non-i.i.d. cell at `p = 0` and the
    /// i.i.d. cell at `p = 1`.
    #[default]
    Interpolating,
    /// `p sigma`, as printed in the bound table.
    TableLiteral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmBound {
    pub value: f64,
    /// `K^-4 (1 + c_alpha p + c_mu)^m <= 1`; the first-order expansion
    /// behind the expression needs it.
    pub valid: bool,
}

/// Expected gradient-gap bound for `hops` in {0, 1, 2}:
/// `(1 - K^-4 (1 + c_alpha p + c_mu)^m) (N/K)^5 |B^4| + sigma term`, with
/// `m = 0, 2, 6`.
pub fn sbm_expected_bound(
    s: &SbmSetting,
    hops: usize,
    sigma: f64,
    form: SigmaForm,
) -> Result<SbmBound> {
    s.validate()?;
    let m = match hops {
        0 => 0,
        1 => 2,
        2 => 6,
        _ => return Err(Error::Parameter(format!("no closed form for {hops} hops"))),
    };
    let k = s.num_clients;
    let p = s.iid_fraction;
    let growth = 1.0 + c_alpha(s) * p + c_mu(s);
    let reach = growth.powi(m) / k.powi(4);
    let sigma_term = match form {
        SigmaForm::Interpolating => (1.0 - p) * sigma,
        SigmaForm::TableLiteral => p * sigma,
    };
    Ok(SbmBound {
        value: (1.0 - reach) * scale_term(s) + sigma_term,
        valid: reach <= 1.0,
    })
}

/// Bound values for 0/1/2 hops of one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub setting: SbmSetting,
    pub c_alpha: f64,
    pub c_mu: f64,
    pub sigma: f64,
    pub b4_norm: f64,
    /// Indexed by hops.
    pub bounds: Vec<SbmBound>,
    /// Per client and hop, when measured on a concrete instance.
    pub empirical_gaps: Option<Vec<Vec<f64>>>,
}

pub fn sbm_bound_report(s: &SbmSetting, form: SigmaForm) -> Result<BoundReport> {
    let sigma = sigma_non_iid(s);
    Ok(BoundReport {
        setting: *s,
        c_alpha: c_alpha(s),
        c_mu: c_mu(s),
        sigma,
        b4_norm: b4_norm(s.num_clients as usize, s.alpha, s.mu),
        bounds: (0..=2)
            .map(|h| sbm_expected_bound(s, h, sigma, form))
            .collect::<Result<_>>()?,
        empirical_gaps: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEval {
    pub value: f64,
    /// `(f0 - f*) / (b eta_global eta_local tau T)`
    pub optimization_term: f64,
    /// `15 tau^2 eta_local^2 lambda^2 gap^2 / b`
    pub gap_term: f64,
    /// `eta_global <= 1 / (8 tau lambda)`
    pub global_step_valid: bool,
    /// `eta_global eta_local <= 1 / (tau lambda)`
    pub step_product_valid: bool,
}

/// Evaluates the federated convergence bound for a given gradient gap.
#[allow(clippy::too_many_arguments)]
pub fn convergence_bound_eval(
    gap: f64,
    tau: usize,
    eta_local: f64,
    eta_global: f64,
    lambda: f64,
    rounds: usize,
    f0_minus_fstar: f64,
    b: f64,
) -> Result<BoundEval> {
    if tau == 0 || rounds == 0 {
        return Err(Error::Parameter("tau and T must be positive".into()));
    }
    if !(b > 0.0 && eta_local > 0.0 && eta_global > 0.0 && lambda > 0.0) {
        return Err(Error::Parameter(
            "b, step sizes and lambda must be positive".into(),
        ));
    }
    let tau = tau as f64;
    let optimization_term = f0_minus_fstar / (b * eta_global * eta_local * tau * rounds as f64);
    let gap_term = 15.0 * tau * tau * eta_local * eta_local * lambda * lambda / b * gap * gap;
    Ok(BoundEval {
        value: optimization_term + gap_term,
        optimization_term,
        gap_term,
        global_step_valid: eta_global <= 1.0 / (8.0 * tau * lambda),
        step_product_valid: eta_global * eta_local <= 1.0 / (tau * lambda),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_alpha_arithmetic() {
        let s = SbmSetting::new(1000, 5, 0.05, 0.1, 1.0);
        assert!((c_alpha(&s) - 7.2).abs() < 1e-12);
        assert!((c_mu(&s) - 0.1 * 0.05 * 1000.0 * 4.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn b4_two_ways() {
        for (k, a, m) in [(2, 0.3, 0.5), (5, 0.05, 0.1), (7, 0.9, 0.0), (1, 0.4, 0.2)] {
            let (e, d) = (b4_norm(k, a, m), b4_norm_dense(k, a, m));
            assert!(
                (e - d).abs() <= 1e-10 * d.max(1e-300),
                "{k} {a} {m}: {e} vs {d}"
            );
        }
    }

    #[test]
    fn zero_hop_cell_has_no_growth_term() {
        let s = SbmSetting::new(300, 3, 0.1, 0.2, 1.0);
        let b = sbm_expected_bound(&s, 0, 0.0, SigmaForm::Interpolating).unwrap();
        let expected = (1.0 - 3f64.powi(-4)) * 100f64.powi(5) * b4_norm(3, 0.1, 0.2);
        assert!((b.value - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn bound_eval_trivia() {
        let a = convergence_bound_eval(0.0, 3, 0.1, 0.01, 1.0, 100, 2.0, 1.0).unwrap();
        assert_eq!(a.value, a.optimization_term);
        let b = convergence_bound_eval(0.0, 3, 0.1, 0.01, 1.0, 200, 2.0, 1.0).unwrap();
        assert!((a.optimization_term - 2.0 * b.optimization_term).abs() < 1e-12);
        assert!(convergence_bound_eval(1.0, 0, 0.1, 0.1, 1.0, 1, 1.0, 1.0).is_err());
    }
}
