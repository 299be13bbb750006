//! Cascade-size estimate for large homogeneous networks: safety thresholds,
//! binomial survival probabilities and the counting function `F_n`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::dynamics::{build_transformed, OrthantSignature, Trajectory};
use crate::network::{CHat, FinancialNetwork};

/// Relative spread tolerated among nonzero holdings before they count as heterogeneous.
pub const HOMOGENEITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("alpha * xi_bar = {alpha} * {xi_bar} is not a positive scale")]
    DegenerateScale { alpha: f64, xi_bar: f64 },
    #[error("holding weights range over [{min}, {max}]; the estimate assumes one weight")]
    HeterogeneousWeights { min: f64, max: f64 },
}

/// `floor(b / (alpha * xi_bar))`; negative `b` gives a negative threshold,
/// meaning the company is unsafe even with no failed neighbour.
pub fn safety_threshold(b: f64, alpha: f64, xi_bar: f64) -> Result<i64, EstimateError> {
    let scale = alpha * xi_bar;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(EstimateError::DegenerateScale { alpha, xi_bar });
    }
    Ok((b / scale).floor() as i64)
}

/// `P(Binomial(delta, theta) <= k_hat)`, summed in the log domain.
pub fn binom_tail(delta: u64, theta: f64, k_hat: i64) -> f64 {
    if k_hat < 0 {
        return 0.0;
    }
    let top = (k_hat as u64).min(delta);
    if top == delta {
        return 1.0;
    }
    if theta <= 0.0 {
        return 1.0;
    }
    if theta >= 1.0 {
        return 0.0;
    }
    let (ln_t, ln_f) = (theta.ln(), (-theta).ln_1p());
    let term = |j: u64| (ln_binomial(delta, j) + j as f64 * ln_t + (delta - j) as f64 * ln_f).exp();
    // Sum whichever side of the mean is the smaller tail.
    if top as f64 >= delta as f64 * theta {
        (1.0 - (top + 1..=delta).map(term).sum::<f64>()).max(0.0)
    } else {
        (0..=top).map(term).sum::<f64>().min(1.0)
    }
}

/// `F_n(tau) = #{i : k_hat_i < theta_tilde_i * tau}` for `tau = 0..=n`.
pub fn count_function(k_hat: &[i64], theta_tilde: &[f64]) -> Vec<usize> {
    assert_eq!(k_hat.len(), theta_tilde.len(), "one threshold per link probability");
    let n = k_hat.len();
    (0..=n)
        .map(|tau| {
            k_hat
                .iter()
                .zip(theta_tilde)
                .filter(|&(&k, &th)| (k as f64) < th * tau as f64)
                .count()
        })
        .collect()
}

/// Largest `tau` with `F(tau) >= tau`.
pub fn estimate_failures(f_values: &[usize]) -> usize {
    f_values
        .iter()
        .enumerate()
        .filter(|&(tau, &f)| f >= tau)
        .map(|(tau, _)| tau)
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// Fail unless all nonzero holdings are equal.
    #[default]
    RequireHomogeneous,
    /// Use the mean nonzero holding.
    ForceMean,
}

/// Link probability fed to the binomial survival probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// Fraction of failed companies, shared by every row.
    #[default]
    Global,
    /// Each company's own degree fraction.
    PerCompany,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Bound on the transformed state of failed companies.
    pub xi_bar: f64,
    #[serde(default)]
    pub weights: WeightPolicy,
    #[serde(default)]
    pub theta_mode: ThetaMode,
}

impl EstimateOptions {
    pub fn new(xi_bar: f64) -> Self {
        Self {
            xi_bar,
            weights: WeightPolicy::default(),
            theta_mode: ThetaMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeNetParams {
    pub alpha: f64,
    pub theta_tilde: Vec<f64>,
    pub xi_bar: f64,
    pub degrees: Vec<usize>,
}

impl LargeNetParams {
    /// `None` when the network has no links.
    pub fn from_network(
        net: &FinancialNetwork,
        xi_bar: f64,
        policy: WeightPolicy,
    ) -> Result<Option<Self>, EstimateError> {
        let weights: Vec<f64> = net
            .c
            .triplets()
            .into_iter()
            .filter(|&(i, l, _)| i != l)
            .map(|(_, _, v)| v)
            .collect();
        if weights.is_empty() {
            return Ok(None);
        }
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let alpha = if max - min <= HOMOGENEITY_TOL * max.abs() {
            max
        } else {
            match policy {
                WeightPolicy::RequireHomogeneous => return Err(EstimateError::HeterogeneousWeights { min, max }),
                WeightPolicy::ForceMean => weights.iter().sum::<f64>() / weights.len() as f64,
            }
        };
        let n = net.n();
        let degrees = net.out_degrees();
        let theta_tilde = degrees.iter().map(|&d| d as f64 / n as f64).collect();
        Ok(Some(Self {
            alpha,
            theta_tilde,
            xi_bar,
            degrees,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeEstimate {
    /// `-1` for companies already failed in the evaluated signature.
    pub k_hat: Vec<i64>,
    pub f_values: Vec<usize>,
    pub estimate: usize,
    /// Failed fraction of the evaluated signature.
    pub theta: f64,
    /// Probability that each company keeps at most `k_hat` failed neighbours.
    pub survival: Vec<f64>,
    pub alpha: Option<f64>,
}

#[derive(Serialize)]
struct EstimateSummary<'a> {
    estimate: usize,
    alpha: Option<f64>,
    theta: f64,
    k_hat_histogram: &'a BTreeMap<i64, usize>,
}

impl CascadeEstimate {
    pub fn k_hat_histogram(&self) -> BTreeMap<i64, usize> {
        let mut out = BTreeMap::new();
        for &k in &self.k_hat {
            *out.entry(k).or_insert(0) += 1;
        }
        out
    }

    /// CSV rows `tau,F`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau,F")?;
        for (tau, f) in self.f_values.iter().enumerate() {
            writeln!(w, "{tau},{f}")?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&EstimateSummary {
            estimate: self.estimate,
            alpha: self.alpha,
            theta: self.theta,
            k_hat_histogram: &self.k_hat_histogram(),
        })
    }
}

/// Thresholds from the orthant offset at `sig`, then the counting estimate.
pub fn estimate_from_network(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    opts: &EstimateOptions,
) -> Result<CascadeEstimate, EstimateError> {
    let n = net.n();
    let theta = sig.negative_count() as f64 / n as f64;
    let Some(params) = LargeNetParams::from_network(net, opts.xi_bar, opts.weights)? else {
        // Without links nothing propagates.
        return Ok(CascadeEstimate {
            k_hat: vec![0; n],
            f_values: vec![0; n + 1],
            estimate: 0,
            theta,
            survival: vec![1.0; n],
            alpha: None,
        });
    };
    let b = build_transformed(net, chat, sig).b_const;
    let mut k_hat = Vec::with_capacity(n);
    for i in 0..n {
        k_hat.push(if sig.is_negative(i) {
            -1
        } else {
            safety_threshold(b[i], params.alpha, params.xi_bar)?
        });
    }
    let survival = (0..n)
        .map(|i| {
            let th = match opts.theta_mode {
                ThetaMode::Global => theta,
                ThetaMode::PerCompany => params.theta_tilde[i],
            };
            binom_tail(params.degrees[i] as u64, th, k_hat[i])
        })
        .collect();
    let f_values = count_function(&k_hat, &params.theta_tilde);
    Ok(CascadeEstimate {
        estimate: estimate_failures(&f_values),
        k_hat,
        f_values,
        theta,
        survival,
        alpha: Some(params.alpha),
    })
}

/// Largest `|x_l|` over failed companies anywhere in `traj`.
pub fn pilot_xi_bar(traj: &Trajectory) -> Option<f64> {
    traj.states
        .iter()
        .flat_map(|s| s.x.iter().copied().filter(|v| *v < 0.0))
        .map(f64::abs)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::c_hat;
    use crate::numerics::{DenseMatrix, DenseVector};
    use approx::assert_abs_diff_eq;

    #[test]
    fn thresholds() {
        assert_eq!(safety_threshold(10.0, 0.5, 4.0), Ok(5));
        assert_eq!(safety_threshold(0.0, 0.5, 4.0), Ok(0));
        assert_eq!(safety_threshold(7.999, 1.0, 4.0), Ok(1));
        assert_eq!(safety_threshold(-0.5, 1.0, 4.0), Ok(-1));
        assert!(matches!(
            safety_threshold(1.0, 0.0, 4.0),
            Err(EstimateError::DegenerateScale { .. })
        ));
    }

    #[test]
    fn tail_cases() {
        assert_eq!(binom_tail(4, 0.2, 4), 1.0);
        assert_abs_diff_eq!(binom_tail(2, 0.5, 1), 0.75, epsilon = 1e-15);
        assert_eq!(binom_tail(7, 0.0, 0), 1.0);
        assert_eq!(binom_tail(7, 0.3, -1), 0.0);
        assert!(binom_tail(10_000, 0.5, 5000) > 0.5);
    }

    #[test]
    fn counting() {
        let f = count_function(&[0, 1, 2], &[1.0, 1.0, 1.0]);
        assert_eq!(f, vec![0, 1, 2, 3]);
        assert_eq!(estimate_failures(&f), 3);
        assert_eq!(count_function(&[3, 3, 3], &[1.0, 0.5, 0.2]), vec![0; 4]);
        assert_eq!(estimate_failures(&[0, 0, 0]), 0);
    }

    #[test]
    fn no_links_no_cascade() {
        let net = FinancialNetwork {
            c: DenseMatrix::zeros(3, 3),
            d: DenseMatrix::identity(3),
            p: DenseVector::filled(3, 1.0),
            v_lo: DenseVector::filled(3, 5.0),
            beta: 1.0,
        };
        let chat = c_hat(&net).unwrap();
        let est =
            estimate_from_network(&net, &chat, &OrthantSignature::positive(3), &EstimateOptions::new(1.0)).unwrap();
        assert_eq!(est.estimate, 0);
        assert!(est.f_values.iter().all(|&f| f == 0));
    }

    #[test]
    fn heterogeneous_weights() {
        let mut c = DenseMatrix::zeros(2, 2);
        c[(0, 1)] = 0.1;
        c[(1, 0)] = 0.3;
        let net = FinancialNetwork {
            c,
            d: DenseMatrix::identity(2),
            p: DenseVector::filled(2, 10.0),
            v_lo: DenseVector::filled(2, 1.0),
            beta: 1.0,
        };
        let chat = c_hat(&net).unwrap();
        let sig = OrthantSignature::positive(2);
        assert!(matches!(
            estimate_from_network(&net, &chat, &sig, &EstimateOptions::new(1.0)),
            Err(EstimateError::HeterogeneousWeights { .. })
        ));
        let opts = EstimateOptions {
            weights: WeightPolicy::ForceMean,
            ..EstimateOptions::new(1.0)
        };
        let est = estimate_from_network(&net, &chat, &sig, &opts).unwrap();
        assert_abs_diff_eq!(est.alpha.unwrap(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn csv_and_summary() {
        let est = CascadeEstimate {
            k_hat: vec![0, 1, 1],
            f_values: vec![0, 1, 2, 3],
            estimate: 3,
            theta: 0.0,
            survival: vec![1.0; 3],
            alpha: Some(0.1),
        };
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tau,F\n0,0\n1,1\n2,2\n3,3\n");
        let v: serde_json::Value = serde_json::from_str(&est.summary_json().unwrap()).unwrap();
        assert_eq!(v["k_hat_histogram"]["1"], 2);
    }
}
