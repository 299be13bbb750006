//! Sufficient conditions for orthant invariance, stability and bounded
//! failure propagation, plus per-orthant equilibria.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{build_transformed, signature_of, ErrorMap, OrthantSignature};
use crate::network::{CHat, FinancialNetwork};
use crate::numerics::{solve_linear, DenseMatrix, DenseVector, NumericsError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("failure bound box: {0}")]
    InvalidBox(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionId {
    /// Failed rows: `(D p)_i <= q_i + beta`.
    #[serde(rename = "L1_neg")]
    L1Neg,
    /// Healthy rows: `(D p)_i >= q_i`.
    #[serde(rename = "L1_pos")]
    L1Pos,
    /// No holdings across the healthy/failed split.
    #[serde(rename = "L2_full")]
    L2Full,
    /// No holdings by healthy companies in failed ones.
    #[serde(rename = "L2_sub")]
    L2Sub,
    /// Weighted row sums strictly below one.
    #[serde(rename = "T2_rowsum")]
    T2RowSum,
    /// Healthy rows stay healthy for any failed state inside a box.
    #[serde(rename = "T3_bounded")]
    T3Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Index(usize),
    Pair(usize, usize),
}

/// Signed slack of one tested inequality; negative when violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    #[serde(flatten)]
    pub at: Location,
    pub margin: f64,
    /// Set when a strict inequality fails with exactly zero slack.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub marginal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_id: ConditionId,
    pub holds: bool,
    pub violations: Vec<Slack>,
    /// Slack at every tested location.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub margins: Vec<Slack>,
}

impl ConditionReport {
    fn from_margins(condition_id: ConditionId, margins: Vec<Slack>, strict: bool) -> Self {
        let violations: Vec<Slack> = margins
            .iter()
            .filter(|s| if strict { s.margin <= 0.0 } else { s.margin < 0.0 })
            .map(|s| Slack {
                marginal: strict && s.margin == 0.0,
                ..*s
            })
            .collect();
        Self {
            condition_id,
            holds: violations.is_empty(),
            violations,
            margins,
        }
    }

    pub fn violating_indices(&self) -> Vec<usize> {
        self.violations
            .iter()
            .filter_map(|s| match s.at {
                Location::Index(i) => Some(i),
                Location::Pair(..) => None,
            })
            .collect()
    }

    pub fn violating_pairs(&self) -> Vec<(usize, usize)> {
        self.violations
            .iter()
            .filter_map(|s| match s.at {
                Location::Pair(i, l) => Some((i, l)),
                Location::Index(_) => None,
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

fn slack(i: usize, margin: f64) -> Slack {
    Slack {
        at: Location::Index(i),
        margin,
        marginal: false,
    }
}

/// `q = (C_hat^{-1} - C C_hat^{-1}) v_lo`, the investment level at which a
/// healthy company's offset vanishes.
pub fn investment_floor(net: &FinancialNetwork, chat: &CHat) -> DenseVector {
    let scaled = chat.apply_inv(&net.v_lo);
    scaled.sub(&net.c.mul_vec(&scaled))
}

/// Sign conditions on the offset: `(L1_neg, L1_pos)`.
pub fn check_lemma1(net: &FinancialNetwork, chat: &CHat, sig: &OrthantSignature) -> (ConditionReport, ConditionReport) {
    let q = investment_floor(net, chat);
    let dp = net.external_investment();
    let neg = sig
        .n_set()
        .into_iter()
        .map(|i| slack(i, q[i] + net.beta - dp[i]))
        .collect();
    let pos = sig.p_set().into_iter().map(|i| slack(i, dp[i] - q[i])).collect();
    (
        ConditionReport::from_margins(ConditionId::L1Neg, neg, false),
        ConditionReport::from_margins(ConditionId::L1Pos, pos, false),
    )
}

/// Structural conditions on `C`; `sub_only` checks only healthy-holds-failed pairs.
pub fn check_lemma2(c: &DenseMatrix, sig: &OrthantSignature, sub_only: bool) -> ConditionReport {
    let n = c.rows();
    let mut violations = Vec::new();
    for i in 0..n {
        for l in 0..n {
            let crosses = if sub_only {
                !sig.is_negative(i) && sig.is_negative(l)
            } else {
                sig.is_negative(i) != sig.is_negative(l)
            };
            if crosses && c[(i, l)] != 0.0 {
                violations.push(Slack {
                    at: Location::Pair(i, l),
                    margin: -c[(i, l)].abs(),
                    marginal: false,
                });
            }
        }
    }
    ConditionReport {
        condition_id: if sub_only {
            ConditionId::L2Sub
        } else {
            ConditionId::L2Full
        },
        holds: violations.is_empty(),
        violations,
        margins: Vec::new(),
    }
}

/// `c_hat_ii * sum_{l != i} c_il / c_hat_ll` per row; equals the absolute row
/// sums of the transformed matrix under every signature.
pub fn weighted_row_sums(net: &FinancialNetwork, chat: &CHat) -> DenseVector {
    let n = net.n();
    DenseVector::from_fn(n, |i| {
        let s: f64 = (0..n).filter(|&l| l != i).map(|l| net.c[(i, l)] / chat.get(l)).sum();
        chat.get(i) * s
    })
}

/// Strict row-sum stability test; equality is a violation flagged marginal.
pub fn check_stability(net: &FinancialNetwork, chat: &CHat) -> ConditionReport {
    let margins = weighted_row_sums(net, chat)
        .iter()
        .enumerate()
        .map(|(i, r)| slack(i, 1.0 - r))
        .collect();
    ConditionReport::from_margins(ConditionId::T2RowSum, margins, true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub signature: OrthantSignature,
    /// Fixed point in transformed coordinates.
    pub big_x_star: DenseVector,
    pub x_star: DenseVector,
    pub v_star: DenseVector,
    /// Whether the fixed point lies in the orthant it was computed for.
    pub consistent: bool,
    pub stable: bool,
    /// `||(I - A) X* - b||_inf`.
    pub residual: f64,
}

/// Solves `(I - A) X* = b` for the orthant of `sig`.
pub fn equilibrium(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
) -> Result<EquilibriumResult, AnalysisError> {
    let ts = build_transformed(net, chat, sig);
    let n = net.n();
    let lhs = DenseMatrix::identity(n).sub(&ts.a);
    let big_x_star = solve_linear(&lhs, &ts.b_const)?;
    let residual = lhs.mul_vec(&big_x_star).max_abs_diff(&ts.b_const);
    let x_star = sig.apply(&big_x_star);
    let v_star = x_star.add(&net.v_lo);
    Ok(EquilibriumResult {
        consistent: signature_of(&x_star) == *sig,
        stable: check_stability(net, chat).holds,
        signature: sig.clone(),
        big_x_star,
        x_star,
        v_star,
        residual,
    })
}

/// Upper bounds on the transformed coordinates `X_l = -x_l` of failed companies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureBoundBox {
    /// Entry `l` bounds `X_l`; entries of healthy companies are ignored.
    pub x_bar: DenseVector,
}

impl FailureBoundBox {
    pub fn new(x_bar: DenseVector) -> Result<Self, AnalysisError> {
        if let Some(v) = x_bar.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(AnalysisError::InvalidBox(format!(
                "bound {v} is not a finite nonnegative value"
            )));
        }
        Ok(Self { x_bar })
    }

    /// The box `X_bar_l = |x_l|` on the failed set of `x`.
    pub fn at_state(x: &DenseVector) -> Self {
        Self {
            x_bar: DenseVector::from_fn(x.len(), |l| if x[l] < 0.0 { -x[l] } else { 0.0 }),
        }
    }

    /// Tightest box containing `max(0, -x_l)` over all given states.
    pub fn enclosing<'a>(n: usize, states: impl IntoIterator<Item = &'a DenseVector>) -> Self {
        let mut x_bar = DenseVector::zeros(n);
        for x in states {
            for l in 0..n {
                x_bar[l] = x_bar[l].max(-x[l]);
            }
        }
        Self { x_bar }
    }

    /// Whether `x` respects the box on the failed set of `sig`.
    pub fn contains(&self, sig: &OrthantSignature, x: &DenseVector) -> bool {
        sig.n_set().into_iter().all(|l| -x[l] <= self.x_bar[l])
    }
}

/// Which threshold the bounded-failure check evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem3Form {
    /// `q_i - c_hat_ii^{-1} (A_- X_bar)_i`, the form that implies invariance.
    #[default]
    Proof,
    /// `q_i - (A_- X_bar)_i`, without the `c_hat_ii^{-1}` factor.
    Stated,
}

/// `(A_- X_bar)_i` for each healthy row `i`, with `A_-` the healthy-by-failed block.
pub fn failed_coupling(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    bound: &FailureBoundBox,
) -> DenseVector {
    let n = net.n();
    let failed = sig.n_set();
    DenseVector::from_fn(n, |i| {
        if sig.is_negative(i) {
            return 0.0;
        }
        failed
            .iter()
            .map(|&l| -chat.get(i) * net.c[(i, l)] / chat.get(l) * bound.x_bar[l])
            .sum()
    })
}

/// Per-row investment threshold of the bounded-failure condition.
pub fn theorem3_threshold(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    bound: &FailureBoundBox,
    form: Theorem3Form,
) -> DenseVector {
    let q = investment_floor(net, chat);
    let coupling = failed_coupling(net, chat, sig, bound);
    DenseVector::from_fn(net.n(), |i| match form {
        Theorem3Form::Proof => q[i] - coupling[i] / chat.get(i),
        Theorem3Form::Stated => q[i] - coupling[i],
    })
}

pub fn check_theorem3(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    bound: &FailureBoundBox,
    form: Theorem3Form,
) -> Result<ConditionReport, AnalysisError> {
    if bound.x_bar.len() != net.n() {
        return Err(AnalysisError::InvalidBox(format!(
            "box has {} entries for {} companies",
            bound.x_bar.len(),
            net.n()
        )));
    }
    let threshold = theorem3_threshold(net, chat, sig, bound, form);
    let dp = net.external_investment();
    let margins = sig
        .p_set()
        .into_iter()
        .map(|i| slack(i, dp[i] - threshold[i]))
        .collect();
    Ok(ConditionReport::from_margins(ConditionId::T3Bounded, margins, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceMode {
    /// No company may change sign.
    Full,
    /// Healthy companies may not fail; failed ones may recover.
    Sub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InvarianceResult {
    pub holds: bool,
    /// First `(t, company)` breaking invariance.
    pub first_violation: Option<(usize, usize)>,
}

/// Simulates `horizon` steps from `x0` and reports the first exit from the
/// orthant set allowed by `mode`.
pub fn verify_invariance(
    net: &FinancialNetwork,
    chat: &CHat,
    x0: &DenseVector,
    horizon: usize,
    mode: InvarianceMode,
) -> InvarianceResult {
    let sig = signature_of(x0);
    let map = ErrorMap::new(net, chat);
    let mut x = x0.clone();
    for t in 1..=horizon {
        x = map.step(&x);
        let breach = (0..x.len()).find(|&i| {
            let now_negative = x[i] < 0.0;
            match mode {
                InvarianceMode::Full => now_negative != sig.is_negative(i),
                InvarianceMode::Sub => now_negative && !sig.is_negative(i),
            }
        });
        if let Some(i) = breach {
            return InvarianceResult {
                holds: false,
                first_violation: Some((t, i)),
            };
        }
    }
    InvarianceResult {
        holds: true,
        first_violation: None,
    }
}

/// Investment, cross-holding and stability reports for one signature.
pub fn condition_reports(net: &FinancialNetwork, chat: &CHat, sig: &OrthantSignature) -> Vec<ConditionReport> {
    let (neg, pos) = check_lemma1(net, chat, sig);
    vec![
        neg,
        pos,
        check_lemma2(&net.c, sig, false),
        check_lemma2(&net.c, sig, true),
        check_stability(net, chat),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::c_hat;
    use approx::assert_abs_diff_eq;

    fn decoupled(dp: Vec<f64>, v_lo: f64, beta: f64) -> FinancialNetwork {
        let n = dp.len();
        FinancialNetwork {
            c: DenseMatrix::zeros(n, n),
            d: DenseMatrix::identity(n),
            p: dp.into(),
            v_lo: DenseVector::filled(n, v_lo),
            beta,
        }
    }

    fn three_company(p: Vec<f64>) -> FinancialNetwork {
        FinancialNetwork {
            c: DenseMatrix::from_rows(&[vec![0.0, 0.1, 0.0], vec![0.1, 0.0, 0.1], vec![0.0, 0.1, 0.0]]).unwrap(),
            d: DenseMatrix::identity(3),
            p: p.into(),
            v_lo: DenseVector::filled(3, 2.0),
            beta: 4.0,
        }
    }

    #[test]
    fn investment_floor_zero_margin() {
        let net = decoupled(vec![5.0, 5.0], 5.0, 1.0);
        let chat = c_hat(&net).unwrap();
        let (neg, pos) = check_lemma1(&net, &chat, &OrthantSignature::positive(2));
        assert!(neg.holds && neg.margins.is_empty());
        assert!(pos.holds);
        assert!(pos.margins.iter().all(|s| s.margin == 0.0));
    }

    #[test]
    fn failed_rows_overinvested() {
        let net = decoupled(vec![12.0, 12.0], 5.0, 6.0);
        let chat = c_hat(&net).unwrap();
        let (neg, _) = check_lemma1(&net, &chat, &OrthantSignature::with_negative(2, &[0, 1]));
        assert!(!neg.holds);
        assert_eq!(neg.violating_indices(), vec![0, 1]);
        assert!(neg.violations.iter().all(|s| s.margin == -1.0));
    }

    #[test]
    fn cross_holding_cases() {
        let mut c = DenseMatrix::zeros(2, 2);
        c[(0, 1)] = 0.1;
        assert!(check_lemma2(&c, &OrthantSignature::positive(2), false).holds);
        let sig = OrthantSignature::from_signs(vec![1, -1]);
        let sub = check_lemma2(&c, &sig, true);
        assert_eq!(sub.violating_pairs(), vec![(0, 1)]);
        let rev = OrthantSignature::from_signs(vec![-1, 1]);
        assert!(check_lemma2(&c, &rev, true).holds);
        assert!(!check_lemma2(&c, &rev, false).holds);
    }

    #[test]
    fn cross_holding_block_diagonal() {
        let c = DenseMatrix::from_rows(&[
            vec![0.0, 0.2, 0.0, 0.0],
            vec![0.1, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.3],
            vec![0.0, 0.0, 0.2, 0.0],
        ])
        .unwrap();
        let sig = OrthantSignature::with_negative(4, &[2, 3]);
        assert!(check_lemma2(&c, &sig, false).holds);
        assert!(check_lemma2(&c, &sig, true).holds);
    }

    #[test]
    fn stability_ninety_percent_example() {
        // Company 1 owns 90% of company 0, so c_hat_0 = 0.1; company 0 holds
        // 9/19 of company 2, so c_0l / c_hat_l = 0.9.
        let mut net = decoupled(vec![1.0; 3], 1.0, 1.0);
        net.c[(1, 0)] = 0.9;
        net.c[(0, 2)] = 9.0 / 19.0;
        let chat = c_hat(&net).unwrap();
        assert_abs_diff_eq!(chat.get(0), 0.1, epsilon = 1e-15);
        let rep = check_stability(&net, &chat);
        assert!(!rep.violating_indices().contains(&0));
        assert_abs_diff_eq!(weighted_row_sums(&net, &chat)[0], 0.09, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.margins[0].margin, 0.91, epsilon = 1e-15);
    }

    #[test]
    fn stability_violation_margin() {
        let mut net = decoupled(vec![1.0; 2], 1.0, 1.0);
        net.c[(0, 1)] = 0.5;
        net.c[(1, 0)] = 0.3;
        let chat = c_hat(&net).unwrap();
        assert_abs_diff_eq!(weighted_row_sums(&net, &chat)[0], 0.7, epsilon = 1e-12);
        let mut scaled = net.clone();
        scaled.c[(0, 1)] = 0.6;
        // c_hat = (0.7, 0.4): row 0 is 0.7 * 0.6 / 0.4 = 1.05.
        let chat = c_hat(&scaled).unwrap();
        let rep = check_stability(&scaled, &chat);
        assert_eq!(rep.violating_indices(), vec![0]);
        assert_abs_diff_eq!(rep.violations[0].margin, -0.05, epsilon = 1e-12);
    }

    #[test]
    fn stability_equality_is_marginal() {
        let mut net = decoupled(vec![1.0; 2], 1.0, 1.0);
        net.c[(0, 1)] = 0.5;
        net.c[(1, 0)] = 0.5;
        let chat = c_hat(&net).unwrap();
        assert!(check_stability(&net, &chat).holds);
        let mut edge = decoupled(vec![1.0; 2], 1.0, 1.0);
        edge.c[(0, 1)] = 0.5;
        let chat = CHat {
            diag: vec![1.0, 0.5].into(),
        };
        let rep = check_stability(&edge, &chat);
        assert!(!rep.holds);
        assert!(rep.violations[0].marginal);
        assert_eq!(rep.violations[0].margin, 0.0);
    }

    #[test]
    fn equilibrium_decoupled() {
        let net = decoupled(vec![7.0, 9.0], 5.0, 1.0);
        let chat = c_hat(&net).unwrap();
        let eq = equilibrium(&net, &chat, &OrthantSignature::positive(2)).unwrap();
        assert_eq!(eq.big_x_star.as_slice(), &[2.0, 4.0]);
        assert!(eq.consistent && eq.stable);
        assert_eq!(eq.v_star.as_slice(), &[7.0, 9.0]);
    }

    #[test]
    fn equilibrium_three_company_matches_iteration() {
        let net = three_company(vec![3.0, 3.0, 3.0]);
        let chat = c_hat(&net).unwrap();
        let sig = OrthantSignature::positive(3);
        assert!(check_lemma1(&net, &chat, &sig).1.holds);
        let eq = equilibrium(&net, &chat, &sig).unwrap();
        let map = ErrorMap::new(&net, &chat);
        let mut x = DenseVector::filled(3, 1.0);
        for _ in 0..10_000 {
            x = map.step(&x);
        }
        assert!(x.max_abs_diff(&eq.x_star) < 1e-8);
        assert!(eq.residual < 1e-8);
    }

    #[test]
    fn equilibrium_inconsistent_flagged() {
        let net = decoupled(vec![1.0, 9.0], 5.0, 1.0);
        let chat = c_hat(&net).unwrap();
        let eq = equilibrium(&net, &chat, &OrthantSignature::positive(2)).unwrap();
        assert!(!eq.consistent);
    }

    #[test]
    fn bounded_reduces_without_coupling() {
        let net = three_company(vec![3.0, 1.0, 3.0]);
        let chat = c_hat(&net).unwrap();
        let sig = OrthantSignature::with_negative(3, &[1]);
        let zero = FailureBoundBox::new(DenseVector::zeros(3)).unwrap();
        let t3 = check_theorem3(&net, &chat, &sig, &zero, Theorem3Form::Proof).unwrap();
        let (_, l1) = check_lemma1(&net, &chat, &sig);
        assert_eq!(t3.margins, l1.margins);
    }

    #[test]
    fn bounded_box_term() {
        let net = three_company(vec![3.0, 1.0, 3.0]);
        let chat = c_hat(&net).unwrap();
        let sig = OrthantSignature::with_negative(3, &[1]);
        let mut bar = DenseVector::zeros(3);
        bar[1] = 10.0;
        let bound = FailureBoundBox::new(bar).unwrap();
        let rep = check_theorem3(&net, &chat, &sig, &bound, Theorem3Form::Proof).unwrap();
        let (_, l1) = check_lemma1(&net, &chat, &sig);
        let a01 = -0.9 * 0.1 / 0.8;
        assert_abs_diff_eq!(
            rep.margins[0].margin,
            l1.margins[0].margin + a01 * 10.0 / 0.9,
            epsilon = 1e-12
        );
        let stated = check_theorem3(&net, &chat, &sig, &bound, Theorem3Form::Stated).unwrap();
        assert_abs_diff_eq!(
            stated.margins[0].margin,
            l1.margins[0].margin + a01 * 10.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn invariance_decoupled() {
        let net = decoupled(vec![7.0, 9.0], 5.0, 1.0);
        let chat = c_hat(&net).unwrap();
        let r = verify_invariance(&net, &chat, &DenseVector::filled(2, 1.0), 100, InvarianceMode::Full);
        assert!(r.holds);
        let sick = decoupled(vec![4.0, 9.0], 5.0, 1.0);
        let r = verify_invariance(&sick, &chat, &DenseVector::filled(2, 1.0), 100, InvarianceMode::Sub);
        assert_eq!(r.first_violation, Some((1, 0)));
    }

    #[test]
    fn report_json_shape() {
        let mut c = DenseMatrix::zeros(2, 2);
        c[(0, 1)] = 0.1;
        let rep = check_lemma2(&c, &OrthantSignature::from_signs(vec![1, -1]), true);
        let v: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(v["condition_id"], "L2_sub");
        assert_eq!(v["violations"][0]["pair"], serde_json::json!([0, 1]));
    }
}
