//! Equity-space and error-space dynamics, the orthant transform and
//! open-loop trajectory simulation.
//!
//! The error coordinate `x = C_hat V - v_lo` is the quantity simulated; a
//! company is failed at step `t` when `x_i(t) < 0`. Orthants are identified
//! by their sign vector, never by an index among the `2^n` possibilities.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::network::{CHat, FinancialNetwork};
use crate::numerics::{DenseMatrix, DenseVector};

/// Sign pattern `J = diag(signs)` of one orthant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrthantSignature {
    signs: Vec<i8>,
}

impl OrthantSignature {
    pub fn positive(n: usize) -> Self {
        Self { signs: vec![1; n] }
    }

    /// Panics if any sign is not `+1` or `-1`.
    pub fn from_signs(signs: Vec<i8>) -> Self {
        assert!(signs.iter().all(|&s| s == 1 || s == -1), "signs must be +1 or -1");
        Self { signs }
    }

    /// `-1` exactly at the given (failed) indices.
    pub fn with_negative(n: usize, negative: &[usize]) -> Self {
        let mut signs = vec![1; n];
        for &i in negative {
            signs[i] = -1;
        }
        Self { signs }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign(&self, i: usize) -> f64 {
        f64::from(self.signs[i])
    }

    pub fn is_negative(&self, i: usize) -> bool {
        self.signs[i] < 0
    }

    /// Indices with sign `+1`.
    pub fn p_set(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_negative(i)).collect()
    }

    /// Indices with sign `-1`.
    pub fn n_set(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_negative(i)).collect()
    }

    pub fn negative_count(&self) -> usize {
        self.signs.iter().filter(|&&s| s < 0).count()
    }

    /// `J x`; an involution.
    pub fn apply(&self, x: &DenseVector) -> DenseVector {
        DenseVector::from_fn(x.len(), |i| if self.is_negative(i) { -x[i] } else { x[i] })
    }
}

/// Equity, market value and error at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: usize,
    pub equity: DenseVector,
    pub value: DenseVector,
    pub x: DenseVector,
}

impl SystemState {
    /// Derives equity and market value from an error vector.
    pub fn from_error(t: usize, net: &FinancialNetwork, chat: &CHat, x: DenseVector) -> Self {
        let value = x.add(&net.v_lo);
        let equity = chat.apply_inv(&value);
        Self { t, equity, value, x }
    }

    /// Derives market value and error from an equity vector.
    pub fn from_equity(t: usize, net: &FinancialNetwork, chat: &CHat, equity: DenseVector) -> Self {
        let value = chat.apply(&equity);
        let x = value.sub(&net.v_lo);
        Self { t, equity, value, x }
    }
}

/// Failure cost: `beta` where `x_i < 0`, else `0`.
pub fn penalty(x: &DenseVector, beta: f64) -> DenseVector {
    DenseVector::from_fn(x.len(), |i| if x[i] < 0.0 { beta } else { 0.0 })
}

/// `V' = C V + D p - phi(v)`.
pub fn step_equity(net: &FinancialNetwork, chat: &CHat, state: &SystemState) -> SystemState {
    let phi = penalty(&state.x, net.beta);
    let equity = net.c.mul_vec(&state.equity).add(&net.external_investment()).sub(&phi);
    SystemState::from_equity(state.t + 1, net, chat, equity)
}

/// `C_hat C C_hat^{-1}`.
pub fn similarity(net: &FinancialNetwork, chat: &CHat) -> DenseMatrix {
    let n = net.n();
    DenseMatrix::from_fn(n, n, |i, l| chat.get(i) * net.c[(i, l)] / chat.get(l))
}

/// Error-space step with the network's own investment `D p`.
pub fn step_error(net: &FinancialNetwork, chat: &CHat, x: &DenseVector) -> DenseVector {
    step_error_with_investment(net, chat, x, &net.external_investment())
}

/// Error-space step with an explicit investment vector in place of `D p`.
pub fn step_error_with_investment(
    net: &FinancialNetwork,
    chat: &CHat,
    x: &DenseVector,
    investment: &DenseVector,
) -> DenseVector {
    ErrorMap::new(net, chat).step_with(x, investment)
}

/// Precomputed pieces of the error-space map.
#[derive(Debug, Clone)]
pub struct ErrorMap {
    m: DenseMatrix,
    /// `(M - I) v_lo`.
    drift: DenseVector,
    chat: DenseVector,
    investment: DenseVector,
    beta: f64,
}

impl ErrorMap {
    pub fn new(net: &FinancialNetwork, chat: &CHat) -> Self {
        let m = similarity(net, chat);
        let drift = m.mul_vec(&net.v_lo).sub(&net.v_lo);
        Self {
            m,
            drift,
            chat: chat.diag.clone(),
            investment: net.external_investment(),
            beta: net.beta,
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn step(&self, x: &DenseVector) -> DenseVector {
        self.step_with(x, &self.investment)
    }

    /// `x' = M x + (M - I) v_lo + C_hat (u - U(x) - beta/2)`, where
    /// `U(x) + beta/2` is the penalty vector.
    pub fn step_with(&self, x: &DenseVector, investment: &DenseVector) -> DenseVector {
        let mx = self.m.mul_vec(x);
        DenseVector::from_fn(x.len(), |i| {
            let phi = if x[i] < 0.0 { self.beta } else { 0.0 };
            mx[i] + self.drift[i] + self.chat[i] * (investment[i] - phi)
        })
    }
}

pub fn signature_of(x: &DenseVector) -> OrthantSignature {
    OrthantSignature {
        signs: x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect(),
    }
}

/// Affine system `X' = A X + b_const` in the coordinate `X = J x`, valid
/// while the state stays in the orthant of `signature`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSystem {
    pub signature: OrthantSignature,
    pub a: DenseMatrix,
    pub b_const: DenseVector,
}

/// Bang-bang input `U` of an orthant: `+beta/2` on failed rows, else `-beta/2`.
pub fn bang_bang(sig: &OrthantSignature, beta: f64) -> DenseVector {
    DenseVector::from_fn(sig.len(), |i| if sig.is_negative(i) { beta / 2.0 } else { -beta / 2.0 })
}

pub fn build_transformed(net: &FinancialNetwork, chat: &CHat, sig: &OrthantSignature) -> TransformedSystem {
    build_transformed_with_investment(net, chat, sig, &net.external_investment())
}

pub fn build_transformed_with_investment(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    investment: &DenseVector,
) -> TransformedSystem {
    let n = net.n();
    let a = DenseMatrix::from_fn(n, n, |i, l| {
        if i == l {
            0.0
        } else {
            sig.sign(i) * chat.get(i) * net.c[(i, l)] / chat.get(l) * sig.sign(l)
        }
    });
    let m = similarity(net, chat);
    let drift = m.mul_vec(&net.v_lo).sub(&net.v_lo);
    let u = bang_bang(sig, net.beta);
    let inner = DenseVector::from_fn(n, |i| drift[i] + chat.get(i) * (investment[i] - u[i] - net.beta / 2.0));
    TransformedSystem {
        signature: sig.clone(),
        a,
        b_const: sig.apply(&inner),
    }
}

pub fn step_transformed(ts: &TransformedSystem, big_x: &DenseVector) -> DenseVector {
    ts.a.mul_vec(big_x).add(&ts.b_const)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Fail,
    Recover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub t: usize,
    pub company: usize,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SystemState>,
    pub signatures: Vec<OrthantSignature>,
    pub failure_events: Vec<FailureEvent>,
}

impl Trajectory {
    pub fn start(net: &FinancialNetwork, chat: &CHat, x0: DenseVector) -> Self {
        let sig = signature_of(&x0);
        Self {
            states: vec![SystemState::from_error(0, net, chat, x0)],
            signatures: vec![sig],
            failure_events: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last(&self) -> &SystemState {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn last_signature(&self) -> &OrthantSignature {
        self.signatures.last().expect("trajectory is never empty")
    }

    /// Appends the next error vector and records sign changes.
    pub fn push(&mut self, net: &FinancialNetwork, chat: &CHat, x: DenseVector) {
        let t = self.states.len();
        let sig = signature_of(&x);
        let prev = self.signatures.last().expect("trajectory is never empty");
        for i in 0..sig.len() {
            let direction = match (prev.is_negative(i), sig.is_negative(i)) {
                (false, true) => Direction::Fail,
                (true, false) => Direction::Recover,
                _ => continue,
            };
            self.failure_events.push(FailureEvent {
                t,
                company: i,
                direction,
            });
        }
        self.states.push(SystemState::from_error(t, net, chat, x));
        self.signatures.push(sig);
    }

    pub fn failed_count(&self, t: usize) -> usize {
        self.signatures[t].negative_count()
    }

    pub fn terminal_failures(&self) -> usize {
        self.last_signature().negative_count()
    }

    /// CSV with columns `t, x_1..x_n, failed_count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.x.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.push("failed_count".to_string());
        writeln!(w, "{}", header.join(","))?;
        for (state, sig) in self.states.iter().zip(&self.signatures) {
            write!(w, "{}", state.t)?;
            for v in state.x.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", sig.negative_count())?;
        }
        Ok(())
    }

    pub fn events_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&self.failure_events)
    }
}

/// Open-loop simulation of the error dynamics for `horizon` steps.
pub fn simulate(net: &FinancialNetwork, chat: &CHat, x0: &DenseVector, horizon: usize) -> Trajectory {
    let map = ErrorMap::new(net, chat);
    let mut traj = Trajectory::start(net, chat, x0.clone());
    for _ in 0..horizon {
        let next = map.step(&traj.last().x);
        traj.push(net, chat, next);
    }
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::c_hat;
    use approx::assert_abs_diff_eq;

    fn decoupled(n: usize, dp: f64, v_lo: f64) -> FinancialNetwork {
        FinancialNetwork {
            c: DenseMatrix::zeros(n, n),
            d: DenseMatrix::identity(n),
            p: DenseVector::filled(n, dp),
            v_lo: DenseVector::filled(n, v_lo),
            beta: 10.0,
        }
    }

    fn three_company() -> FinancialNetwork {
        let c = DenseMatrix::from_rows(&[vec![0.0, 0.1, 0.0], vec![0.1, 0.0, 0.1], vec![0.0, 0.1, 0.0]]).unwrap();
        FinancialNetwork {
            c,
            d: DenseMatrix::identity(3),
            p: vec![3.0, 1.0, 2.0].into(),
            v_lo: vec![2.0, 2.0, 2.0].into(),
            beta: 4.0,
        }
    }

    #[test]
    fn penalty_cases() {
        let x = DenseVector::from(vec![1.0, -1.0]);
        assert_eq!(penalty(&x, 5000.0).as_slice(), &[0.0, 5000.0]);
        assert_eq!(penalty(&DenseVector::zeros(3), 5000.0).as_slice(), &[0.0; 3]);
        assert_eq!(penalty(&DenseVector::filled(2, -1.0), 2.0).as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn decoupled_fixed_point() {
        let net = decoupled(3, 4.0, 4.0);
        let chat = c_hat(&net).unwrap();
        let s0 = SystemState::from_equity(0, &net, &chat, net.v_lo.clone());
        let s1 = step_equity(&net, &chat, &s0);
        assert_eq!(s1.equity, net.v_lo);
        assert_eq!(s1.t, 1);
    }

    #[test]
    fn decoupled_memoryless() {
        let mut net = decoupled(2, 0.0, 1.0);
        net.p = vec![7.0, 3.0].into();
        let chat = c_hat(&net).unwrap();
        let s0 = SystemState::from_error(0, &net, &chat, vec![5.0, 0.0].into());
        let s1 = step_equity(&net, &chat, &s0);
        assert_eq!(s1.equity.as_slice(), &[7.0, 3.0]);
        let x1 = step_error(&net, &chat, &s0.x);
        assert_eq!(x1, net.external_investment().sub(&net.v_lo));
    }

    #[test]
    fn three_company_steppers_agree() {
        let net = three_company();
        let chat = c_hat(&net).unwrap();
        assert_eq!(chat.diag.as_slice(), &[0.9, 0.8, 0.9]);
        let x = DenseVector::from(vec![0.5, -0.3, 1.0]);
        let via_error = step_error(&net, &chat, &x);
        let state = SystemState::from_error(0, &net, &chat, x.clone());
        let via_equity = step_equity(&net, &chat, &state).x;
        assert!(via_error.max_abs_diff(&via_equity) < 1e-10);
        let ts = build_transformed(&net, &chat, &signature_of(&x));
        let via_transformed = ts.signature.apply(&step_transformed(&ts, &ts.signature.apply(&x)));
        assert!(via_error.max_abs_diff(&via_transformed) < 1e-10);
    }

    #[test]
    fn single_failure_adds_scaled_beta() {
        let net = three_company();
        let chat = c_hat(&net).unwrap();
        let healthy = step_error(&net, &chat, &DenseVector::from(vec![0.5, 0.0, 1.0]));
        // Perturb the other rows' effect away by comparing with the same x shifted in the orthant.
        let failed_x = DenseVector::from(vec![0.5, -1e-300, 1.0]);
        let failed = step_error(&net, &chat, &failed_x);
        assert_abs_diff_eq!(healthy[1] - failed[1], 0.8 * net.beta, epsilon = 1e-12);
        assert_abs_diff_eq!(healthy[0], failed[0], epsilon = 1e-12);
    }

    #[test]
    fn signatures() {
        let s = signature_of(&DenseVector::from(vec![0.0, -0.0001, 3.0]));
        assert_eq!(s.signs(), &[1, -1, 1]);
        assert_eq!(s.p_set(), vec![0, 2]);
        assert_eq!(s.n_set(), vec![1]);
        assert_eq!(signature_of(&DenseVector::filled(3, -2.0)).negative_count(), 3);
        assert_eq!(
            signature_of(&DenseVector::filled(3, 2.0)),
            OrthantSignature::positive(3)
        );
    }

    #[test]
    fn positive_signature_keeps_matrix() {
        let net = three_company();
        let chat = c_hat(&net).unwrap();
        let ts = build_transformed(&net, &chat, &OrthantSignature::positive(3));
        assert_eq!(ts.a, similarity(&net, &chat));
        let expected = similarity(&net, &chat)
            .mul_vec(&net.v_lo)
            .sub(&net.v_lo)
            .add(&chat.apply(&net.external_investment()));
        assert!(ts.b_const.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn mixed_signature_flips_coupling() {
        let mut net = decoupled(2, 1.0, 1.0);
        net.c[(0, 1)] = 0.2;
        let chat = c_hat(&net).unwrap();
        let ts = build_transformed(&net, &chat, &OrthantSignature::from_signs(vec![1, -1]));
        assert_abs_diff_eq!(ts.a[(0, 1)], -0.2 / 0.8, epsilon = 1e-15);
        assert_eq!(ts.a[(1, 0)], 0.0);
    }

    #[test]
    fn zero_coupling_zero_matrix() {
        let net = decoupled(3, 1.0, 1.0);
        let chat = c_hat(&net).unwrap();
        for signs in [vec![1, 1, 1], vec![-1, 1, -1], vec![-1, -1, -1]] {
            let ts = build_transformed(&net, &chat, &OrthantSignature::from_signs(signs));
            assert_eq!(ts.a, DenseMatrix::zeros(3, 3));
            assert_eq!(step_transformed(&ts, &DenseVector::filled(3, 9.0)), ts.b_const);
        }
    }

    #[test]
    fn healthy_decoupled_market_never_fails() {
        let net = decoupled(4, 6.0, 5.0);
        let chat = c_hat(&net).unwrap();
        let traj = simulate(&net, &chat, &DenseVector::filled(4, 1.0), 50);
        assert!(traj.failure_events.is_empty());
        assert_eq!(traj.horizon(), 50);
    }

    #[test]
    fn events_follow_signatures() {
        let net = decoupled(2, 1.0, 2.0);
        let chat = c_hat(&net).unwrap();
        let traj = simulate(&net, &chat, &DenseVector::from(vec![1.0, -1.0]), 3);
        assert_eq!(
            traj.failure_events[0],
            FailureEvent {
                t: 1,
                company: 0,
                direction: Direction::Fail
            }
        );
        assert_eq!(traj.terminal_failures(), 2);
    }

    #[test]
    fn csv_layout() {
        let net = decoupled(2, 1.0, 2.0);
        let chat = c_hat(&net).unwrap();
        let traj = simulate(&net, &chat, &DenseVector::from(vec![1.0, -1.0]), 1);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,x_2,failed_count");
        assert_eq!(lines[1], "0,1,-1,1");
        assert_eq!(lines.len(), 3);
    }
}
