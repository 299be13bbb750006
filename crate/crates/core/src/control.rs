//! Feedforward and feedback investment control.
//!
//! The feedforward term `u1` makes the affine offset of the current orthant
//! nonnegative. The feedback gain `K~` comes from LP1 and makes the closed-loop
//! matrix nonnegative with row sums below one. LP2 then turns the demanded
//! investment into asset shares `D` that respect budgets and asset capacities.

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{failed_coupling, investment_floor, FailureBoundBox};
use crate::dynamics::{
    bang_bang, build_transformed, build_transformed_with_investment, signature_of, ErrorMap, OrthantSignature,
    Trajectory,
};
use crate::lp::{solve_lp, solve_lp_warm, LinearProgram, LpError, LpStatus};
use crate::network::{CHat, FinancialNetwork};
use crate::numerics::{DenseMatrix, DenseVector};

/// Slack on the closed-loop nonnegativity and row-sum conclusions.
pub const CONCLUSION_TOL: f64 = 1e-10;
/// Demand residual tolerated on an LP2 solution.
pub const DEMAND_TOL: f64 = 1e-8;
/// Slack on LP2 budget and capacity sums.
pub const SHARE_SUM_TOL: f64 = 1e-9;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("slack xi[{index}] = {value} must be positive")]
    InvalidSlack { index: usize, value: f64 },
    #[error("epsilon {0} must be positive and finite")]
    InvalidEpsilon(f64),
    #[error("epsilon too large for row {row}: gamma = {gamma} < -mu = {neg_mu}")]
    InfeasibleEps { row: usize, gamma: f64, neg_mu: f64 },
    #[error("{stage} is infeasible")]
    LpInfeasible { stage: &'static str },
    #[error("{stage} is unbounded")]
    LpUnbounded { stage: &'static str },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("closed-loop check failed: {0}")]
    Conclusion(String),
    #[error("activation time {activation_t} beyond horizon {horizon}")]
    InvalidActivation { activation_t: usize, horizon: usize },
    #[error("step {t}: {source}")]
    Step {
        t: usize,
        #[source]
        source: Box<ControlError>,
    },
}

fn check_xi(xi: &DenseVector) -> Result<(), ControlError> {
    match xi.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        Some((index, &value)) => Err(ControlError::InvalidSlack { index, value }),
        None => Ok(()),
    }
}

/// `u1 = q + U + beta/2 + J xi`, so the closed-loop offset is `C_hat xi`.
pub fn design_u1(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    xi: &DenseVector,
) -> Result<DenseVector, ControlError> {
    check_xi(xi)?;
    let q = investment_floor(net, chat);
    let u = bang_bang(sig, net.beta);
    Ok(DenseVector::from_fn(net.n(), |i| {
        q[i] + u[i] + net.beta / 2.0 + sig.sign(i) * xi[i]
    }))
}

/// Healthy-row feedforward covering failed neighbours inside `bound`;
/// failed rows are zero.
pub fn design_u1_bounded(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    bound: &FailureBoundBox,
    xi: &DenseVector,
) -> Result<DenseVector, ControlError> {
    check_xi(xi)?;
    let q = investment_floor(net, chat);
    let coupling = failed_coupling(net, chat, sig, bound);
    Ok(DenseVector::from_fn(net.n(), |i| {
        if sig.is_negative(i) {
            0.0
        } else {
            q[i] - coupling[i] / chat.get(i) + xi[i]
        }
    }))
}

/// Closed-loop offset `b~` when the investment is `u1`.
pub fn closed_loop_offset(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    u1: &DenseVector,
) -> DenseVector {
    build_transformed_with_investment(net, chat, sig, u1).b_const
}

/// Row bounds of LP1: `(gamma, mu)`.
pub fn lp1_row_bounds(a: &DenseMatrix, chat: &CHat, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let sums = a.row_sums();
    let gamma = (0..a.rows()).map(|i| (1.0 - sums[i]) / chat.get(i) - epsilon).collect();
    let mu = (0..a.rows()).map(|i| sums[i] / chat.get(i)).collect();
    (gamma, mu)
}

/// Column-stacked position of `K~[(i, l)]`.
pub fn gain_index(n: usize, i: usize, l: usize) -> usize {
    l * n + i
}

/// LP1 over `vec(K~)`: maximise the total gain subject to
/// `k~_il >= -a_il / c_hat_ii`, `-mu_i <= sum_l k~_il <= gamma_i`, `k~_ii = 0`.
pub fn build_lp1(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    epsilon: f64,
) -> Result<LinearProgram, ControlError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ControlError::InvalidEpsilon(epsilon));
    }
    let n = net.n();
    let a = build_transformed(net, chat, sig).a;
    let (gamma, mu) = lp1_row_bounds(&a, chat, epsilon);
    for i in 0..n {
        if gamma[i] < -mu[i] {
            return Err(ControlError::InfeasibleEps {
                row: i,
                gamma: gamma[i],
                neg_mu: -mu[i],
            });
        }
    }
    let vars = n * n;
    let mut lhs = DenseMatrix::zeros(2 * n, vars);
    for i in 0..n {
        for l in 0..n {
            lhs[(i, gain_index(n, i, l))] = 1.0;
            lhs[(n + i, gain_index(n, i, l))] = -1.0;
        }
    }
    let rhs: Vec<f64> = gamma.iter().chain(&mu).copied().collect();
    let mut lower = vec![0.0; vars];
    for i in 0..n {
        for l in 0..n {
            lower[gain_index(n, i, l)] = -a[(i, l)] / chat.get(i);
        }
    }
    Ok(LinearProgram::new(DenseVector::filled(vars, -1.0))
        .with_inequalities(lhs, rhs.into())
        .with_lower_bounds(lower)
        .with_fixed((0..n).map(|i| (gain_index(n, i, i), 0.0)).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub a_tilde: DenseMatrix,
    pub b_tilde: DenseVector,
}

/// `A~ = A + C_hat K~` and the offset produced by `u1`.
pub fn closed_loop(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    u1: &DenseVector,
    k_tilde: &DenseMatrix,
) -> ClosedLoop {
    let ts = build_transformed_with_investment(net, chat, sig, u1);
    let n = net.n();
    ClosedLoop {
        a_tilde: DenseMatrix::from_fn(n, n, |i, l| ts.a[(i, l)] + chat.get(i) * k_tilde[(i, l)]),
        b_tilde: ts.b_const,
    }
}

/// Solves LP1 and checks that `A + C_hat K~` is nonnegative with zero
/// diagonal and row sums in `[0, 1 - c_hat_ii * epsilon]`.
pub fn design_k(
    net: &FinancialNetwork,
    chat: &CHat,
    sig: &OrthantSignature,
    epsilon: f64,
) -> Result<DenseMatrix, ControlError> {
    let lp = build_lp1(net, chat, sig, epsilon)?;
    let sol = solve_lp(&lp)?;
    let z = match sol.status {
        LpStatus::Optimal => sol.z.expect("optimal solution carries a point"),
        LpStatus::Infeasible => return Err(ControlError::LpInfeasible { stage: "LP1" }),
        LpStatus::Unbounded => return Err(ControlError::LpUnbounded { stage: "LP1" }),
    };
    let n = net.n();
    let k = DenseMatrix::from_fn(n, n, |i, l| z[gain_index(n, i, l)]);
    let a = build_transformed(net, chat, sig).a;
    let a_tilde = DenseMatrix::from_fn(n, n, |i, l| a[(i, l)] + chat.get(i) * k[(i, l)]);
    for i in 0..n {
        if a_tilde[(i, i)] != 0.0 {
            return Err(ControlError::Conclusion(format!(
                "diagonal entry {i} is {}",
                a_tilde[(i, i)]
            )));
        }
        let row = a_tilde.row(i);
        if let Some(l) = (0..n).find(|&l| row[l] < -CONCLUSION_TOL) {
            return Err(ControlError::Conclusion(format!("entry ({i}, {l}) is {}", row[l])));
        }
        let sum: f64 = row.iter().sum();
        let cap = 1.0 - chat.get(i) * epsilon + CONCLUSION_TOL;
        if !(-CONCLUSION_TOL..=cap).contains(&sum) {
            return Err(ControlError::Conclusion(format!("row {i} sums to {sum}")));
        }
    }
    Ok(k)
}

/// Feedback investment `u2 = J K~ X` with `X = J x`.
pub fn feedback(sig: &OrthantSignature, k_tilde: &DenseMatrix, x: &DenseVector) -> DenseVector {
    sig.apply(&k_tilde.mul_vec(&sig.apply(x)))
}

/// Demand `w = u1 + u2`, zeroed for failed companies and negative demands.
/// Returns `w` and the zeroed indices.
pub fn clamp_demands(u1: &DenseVector, u2: &DenseVector, sig: &OrthantSignature) -> (DenseVector, Vec<usize>) {
    let mut clamped = Vec::new();
    let w = DenseVector::from_fn(u1.len(), |i| {
        let total = u1[i] + u2[i];
        if sig.is_negative(i) || total < 0.0 {
            clamped.push(i);
            0.0
        } else {
            total
        }
    });
    (w, clamped)
}

/// Column-stacked position of `D[(i, l)]` among `n` companies.
pub fn share_index(n: usize, i: usize, l: usize) -> usize {
    l * n + i
}

/// LP2 over `vec(D)`: maximise total share subject to `sum_l p_l d_il = w_i`,
/// `sum_l d_il <= 1`, `sum_i d_il <= 1`, `d >= 0`.
pub fn build_lp2(w: &DenseVector, p: &DenseVector) -> LinearProgram {
    let (n, m) = (w.len(), p.len());
    let vars = n * m;
    let mut eq = DenseMatrix::zeros(n, vars);
    let mut ineq = DenseMatrix::zeros(n + m, vars);
    for i in 0..n {
        for l in 0..m {
            let k = share_index(n, i, l);
            eq[(i, k)] = p[l];
            ineq[(i, k)] = 1.0;
            ineq[(n + l, k)] = 1.0;
        }
    }
    LinearProgram::new(DenseVector::filled(vars, -1.0))
        .with_equalities(eq, w.clone())
        .with_inequalities(ineq, DenseVector::filled(n + m, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvestmentSolution {
    pub d_new: DenseMatrix,
    /// `|sum_l p_l d_il - w_i|` against the original demand.
    pub demands_met: Vec<f64>,
    pub clamped: Vec<usize>,
    /// Fraction of the demand that was satisfiable (1 unless LP2 was infeasible).
    pub scale: f64,
}

impl InvestmentSolution {
    pub fn realized_investment(&self, p: &DenseVector) -> DenseVector {
        self.d_new.mul_vec(p)
    }

    pub fn is_scaled(&self) -> bool {
        self.scale < 1.0
    }
}

fn expand(active: &[usize], n: usize, m: usize, z: &DenseVector) -> DenseMatrix {
    let k = active.len();
    let mut d = DenseMatrix::zeros(n, m);
    for (a, &i) in active.iter().enumerate() {
        for l in 0..m {
            d[(i, l)] = z[share_index(k, a, l)].clamp(0.0, 1.0);
        }
    }
    d
}

/// Largest `s <= 1` such that demands `s * w` are jointly satisfiable.
fn satisfiable_scale(w: &DenseVector, p: &DenseVector) -> Result<f64, ControlError> {
    let (n, m) = (w.len(), p.len());
    let base = build_lp2(w, p);
    let vars = n * m + 1;
    let s = n * m;
    let mut eq = DenseMatrix::zeros(n, vars);
    let mut ineq = DenseMatrix::zeros(n + m + 1, vars);
    for i in 0..n {
        eq.row_mut(i)[..n * m].copy_from_slice(base.eq_lhs.row(i));
        eq[(i, s)] = -w[i];
    }
    for r in 0..n + m {
        ineq.row_mut(r)[..n * m].copy_from_slice(base.ineq_lhs.row(r));
    }
    ineq[(n + m, s)] = 1.0;
    let mut objective = DenseVector::zeros(vars);
    objective[s] = -1.0;
    let lp = LinearProgram::new(objective)
        .with_equalities(eq, DenseVector::zeros(n))
        .with_inequalities(ineq, DenseVector::filled(n + m + 1, 1.0));
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.z.expect("optimal solution carries a point")[s].clamp(0.0, 1.0)),
        LpStatus::Infeasible => Err(ControlError::LpInfeasible { stage: "LP2 scaling" }),
        LpStatus::Unbounded => Err(ControlError::LpUnbounded { stage: "LP2 scaling" }),
    }
}

/// Solves LP2 on the companies with positive demand. When the demand cannot
/// be met, scales it down to the largest satisfiable fraction first.
pub fn solve_investment(
    w: &DenseVector,
    p: &DenseVector,
    clamped: Vec<usize>,
) -> Result<InvestmentSolution, ControlError> {
    InvestmentSolver::default().solve(w, p, clamped)
}

/// LP2 solver that reuses the previous optimal basis while the set of
/// companies with positive demand stays the same.
#[derive(Debug, Clone, Default)]
pub struct InvestmentSolver {
    previous: Option<(Vec<usize>, Vec<usize>)>,
}

impl InvestmentSolver {
    pub fn solve(
        &mut self,
        w: &DenseVector,
        p: &DenseVector,
        clamped: Vec<usize>,
    ) -> Result<InvestmentSolution, ControlError> {
        let (n, m) = (w.len(), p.len());
        let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
        let mut scale = 1.0;
        let d_new = if active.is_empty() {
            DenseMatrix::zeros(n, m)
        } else {
            let w_active = DenseVector::from_fn(active.len(), |a| w[active[a]]);
            let hint = match &self.previous {
                Some((set, basis)) if *set == active => Some(basis.as_slice()),
                _ => None,
            };
            let mut sol = solve_lp_warm(&build_lp2(&w_active, p), hint)?;
            if sol.status == LpStatus::Infeasible {
                scale = satisfiable_scale(&w_active, p)?;
                sol = solve_lp(&build_lp2(&w_active.scale(scale), p))?;
            }
            match sol.status {
                LpStatus::Optimal => {
                    let d = expand(&active, n, m, sol.z.as_ref().expect("optimal solution carries a point"));
                    self.previous = Some((active, sol.basis));
                    d
                }
                LpStatus::Infeasible => return Err(ControlError::LpInfeasible { stage: "LP2" }),
                LpStatus::Unbounded => return Err(ControlError::LpUnbounded { stage: "LP2" }),
            }
        };
        let realized = d_new.mul_vec(p);
        Ok(InvestmentSolution {
            demands_met: (0..n).map(|i| (realized[i] - w[i]).abs()).collect(),
            d_new,
            clamped,
            scale,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    U1Only,
    U1AndU2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedLoopConfig {
    pub horizon: usize,
    pub activation_t: usize,
    pub epsilon: f64,
    pub xi: DenseVector,
    pub mode: ControlMode,
    /// Reuse the first designed gain instead of redesigning every step.
    pub freeze_gain: bool,
}

impl ClosedLoopConfig {
    /// Defaults: `epsilon = 1e-6`, `xi` = 1% of the mean failure threshold.
    pub fn new(net: &FinancialNetwork, horizon: usize, activation_t: usize, mode: ControlMode) -> Self {
        let n = net.n();
        let mean = net.v_lo.iter().sum::<f64>() / n.max(1) as f64;
        Self {
            horizon,
            activation_t,
            epsilon: DEFAULT_EPSILON,
            xi: DenseVector::filled(n, 0.01 * mean),
            mode,
            freeze_gain: false,
        }
    }
}

/// One controlled step as exported to the control log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepPlan {
    pub t: usize,
    pub u1: DenseVector,
    #[serde(rename = "K_tilde", skip_serializing_if = "Option::is_none")]
    pub k_tilde: Option<Vec<(usize, usize, f64)>>,
    pub w: DenseVector,
    #[serde(rename = "D_new")]
    pub d_new: Vec<(usize, usize, f64)>,
    pub lp_status: String,
    pub clamped: Vec<usize>,
    pub max_demand_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    pub plans: Vec<StepPlan>,
    /// Largest closed-loop row sum per controlled step (only with feedback).
    pub closed_loop_row_sums: Vec<f64>,
}

impl ClosedLoopRun {
    pub fn control_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(&self.plans)
    }

    pub fn scaled_steps(&self) -> Vec<usize> {
        self.plans
            .iter()
            .filter(|p| p.lp_status != "optimal")
            .map(|p| p.t)
            .collect()
    }
}

fn controlled_step(
    net: &FinancialNetwork,
    chat: &CHat,
    x: &DenseVector,
    t: usize,
    cfg: &ClosedLoopConfig,
    gain: &mut Option<DenseMatrix>,
    investor: &mut InvestmentSolver,
) -> Result<(StepPlan, DenseVector, Option<f64>), ControlError> {
    let sig = signature_of(x);
    let u1 = if sig.negative_count() > 0 {
        design_u1_bounded(net, chat, &sig, &FailureBoundBox::at_state(x), &cfg.xi)?
    } else {
        design_u1(net, chat, &sig, &cfg.xi)?
    };
    let (u2, k_tilde, row_sum) = match cfg.mode {
        ControlMode::U1Only => (DenseVector::zeros(x.len()), None, None),
        ControlMode::U1AndU2 => {
            let k = match gain {
                Some(k) if cfg.freeze_gain => k.clone(),
                _ => design_k(net, chat, &sig, cfg.epsilon)?,
            };
            *gain = Some(k.clone());
            let cl = closed_loop(net, chat, &sig, &u1, &k);
            let row_max = cl.a_tilde.row_sums().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (feedback(&sig, &k, x), Some(k), Some(row_max))
        }
    };
    let (w, clamped) = clamp_demands(&u1, &u2, &sig);
    let inv = investor.solve(&w, &net.p, clamped)?;
    let realized = inv.realized_investment(&net.p);
    let max_residual = (0..w.len())
        .filter(|i| !inv.clamped.contains(i))
        .map(|i| inv.demands_met[i])
        .fold(0.0, f64::max);
    let plan = StepPlan {
        t,
        u1,
        k_tilde: k_tilde.map(|k| k.triplets()),
        w,
        d_new: inv.d_new.triplets(),
        lp_status: if inv.is_scaled() {
            format!("scaled({})", inv.scale)
        } else {
            "optimal".to_string()
        },
        clamped: inv.clamped,
        max_demand_residual: max_residual,
    };
    Ok((plan, realized, row_sum))
}

/// Open loop before `activation_t`; afterwards the control is redesigned at
/// every step and the realized investment `D_new p` replaces `D p`.
pub fn simulate_closed_loop(
    net: &FinancialNetwork,
    chat: &CHat,
    x0: &DenseVector,
    cfg: &ClosedLoopConfig,
) -> Result<ClosedLoopRun, ControlError> {
    if cfg.activation_t > cfg.horizon {
        return Err(ControlError::InvalidActivation {
            activation_t: cfg.activation_t,
            horizon: cfg.horizon,
        });
    }
    check_xi(&cfg.xi)?;
    let map = ErrorMap::new(net, chat);
    let mut traj = Trajectory::start(net, chat, x0.clone());
    let mut plans = Vec::new();
    let mut row_sums = Vec::new();
    let mut gain = None;
    let mut investor = InvestmentSolver::default();
    for t in 0..cfg.horizon {
        let x = traj.last().x.clone();
        let next = if t < cfg.activation_t {
            map.step(&x)
        } else {
            let (plan, realized, row_sum) = controlled_step(net, chat, &x, t, cfg, &mut gain, &mut investor)
                .map_err(|e| ControlError::Step { t, source: Box::new(e) })?;
            plans.push(plan);
            row_sums.extend(row_sum);
            map.step_with(&x, &realized)
        };
        traj.push(net, chat, next);
    }
    Ok(ClosedLoopRun {
        trajectory: traj,
        plans,
        closed_loop_row_sums: row_sums,
    })
}
