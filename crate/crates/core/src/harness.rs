//! Scenario configuration, seeded experiment runs and artifact emission.
//!
//! A [`ScenarioConfig`] names one network source, an initial error vector, a
//! horizon and optionally a controller. [`run`] executes every seed, writing
//! results under `outputs/seed_<seed>/`. Nothing written depends on wall time,
//! so two runs of the same config produce byte-identical files.

use std::collections::BTreeSet;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    check_lemma1, check_theorem3, condition_reports, AnalysisError, ConditionId, ConditionReport, FailureBoundBox,
    Theorem3Form,
};
use crate::control::{simulate_closed_loop, ClosedLoopConfig, ControlError, ControlMode, StepPlan, DEFAULT_EPSILON};
use crate::dynamics::{signature_of, simulate, OrthantSignature, Trajectory};
use crate::estimate::{estimate_from_network, pilot_xi_bar, CascadeEstimate, EstimateOptions, ThetaMode, WeightPolicy};
use crate::network::{c_hat, generate, CHat, FinancialNetwork, NetworkError, NetworkGenSpec, NetworkKind};
use crate::numerics::{DenseMatrix, DenseVector};

/// Step at which the open-loop failure set is compared with later failures.
pub const DEFAULT_CHECKPOINT: usize = 60;

const TABLE1_N: usize = 100;
const TABLE1_V_LO: f64 = 100.0;
const TABLE1_BETA: f64 = 5000.0;
const TABLE1_X_LOW: f64 = 1.0;
const TABLE1_X_HIGH: f64 = 5000.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("seed {seed}: {source}")]
    Network {
        seed: u64,
        #[source]
        source: NetworkError,
    },
    #[error("seed {seed}: {source}")]
    Control {
        seed: u64,
        #[source]
        source: ControlError,
    },
    #[error("seed {seed}: {source}")]
    Analysis {
        seed: u64,
        #[source]
        source: AnalysisError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Io,
}

impl HarnessError {
    pub fn class(&self) -> ErrorClass {
        match self {
            Self::Config(_) | Self::Json(_) => ErrorClass::Config,
            Self::Network { source, .. } => match source {
                NetworkError::Io(_) => ErrorClass::Io,
                _ => ErrorClass::Config,
            },
            Self::Control { source, .. } => match source {
                ControlError::InvalidSlack { .. }
                | ControlError::InvalidEpsilon(_)
                | ControlError::InvalidActivation { .. } => ErrorClass::Config,
                _ => ErrorClass::Numerical,
            },
            Self::Analysis { .. } => ErrorClass::Numerical,
            Self::Io { .. } => ErrorClass::Io,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Prices, thresholds and asset holdings attached to a generated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketSpec {
    /// One asset per company held fully, `p_h = 1 + 6h`, `v_lo = 100`, `beta = 5000`.
    Table1,
    Custom {
        p: Vec<f64>,
        v_lo: Vec<f64>,
        beta: f64,
        /// `(company, asset, share)` triplets.
        #[serde(rename = "D")]
        d: Vec<(usize, usize, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    #[serde(flatten)]
    pub kind: NetworkKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default = "default_market")]
    pub market: MarketSpec,
}

fn default_market() -> MarketSpec {
    MarketSpec::Table1
}

impl GenerateSpec {
    pub fn gen_spec(&self, seed: u64) -> NetworkGenSpec {
        NetworkGenSpec {
            kind: self.kind,
            n: self.n,
            weight: self.weight,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    /// A fresh random network per seed.
    Generate(GenerateSpec),
    File(PathBuf),
    Inline(FinancialNetwork),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// The pair `(1, 5000)` repeated along the companies.
    Table1,
    /// Evenly spaced from 1 to 5000.
    Linspace,
    Inline(Vec<f64>),
}

impl InitialState {
    pub fn build(&self, n: usize) -> Result<DenseVector, HarnessError> {
        match self {
            Self::Table1 => Ok(DenseVector::from_fn(n, |i| {
                if i % 2 == 0 {
                    TABLE1_X_LOW
                } else {
                    TABLE1_X_HIGH
                }
            })),
            Self::Linspace => Ok(DenseVector::from_fn(n, |i| {
                if n == 1 {
                    TABLE1_X_LOW
                } else {
                    TABLE1_X_LOW + (TABLE1_X_HIGH - TABLE1_X_LOW) * i as f64 / (n - 1) as f64
                }
            })),
            Self::Inline(x) if x.len() == n => Ok(x.clone().into()),
            Self::Inline(x) => Err(HarnessError::Config(format!(
                "x0 has {} entries for {n} companies",
                x.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub activation_t: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Uniform target slack; defaults to 1% of the mean failure threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    pub mode: ControlMode,
    #[serde(default)]
    pub freeze_gain: bool,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateSpec {
    /// Fixed failure-state bound; otherwise taken from the open-loop run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_bar: Option<f64>,
    #[serde(default)]
    pub weights: WeightPolicy,
    #[serde(default)]
    pub theta_mode: ThetaMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub network: NetworkSource,
    pub x0: InitialState,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    #[serde(default)]
    pub estimate: EstimateSpec,
    pub seeds: Vec<u64>,
    pub outputs: PathBuf,
}

/// Reference scenario (100 companies, one asset each, T = 300) on a uniform
/// 20% network with seed 0.
pub fn preset_table1() -> ScenarioConfig {
    ScenarioConfig {
        network: NetworkSource::Generate(GenerateSpec {
            kind: NetworkKind::UniformRandom { link_prob: 0.2 },
            n: TABLE1_N,
            weight: None,
            market: MarketSpec::Table1,
        }),
        x0: InitialState::Table1,
        horizon: 300,
        control: None,
        estimate: EstimateSpec::default(),
        seeds: vec![0],
        outputs: PathBuf::from("out"),
    }
}

/// Market data of the reference scenario for `n` companies.
pub fn table1_market(n: usize) -> (DenseMatrix, DenseVector, DenseVector, f64) {
    (
        DenseMatrix::identity(n),
        DenseVector::from_fn(n, |h| 1.0 + 6.0 * h as f64),
        DenseVector::filled(n, TABLE1_V_LO),
        TABLE1_BETA,
    )
}

/// A network and initial state ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub net: FinancialNetwork,
    pub chat: CHat,
    pub x0: DenseVector,
    pub mean_degree: f64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.horizon == 0 {
            return Err(HarnessError::Config("horizon must be at least 1".to_string()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".to_string()));
        }
        if let Some(ctrl) = &self.control {
            if ctrl.activation_t > self.horizon {
                return Err(HarnessError::Config(format!(
                    "activation_t {} beyond horizon {}",
                    ctrl.activation_t, self.horizon
                )));
            }
        }
        Ok(())
    }

    /// Step used to split failures into early and late ones.
    pub fn checkpoint(&self) -> usize {
        match &self.control {
            Some(ctrl) => ctrl.activation_t,
            None => DEFAULT_CHECKPOINT.min(self.horizon),
        }
    }

    pub fn network_for_seed(&self, seed: u64) -> Result<FinancialNetwork, HarnessError> {
        let wrap = |source| HarnessError::Network { seed, source };
        match &self.network {
            NetworkSource::Generate(spec) => {
                let skeleton = generate(&spec.gen_spec(seed)).map_err(wrap)?;
                let n = spec.n;
                let (d, p, v_lo, beta) = match &spec.market {
                    MarketSpec::Table1 => table1_market(n),
                    MarketSpec::Custom { p, v_lo, beta, d } => {
                        let mut dm = DenseMatrix::zeros(n, p.len());
                        for &(i, h, v) in d {
                            if i >= n || h >= p.len() {
                                return Err(HarnessError::Config(format!("asset share ({i}, {h}) out of range")));
                            }
                            dm[(i, h)] = v;
                        }
                        if v_lo.len() != n {
                            return Err(HarnessError::Config(format!(
                                "v_lo has {} entries for {n} companies",
                                v_lo.len()
                            )));
                        }
                        (dm, p.clone().into(), v_lo.clone().into(), *beta)
                    }
                };
                Ok(skeleton.attach(d, p, v_lo, beta))
            }
            NetworkSource::File(path) => FinancialNetwork::read_file(path).map_err(wrap),
            NetworkSource::Inline(net) => Ok(net.clone()),
        }
    }

    pub fn scenario(&self, seed: u64) -> Result<Scenario, HarnessError> {
        let net = self.network_for_seed(seed)?;
        let chat = c_hat(&net).map_err(|source| HarnessError::Network { seed, source })?;
        let x0 = self.x0.build(net.n())?;
        let degrees = net.out_degrees();
        let mean_degree = degrees.iter().sum::<usize>() as f64 / degrees.len().max(1) as f64;
        Ok(Scenario {
            seed,
            net,
            chat,
            x0,
            mean_degree,
        })
    }

    pub fn closed_loop_config(&self, net: &FinancialNetwork) -> Option<ClosedLoopConfig> {
        self.control.as_ref().map(|ctrl| {
            let mut cfg = ClosedLoopConfig::new(net, self.horizon, ctrl.activation_t, ctrl.mode);
            cfg.epsilon = ctrl.epsilon;
            cfg.freeze_gain = ctrl.freeze_gain;
            if let Some(xi) = ctrl.xi {
                cfg.xi = DenseVector::filled(net.n(), xi);
            }
            cfg
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cluster {
    /// Fails the healthy-row investment condition.
    Violating,
    Satisfying,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub company: usize,
    pub cluster: Cluster,
    pub failed: bool,
    /// `(D p)_i`, a node-size proxy for plotting.
    pub external_investment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub t: usize,
    pub companies: Vec<ClusterEntry>,
}

/// Partitions companies by the violations in `report` and flags those failed
/// at each requested step.
pub fn snapshot_clusters(
    traj: &Trajectory,
    report: &ConditionReport,
    external_investment: &DenseVector,
    times: &[usize],
) -> Result<Vec<ClusterSnapshot>, HarnessError> {
    let horizon = traj.horizon();
    let violating: BTreeSet<usize> = report.violating_indices().into_iter().collect();
    times
        .iter()
        .map(|&t| {
            if t > horizon {
                return Err(HarnessError::Config(format!(
                    "snapshot time {t} beyond horizon {horizon}"
                )));
            }
            let sig = &traj.signatures[t];
            let companies = (0..sig.len())
                .map(|i| ClusterEntry {
                    company: i,
                    cluster: if violating.contains(&i) {
                        Cluster::Violating
                    } else {
                        Cluster::Satisfying
                    },
                    failed: sig.is_negative(i),
                    external_investment: external_investment[i],
                })
                .collect();
            Ok(ClusterSnapshot { t, companies })
        })
        .collect()
}

/// The snapshot steps `{0, 30, 60, T}` that fit in the horizon.
pub fn snapshot_times(horizon: usize) -> Vec<usize> {
    let set: BTreeSet<usize> = [0, 30, 60, horizon].into_iter().filter(|&t| t <= horizon).collect();
    set.into_iter().collect()
}

/// Companies healthy at `from` that are failed at some later step, with the
/// first such `(t, company)`.
pub fn later_failures(traj: &Trajectory, from: usize) -> (Vec<usize>, Option<(usize, usize)>) {
    let base = &traj.signatures[from];
    let mut failed = BTreeSet::new();
    let mut first = None;
    for (t, sig) in traj.signatures.iter().enumerate().skip(from + 1) {
        for i in 0..sig.len() {
            if sig.is_negative(i) && !base.is_negative(i) {
                if first.is_none() {
                    first = Some((t, i));
                }
                failed.insert(i);
            }
        }
    }
    (failed.into_iter().collect(), first)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointReport {
    pub t: usize,
    /// Bounded-failure condition with the box spanned by the failed states
    /// from the checkpoint onwards.
    pub bounded_failure: ConditionReport,
    /// Healthy companies at the checkpoint that fail later.
    pub later_failures: Vec<usize>,
    pub first_violation: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionsFile {
    /// Reports for the signature of the initial state.
    pub initial: Vec<ConditionReport>,
    pub checkpoint: CheckpointReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStatus {
    pub condition_id: ConditionId,
    pub holds: bool,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlStats {
    pub activation_t: usize,
    pub scaled_steps: Vec<usize>,
    pub max_demand_residual: f64,
    pub max_closed_loop_row_sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n: usize,
    pub mean_degree: f64,
    pub horizon: usize,
    pub terminal_failures: usize,
    pub failure_fraction: f64,
    pub checkpoint_t: usize,
    pub failures_at_checkpoint: usize,
    /// Companies healthy at the checkpoint that fail afterwards.
    pub new_failures_after_checkpoint: usize,
    /// Size of the cluster violating the healthy-row investment condition.
    pub violating_cluster: usize,
    pub conditions: Vec<ConditionStatus>,
    pub estimate: Option<usize>,
    pub xi_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlStats>,
    /// Not written to disk, so artifacts stay reproducible.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

/// Everything one seed produces, before it is written out.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub conditions: ConditionsFile,
    pub estimate: Option<CascadeEstimate>,
    pub clusters: Vec<ClusterSnapshot>,
    pub control: Option<Vec<StepPlan>>,
}

/// Simulates and analyses one seed without touching the filesystem.
pub fn run_seed(config: &ScenarioConfig, seed: u64) -> Result<SeedOutcome, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let sc = config.scenario(seed)?;
    let (net, chat) = (&sc.net, &sc.chat);
    let n = net.n();

    let open = simulate(net, chat, &sc.x0, config.horizon);
    let (trajectory, control) = match config.closed_loop_config(net) {
        Some(cfg) => {
            let run = simulate_closed_loop(net, chat, &sc.x0, &cfg)
                .map_err(|source| HarnessError::Control { seed, source })?;
            let stats = ControlStats {
                activation_t: cfg.activation_t,
                scaled_steps: run.scaled_steps(),
                max_demand_residual: run.plans.iter().map(|p| p.max_demand_residual).fold(0.0, f64::max),
                max_closed_loop_row_sum: run.closed_loop_row_sums.iter().copied().reduce(f64::max),
            };
            (run.trajectory, Some((run.plans, stats)))
        }
        None => (open.clone(), None),
    };

    let sig0 = signature_of(&sc.x0);
    let initial = condition_reports(net, chat, &sig0);
    let checkpoint_t = config.checkpoint();
    let sig_cp = &trajectory.signatures[checkpoint_t];
    let bound = FailureBoundBox::enclosing(n, trajectory.states[checkpoint_t..].iter().map(|s| &s.x));
    let theorem3 = check_theorem3(net, chat, sig_cp, &bound, Theorem3Form::Proof)
        .map_err(|source| HarnessError::Analysis { seed, source })?;
    let (later, first_violation) = later_failures(&trajectory, checkpoint_t);

    let (_, cluster_report) = check_lemma1(net, chat, &OrthantSignature::positive(n));
    let clusters = snapshot_clusters(
        &trajectory,
        &cluster_report,
        &net.external_investment(),
        &snapshot_times(config.horizon),
    )?;

    let xi_bar = config
        .estimate
        .xi_bar
        .or_else(|| pilot_xi_bar(&open))
        .unwrap_or(net.beta);
    let opts = EstimateOptions {
        xi_bar,
        weights: config.estimate.weights,
        theta_mode: config.estimate.theta_mode,
    };
    let (estimate, estimate_error) = match estimate_from_network(net, chat, &sig0, &opts) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let terminal = trajectory.terminal_failures();
    let summary = RunSummary {
        seed,
        n,
        mean_degree: sc.mean_degree,
        horizon: config.horizon,
        terminal_failures: terminal,
        failure_fraction: terminal as f64 / n as f64,
        checkpoint_t,
        failures_at_checkpoint: trajectory.failed_count(checkpoint_t),
        new_failures_after_checkpoint: later.len(),
        violating_cluster: cluster_report.violations.len(),
        conditions: initial
            .iter()
            .map(|r| ConditionStatus {
                condition_id: r.condition_id,
                holds: r.holds,
                violations: r.violations.len(),
            })
            .collect(),
        estimate: estimate.as_ref().map(|e| e.estimate),
        xi_bar: estimate.as_ref().map(|_| xi_bar),
        estimate_error,
        control: control.as_ref().map(|(_, s)| s.clone()),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok(SeedOutcome {
        summary,
        trajectory,
        conditions: ConditionsFile {
            initial,
            checkpoint: CheckpointReport {
                t: checkpoint_t,
                bounded_failure: theorem3,
                later_failures: later,
                first_violation,
            },
        },
        estimate,
        clusters,
        control: control.map(|(plans, _)| plans),
    })
}

pub fn seed_dir(outputs: &Path, seed: u64) -> PathBuf {
    outputs.join(format!("seed_{seed}"))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut BufWriter<std::fs::File>) -> std::io::Result<()>,
{
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(io_err(path))?;
    std::io::Write::flush(&mut w).map_err(io_err(path))
}

/// Writes all artifacts of one seed into `dir`.
pub fn write_outcome(dir: &Path, outcome: &SeedOutcome) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_with(&dir.join("trajectory.csv"), |w| outcome.trajectory.write_csv(w))?;
    write_json(&dir.join("events.json"), &outcome.trajectory.failure_events)?;
    write_json(&dir.join("conditions.json"), &outcome.conditions)?;
    write_json(&dir.join("clusters.json"), &outcome.clusters)?;
    if let Some(est) = &outcome.estimate {
        write_with(&dir.join("estimate.csv"), |w| est.write_csv(w))?;
        let path = dir.join("estimate_summary.json");
        std::fs::write(&path, est.summary_json()? + "\n").map_err(io_err(&path))?;
    }
    if let Some(plans) = &outcome.control {
        write_json(&dir.join("control.json"), plans)?;
    }
    write_json(&dir.join("summary.json"), &outcome.summary)
}

/// Runs every seed in parallel and writes `outputs/seed_<seed>/*` plus a
/// combined `outputs/summary.json`. Summaries come back in seed order.
pub fn run(config: &ScenarioConfig) -> Result<Vec<RunSummary>, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(&config.outputs).map_err(io_err(&config.outputs))?;
    let results: Vec<Result<RunSummary, HarnessError>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let outcome = run_seed(config, seed)?;
            write_outcome(&seed_dir(&config.outputs, seed), &outcome)?;
            Ok(outcome.summary)
        })
        .collect();
    let summaries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_json(&config.outputs.join("summary.json"), &summaries)?;
    Ok(summaries)
}
