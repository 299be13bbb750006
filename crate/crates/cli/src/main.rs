use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cascade_core::analysis::equilibrium;
use cascade_core::control::{simulate_closed_loop, ClosedLoopConfig, ControlError, ControlMode};
use cascade_core::dynamics::{signature_of, simulate};
use cascade_core::harness::{
    preset_table1, run, run_seed, seed_dir, ControlSpec, ErrorClass, HarnessError, NetworkSource, ScenarioConfig,
    DEFAULT_CHECKPOINT,
};
use cascade_core::network::{FinancialNetwork, NetworkError, NetworkKind};

#[derive(Parser)]
#[command(name = "cascade", version, about = "Failure cascades in cross-holding networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one network file per seed.
    GenNetwork(ScenarioArgs),
    /// Check a network file against the model's structural assumptions.
    Validate {
        /// Network JSON file.
        path: PathBuf,
    },
    /// Simulate and write the trajectory and failure events.
    Simulate(ScenarioArgs),
    /// Write condition reports and failure clusters.
    Analyze(ScenarioArgs),
    /// Equilibrium of the orthant containing the initial state.
    Equilibrium(ScenarioArgs),
    /// Cascade-size estimate and its counting curve.
    Estimate(ScenarioArgs),
    /// Design the controller at the initial state and log one step.
    DesignControl(ScenarioArgs),
    /// Full run: every artifact for every seed.
    RunPreset(ScenarioArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Table1,
}

#[derive(Clone, Copy, ValueEnum)]
enum NetKind {
    Uniform,
    Powerlaw,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Open,
    U1,
    U1u2,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON; defaults to the table1 preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Seed to run; repeatable.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    net_kind: Option<NetKind>,
    #[arg(long)]
    link_prob: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    activation_t: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

impl ScenarioArgs {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => ScenarioConfig::read_file(path)?,
            (None, Some(Preset::Table1) | None) => preset_table1(),
        };
        if self.net_kind.is_some() || self.link_prob.is_some() || self.rho.is_some() {
            let NetworkSource::Generate(spec) = &mut cfg.network else {
                return Err(HarnessError::Config("network flags need a generated network".into()).into());
            };
            let kind = match self.net_kind {
                Some(k) => k,
                None => match spec.kind {
                    NetworkKind::UniformRandom { .. } => NetKind::Uniform,
                    NetworkKind::PowerLaw { .. } => NetKind::Powerlaw,
                },
            };
            spec.kind = match (kind, spec.kind) {
                (NetKind::Uniform, NetworkKind::UniformRandom { link_prob }) => NetworkKind::UniformRandom {
                    link_prob: self.link_prob.unwrap_or(link_prob),
                },
                (NetKind::Uniform, _) => NetworkKind::UniformRandom {
                    link_prob: self.link_prob.unwrap_or(0.2),
                },
                (NetKind::Powerlaw, NetworkKind::PowerLaw { exponent }) => NetworkKind::PowerLaw {
                    exponent: self.rho.unwrap_or(exponent),
                },
                (NetKind::Powerlaw, _) => NetworkKind::PowerLaw {
                    exponent: self.rho.unwrap_or(2.1),
                },
            };
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.outputs = out.clone();
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        match self.mode {
            Some(Mode::Open) => cfg.control = None,
            Some(mode) => {
                let mode = if mode == Mode::U1 {
                    ControlMode::U1Only
                } else {
                    ControlMode::U1AndU2
                };
                let spec = cfg.control.get_or_insert(ControlSpec {
                    activation_t: DEFAULT_CHECKPOINT,
                    epsilon: cascade_core::control::DEFAULT_EPSILON,
                    xi: None,
                    mode,
                    freeze_gain: false,
                });
                spec.mode = mode;
            }
            None => {}
        }
        if let Some(t) = self.activation_t {
            match &mut cfg.control {
                Some(ctrl) => ctrl.activation_t = t,
                None => return Err(HarnessError::Config("--activation-t needs --mode u1 or u1u2".into()).into()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenNetwork(args) => {
            let cfg = args.config()?;
            ensure_dir(&cfg.outputs)?;
            for &seed in &cfg.seeds {
                let net = cfg.network_for_seed(seed)?;
                let path = cfg.outputs.join(format!("network_seed_{seed}.json"));
                net.write_file(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
        }
        Command::Validate { path } => {
            let net = FinancialNetwork::read_file(&path)?;
            let violations = net.validate();
            println!("{}", serde_json::to_string_pretty(&violations)?);
            if !violations.is_empty() {
                bail!(HarnessError::Config(format!(
                    "{} violation(s) in {}",
                    violations.len(),
                    path.display()
                )));
            }
        }
        Command::Simulate(args) => {
            let cfg = args.config()?;
            for &seed in &cfg.seeds {
                let sc = cfg.scenario(seed)?;
                let traj = match cfg.closed_loop_config(&sc.net) {
                    Some(cl) => {
                        simulate_closed_loop(&sc.net, &sc.chat, &sc.x0, &cl)
                            .map_err(|source| HarnessError::Control { seed, source })?
                            .trajectory
                    }
                    None => simulate(&sc.net, &sc.chat, &sc.x0, cfg.horizon),
                };
                let dir = seed_dir(&cfg.outputs, seed);
                ensure_dir(&dir)?;
                let path = dir.join("trajectory.csv");
                let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                traj.write_csv(std::io::BufWriter::new(file))?;
                write_json(&dir.join("events.json"), &traj.failure_events)?;
                println!(
                    "seed {seed}: {} failed at t = {}",
                    traj.terminal_failures(),
                    cfg.horizon
                );
            }
        }
        Command::Analyze(args) => {
            let cfg = args.config()?;
            for &seed in &cfg.seeds {
                let out = run_seed(&cfg, seed)?;
                let dir = seed_dir(&cfg.outputs, seed);
                write_json(&dir.join("conditions.json"), &out.conditions)?;
                write_json(&dir.join("clusters.json"), &out.clusters)?;
                let failing: Vec<String> = out
                    .conditions
                    .initial
                    .iter()
                    .filter(|r| !r.holds)
                    .map(|r| format!("{:?}({})", r.condition_id, r.violations.len()))
                    .collect();
                println!("seed {seed}: violated {}", failing.join(" "));
            }
        }
        Command::Equilibrium(args) => {
            let cfg = args.config()?;
            for &seed in &cfg.seeds {
                let sc = cfg.scenario(seed)?;
                let eq = equilibrium(&sc.net, &sc.chat, &signature_of(&sc.x0))
                    .map_err(|source| HarnessError::Analysis { seed, source })?;
                write_json(&seed_dir(&cfg.outputs, seed).join("equilibrium.json"), &eq)?;
                println!(
                    "seed {seed}: consistent {} stable {} residual {:.3e}",
                    eq.consistent, eq.stable, eq.residual
                );
            }
        }
        Command::Estimate(args) => {
            let cfg = args.config()?;
            for &seed in &cfg.seeds {
                let out = run_seed(&cfg, seed)?;
                let est = out
                    .estimate
                    .ok_or_else(|| anyhow!("seed {seed}: {}", out.summary.estimate_error.unwrap_or_default()))?;
                let dir = seed_dir(&cfg.outputs, seed);
                ensure_dir(&dir)?;
                let path = dir.join("estimate.csv");
                let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                est.write_csv(std::io::BufWriter::new(file))?;
                std::fs::write(dir.join("estimate_summary.json"), est.summary_json()? + "\n")?;
                println!(
                    "seed {seed}: estimate {} observed {}",
                    est.estimate, out.summary.terminal_failures
                );
            }
        }
        Command::DesignControl(args) => {
            let cfg = args.config()?;
            let mode = cfg.control.as_ref().map_or(ControlMode::U1Only, |c| c.mode);
            for &seed in &cfg.seeds {
                let sc = cfg.scenario(seed)?;
                let mut cl = ClosedLoopConfig::new(&sc.net, 1, 0, mode);
                if let Some(ctrl) = &cfg.control {
                    cl.epsilon = ctrl.epsilon;
                    if let Some(xi) = ctrl.xi {
                        cl.xi = cascade_core::numerics::DenseVector::filled(sc.net.n(), xi);
                    }
                }
                let run = simulate_closed_loop(&sc.net, &sc.chat, &sc.x0, &cl)
                    .map_err(|source| HarnessError::Control { seed, source })?;
                write_json(&seed_dir(&cfg.outputs, seed).join("design.json"), &run.plans)?;
                println!("seed {seed}: {}", run.plans[0].lp_status);
            }
        }
        Command::RunPreset(args) => {
            let cfg = args.config()?;
            for s in run(&cfg)? {
                println!(
                    "seed {}: failed {}/{} estimate {} (mean degree {:.2}, {:.0} ms)",
                    s.seed,
                    s.terminal_failures,
                    s.n,
                    s.estimate.map_or("-".to_string(), |e| e.to_string()),
                    s.mean_degree,
                    s.wall_time_ms
                );
            }
            println!("artifacts in {}", cfg.outputs.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h.class() {
                ErrorClass::Config => 2,
                ErrorClass::Numerical => 3,
                ErrorClass::Io => 4,
            };
        }
        if let Some(n) = cause.downcast_ref::<NetworkError>() {
            return if matches!(n, NetworkError::Io(_)) { 4 } else { 2 };
        }
        if cause.downcast_ref::<ControlError>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
