//! `attackid` subcommands.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use attackid_core::dynamics::{self, steady_state_input, ClosedLoop, SystemState, DEFAULT_DT, DEFAULT_KP};
use attackid_core::experiment::{
    analyze_step, mean_excess, run_series, tabulate_fourfold, AttackPool, CurvatureCache, ExperimentConfig,
    LoopMode, SeriesKind, TableKind,
};
use attackid_core::guarantees::GuaranteeReport;
use attackid_core::identify::{
    detect, extract_support, solve_l0_equality, solve_l0_relaxed, RelaxationBudget, DEFAULT_EPS_I,
    DEFAULT_TAU_D, DEFAULT_TOL_FEAS,
};
use attackid_core::linalg::smallest_singular_value;
use attackid_core::NetworkModel;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::io::{self, IoError, ResultFile, TablesFile};

#[derive(Debug, Parser)]
#[command(name = "attackid", version, about = "Attack identification in networks of coupled swing-equation subsystems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the closed loop and write a trajectory CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// JSON schedule `{"steps": [{"step": k, "inputs": [{"bus": id, "delta": x}]}]}`.
        #[arg(long)]
        attack: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_KP)]
        kp: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a random attack series and write records.csv and tables.json.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_series)]
        series: SeriesKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        /// `reset` puts the plant back on the nominal trajectory after every
        /// step; `drift` lets the attacked closed loop keep running.
        #[arg(long, value_enum, default_value_t = ModeArg::Reset)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = PoolArg::Identifiable)]
        pool: PoolArg,
        /// Random samples per subsystem for the curvature estimate.
        #[arg(long)]
        k_samples: Option<usize>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// One-shot identification for a given state and attack; prints JSON.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// JSON `{"theta": [...], "omega": [...], "u_ss"?: [...], "z_nominal"?: [...]}`.
        #[arg(long)]
        state: PathBuf,
        /// JSON `{"inputs": [{"bus": id, "delta": x}]}`.
        #[arg(long)]
        attack: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        /// Fixed ε for the relaxed problem instead of the oracle value.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Also write the assembled (S, b, column map, scales) here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Solve the identification problem for a dumped system; prints JSON.
    Identify {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Equality)]
        kind: KindArg,
        /// ε of the relaxed problem (required for `--kind relaxed`).
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_TOL_FEAS)]
        tol_feas: f64,
        #[arg(long, default_value_t = DEFAULT_EPS_I)]
        eps_i: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Reset,
    Drift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    Identifiable,
    Controllable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Equality,
    Relaxed,
}

fn parse_series(s: &str) -> Result<SeriesKind, String> {
    SeriesKind::parse(s).ok_or_else(|| format!("unknown series `{s}` (expected attack_1, attack_3 or attack_<k>)"))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] IoError),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Executes one command, writing its report to `out`.
pub fn run(command: Command, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            config,
            dt,
            steps,
            attack,
            kp,
            out: path,
        } => simulate(&config, dt, steps, attack.as_deref(), kp, &path, out),
        Command::Experiment {
            config,
            series,
            seed,
            steps,
            dt,
            mode,
            pool,
            k_samples,
            out: dir,
        } => {
            let mut cfg = ExperimentConfig::new(series, seed, steps);
            cfg.dt = dt;
            cfg.mode = match mode {
                ModeArg::Reset => LoopMode::Reset,
                ModeArg::Drift => LoopMode::Drift,
            };
            cfg.pool = match pool {
                PoolArg::Identifiable => AttackPool::Identifiable,
                PoolArg::Controllable => AttackPool::Controllable,
            };
            if let Some(k) = k_samples {
                cfg.k_samples = k;
            }
            experiment(&config, &cfg, &dir, out)
        }
        Command::Check {
            config,
            state,
            attack,
            dt,
            epsilon,
            dump,
        } => check(&config, &state, &attack, dt, epsilon, dump.as_deref(), out),
        Command::Identify {
            system,
            kind,
            epsilon,
            tol_feas,
            eps_i,
        } => identify(&system, kind, epsilon, tol_feas, eps_i, out),
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must be positive, got {v}")))
    }
}

fn warn_steady(model: &NetworkModel) {
    let ss = steady_state_input(model, &model.theta0());
    if !ss.out_of_box.is_empty() {
        eprintln!(
            "warning: steady-state input outside the input box at bus(es) {:?}",
            ss.out_of_box
        );
    }
}

fn simulate(
    config: &Path,
    dt: f64,
    steps: usize,
    attack: Option<&Path>,
    kp: f64,
    path: &Path,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    positive("dt", dt)?;
    if kp.is_nan() || kp < 0.0 {
        return Err(CliError::Usage("--kp must be non-negative".into()));
    }
    let model = io::load_network(config)?;
    warn_steady(&model);
    let schedule = match attack {
        Some(p) => io::load_schedule(p, &model)?,
        None => Default::default(),
    };
    let rows = dynamics::simulate(&model, SystemState::initial(&model), &schedule, dt, steps, kp).map_err(numeric)?;
    io::save_trajectory(&model, &rows, path)?;
    let max_dz = rows
        .iter()
        .flat_map(|r| r.dz.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let _ = writeln!(out, "wrote {} rows to {} (max |dz| = {max_dz:e})", rows.len(), path.display());
    Ok(())
}

pub fn tables_for(cfg: &ExperimentConfig, records: &[attackid_core::StepRecord]) -> TablesFile {
    TablesFile {
        series: cfg.series.name(),
        seed: cfg.seed,
        steps: cfg.steps,
        detected: records.iter().filter(|r| r.detected).count(),
        mean_excess: mean_excess(records),
        superset: tabulate_fourfold(records, TableKind::Superset),
        exact: tabulate_fourfold(records, TableKind::Exact),
    }
}

fn experiment(config: &Path, cfg: &ExperimentConfig, dir: &Path, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    positive("dt", cfg.dt)?;
    if cfg.k_samples == 0 {
        return Err(CliError::Usage("--k-samples must be at least 1".into()));
    }
    let model = io::load_network(config)?;
    warn_steady(&model);
    let records = run_series(&model, cfg).map_err(numeric)?;
    fs::create_dir_all(dir).map_err(|source| IoError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    io::save_records(&records, &dir.join("records.csv"))?;
    let tables = tables_for(cfg, &records);
    io::save_tables(&tables, &dir.join("tables.json"))?;
    let t1 = &tables.superset;
    let t2 = &tables.exact;
    let _ = writeln!(
        out,
        "{}: detected {}/{} | superset: cond {:.2}% ident {:.2}% [{:.2} {:.2} / {:.2} {:.2}] | exact: cond {:.2}% ident {:.2}% [{:.2} {:.2} / {:.2} {:.2}] | mean excess {:.2}",
        tables.series,
        tables.detected,
        tables.steps,
        t1.condition_rate(),
        t1.identified_rate(),
        t1.cond_ident,
        t1.cond_not_ident,
        t1.not_cond_ident,
        t1.not_cond_not_ident,
        t2.condition_rate(),
        t2.identified_rate(),
        t2.cond_ident,
        t2.cond_not_ident,
        t2.not_cond_ident,
        t2.not_cond_not_ident,
        tables.mean_excess
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CheckOutput {
    detected: bool,
    dz_norms: Vec<f64>,
    true_support: Vec<usize>,
    equality: Option<ResultFile>,
    relaxed: Option<ResultFile>,
    superset_correct: bool,
    exact_correct: bool,
    report: GuaranteeReport,
}

fn check(
    config: &Path,
    state: &Path,
    attack: &Path,
    dt: f64,
    epsilon: Option<f64>,
    dump: Option<&Path>,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    positive("dt", dt)?;
    if let Some(e) = epsilon {
        positive("epsilon", e)?;
    }
    let model = io::load_network(config)?;
    let snap = io::load_snapshot(state, &model)?;
    let delta = io::load_attack_vector(attack, &model)?;
    let u_ss = snap
        .u_ss
        .clone()
        .unwrap_or_else(|| steady_state_input(&model, &model.theta0()).u);
    let mut cl = ClosedLoop::new(&model, snap.state(), u_ss, dt, DEFAULT_KP).map_err(numeric)?;
    if let Some(z) = &snap.z_nominal {
        cl.set_nominal(z).map_err(numeric)?;
    }
    let step = cl.advance(&delta).map_err(numeric)?;
    let dz = dynamics::split_coupling(&model, &step.dz);
    let verdict = detect(&dz, DEFAULT_TAU_D);
    let mut cfg = ExperimentConfig::new(SeriesKind::Custom(0), 0, 1);
    cfg.dt = dt;
    let analysis = analyze_step(
        &model,
        &cfg,
        &step.state,
        &step.u,
        &step.zn_nominal,
        &dz,
        &step.dzn,
        &step.dz_prev,
        &delta,
        &mut CurvatureCache::default(),
        0,
    )
    .map_err(numeric)?;
    let relaxed = match epsilon {
        Some(e) => {
            let budget = RelaxationBudget {
                epsilon: e,
                sigma_min: analysis.report.sigma_min,
            };
            solve_l0_relaxed(&analysis.system, budget, cfg.eps_i).ok()
        }
        None => analysis.relaxed.clone(),
    };
    if let Some(p) = dump {
        io::save_system(&analysis.system, p)?;
    }
    let truth = extract_support(&delta, 0.0);
    let superset_correct = analysis
        .equality
        .as_ref()
        .is_some_and(|r| truth.iter().all(|i| r.support.contains(i)));
    let exact_correct = relaxed.as_ref().is_some_and(|r| r.support == truth);
    let report = CheckOutput {
        detected: verdict.alarm,
        dz_norms: verdict.norms,
        true_support: truth,
        equality: analysis.equality.as_ref().map(ResultFile::from),
        relaxed: relaxed.as_ref().map(ResultFile::from),
        superset_correct,
        exact_correct,
        report: analysis.report,
    };
    let text = serde_json::to_string_pretty(&report).expect("plain data serializes");
    let _ = writeln!(out, "{text}");
    Ok(())
}

fn identify(
    system: &Path,
    kind: KindArg,
    epsilon: Option<f64>,
    tol_feas: f64,
    eps_i: f64,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    positive("tol-feas", tol_feas)?;
    positive("eps-i", eps_i)?;
    let sys = io::load_system(system)?;
    let result = match kind {
        KindArg::Equality => solve_l0_equality(&sys, tol_feas, eps_i),
        KindArg::Relaxed => {
            let e = epsilon.ok_or_else(|| CliError::Usage("--kind relaxed needs --epsilon".into()))?;
            positive("epsilon", e)?;
            let budget = RelaxationBudget {
                epsilon: e,
                sigma_min: smallest_singular_value(&sys.s),
            };
            solve_l0_relaxed(&sys, budget, eps_i)
        }
    }
    .map_err(numeric)?;
    let text = serde_json::to_string_pretty(&ResultFile::from(&result)).expect("plain data serializes");
    let _ = writeln!(out, "{text}");
    Ok(())
}
