//! Random attack series, the per-step identification pipeline and the
//! fourfold tables.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{split_coupling, ClosedLoop, DynamicsError, SystemState, DEFAULT_DT, DEFAULT_KP};
use crate::guarantees::{self, check_conditions, Condition, GuaranteeError, GuaranteeReport};
use crate::identify::{
    self, detect, solve_l0_equality, solve_l0_relaxed, IdentificationResult, IdentifyError, RelaxationBudget,
};
use crate::linalg::smallest_singular_value;
use crate::model::NetworkModel;
use crate::sensitivity::{assemble_global, GlobalSystem, SensitivityBundle, SensitivityError, DEFAULT_TOL_RANK};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("step {step}: {source}")]
    Dynamics { step: usize, source: DynamicsError },
    #[error("step {step}: {source}")]
    Sensitivity { step: usize, source: SensitivityError },
    #[error("step {step}: {source}")]
    Guarantee { step: usize, source: GuaranteeError },
    #[error("step {step}: {source}")]
    Identify { step: usize, source: IdentifyError },
    #[error("attack pool has {available} inputs, series needs {needed}")]
    PoolTooSmall { available: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SeriesKind {
    Attack1,
    Attack3,
    /// Any fixed number of attacked inputs per step.
    Custom(usize),
}

impl SeriesKind {
    pub fn cardinality(self) -> usize {
        match self {
            SeriesKind::Attack1 => 1,
            SeriesKind::Attack3 => 3,
            SeriesKind::Custom(k) => k,
        }
    }

    pub fn name(self) -> alloc::string::String {
        match self {
            SeriesKind::Attack1 => "attack_1".into(),
            SeriesKind::Attack3 => "attack_3".into(),
            SeriesKind::Custom(k) => alloc::format!("attack_{k}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "attack_1" => Some(SeriesKind::Attack1),
            "attack_3" => Some(SeriesKind::Attack3),
            _ => s.strip_prefix("attack_")?.parse().ok().map(SeriesKind::Custom),
        }
    }
}

/// Which inputs attacks may target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AttackPool {
    /// Controllable inputs whose sensitivity column survives the reduction
    /// at the initial operating point.
    Identifiable,
    /// Every input with a non-degenerate box (generators and controllable
    /// loads).
    Controllable,
}

/// Whether the plant is put back on the nominal trajectory after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LoopMode {
    Reset,
    Drift,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentConfig {
    pub series: SeriesKind,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    pub k_p: f64,
    pub tau_d: f64,
    pub eps_i: f64,
    pub tol_feas: f64,
    pub tol_rank: f64,
    /// Half-width of the neighbor-coupling box of the curvature estimate.
    pub rho: f64,
    pub k_samples: usize,
    pub pool: AttackPool,
    pub mode: LoopMode,
    /// Multiplies every drawn attack magnitude (1 = the full reachable box).
    pub magnitude_scale: f64,
}

impl ExperimentConfig {
    pub fn new(series: SeriesKind, seed: u64, steps: usize) -> Self {
        Self {
            series,
            seed,
            steps,
            dt: DEFAULT_DT,
            k_p: DEFAULT_KP,
            tau_d: identify::DEFAULT_TAU_D,
            eps_i: identify::DEFAULT_EPS_I,
            tol_feas: identify::DEFAULT_TOL_FEAS,
            tol_rank: DEFAULT_TOL_RANK,
            rho: guarantees::DEFAULT_RHO,
            k_samples: guarantees::DEFAULT_K_SAMPLES,
            pool: AttackPool::Identifiable,
            mode: LoopMode::Reset,
            magnitude_scale: 1.0,
        }
    }
}

/// Input indices eligible for attacks.
pub fn attack_pool(model: &NetworkModel, pool: AttackPool, dt: f64, tol_rank: f64) -> Result<Vec<usize>, SensitivityError> {
    let controllable: Vec<usize> = (0..model.n_buses())
        .filter(|&i| {
            let b = model.bus(i);
            b.kind.is_controllable() && b.u_max > b.u_min
        })
        .collect();
    match pool {
        AttackPool::Controllable => Ok(controllable),
        AttackPool::Identifiable => {
            let cl = ClosedLoop::at_equilibrium(model, dt, 0.0);
            let zn: Vec<Vec<f64>> = (0..model.n_subsystems())
                .map(|s| crate::dynamics::gather_neighbors(model, s, cl.nominal_frames()))
                .collect();
            let bundle = SensitivityBundle::evaluate(model, cl.state(), &cl.control(), &zn, dt, tol_rank)?;
            let kept = bundle.kept_inputs(model);
            Ok(controllable.into_iter().filter(|i| kept.contains(i)).collect())
        }
    }
}

/// Sparse attack `(input, Δa)` pairs, sorted by input index.
///
/// Indices are drawn without replacement from `pool`; each magnitude is
/// uniform on `[u_min − u_i, u_max − u_i]` so the attacked input stays in its
/// box. The draw depends only on `(seed, step)`.
pub fn generate_attack(
    model: &NetworkModel,
    pool: &[usize],
    cardinality: usize,
    u: &[f64],
    seed: u64,
    step: usize,
    magnitude_scale: f64,
) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    let mut picks: Vec<usize> = sample(&mut rng, pool.len(), cardinality.min(pool.len()))
        .into_iter()
        .map(|k| pool[k])
        .collect();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|i| {
            let bus = model.bus(i);
            let lo = bus.u_min - u[i];
            let hi = bus.u_max - u[i];
            (i, magnitude_scale * rng.gen_range(lo..=hi))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub detected: bool,
    /// `max_I ‖Δz_I‖∞` after the step.
    pub max_dz: f64,
    pub true_support: Vec<usize>,
    pub true_values: Vec<f64>,
    pub support_equality: Vec<usize>,
    pub support_relaxed: Vec<usize>,
    pub superset_correct: bool,
    pub exact_correct: bool,
    pub condition_superset: Condition,
    pub condition_exact: Condition,
    pub lhs: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    pub sigma_min: f64,
    pub k: f64,
    pub epsilon: f64,
    pub residual_equality: f64,
    pub residual_relaxed: f64,
    /// `|supp(Δa*) \ supp(Δâ)|` for the plain problem.
    pub excess: usize,
}

impl StepRecord {
    fn undetected(step: usize, t: f64, max_dz: f64, attack: &[(usize, f64)]) -> Self {
        Self {
            step,
            t,
            detected: false,
            max_dz,
            true_support: attack.iter().map(|a| a.0).collect(),
            true_values: attack.iter().map(|a| a.1).collect(),
            support_equality: Vec::new(),
            support_relaxed: Vec::new(),
            superset_correct: false,
            exact_correct: false,
            condition_superset: Condition::NotApplicable,
            condition_exact: Condition::NotApplicable,
            lhs: f64::NAN,
            delta: f64::NAN,
            delta_tilde: f64::NAN,
            sigma_min: f64::NAN,
            k: f64::NAN,
            epsilon: f64::NAN,
            residual_equality: f64::NAN,
            residual_relaxed: f64::NAN,
            excess: 0,
        }
    }
}

/// Everything computed for one detected step.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub system: GlobalSystem,
    pub equality: Option<IdentificationResult>,
    pub relaxed: Option<IdentificationResult>,
    pub report: GuaranteeReport,
}

/// Caches `K_I` per linearization point; in reset mode every step shares one.
#[derive(Debug, Default, Clone)]
pub struct CurvatureCache {
    entries: BTreeMap<usize, (Vec<u64>, f64)>,
}

impl CurvatureCache {
    fn key(sens: &crate::sensitivity::SubsystemSensitivity) -> Vec<u64> {
        sens.x_local
            .iter()
            .chain(&sens.u_local)
            .chain(&sens.zn_nominal)
            .map(|v| v.to_bits())
            .chain(sens.columns.iter().map(|&c| c as u64))
            .collect()
    }

    pub fn get_or_estimate(
        &mut self,
        model: &NetworkModel,
        sens: &crate::sensitivity::SubsystemSensitivity,
        dt: f64,
        rho: f64,
        n_samples: usize,
        seed: u64,
    ) -> Result<f64, GuaranteeError> {
        let key = Self::key(sens);
        if let Some((k, v)) = self.entries.get(&sens.subsystem) {
            if *k == key {
                return Ok(*v);
            }
        }
        let v = guarantees::estimate_k(model, sens, dt, rho, n_samples, seed)?;
        self.entries.insert(sens.subsystem, (key, v));
        Ok(v)
    }
}

/// Linearizes, solves both problems and evaluates the conditions for one
/// closed-loop step whose true attack is `true_delta`.
#[allow(clippy::too_many_arguments)]
pub fn analyze_step(
    model: &NetworkModel,
    cfg: &ExperimentConfig,
    state: &SystemState,
    u: &[f64],
    zn_nominal: &[Vec<f64>],
    dz: &[Vec<f64>],
    dzn: &[Vec<f64>],
    dz_prev: &[f64],
    true_delta: &[f64],
    cache: &mut CurvatureCache,
    step: usize,
) -> Result<Analysis, ExperimentError> {
    let sens_err = |source| ExperimentError::Sensitivity { step, source };
    let bundle = SensitivityBundle::evaluate(model, state, u, zn_nominal, cfg.dt, cfg.tol_rank).map_err(sens_err)?;
    let system = assemble_global(model, &bundle, dz, dzn).map_err(sens_err)?;
    let sigma_min = smallest_singular_value(&system.s);
    let ks = bundle
        .blocks
        .iter()
        .map(|b| cache.get_or_estimate(model, b, cfg.dt, cfg.rho, cfg.k_samples, cfg.seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| ExperimentError::Guarantee { step, source })?;
    let report = check_conditions(&system, ks, model.max_degree(), sigma_min, true_delta, dz_prev)
        .map_err(|source| ExperimentError::Guarantee { step, source })?;

    let equality = match solve_l0_equality(&system, cfg.tol_feas, cfg.eps_i) {
        Ok(r) => Some(r),
        Err(IdentifyError::Infeasible { .. }) => None,
        Err(source) => return Err(ExperimentError::Identify { step, source }),
    };
    let relaxed = if report.epsilon.is_finite() && sigma_min > 0.0 {
        let budget = RelaxationBudget {
            epsilon: report.epsilon,
            sigma_min,
        };
        match solve_l0_relaxed(&system, budget, cfg.eps_i) {
            Ok(r) => Some(r),
            Err(IdentifyError::Infeasible { .. }) => None,
            Err(source) => return Err(ExperimentError::Identify { step, source }),
        }
    } else {
        None
    };
    Ok(Analysis {
        system,
        equality,
        relaxed,
        report,
    })
}

fn is_superset(found: &[usize], truth: &[usize]) -> bool {
    truth.iter().all(|i| found.contains(i))
}

/// Runs one attack series from the steady state.
pub fn run_series(model: &NetworkModel, cfg: &ExperimentConfig) -> Result<Vec<StepRecord>, ExperimentError> {
    let pool = attack_pool(model, cfg.pool, cfg.dt, cfg.tol_rank)
        .map_err(|source| ExperimentError::Sensitivity { step: 0, source })?;
    let needed = cfg.series.cardinality();
    if pool.len() < needed {
        return Err(ExperimentError::PoolTooSmall {
            available: pool.len(),
            needed,
        });
    }
    let mut cl = ClosedLoop::at_equilibrium(model, cfg.dt, cfg.k_p);
    let mut cache = CurvatureCache::default();
    let mut records = Vec::with_capacity(cfg.steps);
    let n = model.n_buses();
    for step in 0..cfg.steps {
        let t = step as f64 * cfg.dt;
        let u = cl.control();
        let attack = generate_attack(model, &pool, needed, &u, cfg.seed, step, cfg.magnitude_scale);
        let mut delta = vec![0.0; n];
        for &(i, v) in &attack {
            delta[i] = v;
        }
        let out = cl
            .advance(&delta)
            .map_err(|source| ExperimentError::Dynamics { step, source })?;
        let dz = split_coupling(model, &out.dz);
        let verdict = detect(&dz, cfg.tau_d);
        let max_dz = verdict.norms.iter().copied().fold(0.0, f64::max);

        let record = if verdict.alarm {
            let a = analyze_step(
                model,
                cfg,
                &out.state,
                &out.u,
                &out.zn_nominal,
                &dz,
                &out.dzn,
                &out.dz_prev,
                &delta,
                &mut cache,
                step,
            )?;
            let truth: Vec<usize> = attack.iter().filter(|a| a.1 != 0.0).map(|a| a.0).collect();
            let support_equality = a.equality.as_ref().map(|r| r.support.clone()).unwrap_or_default();
            let support_relaxed = a.relaxed.as_ref().map(|r| r.support.clone()).unwrap_or_default();
            StepRecord {
                step,
                t,
                detected: true,
                max_dz,
                true_values: attack.iter().map(|a| a.1).collect(),
                superset_correct: a.equality.is_some() && is_superset(&support_equality, &truth),
                exact_correct: a.relaxed.is_some() && support_relaxed == truth,
                excess: support_equality.iter().filter(|i| !truth.contains(i)).count(),
                true_support: attack.iter().map(|a| a.0).collect(),
                support_equality,
                support_relaxed,
                condition_superset: a.report.condition_superset,
                condition_exact: a.report.condition_exact,
                lhs: a.report.lhs,
                delta: a.report.delta,
                delta_tilde: a.report.delta_tilde,
                sigma_min: a.report.sigma_min,
                k: a.report.k,
                epsilon: a.report.epsilon,
                residual_equality: a.equality.as_ref().map_or(f64::NAN, |r| r.residual),
                residual_relaxed: a.relaxed.as_ref().map_or(f64::NAN, |r| r.residual),
            }
        } else {
            StepRecord::undetected(step, t, max_dz, &attack)
        };
        records.push(record);

        if cfg.mode == LoopMode::Reset {
            cl.resync(out.nominal_next);
        }
    }
    Ok(records)
}

/// Which sufficient condition / identification notion a table crosses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TableKind {
    /// Superset condition vs. superset identification by the plain problem.
    Superset,
    /// Exact condition vs. exact identification by the relaxed problem.
    Exact,
}

/// 2×2 contingency table over detected steps, percentages with two decimals.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FourfoldTable {
    pub kind: TableKind,
    pub cond_ident: f64,
    pub cond_not_ident: f64,
    pub not_cond_ident: f64,
    pub not_cond_not_ident: f64,
    /// Raw counts in the same order.
    pub counts: [usize; 4],
    /// Number of detected steps.
    pub denominator: usize,
}

impl FourfoldTable {
    /// Row total "condition met".
    pub fn condition_rate(&self) -> f64 {
        self.rate(self.counts[0] + self.counts[1])
    }

    /// Column total "identified".
    pub fn identified_rate(&self) -> f64 {
        self.rate(self.counts[0] + self.counts[2])
    }

    fn rate(&self, count: usize) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.denominator as f64
        }
    }
}

fn round2(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

pub fn tabulate_fourfold(records: &[StepRecord], kind: TableKind) -> FourfoldTable {
    let mut counts = [0usize; 4];
    for r in records.iter().filter(|r| r.detected) {
        let (cond, ident) = match kind {
            TableKind::Superset => (r.condition_superset.is_met(), r.superset_correct),
            TableKind::Exact => (r.condition_exact.is_met(), r.exact_correct),
        };
        let cell = match (cond, ident) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        counts[cell] += 1;
    }
    let denominator = counts.iter().sum();
    let pct = |c: usize| {
        if denominator == 0 {
            0.0
        } else {
            round2(100.0 * c as f64 / denominator as f64)
        }
    };
    FourfoldTable {
        kind,
        cond_ident: pct(counts[0]),
        cond_not_ident: pct(counts[1]),
        not_cond_ident: pct(counts[2]),
        not_cond_not_ident: pct(counts[3]),
        counts,
        denominator,
    }
}

/// Mean `|supp(Δa*) \ supp(Δâ)|` of the plain problem over detected steps.
pub fn mean_excess(records: &[StepRecord]) -> f64 {
    let detected: Vec<&StepRecord> = records.iter().filter(|r| r.detected).collect();
    if detected.is_empty() {
        return 0.0;
    }
    detected.iter().map(|r| r.excess as f64).sum::<f64>() / detected.len() as f64
}
