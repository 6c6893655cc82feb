//! Curvature estimate, Taylor remainder bound and the sufficient conditions
//! for superset and exact identification.
//!
//! All quantities live in the coordinates the solver sees: kept input
//! columns in normalized units `v_k = scale_k · Δa_k`, neighbor couplings in
//! rad.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ad::{jacobian, Affine, VectorFn};
use crate::dynamics::LocalCouplingMap;
use crate::math::{norm1, norm2, sqrt};
use crate::model::NetworkModel;
use crate::sensitivity::{GlobalSystem, SubsystemSensitivity};

/// Safety factor applied to the sampled curvature maximum.
pub const K_INFLATION: f64 = 1.2;
/// Default half-width of the neighbor-coupling box in rad; equals the largest
/// input-box half-width of the bundled model.
pub const DEFAULT_RHO: f64 = 0.65;
/// Default number of random samples per subsystem.
pub const DEFAULT_K_SAMPLES: usize = 32;
/// Central-difference step relative to the box half-width.
const FD_REL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuaranteeError {
    #[error("curvature K is zero: the maps are linear and the conditions hold for every attack")]
    ZeroCurvature,
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
}

/// Axis-aligned sampling box `[lo, hi]` around a nominal parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub nominal: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn symmetric(nominal: Vec<f64>, radius: f64) -> Self {
        Self {
            lo: nominal.iter().map(|c| c - radius).collect(),
            hi: nominal.iter().map(|c| c + radius).collect(),
            nominal,
        }
    }

    pub fn dim(&self) -> usize {
        self.nominal.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    /// Deterministic sample sequence: the nominal point, the two extremes of
    /// every axis, then uniform draws. A prefix of a longer run is the same
    /// as a shorter run.
    pub fn points(&self, n_samples: usize, seed: u64) -> Vec<Vec<f64>> {
        let p = self.dim();
        let mut pts = Vec::with_capacity(1 + 2 * p + n_samples);
        pts.push(self.nominal.clone());
        for l in 0..p {
            for end in [self.lo[l], self.hi[l]] {
                let mut q = self.nominal.clone();
                q[l] = end;
                pts.push(q);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_samples {
            pts.push((0..p).map(|l| self.lo[l] + (self.hi[l] - self.lo[l]) * rng.gen::<f64>()).collect());
        }
        pts
    }
}

/// `max_{|α|=2} ‖∂^α f(p)‖₂` by central differences of forward-mode
/// Jacobians with per-axis steps `h`.
pub fn max_second_partial<F: VectorFn + ?Sized>(f: &F, p: &[f64], h: &[f64]) -> f64 {
    let n = p.len();
    let mut best = 0.0_f64;
    let mut q = p.to_vec();
    for l in 0..n {
        q[l] = p[l] + h[l];
        let (_, jp) = jacobian(f, &q);
        q[l] = p[l] - h[l];
        let (_, jm) = jacobian(f, &q);
        q[l] = p[l];
        // column j of the difference is ∂²f/∂p_l∂p_j
        for j in 0..n {
            let col: Vec<f64> = (0..jp.rows()).map(|r| (jp[(r, j)] - jm[(r, j)]) / (2.0 * h[l])).collect();
            best = best.max(norm2(&col));
        }
    }
    best
}

/// Sampled curvature constant of `f` over `bx`, before inflation.
///
/// The first `1 + 2p + n_samples` points of [`SampleBox::points`] are used,
/// so the estimate is non-decreasing in `n_samples`.
pub fn sample_curvature<F: VectorFn + ?Sized>(f: &F, bx: &SampleBox, n_samples: usize, seed: u64) -> f64 {
    let h: Vec<f64> = bx
        .lo
        .iter()
        .zip(&bx.hi)
        .map(|(l, u)| FD_REL_STEP * ((u - l) / 2.0).max(1e-3))
        .collect();
    bx.points(n_samples, seed)
        .iter()
        .map(|p| max_second_partial(f, p, &h))
        .fold(0.0, f64::max)
}

/// Inflated curvature estimate `K = 1.2 · sampled max`.
pub fn estimate_curvature<F: VectorFn + ?Sized>(f: &F, bx: &SampleBox, n_samples: usize, seed: u64) -> f64 {
    K_INFLATION * sample_curvature(f, bx, n_samples, seed)
}

/// The map `ζ_I` expressed in solver coordinates `q = (v_kept, Δz_{𝒩_I})`
/// around the nominal point of a linearization, together with its box.
///
/// Inputs range over the physical input boxes, neighbor couplings over
/// `z̄_{𝒩_I} ± ρ`.
pub fn local_curvature_problem<'m>(
    model: &'m NetworkModel,
    sens: &SubsystemSensitivity,
    dt: f64,
    rho: f64,
) -> (Affine<LocalCouplingMap<'m>>, SampleBox) {
    let sub = model.subsystem(sens.subsystem);
    let map = LocalCouplingMap::new(model, sens.subsystem, sens.x_local.clone(), dt);
    let base = map.pack(&sens.u_local, &sens.zn_nominal);
    let n_u = sub.d_u();
    let mut directions = Vec::new();
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for (&c, &scale) in sens.columns.iter().zip(&sens.scales) {
        let bus = model.bus(sub.members[c]);
        directions.push((c, 1.0 / scale));
        lo.push(scale * (bus.u_min - sens.u_local[c]).min(0.0));
        hi.push(scale * (bus.u_max - sens.u_local[c]).max(0.0));
    }
    for j in 0..sub.d_zn() {
        directions.push((n_u + j, 1.0));
        lo.push(-rho);
        hi.push(rho);
    }
    let nominal = vec![0.0; directions.len()];
    (Affine::new(map, base, directions), SampleBox { nominal, lo, hi })
}

/// `K_I` for one subsystem linearization.
pub fn estimate_k(
    model: &NetworkModel,
    sens: &SubsystemSensitivity,
    dt: f64,
    rho: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64, GuaranteeError> {
    if !(rho > 0.0) || n_samples == 0 {
        return Err(GuaranteeError::Parameter("rho must be positive and n_samples at least 1"));
    }
    let (f, bx) = local_curvature_problem(model, sens, dt, rho);
    Ok(estimate_curvature(&f, &bx, n_samples, seed ^ sens.subsystem as u64))
}

/// `(K_I / 2)(‖Δa_I‖₁ + ‖Δz_{𝒩_I}‖₁)²`.
pub fn remainder_bound(k: f64, delta_a: &[f64], delta_zn: &[f64]) -> f64 {
    let s = norm1(delta_a) + norm1(delta_zn);
    k / 2.0 * s * s
}

/// `(K / 2)(‖Δa‖₁ + M ‖Δz‖₁)²`.
pub fn global_remainder_bound(k: f64, m: usize, delta_a: &[f64], delta_z: &[f64]) -> f64 {
    let s = norm1(delta_a) + m as f64 * norm1(delta_z);
    k / 2.0 * s * s
}

/// `δ = √(2 ε σ_min / K)` and `δ̃ = √(ε σ_min / K)`.
pub fn compute_deltas(epsilon: f64, sigma_min: f64, k: f64) -> Result<(f64, f64), GuaranteeError> {
    if !(epsilon > 0.0) || !(sigma_min > 0.0) || !(k >= 0.0) {
        return Err(GuaranteeError::Parameter("epsilon, sigma_min must be positive and K non-negative"));
    }
    if k == 0.0 {
        return Err(GuaranteeError::ZeroCurvature);
    }
    let delta_tilde = sqrt(epsilon * sigma_min / k);
    Ok((core::f64::consts::SQRT_2 * delta_tilde, delta_tilde))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Condition {
    Met,
    NotMet,
    /// No attack, or an attacked input is not representable in the reduced
    /// system.
    NotApplicable,
}

impl Condition {
    pub fn is_met(self) -> bool {
        self == Condition::Met
    }

    fn from_bool(b: bool) -> Self {
        if b {
            Condition::Met
        } else {
            Condition::NotMet
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GuaranteeReport {
    pub k_per_subsystem: Vec<f64>,
    pub k: f64,
    pub m: usize,
    pub sigma_min: f64,
    /// `ε = 0.9 · min_i |v̂_i|` over the attacked kept columns.
    pub epsilon: f64,
    pub delta: f64,
    pub delta_tilde: f64,
    /// `‖v̂‖₁ + M ‖Δẑ‖₁`.
    pub lhs: f64,
    pub condition_superset: Condition,
    pub condition_exact: Condition,
}

/// Fraction of the smallest attacked entry used as `ε`.
pub const EPSILON_FRACTION: f64 = 0.9;

/// `ε` for a known attack in solver coordinates, `None` when the attack is
/// empty or touches a dropped column.
pub fn oracle_epsilon(sys: &GlobalSystem, true_delta: &[f64]) -> Option<f64> {
    let mut min = f64::INFINITY;
    for (i, &d) in true_delta.iter().enumerate() {
        if d != 0.0 {
            let c = sys.column_of(i)?;
            min = min.min((sys.scales[c] * d).abs());
        }
    }
    min.is_finite().then_some(EPSILON_FRACTION * min)
}

/// Evaluates both sufficient conditions for a known attack `Δâ` (original
/// coordinates) and coupling deviation `Δẑ` entering the step.
pub fn check_conditions(
    sys: &GlobalSystem,
    k_per_subsystem: Vec<f64>,
    m: usize,
    sigma_min: f64,
    true_delta: &[f64],
    dz_hat: &[f64],
) -> Result<GuaranteeReport, GuaranteeError> {
    let k = k_per_subsystem.iter().copied().fold(0.0, f64::max);
    let mut report = GuaranteeReport {
        k_per_subsystem,
        k,
        m,
        sigma_min,
        epsilon: f64::NAN,
        delta: f64::NAN,
        delta_tilde: f64::NAN,
        lhs: f64::NAN,
        condition_superset: Condition::NotApplicable,
        condition_exact: Condition::NotApplicable,
    };
    let Some(epsilon) = oracle_epsilon(sys, true_delta) else {
        return Ok(report);
    };
    let v_hat = sys.to_normalized(true_delta);
    let lhs = norm1(&v_hat) + m as f64 * norm1(dz_hat);
    report.epsilon = epsilon;
    report.lhs = lhs;
    if !(sigma_min > 0.0) {
        report.condition_superset = Condition::NotMet;
        report.condition_exact = Condition::NotMet;
        return Ok(report);
    }
    if k == 0.0 {
        // linear coupling maps: no remainder, any attack size is covered
        report.delta = f64::INFINITY;
        report.delta_tilde = f64::INFINITY;
        report.condition_superset = check_superset_condition(lhs, f64::INFINITY);
        report.condition_exact = check_exact_condition(lhs, f64::INFINITY);
        return Ok(report);
    }
    let (delta, delta_tilde) = compute_deltas(epsilon, sigma_min, k)?;
    report.delta = delta;
    report.delta_tilde = delta_tilde;
    report.condition_superset = check_superset_condition(lhs, delta);
    report.condition_exact = check_exact_condition(lhs, delta_tilde);
    Ok(report)
}

/// `‖Δâ‖₁ + M‖Δẑ‖₁ ≤ δ` (non-strict).
pub fn check_superset_condition(lhs: f64, delta: f64) -> Condition {
    if lhs == 0.0 {
        return Condition::NotApplicable;
    }
    Condition::from_bool(lhs <= delta)
}

/// `‖Δâ‖₁ + M‖Δẑ‖₁ ≤ δ̃` (non-strict).
pub fn check_exact_condition(lhs: f64, delta_tilde: f64) -> Condition {
    check_superset_condition(lhs, delta_tilde)
}
