//! Detection and exact ℓ0 identification by support enumeration.
//!
//! Both problems minimize the number of nonzero input deviations subject to a
//! residual test on the linear system `S v = b`: an (almost) equality test
//! for the plain problem and a ball of radius `ε σ_min / 2` for the relaxed
//! one. For a fixed support the least-squares solution minimizes the residual,
//! so checking it decides feasibility exactly.
//!
//! `S` is block diagonal, so a support splits into per-block supports and the
//! squared residual is the sum of per-block squared residuals. The solver
//! enumerates every subset of every block once and combines the per-block
//! optima by dynamic programming over the total cardinality. This visits the
//! same candidates as plain cardinality-ordered enumeration but costs
//! `Σ 2^{r_I}` least-squares solves instead of `Σ_k C(r, k)`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::linalg::{least_squares, LinalgError};
use crate::math::norm_inf;
use crate::sensitivity::GlobalSystem;

/// Detection threshold `τ_D` in rad.
pub const DEFAULT_TAU_D: f64 = 1e-5;
/// Identification threshold `ε_I` in p.u.
pub const DEFAULT_EPS_I: f64 = 1e-5;
/// Residual accepted as equality in the plain problem.
pub const DEFAULT_TOL_FEAS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentifyError {
    #[error("no support up to the full rank {rank} satisfies the constraint (best residual {residual:e} > {threshold:e})")]
    Infeasible { rank: usize, residual: f64, threshold: f64 },
    #[error("invalid relaxation budget: {0}")]
    Budget(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionVerdict {
    pub alarm: bool,
    /// `‖Δz_I‖∞` per subsystem.
    pub norms: Vec<f64>,
    pub threshold: f64,
}

/// Alarm iff some `‖Δz_I‖∞` strictly exceeds `τ_D`.
pub fn detect(dz: &[Vec<f64>], tau_d: f64) -> DetectionVerdict {
    let norms: Vec<f64> = dz.iter().map(|d| norm_inf(d)).collect();
    DetectionVerdict {
        alarm: norms.iter().any(|&n| n > tau_d),
        norms,
        threshold: tau_d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProblemKind {
    /// `min ‖v‖₀ s.t. S v = b`.
    Equality,
    /// `min ‖v‖₀ s.t. ‖b − S v‖₂ ≤ ε σ_min / 2`.
    Relaxed,
}

/// `ε` and `σ_min` of the relaxed problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationBudget {
    pub epsilon: f64,
    pub sigma_min: f64,
}

impl RelaxationBudget {
    pub fn radius(&self) -> f64 {
        self.epsilon * self.sigma_min / 2.0
    }
}

/// Optimal support of `S v ≈ b` in the columns of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    /// Columns of `S`, ascending.
    pub support: Vec<usize>,
    /// Solution over all columns (zeros outside `support`).
    pub v: Vec<f64>,
    pub residual: f64,
    /// Number of least-squares subproblems solved.
    pub enumerated: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdentificationResult {
    pub kind: ProblemKind,
    /// `Δa*` in original input coordinates.
    pub values: Vec<f64>,
    /// Inputs the solver activated (original indices, ascending).
    pub active: Vec<usize>,
    /// `{i : |Δa*_i| > ε_I}`.
    pub support: Vec<usize>,
    pub cardinality: usize,
    /// `‖b − S v*‖₂` in the normalized system.
    pub residual: f64,
    pub threshold: f64,
    pub enumerated_count: usize,
}

/// `{i : |x_i| > ε_I}`.
pub fn extract_support(values: &[f64], eps_i: f64) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > eps_i)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone)]
struct Candidate {
    res2: f64,
    support: Vec<usize>,
    values: Vec<f64>,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match a.res2.partial_cmp(&b.res2).unwrap_or(Ordering::Equal) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.support < b.support,
    }
}

/// Best candidate of every cardinality within one block. Supports are global
/// column indices.
fn block_optima(sys: &GlobalSystem, block: usize, enumerated: &mut usize) -> Result<Vec<Candidate>, IdentifyError> {
    let blk = &sys.blocks[block];
    let n = blk.cols.len();
    let rows: Vec<usize> = blk.rows.clone().collect();
    let y: Vec<f64> = rows.iter().map(|&r| sys.b[r]).collect();
    let mut best: Vec<Option<Candidate>> = vec![None; n + 1];
    for mask in 0u64..(1u64 << n) {
        let local: Vec<usize> = (0..n).filter(|c| mask >> c & 1 == 1).collect();
        let k = local.len();
        if k > rows.len() {
            continue;
        }
        let support: Vec<usize> = local.iter().map(|c| blk.cols.start + c).collect();
        let sub = sys.s.block(blk.rows.start, 0, rows.len(), sys.s.cols()).select_columns(&support);
        *enumerated += 1;
        let ls = match least_squares(&sub, &y) {
            Ok(ls) => ls,
            // a rank-deficient subset cannot be the unique optimum; a smaller
            // subset with the same span has the same residual
            Err(LinalgError::RankDeficient { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let cand = Candidate {
            res2: ls.residual * ls.residual,
            support,
            values: ls.x,
        };
        if best[k].as_ref().is_none_or(|b| better(&cand, b)) {
            best[k] = Some(cand);
        }
    }
    Ok(best.into_iter().flatten().collect())
}

fn solve_with_threshold(sys: &GlobalSystem, threshold: f64) -> Result<SparseSolution, IdentifyError> {
    let r = sys.rank();
    let mut enumerated = 0;
    // dp[k]: best combination with total cardinality k over processed blocks
    let mut dp: Vec<Option<Candidate>> = vec![Some(Candidate {
        res2: 0.0,
        support: Vec::new(),
        values: Vec::new(),
    })];
    for b in 0..sys.blocks.len() {
        let opts = block_optima(sys, b, &mut enumerated)?;
        let mut next: Vec<Option<Candidate>> = vec![None; dp.len() + sys.blocks[b].cols.len()];
        for (k, cur) in dp.iter().enumerate() {
            let Some(cur) = cur else { continue };
            for opt in &opts {
                let kk = k + opt.support.len();
                let mut support = cur.support.clone();
                support.extend_from_slice(&opt.support);
                let mut values = cur.values.clone();
                values.extend_from_slice(&opt.values);
                let cand = Candidate {
                    res2: cur.res2 + opt.res2,
                    support,
                    values,
                };
                if next[kk].as_ref().is_none_or(|b| better(&cand, b)) {
                    next[kk] = Some(cand);
                }
            }
        }
        dp = next;
    }
    let mut best_residual = f64::INFINITY;
    for cand in dp.into_iter().flatten() {
        let residual = libm::sqrt(cand.res2);
        if residual <= threshold {
            let mut v = vec![0.0; r];
            for (&c, &x) in cand.support.iter().zip(&cand.values) {
                v[c] = x;
            }
            return Ok(SparseSolution {
                support: cand.support,
                v,
                residual,
                enumerated,
            });
        }
        best_residual = best_residual.min(residual);
    }
    Err(IdentifyError::Infeasible {
        rank: r,
        residual: best_residual,
        threshold,
    })
}

/// Sparsest `v` with `‖b − S v‖₂ ≤ threshold`, ties broken by smallest
/// residual and then lexicographically smallest support.
pub fn solve_l0(sys: &GlobalSystem, threshold: f64) -> Result<SparseSolution, IdentifyError> {
    solve_with_threshold(sys, threshold)
}

fn finish(sys: &GlobalSystem, sol: SparseSolution, kind: ProblemKind, threshold: f64, eps_i: f64) -> IdentificationResult {
    let values = sys.to_original(&sol.v);
    let mut active: Vec<usize> = sol.support.iter().map(|&c| sys.column_map[c]).collect();
    active.sort_unstable();
    let support = extract_support(&values, eps_i);
    IdentificationResult {
        kind,
        cardinality: support.len(),
        values,
        active,
        support,
        residual: sol.residual,
        threshold,
        enumerated_count: sol.enumerated,
    }
}

/// The plain problem with `‖b − S v‖₂ ≤ tol_feas` standing in for equality.
pub fn solve_l0_equality(sys: &GlobalSystem, tol_feas: f64, eps_i: f64) -> Result<IdentificationResult, IdentifyError> {
    let sol = solve_with_threshold(sys, tol_feas)?;
    Ok(finish(sys, sol, ProblemKind::Equality, tol_feas, eps_i))
}

/// The relaxed problem with radius `ε σ_min / 2`.
pub fn solve_l0_relaxed(
    sys: &GlobalSystem,
    budget: RelaxationBudget,
    eps_i: f64,
) -> Result<IdentificationResult, IdentifyError> {
    if !(budget.epsilon > 0.0) || !(budget.sigma_min > 0.0) {
        return Err(IdentifyError::Budget("epsilon and sigma_min must be positive"));
    }
    let radius = budget.radius();
    let sol = solve_with_threshold(sys, radius)?;
    Ok(finish(sys, sol, ProblemKind::Relaxed, radius, eps_i))
}

/// Reference solver: plain enumeration of all supports by increasing
/// cardinality, ignoring the block structure.
pub fn solve_l0_exhaustive(sys: &GlobalSystem, threshold: f64, max_cardinality: usize) -> Option<SparseSolution> {
    let r = sys.rank();
    let m = sys.s.rows();
    let mut enumerated = 0;
    for k in 0..=max_cardinality.min(r).min(m) {
        let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            let sub = sys.s.select_columns(&combo);
            enumerated += 1;
            if let Ok(ls) = least_squares(&sub, &sys.b) {
                let take = match &best {
                    None => true,
                    Some((res, sup, _)) => ls.residual < *res || (ls.residual == *res && combo < *sup),
                };
                if take {
                    best = Some((ls.residual, combo.clone(), ls.x));
                }
            }
            // next combination in lexicographic order
            let mut i = k;
            while i > 0 && combo[i - 1] == r - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..k {
                combo[j] = combo[j - 1] + 1;
            }
        }
        if let Some((res, support, x)) = best {
            if res <= threshold {
                let mut v = vec![0.0; r];
                for (&c, &val) in support.iter().zip(&x) {
                    v[c] = val;
                }
                return Some(SparseSolution {
                    support,
                    v,
                    residual: res,
                    enumerated,
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn identity_system(b: Vec<f64>) -> GlobalSystem {
        GlobalSystem::single_block(DenseMatrix::identity(b.len()), b).unwrap()
    }

    #[test]
    fn detection_is_strict() {
        assert!(!detect(&[vec![0.0, 0.0], vec![]], 1e-5).alarm);
        assert!(detect(&[vec![0.0], vec![-2e-5]], 1e-5).alarm);
        assert!(!detect(&[vec![1e-5]], 1e-5).alarm);
    }

    #[test]
    fn zero_rhs_gives_empty_support() {
        let r = solve_l0_equality(&identity_system(vec![0.0; 3]), DEFAULT_TOL_FEAS, DEFAULT_EPS_I).unwrap();
        assert_eq!(r.cardinality, 0);
        assert_eq!(r.values, vec![0.0; 3]);
    }

    #[test]
    fn identity_system_recovers_single_entry() {
        let r = solve_l0_equality(&identity_system(vec![0.0, 0.5, 0.0]), DEFAULT_TOL_FEAS, DEFAULT_EPS_I).unwrap();
        assert_eq!(r.support, vec![1]);
        assert_eq!(r.values, vec![0.0, 0.5, 0.0]);
        assert_eq!(r.kind, ProblemKind::Equality);
    }

    #[test]
    fn large_radius_accepts_zero() {
        let sys = identity_system(vec![0.3, 0.4]);
        let r = solve_l0_relaxed(
            &sys,
            RelaxationBudget {
                epsilon: 1.0,
                sigma_min: 1.0,
            },
            DEFAULT_EPS_I,
        )
        .unwrap();
        assert_eq!(r.cardinality, 0);
        assert!((r.residual - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tall_inconsistent_block_is_infeasible() {
        let s = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let sys = GlobalSystem::single_block(s, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            solve_l0_equality(&sys, DEFAULT_TOL_FEAS, DEFAULT_EPS_I),
            Err(IdentifyError::Infeasible { rank: 1, .. })
        ));
    }

    #[test]
    fn support_threshold() {
        assert_eq!(extract_support(&[0.0, 3e-5, 1e-6], 1e-5), vec![1]);
        assert!(extract_support(&[0.0; 4], 1e-5).is_empty());
        assert_eq!(extract_support(&[1.0, -1.0], 1e-5), vec![0, 1]);
    }
}
