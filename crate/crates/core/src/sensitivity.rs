//! Linearization of the one-step coupling maps `ζ_I = h_I ∘ f_I`, column
//! reduction and normalization, and assembly of the global block-diagonal
//! system `S v = b`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

use crate::ad::{jacobian, VectorFn};
use crate::dynamics::{couple, step_subsystem, LocalCouplingMap};
use crate::linalg::{DenseMatrix, LinalgError, Qr};
use crate::math::norm2;
use crate::model::NetworkModel;

/// Relative pivot tolerance of the rank-revealing reduction.
pub const DEFAULT_TOL_RANK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("column {column} is zero and cannot be normalized")]
    ZeroColumn { column: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `ζ_I(x_I, a_I, z_{𝒩_I})`; the same code path as the plant step.
pub fn eval_zeta(model: &NetworkModel, subsystem: usize, x_local: &[f64], a_local: &[f64], zn: &[f64], dt: f64) -> Vec<f64> {
    couple(model, subsystem, &step_subsystem(model, subsystem, x_local, a_local, zn, dt))
}

/// Splits the Jacobian of a map `p = (a, z) ↦ ζ` into `(∂ζ/∂a, ∂ζ/∂z)`
/// where the first `n_a` parameters are the inputs.
pub fn split_jacobian<F: VectorFn + ?Sized>(f: &F, p: &[f64], n_a: usize) -> (Vec<f64>, DenseMatrix, DenseMatrix) {
    let (value, jac) = jacobian(f, p);
    let rows = jac.rows();
    let s_a = jac.block(0, 0, rows, n_a);
    let s_n = jac.block(0, n_a, rows, p.len() - n_a);
    (value, s_a, s_n)
}

/// `(S_I^a, S_I^𝒩)` at the nominal point `(x_I, u_I, z̄_{𝒩_I})`.
pub fn jacobians(
    model: &NetworkModel,
    subsystem: usize,
    x_local: &[f64],
    u_local: &[f64],
    zn_nominal: &[f64],
    dt: f64,
) -> (DenseMatrix, DenseMatrix) {
    let map = LocalCouplingMap::new(model, subsystem, x_local.to_vec(), dt);
    let p = map.pack(u_local, zn_nominal);
    let (_, s_a, s_n) = split_jacobian(&map, &p, u_local.len());
    (s_a, s_n)
}

/// Full-column-rank submatrix and the original indices of its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnReduction {
    pub matrix: DenseMatrix,
    /// Kept original column indices, ascending.
    pub columns: Vec<usize>,
}

/// Keeps the pivot columns of a column-pivoted QR whose `|r_kk|` exceeds
/// `tol_rank · |r_00|`.
pub fn reduce_columns(s: &DenseMatrix, tol_rank: f64) -> ColumnReduction {
    let qr = Qr::pivoted(s);
    let diag = qr.diagonal();
    let largest = diag.first().map_or(0.0, |d| d.abs());
    let rank = if largest > 0.0 {
        diag.iter().take_while(|d| d.abs() > tol_rank * largest).count()
    } else {
        0
    };
    let mut columns: Vec<usize> = qr.permutation()[..rank].to_vec();
    columns.sort_unstable();
    ColumnReduction {
        matrix: s.select_columns(&columns),
        columns,
    }
}

/// Divides every column by its Euclidean norm; returns the norms as scales.
///
/// A solution `v` of the normalized system maps back as `Δa = v / scale`.
pub fn normalize_columns(s: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>), SensitivityError> {
    let mut out = s.clone();
    let mut scales = Vec::with_capacity(s.cols());
    for c in 0..s.cols() {
        let col = s.column(c);
        let norm = norm2(&col);
        if !(norm > 0.0) {
            return Err(SensitivityError::ZeroColumn { column: c });
        }
        let scaled: Vec<f64> = col.iter().map(|v| v / norm).collect();
        out.set_column(c, &scaled);
        scales.push(norm);
    }
    Ok((out, scales))
}

/// Linearization of one subsystem at its nominal point.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemSensitivity {
    pub subsystem: usize,
    /// `∂ζ_I/∂a_I`, `d_{z_I} × d_{u_I}`.
    pub s_a: DenseMatrix,
    /// `∂ζ_I/∂z_{𝒩_I}`, unnormalized.
    pub s_n: DenseMatrix,
    /// Reduced and column-normalized `S̃_I^a`.
    pub reduced: DenseMatrix,
    /// Kept local input positions, ascending.
    pub columns: Vec<usize>,
    /// Norms of the kept raw columns.
    pub scales: Vec<f64>,
    /// Nominal point the linearization was taken at.
    pub x_local: Vec<f64>,
    pub u_local: Vec<f64>,
    pub zn_nominal: Vec<f64>,
}

impl SubsystemSensitivity {
    pub fn evaluate(
        model: &NetworkModel,
        subsystem: usize,
        x_local: &[f64],
        u_local: &[f64],
        zn_nominal: &[f64],
        dt: f64,
        tol_rank: f64,
    ) -> Result<Self, SensitivityError> {
        let sub = model.subsystem(subsystem);
        if x_local.len() != sub.d_x() || u_local.len() != sub.d_u() || zn_nominal.len() != sub.d_zn() {
            return Err(SensitivityError::Dimension("nominal point does not match subsystem"));
        }
        let (s_a, s_n) = jacobians(model, subsystem, x_local, u_local, zn_nominal, dt);
        let red = reduce_columns(&s_a, tol_rank);
        let (reduced, scales) = normalize_columns(&red.matrix)?;
        Ok(Self {
            subsystem,
            s_a,
            s_n,
            reduced,
            columns: red.columns,
            scales,
            x_local: x_local.to_vec(),
            u_local: u_local.to_vec(),
            zn_nominal: zn_nominal.to_vec(),
        })
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }
}

/// Per-subsystem linearizations for one sampling instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityBundle {
    pub blocks: Vec<SubsystemSensitivity>,
    pub dt: f64,
}

impl SensitivityBundle {
    /// Linearizes every subsystem at `(x_I(t), u_I(t), z̄_{𝒩_I}(t))`.
    ///
    /// `zn_nominal[I]` is the nominal neighbor aggregate of subsystem `I`.
    pub fn evaluate(
        model: &NetworkModel,
        state: &crate::dynamics::SystemState,
        u: &[f64],
        zn_nominal: &[Vec<f64>],
        dt: f64,
        tol_rank: f64,
    ) -> Result<Self, SensitivityError> {
        if zn_nominal.len() != model.n_subsystems() || u.len() != model.n_buses() {
            return Err(SensitivityError::Dimension("bundle inputs do not match model"));
        }
        let blocks = (0..model.n_subsystems())
            .map(|s| {
                let x = state.local(model, s);
                let u_local = crate::dynamics::local_inputs(model, s, u);
                SubsystemSensitivity::evaluate(model, s, &x, &u_local, &zn_nominal[s], dt, tol_rank)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { blocks, dt })
    }

    /// Original (global) input indices of the kept columns, per subsystem.
    pub fn kept_inputs(&self, model: &NetworkModel) -> Vec<usize> {
        let mut out = Vec::new();
        for blk in &self.blocks {
            let members = &model.subsystem(blk.subsystem).members;
            out.extend(blk.columns.iter().map(|&c| members[c]));
        }
        out
    }
}

/// Row and column ranges of one diagonal block.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Block {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

/// The stacked linear system of the identification problems.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GlobalSystem {
    /// Block-diagonal, reduced, column-normalized `S` (`d_z × r`).
    pub s: DenseMatrix,
    pub b: Vec<f64>,
    /// Original input index of every column of `S`.
    pub column_map: Vec<usize>,
    /// Column norms before normalization.
    pub scales: Vec<f64>,
    pub blocks: Vec<Block>,
    /// Dimension of the original input space.
    pub n_inputs: usize,
}

impl GlobalSystem {
    /// A system treated as one block with identity column map and unit scales.
    pub fn single_block(s: DenseMatrix, b: Vec<f64>) -> Result<Self, SensitivityError> {
        let blocks = vec![Block {
            rows: 0..s.rows(),
            cols: 0..s.cols(),
        }];
        Self::from_blocks(s, b, blocks)
    }

    /// Wraps a block-diagonal matrix; the blocks must tile rows and columns in
    /// order.
    pub fn from_blocks(s: DenseMatrix, b: Vec<f64>, blocks: Vec<Block>) -> Result<Self, SensitivityError> {
        let n = s.cols();
        let sys = Self {
            column_map: (0..n).collect(),
            scales: vec![1.0; n],
            n_inputs: n,
            s,
            b,
            blocks,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<(), SensitivityError> {
        let (m, n) = (self.s.rows(), self.s.cols());
        if self.s.as_slice().len() != m * n {
            return Err(SensitivityError::Dimension("S storage does not match its shape"));
        }
        if self.b.len() != m {
            return Err(SensitivityError::Dimension("b length != rows of S"));
        }
        if self.column_map.len() != n || self.scales.len() != n {
            return Err(SensitivityError::Dimension("column map/scales length != columns of S"));
        }
        let mut seen = vec![false; self.n_inputs];
        for &c in &self.column_map {
            if c >= self.n_inputs || seen[c] {
                return Err(SensitivityError::Dimension("column map is not injective into the input space"));
            }
            seen[c] = true;
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(SensitivityError::Dimension("scales must be positive"));
        }
        let (mut r, mut c) = (0, 0);
        for blk in &self.blocks {
            if blk.rows.start != r || blk.cols.start != c || blk.rows.end < r || blk.cols.end < c {
                return Err(SensitivityError::Dimension("blocks must tile S in order"));
            }
            r = blk.rows.end;
            c = blk.cols.end;
        }
        if r != m || c != n {
            return Err(SensitivityError::Dimension("blocks do not cover S"));
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.s.cols()
    }

    /// Maps a normalized reduced solution to original input coordinates.
    pub fn to_original(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_inputs];
        for (k, &c) in self.column_map.iter().enumerate() {
            out[c] = v[k] / self.scales[k];
        }
        out
    }

    /// Normalized coordinates `v_k = scale_k · Δa_{map(k)}` of an original
    /// input vector; entries outside the kept columns are dropped.
    pub fn to_normalized(&self, delta_a: &[f64]) -> Vec<f64> {
        self.column_map
            .iter()
            .zip(&self.scales)
            .map(|(&c, s)| s * delta_a[c])
            .collect()
    }

    /// Column of `S` holding original input `i`, if it was kept.
    pub fn column_of(&self, input: usize) -> Option<usize> {
        self.column_map.iter().position(|&c| c == input)
    }
}

/// Stacks `S = diag(S̃_I^a)` and `b_I = Δz_I − S_I^𝒩 Δz_{𝒩_I}`.
///
/// `dz[I]` is the deviation `Δz_I(t+1)` observed after the step and `dzn[I]`
/// the neighbor deviation `Δz_{𝒩_I}(t)` that entered it.
pub fn assemble_global(
    model: &NetworkModel,
    bundle: &SensitivityBundle,
    dz: &[Vec<f64>],
    dzn: &[Vec<f64>],
) -> Result<GlobalSystem, SensitivityError> {
    let n_sub = model.n_subsystems();
    if bundle.blocks.len() != n_sub || dz.len() != n_sub || dzn.len() != n_sub {
        return Err(SensitivityError::Dimension("per-subsystem inputs do not match partition"));
    }
    let rows = model.d_z();
    let cols: usize = bundle.blocks.iter().map(|b| b.rank()).sum();
    let mut s = DenseMatrix::zeros(rows, cols);
    let mut b = Vec::with_capacity(rows);
    let mut column_map = Vec::with_capacity(cols);
    let mut scales = Vec::with_capacity(cols);
    let mut blocks = Vec::with_capacity(n_sub);
    let (mut r0, mut c0) = (0, 0);
    for (blk, (dz_i, dzn_i)) in bundle.blocks.iter().zip(dz.iter().zip(dzn)) {
        let sub = model.subsystem(blk.subsystem);
        if dz_i.len() != sub.d_z() || dzn_i.len() != sub.d_zn() {
            return Err(SensitivityError::Dimension("deviation frame length"));
        }
        let coupled = blk.s_n.mul_vec(dzn_i);
        b.extend(dz_i.iter().zip(&coupled).map(|(a, c)| a - c));
        for r in 0..sub.d_z() {
            for c in 0..blk.rank() {
                s[(r0 + r, c0 + c)] = blk.reduced[(r, c)];
            }
        }
        column_map.extend(blk.columns.iter().map(|&c| sub.members[c]));
        scales.extend_from_slice(&blk.scales);
        blocks.push(Block {
            rows: r0..r0 + sub.d_z(),
            cols: c0..c0 + blk.rank(),
        });
        r0 += sub.d_z();
        c0 += blk.rank();
    }
    let sys = GlobalSystem {
        s,
        b,
        column_map,
        scales,
        blocks,
        n_inputs: model.d_u(),
    };
    sys.validate()?;
    Ok(sys)
}
