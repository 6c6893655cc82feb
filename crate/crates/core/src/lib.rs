//! Hierarchical attack identification for networks of coupled nonlinear
//! subsystems.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! pipeline: the swing-equation plant and its subsystem maps, forward-mode
//! sensitivities, dense kernels, the sparse identification solvers, the
//! sufficient-condition checks, and the experiment protocol. File formats,
//! the trajectory/result writers and the command line live in the `attackid`
//! crate.
//!
//! A typical identification round at one sampling instant:
//!
//! 1. [`dynamics::ClosedLoop`] advances the plant and records the coupling
//!    deviations `Δz = z − z̄`.
//! 2. [`identify::detect`] raises an alarm if some `‖Δz_I‖∞` exceeds `τ_D`.
//! 3. [`sensitivity::SensitivityBundle::evaluate`] linearizes every local
//!    map, drops dependent columns and normalizes the rest;
//!    [`sensitivity::assemble_global`] stacks the block-diagonal system.
//! 4. [`identify::solve_l0_equality`] / [`identify::solve_l0_relaxed`]
//!    return the sparsest explaining attack.
//! 5. [`guarantees`] evaluates whether the sufficient conditions certify the
//!    identified attack set.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod ad;
pub mod dynamics;
pub mod experiment;
pub mod guarantees;
pub mod identify;
pub mod linalg;
pub mod model;
pub mod sensitivity;

mod math;

pub use dynamics::{ClosedLoop, SystemState};
pub use experiment::{ExperimentConfig, FourfoldTable, SeriesKind, StepRecord};
pub use identify::{IdentificationResult, ProblemKind};
pub use linalg::DenseMatrix;
pub use model::{Bus, BusKind, Line, NetworkConfig, NetworkModel};
pub use sensitivity::{GlobalSystem, SensitivityBundle};
