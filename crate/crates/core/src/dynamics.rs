//! Swing-equation plant, the discrete subsystem map `f_I`, the coupling map
//! `h_I`, nominal-value prediction and the closed loop.
//!
//! Local state layout: `x_I = (θ_members, ω_members)` with members in
//! ascending bus order. Neighbor coupling angles enter a subsystem step as
//! constants (piecewise-constant coupling over one sampling interval).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::ad::{Scalar, VectorFn};
use crate::model::{NetworkModel, TermSource};

/// Default sampling interval in seconds.
pub const DEFAULT_DT: f64 = 0.1;
/// Default proportional frequency gain of the stand-in controller, p.u.·s.
pub const DEFAULT_KP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("non-finite state after step {step}")]
    NonFinite { step: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("subsystem {subsystem} is missing the nominal frame of neighbor {neighbor}")]
    MissingNeighborFrame { subsystem: usize, neighbor: usize },
}

/// Global state `x = (θ, ω)` indexed by bus.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemState {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SystemState {
    pub fn new(theta: Vec<f64>, omega: Vec<f64>) -> Result<Self, DynamicsError> {
        if theta.len() != omega.len() {
            return Err(DynamicsError::Dimension("theta and omega lengths differ"));
        }
        Ok(Self { theta, omega })
    }

    /// `(θ⁰, 0)` from the model file.
    pub fn initial(model: &NetworkModel) -> Self {
        Self {
            theta: model.theta0(),
            omega: vec![0.0; model.n_buses()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.omega).all(|v| v.is_finite())
    }

    /// Local state `x_I`.
    pub fn local(&self, model: &NetworkModel, subsystem: usize) -> Vec<f64> {
        let members = &model.subsystem(subsystem).members;
        members
            .iter()
            .map(|&i| self.theta[i])
            .chain(members.iter().map(|&i| self.omega[i]))
            .collect()
    }

    pub fn set_local(&mut self, model: &NetworkModel, subsystem: usize, x_local: &[f64]) {
        let members = &model.subsystem(subsystem).members;
        let n = members.len();
        for (k, &i) in members.iter().enumerate() {
            self.theta[i] = x_local[k];
            self.omega[i] = x_local[n + k];
        }
    }

    /// Global coupling vector `z`, subsystem blocks in index order.
    pub fn coupling(&self, model: &NetworkModel) -> Vec<f64> {
        model
            .subsystems()
            .iter()
            .flat_map(|s| s.coupling.iter().map(|&i| self.theta[i]))
            .collect()
    }
}

/// Restricts a global per-bus vector to the members of a subsystem.
pub fn local_inputs(model: &NetworkModel, subsystem: usize, u: &[f64]) -> Vec<f64> {
    model.subsystem(subsystem).members.iter().map(|&i| u[i]).collect()
}

/// Continuous swing dynamics of the whole network.
///
/// `θ̇_i = ω_i`, `ω̇_i = (u_i − d_i ω_i − Σ_j k_ij sin(θ_i − θ_j)) / m_i`.
pub fn swing_rhs(model: &NetworkModel, theta: &[f64], omega: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = model.n_buses();
    let mut domega = vec![0.0; n];
    for (i, dw) in domega.iter_mut().enumerate() {
        let bus = model.bus(i);
        let flow: f64 = model
            .adjacency(i)
            .iter()
            .map(|nb| nb.k * crate::math::sin(theta[i] - theta[nb.bus]))
            .sum();
        *dw = (u[i] - bus.d * omega[i] - flow) / bus.m;
    }
    (omega.to_vec(), domega)
}

fn local_rhs<S: Scalar>(
    model: &NetworkModel,
    subsystem: usize,
    theta: &[S],
    omega: &[S],
    a: &[S],
    zn: &[S],
) -> Vec<S> {
    let sub = model.subsystem(subsystem);
    let n = sub.members.len();
    let mut out = Vec::with_capacity(2 * n);
    out.extend_from_slice(omega);
    for (k, &bus_index) in sub.members.iter().enumerate() {
        let bus = model.bus(bus_index);
        let mut flow = S::constant(0.0);
        for term in &sub.terms[k] {
            let other = match term.source {
                TermSource::Member(l) => theta[l],
                TermSource::Coupling(c) => zn[c],
            };
            flow = flow + (theta[k] - other).sin() * term.k;
        }
        out.push((a[k] - omega[k] * bus.d - flow) / bus.m);
    }
    out
}

fn axpy<S: Scalar>(x: &[S], h: f64, k: &[S]) -> Vec<S> {
    x.iter().zip(k).map(|(&xi, &ki)| xi + ki * h).collect()
}

/// One classical RK4 step of subsystem `I` with neighbor angles held at `zn`.
pub fn rk4_local<S: Scalar>(model: &NetworkModel, subsystem: usize, x: &[S], a: &[S], zn: &[S], dt: f64) -> Vec<S> {
    let n = model.subsystem(subsystem).members.len();
    let f = |state: &[S]| local_rhs(model, subsystem, &state[..n], &state[n..], a, zn);
    let k1 = f(x);
    let k2 = f(&axpy(x, dt / 2.0, &k1));
    let k3 = f(&axpy(x, dt / 2.0, &k2));
    let k4 = f(&axpy(x, dt, &k3));
    (0..2 * n)
        .map(|i| x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
        .collect()
}

/// `x_I⁺ = f_I(x_I, a_I, z_{𝒩_I})`.
pub fn step_subsystem(model: &NetworkModel, subsystem: usize, x_local: &[f64], a_local: &[f64], zn: &[f64], dt: f64) -> Vec<f64> {
    rk4_local(model, subsystem, x_local, a_local, zn, dt)
}

/// `z_I = h_I(x_I)`: the angles of the coupling buses in ascending bus order.
pub fn couple<S: Scalar>(model: &NetworkModel, subsystem: usize, x_local: &[S]) -> Vec<S> {
    model.subsystem(subsystem).coupling_local.iter().map(|&l| x_local[l]).collect()
}

/// One-step-ahead nominal coupling value `z̄_I = h_I(f_I(x_I, u_I, z̄_{𝒩_I}))`.
pub fn predict_nominal(
    model: &NetworkModel,
    subsystem: usize,
    x_local: &[f64],
    u_local: &[f64],
    zn_nominal: &[f64],
    dt: f64,
) -> Vec<f64> {
    couple(model, subsystem, &step_subsystem(model, subsystem, x_local, u_local, zn_nominal, dt))
}

/// Concatenates the neighbors' frames in ascending subsystem order.
///
/// `frames` holds `(J, z̄_J)` pairs in any order; frames of non-neighbors
/// are ignored.
pub fn combine_neighbor_nominals(
    model: &NetworkModel,
    subsystem: usize,
    frames: &[(usize, Vec<f64>)],
) -> Result<Vec<f64>, DynamicsError> {
    let sub = model.subsystem(subsystem);
    let mut out = Vec::with_capacity(sub.d_zn());
    for &j in &sub.neighbors {
        let frame = frames
            .iter()
            .find(|(idx, _)| *idx == j)
            .ok_or(DynamicsError::MissingNeighborFrame {
                subsystem,
                neighbor: j,
            })?;
        if frame.1.len() != model.subsystem(j).d_z() {
            return Err(DynamicsError::Dimension("neighbor frame length"));
        }
        out.extend_from_slice(&frame.1);
    }
    Ok(out)
}

/// Gathers `z_{𝒩_I}` from per-subsystem coupling frames indexed by subsystem.
pub fn gather_neighbors(model: &NetworkModel, subsystem: usize, frames: &[Vec<f64>]) -> Vec<f64> {
    model
        .subsystem(subsystem)
        .neighbors
        .iter()
        .flat_map(|&j| frames[j].iter().copied())
        .collect()
}

/// Splits a global coupling vector into per-subsystem frames.
pub fn split_coupling(model: &NetworkModel, z: &[f64]) -> Vec<Vec<f64>> {
    (0..model.n_subsystems())
        .map(|s| z[model.z_offset(s)..model.z_offset(s + 1)].to_vec())
        .collect()
}

/// Input that makes `(θ⁰, 0)` an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyInput {
    pub u: Vec<f64>,
    /// Bus ids whose steady input lies outside the bus input box.
    pub out_of_box: Vec<usize>,
}

/// Box slack tolerated before a steady input is reported as out of range.
const BOX_SLACK: f64 = 1e-9;

/// `u_i = Σ_j k_ij sin(θ_i⁰ − θ_j⁰)`.
pub fn steady_state_input(model: &NetworkModel, theta0: &[f64]) -> SteadyInput {
    let n = model.n_buses();
    let zeros = vec![0.0; n];
    let (_, neg_flow) = swing_rhs(model, theta0, &zeros, &zeros);
    let mut u = Vec::with_capacity(n);
    let mut out_of_box = Vec::new();
    for (i, f) in neg_flow.iter().enumerate() {
        let bus = model.bus(i);
        let ui = model
            .adjacency(i)
            .iter()
            .map(|nb| nb.k * crate::math::sin(theta0[i] - theta0[nb.bus]))
            .sum::<f64>();
        debug_assert!((ui + f * bus.m).abs() <= 1e-12 * (1.0 + ui.abs()));
        if ui < bus.u_min - BOX_SLACK || ui > bus.u_max + BOX_SLACK {
            out_of_box.push(bus.id);
        }
        u.push(ui);
    }
    SteadyInput { u, out_of_box }
}

/// Decentralized proportional frequency damping around `u^ss`, clipped to the
/// input boxes.
pub fn controller_step(model: &NetworkModel, state: &SystemState, u_ss: &[f64], k_p: f64) -> Vec<f64> {
    u_ss.iter()
        .enumerate()
        .map(|(i, &us)| model.bus(i).clip(us - k_p * state.omega[i]))
        .collect()
}

/// One-step coupling map `ζ_I = h_I ∘ f_I` as a function of
/// `p = (a_I, z_{𝒩_I})` at a fixed local state.
#[derive(Debug, Clone)]
pub struct LocalCouplingMap<'m> {
    pub model: &'m NetworkModel,
    pub subsystem: usize,
    pub x_local: Vec<f64>,
    pub dt: f64,
}

impl<'m> LocalCouplingMap<'m> {
    pub fn new(model: &'m NetworkModel, subsystem: usize, x_local: Vec<f64>, dt: f64) -> Self {
        Self {
            model,
            subsystem,
            x_local,
            dt,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.model.subsystem(self.subsystem).d_u()
    }

    /// Packs `(a_I, z_{𝒩_I})` into the parameter vector.
    pub fn pack(&self, a_local: &[f64], zn: &[f64]) -> Vec<f64> {
        a_local.iter().chain(zn).copied().collect()
    }
}

impl VectorFn for LocalCouplingMap<'_> {
    fn input_dim(&self) -> usize {
        let sub = self.model.subsystem(self.subsystem);
        sub.d_u() + sub.d_zn()
    }

    fn output_dim(&self) -> usize {
        self.model.subsystem(self.subsystem).d_z()
    }

    fn eval<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let n = self.n_inputs();
        let x: Vec<S> = self.x_local.iter().map(|&v| S::constant(v)).collect();
        let next = rk4_local(self.model, self.subsystem, &x, &p[..n], &p[n..], self.dt);
        couple(self.model, self.subsystem, &next)
    }
}

/// Sparse input deviations `Δa` keyed by sampling index.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackSchedule {
    /// step → list of `(bus index, Δa)`.
    pub entries: BTreeMap<usize, Vec<(usize, f64)>>,
}

impl AttackSchedule {
    pub fn insert(&mut self, step: usize, bus: usize, delta: f64) {
        self.entries.entry(step).or_default().push((bus, delta));
    }

    /// Dense `Δa(t)`.
    pub fn delta_at(&self, step: usize, n: usize) -> Vec<f64> {
        let mut d = vec![0.0; n];
        if let Some(list) = self.entries.get(&step) {
            for &(bus, v) in list {
                d[bus] += v;
            }
        }
        d
    }
}

/// Everything produced by one sampling interval `t → t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    /// State `x(t)` the step started from.
    pub state: SystemState,
    /// Undisturbed controller input `u(t)`.
    pub u: Vec<f64>,
    /// Applied input `a(u(t)) = u(t) + Δa(t)`.
    pub applied: Vec<f64>,
    /// Nominal neighbor values `z̄_{𝒩_I}(t)` used for prediction, per subsystem.
    pub zn_nominal: Vec<Vec<f64>>,
    /// Neighbor deviations `Δz_{𝒩_I}(t)` entering the step, per subsystem.
    pub dzn: Vec<Vec<f64>>,
    /// Global `Δz(t)` entering the step.
    pub dz_prev: Vec<f64>,
    /// Next state `x(t+1)`.
    pub next: SystemState,
    /// Unattacked prediction of the next state.
    pub nominal_next: SystemState,
    /// `z(t+1)`, `z̄(t+1)` and `Δz(t+1)` as global vectors.
    pub z: Vec<f64>,
    pub z_bar: Vec<f64>,
    pub dz: Vec<f64>,
}

/// Plant, stand-in controller and nominal-value exchange.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'m> {
    model: &'m NetworkModel,
    dt: f64,
    k_p: f64,
    u_ss: Vec<f64>,
    step: usize,
    state: SystemState,
    /// `z̄_I(t)` per subsystem.
    nominal: Vec<Vec<f64>>,
}

impl<'m> ClosedLoop<'m> {
    /// Starts from `x⁰` with nominal frames initialized to `h_I(x_I⁰)`.
    pub fn new(model: &'m NetworkModel, x0: SystemState, u_ss: Vec<f64>, dt: f64, k_p: f64) -> Result<Self, DynamicsError> {
        if x0.theta.len() != model.n_buses() || u_ss.len() != model.n_buses() {
            return Err(DynamicsError::Dimension("state/input length != number of buses"));
        }
        let nominal = split_coupling(model, &x0.coupling(model));
        Ok(Self {
            model,
            dt,
            k_p,
            u_ss,
            step: 0,
            state: x0,
            nominal,
        })
    }

    /// Steady-state start `(θ⁰, 0)` under `u^ss`.
    pub fn at_equilibrium(model: &'m NetworkModel, dt: f64, k_p: f64) -> Self {
        let x0 = SystemState::initial(model);
        let u_ss = steady_state_input(model, &x0.theta).u;
        Self::new(model, x0, u_ss, dt, k_p).expect("dimensions come from the model")
    }

    pub fn model(&self) -> &'m NetworkModel {
        self.model
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steady_input(&self) -> &[f64] {
        &self.u_ss
    }

    pub fn nominal_frames(&self) -> &[Vec<f64>] {
        &self.nominal
    }

    /// Current controller output `u(t)`.
    pub fn control(&self) -> Vec<f64> {
        controller_step(self.model, &self.state, &self.u_ss, self.k_p)
    }

    /// Current global deviation `Δz(t) = z(t) − z̄(t)`.
    pub fn deviation(&self) -> Vec<f64> {
        let z = self.state.coupling(self.model);
        let zbar: Vec<f64> = self.nominal.iter().flatten().copied().collect();
        z.iter().zip(&zbar).map(|(a, b)| a - b).collect()
    }

    /// Applies `a(u) = u + Δa` for one sampling interval.
    pub fn advance(&mut self, delta_a: &[f64]) -> Result<StepOutcome, DynamicsError> {
        let model = self.model;
        let n_sub = model.n_subsystems();
        if delta_a.len() != model.n_buses() {
            return Err(DynamicsError::Dimension("attack length != number of buses"));
        }
        let u = self.control();
        let applied: Vec<f64> = u.iter().zip(delta_a).map(|(a, b)| a + b).collect();
        let z_now = split_coupling(model, &self.state.coupling(model));
        let dz_prev = self.deviation();

        let mut next = self.state.clone();
        let mut nominal_next = self.state.clone();
        let mut new_nominal = Vec::with_capacity(n_sub);
        let mut zn_nominal_all = Vec::with_capacity(n_sub);
        let mut dzn_all = Vec::with_capacity(n_sub);
        for s in 0..n_sub {
            let x_local = self.state.local(model, s);
            let zn_actual = gather_neighbors(model, s, &z_now);
            let zn_nominal = gather_neighbors(model, s, &self.nominal);
            let a_local = local_inputs(model, s, &applied);
            let u_local = local_inputs(model, s, &u);

            let x_next = step_subsystem(model, s, &x_local, &a_local, &zn_actual, self.dt);
            let x_nom = step_subsystem(model, s, &x_local, &u_local, &zn_nominal, self.dt);
            next.set_local(model, s, &x_next);
            nominal_next.set_local(model, s, &x_nom);
            new_nominal.push(couple(model, s, &x_nom));
            dzn_all.push(zn_actual.iter().zip(&zn_nominal).map(|(a, b)| a - b).collect());
            zn_nominal_all.push(zn_nominal);
        }
        if !next.is_finite() {
            return Err(DynamicsError::NonFinite { step: self.step });
        }

        let outcome_state = core::mem::replace(&mut self.state, next);
        self.nominal = new_nominal;
        let z = self.state.coupling(model);
        let z_bar: Vec<f64> = self.nominal.iter().flatten().copied().collect();
        let dz = z.iter().zip(&z_bar).map(|(a, b)| a - b).collect();
        let outcome = StepOutcome {
            step: self.step,
            state: outcome_state,
            u,
            applied,
            zn_nominal: zn_nominal_all,
            dzn: dzn_all,
            dz_prev,
            next: self.state.clone(),
            nominal_next,
            z,
            z_bar,
            dz,
        };
        self.step += 1;
        Ok(outcome)
    }

    /// Overrides the nominal frames `z̄(t)` (global vector).
    pub fn set_nominal(&mut self, z_bar: &[f64]) -> Result<(), DynamicsError> {
        if z_bar.len() != self.model.d_z() {
            return Err(DynamicsError::Dimension("nominal vector length != d_z"));
        }
        self.nominal = split_coupling(self.model, z_bar);
        Ok(())
    }

    /// Replaces the plant state and re-anchors the nominal frames on it, so
    /// `Δz` restarts from zero.
    pub fn resync(&mut self, state: SystemState) {
        self.nominal = split_coupling(self.model, &state.coupling(self.model));
        self.state = state;
    }
}

/// One row of a simulated trajectory, all quantities at time `t = step · Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub u: Vec<f64>,
    pub applied: Vec<f64>,
    pub z: Vec<f64>,
    pub z_bar: Vec<f64>,
    pub dz: Vec<f64>,
}

/// Runs the closed loop for `steps` intervals; returns `steps + 1` rows.
pub fn simulate(
    model: &NetworkModel,
    x0: SystemState,
    schedule: &AttackSchedule,
    dt: f64,
    steps: usize,
    k_p: f64,
) -> Result<Vec<TrajectoryRow>, DynamicsError> {
    let u_ss = steady_state_input(model, &x0.theta).u;
    let mut cl = ClosedLoop::new(model, x0, u_ss, dt, k_p)?;
    let n = model.n_buses();
    let mut rows = Vec::with_capacity(steps + 1);
    let mut z_bar: Vec<f64> = cl.nominal_frames().iter().flatten().copied().collect();
    for k in 0..=steps {
        let delta = schedule.delta_at(k, n);
        let u = cl.control();
        let applied: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let z = cl.state().coupling(model);
        let dz = z.iter().zip(&z_bar).map(|(a, b)| a - b).collect();
        rows.push(TrajectoryRow {
            t: k as f64 * dt,
            theta: cl.state().theta.clone(),
            omega: cl.state().omega.clone(),
            u,
            applied,
            z,
            z_bar: z_bar.clone(),
            dz,
        });
        if k < steps {
            let out = cl.advance(&delta)?;
            z_bar = out.z_bar;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{bus, entry, two_bus};
    use crate::model::{BusKind, NetworkConfig};
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    fn isolated(m: f64, d: f64) -> NetworkModel {
        let mut b = bus(1, BusKind::Generator);
        b.m = m;
        b.d = d;
        NetworkModel::from_config(NetworkConfig {
            buses: vec![b],
            lines: vec![],
            partition: vec![entry("A", &[1])],
        })
        .unwrap()
    }

    #[test]
    fn rhs_equilibrium_and_direct_formula() {
        let m = isolated(2.0, 1.0);
        assert_eq!(swing_rhs(&m, &[0.0], &[0.0], &[0.0]), (vec![0.0], vec![0.0]));
        let (_, dw) = swing_rhs(&m, &[0.0], &[4.0], &[0.0]);
        assert_eq!(dw[0], -2.0);
    }

    #[test]
    fn rhs_two_buses_at_quarter_turn() {
        let mut cfg = two_bus();
        cfg.buses[0].m = 2.0;
        cfg.buses[1].m = 4.0;
        let m = NetworkModel::from_config(cfg).unwrap();
        let (_, dw) = swing_rhs(&m, &[FRAC_PI_2, 0.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert!((dw[0] + 0.5).abs() < 1e-15);
        assert!((dw[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let m = isolated(1.0, 1.0);
        let x = step_subsystem(&m, 0, &[0.0, 1.0], &[0.0], &[], 0.1);
        assert!((x[1] - libm::exp(-0.1)).abs() < 1e-7);
        assert!((x[1] - 0.9048374).abs() < 1e-7);
    }

    #[test]
    fn zero_step_is_identity() {
        let m = NetworkModel::from_config(two_bus()).unwrap();
        let x = [0.3, -0.1];
        assert_eq!(step_subsystem(&m, 0, &x, &[0.2], &[0.05], 0.0), x.to_vec());
    }

    #[test]
    fn steady_input_two_buses() {
        let m = NetworkModel::from_config(two_bus()).unwrap();
        let ss = steady_state_input(&m, &[FRAC_PI_6, 0.0]);
        assert!((ss.u[0] - 0.5).abs() < 1e-15);
        assert!((ss.u[1] + 0.5).abs() < 1e-15);
        // bus 2 is a generator with box [-0.4, 0.9]: -0.5 is outside
        assert_eq!(ss.out_of_box, vec![2]);
        assert_eq!(steady_state_input(&isolated(1.0, 1.0), &[0.3]).u, vec![0.0]);
    }

    #[test]
    fn equilibrium_step_is_exact() {
        let m = NetworkModel::from_config(two_bus()).unwrap();
        let theta = [0.2, -0.1];
        let u = steady_state_input(&m, &theta).u;
        let x = [theta[0], 0.0];
        let next = step_subsystem(&m, 0, &x, &u[..1], &theta[1..], 0.1);
        assert_eq!(next, x.to_vec());
    }

    #[test]
    fn combine_orders_by_subsystem_index() {
        let m = NetworkModel::from_config(crate::model::fixtures::star()).unwrap();
        let frames = vec![(3, vec![0.3]), (1, vec![0.1]), (4, vec![0.4]), (2, vec![0.2])];
        assert_eq!(combine_neighbor_nominals(&m, 0, &frames).unwrap(), vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(combine_neighbor_nominals(&m, 1, &[(0, vec![9.0])]).unwrap(), vec![9.0]);
        assert!(matches!(
            combine_neighbor_nominals(&m, 0, &frames[..3]),
            Err(DynamicsError::MissingNeighborFrame { neighbor: 2, .. })
        ));
        let lone = isolated(1.0, 1.0);
        assert!(combine_neighbor_nominals(&lone, 0, &[]).unwrap().is_empty());
    }

    #[test]
    fn controller_is_clipped_feedback() {
        let m = NetworkModel::from_config(two_bus()).unwrap();
        let st = SystemState::new(vec![0.0, 0.0], vec![0.0, 3.0]).unwrap();
        let u = controller_step(&m, &st, &[0.5, 0.2], 0.5);
        assert_eq!(u, vec![0.5, -0.4]);
        assert_eq!(controller_step(&m, &st, &[0.5, 0.2], 0.0), vec![0.5, 0.2]);
    }
}
