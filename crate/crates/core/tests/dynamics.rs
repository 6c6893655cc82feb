mod common;

use attackid_core::dynamics::{
    combine_neighbor_nominals, controller_step, couple, predict_nominal, simulate, step_subsystem,
    steady_state_input, AttackSchedule, ClosedLoop, DynamicsError, SystemState, DEFAULT_DT, DEFAULT_KP,
};
use attackid_core::sensitivity::SubsystemSensitivity;
use attackid_core::guarantees::{estimate_k, remainder_bound};
use common::*;

/// `ω(t) = ω₀ e^{−d t / m}` for the isolated machine.
fn decay(m: f64, d: f64, w0: f64, t: f64) -> f64 {
    w0 * (-d * t / m).exp()
}

#[test]
fn isolated_machine_tracks_analytic_decay() {
    let model = isolated(1.0, 1.0);
    let x = step_subsystem(&model, 0, &[0.0, 1.0], &[0.0], &[], 0.1);
    assert!((x[1] - 0.904_837_418_035_959_6).abs() <= 1e-7, "ω = {}", x[1]);
    // θ(t) = (m/d) ω₀ (1 − e^{−d t/m})
    assert!((x[0] - (1.0 - (-0.1f64).exp())).abs() <= 1e-7, "θ = {}", x[0]);
}

#[test]
fn rk4_error_shrinks_at_fourth_order() {
    let (m, d) = (1.3, 0.9);
    let model = isolated(m, d);
    let horizon = 2.0;
    let run = |dt: f64| {
        let steps = (horizon / dt).round() as usize;
        let mut x = vec![0.0, 1.0];
        for _ in 0..steps {
            x = step_subsystem(&model, 0, &x, &[0.0], &[], dt);
        }
        (x[1] - decay(m, d, 1.0, horizon)).abs()
    };
    let ratio = run(0.2) / run(0.1);
    assert!((12.0..=20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn constant_input_drives_machine_to_u_over_d() {
    let model = isolated(2.0, 0.5);
    let mut x = vec![0.0, 0.0];
    for _ in 0..2000 {
        x = step_subsystem(&model, 0, &x, &[0.3], &[], DEFAULT_DT);
    }
    assert!((x[1] - 0.6).abs() < 1e-9, "ω∞ = {}", x[1]);
}

#[test]
fn coupling_picks_boundary_buses_in_order() {
    let model = chain();
    // subsystem B owns buses 3,4 (indices 2,3), both on inter-subsystem lines
    let x = [0.11, 0.22, 5.0, 6.0];
    assert_eq!(couple(&model, 1, &x), vec![0.11, 0.22]);
    let lone = isolated(1.0, 1.0);
    assert!(couple(&lone, 0, &[0.4, 0.0]).is_empty());
}

#[test]
fn neighbor_frames_combine_in_subsystem_order_regardless_of_arrival() {
    let model = chain();
    let frames = vec![(2, vec![0.5]), (0, vec![0.1])];
    let zn = combine_neighbor_nominals(&model, 1, &frames).unwrap();
    assert_eq!(zn, vec![0.1, 0.5]);
    assert_eq!(
        combine_neighbor_nominals(&model, 1, &frames[..1]),
        Err(DynamicsError::MissingNeighborFrame { subsystem: 1, neighbor: 0 })
    );
}

#[test]
fn equilibrium_persists_without_attack() {
    for model in [two_bus(), chain(), star()] {
        let mut cl = ClosedLoop::at_equilibrium(&model, DEFAULT_DT, DEFAULT_KP);
        for _ in 0..100 {
            let out = cl.advance(&vec![0.0; model.n_buses()]).unwrap();
            assert!(norm_inf(&out.dz) <= 1e-12);
        }
        assert!(norm_inf(&cl.state().omega) <= 1e-9, "{}", model.describe());
    }
}

#[test]
fn nominal_prediction_matches_plant_without_attack() {
    let model = chain();
    let x0 = SystemState::new(vec![0.05, -0.02, 0.1, 0.0, -0.07, 0.03], vec![0.1, 0.0, -0.05, 0.02, 0.0, 0.01]).unwrap();
    let u_ss = steady_state_input(&model, &model.theta0()).u;
    let mut cl = ClosedLoop::new(&model, x0, u_ss, DEFAULT_DT, DEFAULT_KP).unwrap();
    for _ in 0..20 {
        let out = cl.advance(&vec![0.0; model.n_buses()]).unwrap();
        assert!(norm_inf(&out.dz) <= 1e-12, "Δz = {:?}", out.dz);
        for s in 0..model.n_subsystems() {
            let x = out.state.local(&model, s);
            let u = attackid_core::dynamics::local_inputs(&model, s, &out.u);
            let pred = predict_nominal(&model, s, &x, &u, &out.zn_nominal[s], DEFAULT_DT);
            let off = model.z_offset(s);
            for (k, p) in pred.iter().enumerate() {
                assert_eq!(*p, out.z_bar[off + k]);
            }
        }
    }
}

#[test]
fn attack_shows_up_one_step_later() {
    let model = two_bus();
    let mut sched = AttackSchedule::default();
    sched.insert(3, 0, 0.2);
    let rows = simulate(&model, SystemState::initial(&model), &sched, DEFAULT_DT, 6, DEFAULT_KP).unwrap();
    assert_eq!(rows.len(), 7);
    for row in &rows[..=3] {
        assert!(norm_inf(&row.dz) <= 1e-14, "t = {}", row.t);
    }
    assert!(norm_inf(&rows[4].dz) > 1e-4);
    assert_eq!(rows[3].applied[0] - rows[3].u[0], 0.2);
}

#[test]
fn simulation_is_deterministic() {
    let model = chain();
    let mut sched = AttackSchedule::default();
    sched.insert(1, 2, -0.1);
    sched.insert(4, 4, -0.3);
    let a = simulate(&model, SystemState::initial(&model), &sched, DEFAULT_DT, 30, DEFAULT_KP).unwrap();
    let b = simulate(&model, SystemState::initial(&model), &sched, DEFAULT_DT, 30, DEFAULT_KP).unwrap();
    assert_eq!(a, b);
}

#[test]
fn controller_output_respects_input_boxes() {
    let model = chain();
    let state = SystemState::new(vec![0.0; 6], vec![10.0, -10.0, 3.0, -3.0, 0.0, 0.0]).unwrap();
    let u_ss = vec![0.1; 6];
    let u = controller_step(&model, &state, &u_ss, DEFAULT_KP);
    for (i, &ui) in u.iter().enumerate() {
        let b = model.bus(i);
        assert!(ui >= b.u_min && ui <= b.u_max, "bus {} u = {ui}", b.id);
    }
    assert_eq!(u[5], 0.1);
}

/// Boundary buses of `chain`: 2 | 3, 4 | 5 (indices 1..=4).
#[test]
fn attacked_step_deviates_by_linear_prediction_up_to_remainder() {
    let model = chain();
    let cl0 = ClosedLoop::at_equilibrium(&model, DEFAULT_DT, DEFAULT_KP);
    for bus in [1usize, 2, 3, 4] {
        let mut cl = cl0.clone();
        let mut delta = vec![0.0; model.n_buses()];
        delta[bus] = -0.15;
        let out = cl.advance(&delta).unwrap();
        let s = model.owner(bus);
        let x = out.state.local(&model, s);
        let u = attackid_core::dynamics::local_inputs(&model, s, &out.u);
        let sens = SubsystemSensitivity::evaluate(&model, s, &x, &u, &out.zn_nominal[s], DEFAULT_DT, 1e-10).unwrap();
        let local = model.subsystem(s).members.iter().position(|&m| m == bus).unwrap();
        let predicted: Vec<f64> = (0..sens.s_a.rows()).map(|r| sens.s_a[(r, local)] * delta[bus]).collect();
        let off = model.z_offset(s);
        let observed = &out.dz[off..off + predicted.len()];
        let err: Vec<f64> = observed.iter().zip(&predicted).map(|(a, b)| a - b).collect();

        let k = estimate_k(&model, &sens, DEFAULT_DT, 0.65, 8, 1).unwrap();
        let c = sens.columns.iter().position(|&c| c == local).expect("attacked column kept");
        let v = sens.scales[c] * delta[bus];
        let bound = remainder_bound(k, &[v], &[]);
        assert!(norm2(&err) <= bound, "bus {bus}: ‖R‖ = {} > {bound}", norm2(&err));
    }
}
