//! Small synthetic networks and random systems shared by the integration tests.
#![allow(dead_code)]

use attackid_core::linalg::DenseMatrix;
use attackid_core::model::{Bus, BusKind, Line, NetworkConfig, NetworkModel, PartitionEntry};
use attackid_core::sensitivity::{Block, GlobalSystem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn bus(id: usize, kind: BusKind) -> Bus {
    let (u_min, u_max) = match kind {
        BusKind::Generator => (-0.4, 0.9),
        BusKind::ControllableLoad => (-0.4, 0.0),
        BusKind::ConstantLoad => (0.0, 0.0),
    };
    Bus {
        id,
        m: 1.0,
        d: 1.0,
        v: 1.0,
        kind,
        u_min,
        u_max,
        theta0: 0.0,
    }
}

pub fn entry(name: &str, members: &[usize]) -> PartitionEntry {
    PartitionEntry {
        name: name.into(),
        members: members.to_vec(),
    }
}

/// One machine, no lines: `m ω̇ = u − d ω`.
pub fn isolated(m: f64, d: f64) -> NetworkModel {
    let mut b = bus(1, BusKind::Generator);
    b.m = m;
    b.d = d;
    NetworkModel::from_config(NetworkConfig {
        buses: vec![b],
        lines: vec![],
        partition: vec![entry("solo", &[1])],
    })
    .unwrap()
}

pub fn two_bus() -> NetworkModel {
    NetworkModel::from_config(NetworkConfig {
        buses: vec![bus(1, BusKind::Generator), bus(2, BusKind::Generator)],
        lines: vec![Line { i: 1, j: 2, b: 1.0 }],
        partition: vec![entry("A", &[1]), entry("B", &[2])],
    })
    .unwrap()
}

/// Three subsystems of two buses each in a chain, with a non-flat start.
///
/// ```text
///  A: 1-2 ── B: 3-4 ── C: 5-6
/// ```
pub fn chain() -> NetworkModel {
    let kinds = [
        BusKind::Generator,
        BusKind::ControllableLoad,
        BusKind::Generator,
        BusKind::Generator,
        BusKind::ControllableLoad,
        BusKind::Generator,
    ];
    let mut buses: Vec<Bus> = kinds.iter().enumerate().map(|(i, &k)| bus(i + 1, k)).collect();
    // generators lead, loads lag; every steady input lies inside its box
    let theta0 = [0.02, -0.03, 0.01, 0.015, -0.02, 0.01];
    for (i, b) in buses.iter_mut().enumerate() {
        b.theta0 = theta0[i];
        b.m = 0.8 + 0.1 * i as f64;
        b.d = 0.6 + 0.05 * i as f64;
    }
    let lines = vec![
        Line { i: 1, j: 2, b: 4.0 },
        Line { i: 2, j: 3, b: 2.5 },
        Line { i: 3, j: 4, b: 5.0 },
        Line { i: 4, j: 5, b: 3.0 },
        Line { i: 5, j: 6, b: 4.5 },
    ];
    NetworkModel::from_config(NetworkConfig {
        buses,
        lines,
        partition: vec![entry("A", &[1, 2]), entry("B", &[3, 4]), entry("C", &[5, 6])],
    })
    .unwrap()
}

/// Hub bus 1 tied to four leaves, one bus per subsystem.
pub fn star() -> NetworkModel {
    let buses = (1..=5).map(|i| bus(i, BusKind::Generator)).collect();
    let lines = (2..=5).map(|j| Line { i: 1, j, b: 2.0 }).collect();
    let partition = (1..=5).map(|i| entry(&format!("S{i}"), &[i])).collect();
    NetworkModel::from_config(NetworkConfig {
        buses,
        lines,
        partition,
    })
    .unwrap()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Random block-diagonal system with unit-norm columns and a planted sparse
/// solution `v` (`b = S v`). Block sizes are `rows_i ≥ cols_i`.
pub fn planted_block_system(rng: &mut ChaCha8Rng, max_cols: usize, max_sparsity: usize) -> (GlobalSystem, Vec<f64>) {
    let n_blocks = rng.gen_range(1..=4);
    let mut shapes = Vec::new();
    let mut budget = max_cols;
    for k in 0..n_blocks {
        if budget == 0 {
            break;
        }
        let remaining_blocks = n_blocks - k;
        let cols = rng.gen_range(1..=budget.saturating_sub(remaining_blocks - 1).clamp(1, 5));
        budget -= cols;
        let rows = cols + rng.gen_range(0..=2);
        shapes.push((rows, cols));
    }
    let m: usize = shapes.iter().map(|s| s.0).sum();
    let n: usize = shapes.iter().map(|s| s.1).sum();
    let mut s = DenseMatrix::zeros(m, n);
    let mut blocks = Vec::new();
    let (mut r0, mut c0) = (0, 0);
    for &(rows, cols) in &shapes {
        for c in 0..cols {
            let col: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nrm = norm2(&col);
            for (r, x) in col.iter().enumerate() {
                s[(r0 + r, c0 + c)] = x / nrm;
            }
        }
        blocks.push(Block {
            rows: r0..r0 + rows,
            cols: c0..c0 + cols,
        });
        r0 += rows;
        c0 += cols;
    }
    let k = rng.gen_range(0..=max_sparsity.min(n));
    let picks = rand::seq::index::sample(rng, n, k);
    let mut v = vec![0.0; n];
    for i in picks {
        let mag = rng.gen_range(0.2..2.0);
        v[i] = if rng.gen_bool(0.5) { mag } else { -mag };
    }
    let b = s.mul_vec(&v);
    (GlobalSystem::from_blocks(s, b, blocks).unwrap(), v)
}
