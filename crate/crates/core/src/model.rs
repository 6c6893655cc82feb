//! Networked plant: buses, transmission lines and the partition into
//! subsystems.
//!
//! Bus ids are 1-based and must be exactly `1..=n`; everything inside the
//! crate uses the 0-based bus index `id - 1`. Coupling buses and
//! neighborhoods are derived from the lines and the partition, never stored.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model at `{path}`: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BusKind {
    Generator,
    ControllableLoad,
    ConstantLoad,
}

impl BusKind {
    pub fn is_controllable(self) -> bool {
        !matches!(self, BusKind::ConstantLoad)
    }
}

/// One synchronous machine. Units: `m` in p.u.·s², `d` in p.u.·s, `v` and the
/// input box in p.u., `theta0` in rad.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bus {
    pub id: usize,
    pub m: f64,
    pub d: f64,
    #[cfg_attr(feature = "serde", serde(rename = "V"))]
    pub v: f64,
    pub kind: BusKind,
    pub u_min: f64,
    pub u_max: f64,
    pub theta0: f64,
}

impl Bus {
    pub fn clip(&self, u: f64) -> f64 {
        u.max(self.u_min).min(self.u_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Line {
    pub i: usize,
    pub j: usize,
    /// Susceptance in p.u.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PartitionEntry {
    pub name: String,
    /// Bus ids.
    pub members: Vec<usize>,
}

/// The on-disk model description.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkConfig {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub partition: Vec<PartitionEntry>,
}

/// A power-flow term of bus `i`: neighbor bus `j` and `k_ij = |V_i||V_j| b_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub bus: usize,
    pub k: f64,
}

/// Where the angle of a neighbor bus comes from inside a subsystem step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermSource {
    /// Local index into the subsystem's member list.
    Member(usize),
    /// Index into the concatenated neighbor coupling vector `z_{𝒩_I}`.
    Coupling(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTerm {
    pub source: TermSource,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub name: String,
    /// Bus indices, ascending.
    pub members: Vec<usize>,
    /// Bus indices incident to an inter-subsystem line, ascending.
    pub coupling: Vec<usize>,
    /// Local member positions of the coupling buses.
    pub coupling_local: Vec<usize>,
    /// Neighboring subsystem indices, ascending.
    pub neighbors: Vec<usize>,
    /// Bus indices making up `z_{𝒩_I}`: neighbors in ascending order, each
    /// contributing its coupling buses in ascending order.
    pub neighbor_coupling: Vec<usize>,
    /// Power-flow terms per member, in the bus adjacency order.
    pub terms: Vec<Vec<FlowTerm>>,
}

impl Subsystem {
    pub fn d_z(&self) -> usize {
        self.coupling.len()
    }

    pub fn d_u(&self) -> usize {
        self.members.len()
    }

    pub fn d_x(&self) -> usize {
        2 * self.members.len()
    }

    pub fn d_zn(&self) -> usize {
        self.neighbor_coupling.len()
    }
}

/// Validated, immutable plant description.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    config: NetworkConfig,
    adjacency: Vec<Vec<Neighbor>>,
    subsystems: Vec<Subsystem>,
    owner: Vec<usize>,
    z_offsets: Vec<usize>,
}

impl NetworkModel {
    /// Validates a configuration and derives couplings and neighborhoods.
    /// Buses are stored sorted by id.
    pub fn from_config(mut config: NetworkConfig) -> Result<Self, ModelError> {
        let n = config.buses.len();
        if n == 0 {
            return Err(invalid("buses", "at least one bus is required"));
        }
        let mut seen = vec![false; n];
        for (k, bus) in config.buses.iter().enumerate() {
            let path = |field: &str| format!("buses[{k}].{field}");
            if bus.id == 0 || bus.id > n {
                return Err(invalid(path("id"), format!("bus id {} outside 1..={n}", bus.id)));
            }
            if seen[bus.id - 1] {
                return Err(invalid(path("id"), format!("duplicate bus id {}", bus.id)));
            }
            seen[bus.id - 1] = true;
            for (name, value) in [("m", bus.m), ("d", bus.d), ("V", bus.v)] {
                if !(value.is_finite() && value > 0.0) {
                    return Err(invalid(path(name), format!("bus {} needs {name} > 0, got {value}", bus.id)));
                }
            }
            if !bus.theta0.is_finite() {
                return Err(invalid(path("theta0"), "must be finite"));
            }
            if !(bus.u_min.is_finite() && bus.u_max.is_finite() && bus.u_min <= bus.u_max) {
                return Err(invalid(
                    path("u_min"),
                    format!("bus {} needs finite u_min <= u_max", bus.id),
                ));
            }
            if bus.kind == BusKind::ConstantLoad && bus.u_min != bus.u_max {
                return Err(invalid(
                    path("u_max"),
                    format!("constant-load bus {} needs u_min == u_max", bus.id),
                ));
            }
        }
        config.buses.sort_by_key(|b| b.id);

        let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
        let mut pairs = BTreeSet::new();
        for (k, line) in config.lines.iter().enumerate() {
            let path = |field: &str| format!("lines[{k}].{field}");
            for (field, id) in [("i", line.i), ("j", line.j)] {
                if id == 0 || id > n {
                    return Err(invalid(path(field), format!("unknown bus id {id}")));
                }
            }
            if line.i == line.j {
                return Err(invalid(path("j"), "line endpoints must differ"));
            }
            if !(line.b.is_finite() && line.b > 0.0) {
                return Err(invalid(path("b"), format!("susceptance must be > 0, got {}", line.b)));
            }
            let key = (line.i.min(line.j), line.i.max(line.j));
            if !pairs.insert(key) {
                return Err(invalid(
                    path("j"),
                    format!("duplicate line between buses {} and {}", key.0, key.1),
                ));
            }
            let (a, b) = (line.i - 1, line.j - 1);
            let k_ab = config.buses[a].v * config.buses[b].v * line.b;
            adjacency[a].push(Neighbor { bus: b, k: k_ab });
            adjacency[b].push(Neighbor { bus: a, k: k_ab });
        }

        if config.partition.is_empty() {
            return Err(invalid("partition", "at least one subsystem is required"));
        }
        let mut owner = vec![usize::MAX; n];
        for (s, entry) in config.partition.iter_mut().enumerate() {
            if entry.members.is_empty() {
                return Err(invalid(format!("partition[{s}].members"), "subsystem has no members"));
            }
            entry.members.sort_unstable();
            for (k, &id) in entry.members.iter().enumerate() {
                let path = format!("partition[{s}].members[{k}]");
                if id == 0 || id > n {
                    return Err(invalid(path, format!("unknown bus id {id}")));
                }
                if owner[id - 1] != usize::MAX {
                    return Err(invalid(path, format!("bus {id} assigned to more than one subsystem")));
                }
                owner[id - 1] = s;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(invalid("partition", format!("bus {} is not assigned to any subsystem", i + 1)));
        }

        let mut subsystems: Vec<Subsystem> = config
            .partition
            .iter()
            .enumerate()
            .map(|(s, entry)| {
                let members: Vec<usize> = entry.members.iter().map(|id| id - 1).collect();
                let coupling: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&i| adjacency[i].iter().any(|nb| owner[nb.bus] != s))
                    .collect();
                let coupling_local = coupling
                    .iter()
                    .map(|c| members.iter().position(|m| m == c).unwrap_or(0))
                    .collect();
                let neighbors: BTreeSet<usize> = members
                    .iter()
                    .flat_map(|&i| adjacency[i].iter().map(|nb| owner[nb.bus]))
                    .filter(|&o| o != s)
                    .collect();
                Subsystem {
                    name: entry.name.clone(),
                    members,
                    coupling,
                    coupling_local,
                    neighbors: neighbors.into_iter().collect(),
                    neighbor_coupling: Vec::new(),
                    terms: Vec::new(),
                }
            })
            .collect();

        let couplings: Vec<Vec<usize>> = subsystems.iter().map(|s| s.coupling.clone()).collect();
        for sub in subsystems.iter_mut() {
            sub.neighbor_coupling = sub.neighbors.iter().flat_map(|&j| couplings[j].iter().copied()).collect();
            let mut terms = Vec::with_capacity(sub.members.len());
            for &i in &sub.members {
                let row = adjacency[i]
                    .iter()
                    .map(|nb| {
                        let source = match sub.members.iter().position(|&m| m == nb.bus) {
                            Some(local) => TermSource::Member(local),
                            None => TermSource::Coupling(
                                sub.neighbor_coupling
                                    .iter()
                                    .position(|&c| c == nb.bus)
                                    .expect("external neighbor is a coupling bus of a neighbor subsystem"),
                            ),
                        };
                        FlowTerm { source, k: nb.k }
                    })
                    .collect();
                terms.push(row);
            }
            sub.terms = terms;
        }

        let mut z_offsets = Vec::with_capacity(subsystems.len() + 1);
        let mut acc = 0;
        for s in &subsystems {
            z_offsets.push(acc);
            acc += s.d_z();
        }
        z_offsets.push(acc);

        Ok(Self {
            config,
            adjacency,
            subsystems,
            owner,
            z_offsets,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn buses(&self) -> &[Bus] {
        &self.config.buses
    }

    pub fn bus(&self, index: usize) -> &Bus {
        &self.config.buses[index]
    }

    pub fn lines(&self) -> &[Line] {
        &self.config.lines
    }

    pub fn n_buses(&self) -> usize {
        self.config.buses.len()
    }

    pub fn d_x(&self) -> usize {
        2 * self.n_buses()
    }

    pub fn d_u(&self) -> usize {
        self.n_buses()
    }

    pub fn d_z(&self) -> usize {
        *self.z_offsets.last().unwrap_or(&0)
    }

    /// Neighbors `N_i` of a bus index with their coupling strengths.
    pub fn adjacency(&self, bus: usize) -> &[Neighbor] {
        &self.adjacency[bus]
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn subsystem(&self, index: usize) -> &Subsystem {
        &self.subsystems[index]
    }

    pub fn n_subsystems(&self) -> usize {
        self.subsystems.len()
    }

    /// Subsystem owning a bus index.
    pub fn owner(&self, bus: usize) -> usize {
        self.owner[bus]
    }

    /// Offset of `z_I` inside the global coupling vector.
    pub fn z_offset(&self, subsystem: usize) -> usize {
        self.z_offsets[subsystem]
    }

    /// Maximum degree `M = max_I |𝒩_I|` of the subsystem graph.
    pub fn max_degree(&self) -> usize {
        self.subsystems.iter().map(|s| s.neighbors.len()).max().unwrap_or(0)
    }

    /// Initial angles from the configuration, by bus index.
    pub fn theta0(&self) -> Vec<f64> {
        self.config.buses.iter().map(|b| b.theta0).collect()
    }

    pub fn controllable_buses(&self) -> Vec<usize> {
        (0..self.n_buses()).filter(|&i| self.bus(i).kind.is_controllable()).collect()
    }

    pub fn subsystem_index(&self, name: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.name == name)
    }

    pub fn describe(&self) -> String {
        format!(
            "{} buses, {} lines, {} subsystems, d_z = {}, d_u = {}, M = {}",
            self.n_buses(),
            self.lines().len(),
            self.n_subsystems(),
            self.d_z(),
            self.d_u(),
            self.max_degree()
        )
        .to_string()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

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

    /// Two buses, one line, one bus per subsystem.
    pub fn two_bus() -> NetworkConfig {
        NetworkConfig {
            buses: vec![bus(1, BusKind::Generator), bus(2, BusKind::Generator)],
            lines: vec![Line { i: 1, j: 2, b: 1.0 }],
            partition: vec![entry("A", &[1]), entry("B", &[2])],
        }
    }

    /// Hub subsystem connected to four leaf subsystems.
    pub fn star() -> NetworkConfig {
        let buses = (1..=5).map(|i| bus(i, BusKind::Generator)).collect();
        let lines = (2..=5).map(|j| Line { i: 1, j, b: 2.0 }).collect();
        let partition = (1..=5).map(|i| entry(&format!("S{i}"), &[i])).collect();
        NetworkConfig {
            buses,
            lines,
            partition,
        }
    }
}
