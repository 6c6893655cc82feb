//! File formats: model JSON, attack files, state snapshots, trajectory CSV,
//! experiment records/tables and solver dumps.
//!
//! Bus-facing files (attack schedules, attack vectors) use the 1-based bus
//! ids of the model file. Solver-facing files (system dumps, identification
//! results) use 0-based input indices; for a model, input `i` is bus `i + 1`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use attackid_core::dynamics::{AttackSchedule, TrajectoryRow};
use attackid_core::experiment::{FourfoldTable, StepRecord};
use attackid_core::guarantees::Condition;
use attackid_core::identify::IdentificationResult;
use attackid_core::model::ModelError;
use attackid_core::sensitivity::GlobalSystem;
use attackid_core::{NetworkConfig, NetworkModel, SystemState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The reconstructed IEEE 30-bus model shipped with the crate.
pub const IEEE30_JSON: &str = include_str!("../data/ieee30.json");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Model {
        path: String,
        #[source]
        source: ModelError,
    },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    parse_json(path, &read_to_string(path)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn parse_network(text: &str, origin: &str) -> Result<NetworkModel, IoError> {
    let config: NetworkConfig = parse_json(Path::new(origin), text)?;
    NetworkModel::from_config(config).map_err(|source| IoError::Model {
        path: origin.to_string(),
        source,
    })
}

pub fn load_network(path: &Path) -> Result<NetworkModel, IoError> {
    parse_network(&read_to_string(path)?, &path.display().to_string())
}

pub fn bundled_ieee30() -> NetworkModel {
    parse_network(IEEE30_JSON, "ieee30.json").expect("bundled model is valid")
}

pub fn save_network(model: &NetworkModel, path: &Path) -> Result<(), IoError> {
    write_json(path, model.config())
}

/// One attacked input in a bus-facing file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDelta {
    pub bus: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// Sampling index the deviation is applied at.
    pub step: usize,
    pub inputs: Vec<InputDelta>,
}

/// `{"steps": [{"step": 5, "inputs": [{"bus": 3, "delta": 0.2}]}]}`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub steps: Vec<ScheduleEntry>,
}

/// `{"inputs": [{"bus": 3, "delta": 0.2}]}`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttackVectorFile {
    pub inputs: Vec<InputDelta>,
}

fn bus_index(model: &NetworkModel, bus: usize, path: &Path) -> Result<usize, IoError> {
    if bus == 0 || bus > model.n_buses() {
        return Err(IoError::Invalid {
            path: path.display().to_string(),
            reason: format!("bus {bus} is not in the model (ids 1..={})", model.n_buses()),
        });
    }
    Ok(bus - 1)
}

pub fn load_schedule(path: &Path, model: &NetworkModel) -> Result<AttackSchedule, IoError> {
    let file: ScheduleFile = read_json(path)?;
    let mut schedule = AttackSchedule::default();
    for entry in file.steps {
        for d in entry.inputs {
            schedule.insert(entry.step, bus_index(model, d.bus, path)?, d.delta);
        }
    }
    Ok(schedule)
}

/// Dense `Δa` from an attack-vector file.
pub fn load_attack_vector(path: &Path, model: &NetworkModel) -> Result<Vec<f64>, IoError> {
    let file: AttackVectorFile = read_json(path)?;
    let mut delta = vec![0.0; model.n_buses()];
    for d in file.inputs {
        delta[bus_index(model, d.bus, path)?] += d.delta;
    }
    Ok(delta)
}

/// Plant state for a one-shot check. `u_ss` defaults to the steady input of
/// the model's `theta0`; `z_nominal` defaults to the coupling values of the
/// state itself (no deviation entering the step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_ss: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_nominal: Option<Vec<f64>>,
}

pub fn load_snapshot(path: &Path, model: &NetworkModel) -> Result<StateSnapshot, IoError> {
    let snap: StateSnapshot = read_json(path)?;
    let n = model.n_buses();
    let bad = |reason: String| IoError::Invalid {
        path: path.display().to_string(),
        reason,
    };
    if snap.theta.len() != n || snap.omega.len() != n {
        return Err(bad(format!("theta and omega need {n} entries")));
    }
    if snap.u_ss.as_ref().is_some_and(|u| u.len() != n) {
        return Err(bad(format!("u_ss needs {n} entries")));
    }
    if snap.z_nominal.as_ref().is_some_and(|z| z.len() != model.d_z()) {
        return Err(bad(format!("z_nominal needs {} entries", model.d_z())));
    }
    if snap.theta.iter().chain(&snap.omega).any(|v| !v.is_finite()) {
        return Err(bad("state entries must be finite".into()));
    }
    Ok(snap)
}

impl StateSnapshot {
    pub fn state(&self) -> SystemState {
        SystemState {
            theta: self.theta.clone(),
            omega: self.omega.clone(),
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Trajectory CSV: `t`, bus-wise `theta_i, omega_i, u_i, a_i`, then
/// subsystem-wise `z_<name>_<bus>, zbar_<name>_<bus>, dz_<name>_<bus>`.
pub fn write_trajectory<W: Write>(model: &NetworkModel, rows: &[TrajectoryRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let ids: Vec<usize> = model.buses().iter().map(|b| b.id).collect();
    let coupling: Vec<String> = model
        .subsystems()
        .iter()
        .flat_map(|s| s.coupling.iter().map(move |&i| format!("{}_{}", s.name, i + 1)))
        .collect();
    let mut header = vec!["t".to_string()];
    for prefix in ["theta", "omega", "u", "a"] {
        header.extend(ids.iter().map(|id| format!("{prefix}_{id}")));
    }
    for prefix in ["z", "zbar", "dz"] {
        header.extend(coupling.iter().map(|c| format!("{prefix}_{c}")));
    }
    w.write_record(&header)?;
    for r in rows {
        let fields = std::iter::once(r.t)
            .chain(r.theta.iter().copied())
            .chain(r.omega.iter().copied())
            .chain(r.u.iter().copied())
            .chain(r.applied.iter().copied())
            .chain(r.z.iter().copied())
            .chain(r.z_bar.iter().copied())
            .chain(r.dz.iter().copied())
            .map(fmt_f64);
        w.write_record(fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory(model: &NetworkModel, rows: &[TrajectoryRow], path: &Path) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_trajectory(model, rows, &mut buf).map_err(|source| IoError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    write_bytes(path, &buf)
}

/// Column order of `records.csv`.
pub const RECORD_COLUMNS: [&str; 22] = [
    "step",
    "t",
    "detected",
    "max_dz",
    "true_support",
    "true_values",
    "support_equality",
    "support_relaxed",
    "superset_correct",
    "exact_correct",
    "condition_superset",
    "condition_exact",
    "lhs",
    "delta",
    "delta_tilde",
    "sigma_min",
    "k",
    "epsilon",
    "residual_equality",
    "residual_relaxed",
    "excess",
    "true_buses",
];

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn condition_str(c: Condition) -> &'static str {
    match c {
        Condition::Met => "met",
        Condition::NotMet => "not_met",
        Condition::NotApplicable => "not_applicable",
    }
}

fn parse_condition(s: &str) -> Option<Condition> {
    match s {
        "met" => Some(Condition::Met),
        "not_met" => Some(Condition::NotMet),
        "not_applicable" => Some(Condition::NotApplicable),
        _ => None,
    }
}

/// Writes step records as CSV. Lists are `;`-separated 0-based input indices;
/// `true_buses` repeats the true support as bus ids. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_records<W: Write>(records: &[StepRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        let buses: Vec<usize> = r.true_support.iter().map(|i| i + 1).collect();
        w.write_record([
            r.step.to_string(),
            fmt_f64(r.t),
            r.detected.to_string(),
            fmt_f64(r.max_dz),
            join(&r.true_support),
            r.true_values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";"),
            join(&r.support_equality),
            join(&r.support_relaxed),
            r.superset_correct.to_string(),
            r.exact_correct.to_string(),
            condition_str(r.condition_superset).to_string(),
            condition_str(r.condition_exact).to_string(),
            fmt_f64(r.lhs),
            fmt_f64(r.delta),
            fmt_f64(r.delta_tilde),
            fmt_f64(r.sigma_min),
            fmt_f64(r.k),
            fmt_f64(r.epsilon),
            fmt_f64(r.residual_equality),
            fmt_f64(r.residual_relaxed),
            r.excess.to_string(),
            join(&buses),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';').map(|x| x.parse().ok()).collect()
}

/// Inverse of [`write_records`].
pub fn read_records<R: Read>(input: R) -> Result<Vec<StepRecord>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(RECORD_COLUMNS.iter().copied()) {
        return Err("unexpected records.csv header".into());
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |col: &str| format!("row {}: bad `{col}`", line + 1);
        let f = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| f(i).parse::<f64>().map_err(|_| bad(RECORD_COLUMNS[i]));
        let int = |i: usize| f(i).parse::<usize>().map_err(|_| bad(RECORD_COLUMNS[i]));
        let boolean = |i: usize| f(i).parse::<bool>().map_err(|_| bad(RECORD_COLUMNS[i]));
        let list = |i: usize| parse_list::<usize>(f(i)).ok_or_else(|| bad(RECORD_COLUMNS[i]));
        let cond = |i: usize| parse_condition(f(i)).ok_or_else(|| bad(RECORD_COLUMNS[i]));
        out.push(StepRecord {
            step: int(0)?,
            t: num(1)?,
            detected: boolean(2)?,
            max_dz: num(3)?,
            true_support: list(4)?,
            true_values: parse_list::<f64>(f(5)).ok_or_else(|| bad(RECORD_COLUMNS[5]))?,
            support_equality: list(6)?,
            support_relaxed: list(7)?,
            superset_correct: boolean(8)?,
            exact_correct: boolean(9)?,
            condition_superset: cond(10)?,
            condition_exact: cond(11)?,
            lhs: num(12)?,
            delta: num(13)?,
            delta_tilde: num(14)?,
            sigma_min: num(15)?,
            k: num(16)?,
            epsilon: num(17)?,
            residual_equality: num(18)?,
            residual_relaxed: num(19)?,
            excess: int(20)?,
        });
    }
    Ok(out)
}

pub fn save_records(records: &[StepRecord], path: &Path) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_records(records, &mut buf).map_err(|source| IoError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    write_bytes(path, &buf)
}

pub fn load_records(path: &Path) -> Result<Vec<StepRecord>, IoError> {
    let text = read_to_string(path)?;
    read_records(text.as_bytes()).map_err(|reason| IoError::Invalid {
        path: path.display().to_string(),
        reason,
    })
}

/// Contents of `tables.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablesFile {
    pub series: String,
    pub seed: u64,
    pub steps: usize,
    pub detected: usize,
    pub mean_excess: f64,
    pub superset: FourfoldTable,
    pub exact: FourfoldTable,
}

pub fn save_tables(tables: &TablesFile, path: &Path) -> Result<(), IoError> {
    write_json(path, tables)
}

pub fn load_tables(path: &Path) -> Result<TablesFile, IoError> {
    read_json(path)
}

/// The solver-facing JSON result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    pub residual: f64,
    pub cardinality: usize,
    pub kind: attackid_core::ProblemKind,
    pub enumerated_count: usize,
}

impl From<&IdentificationResult> for ResultFile {
    fn from(r: &IdentificationResult) -> Self {
        Self {
            support: r.support.clone(),
            values: r.values.clone(),
            residual: r.residual,
            cardinality: r.cardinality,
            kind: r.kind,
            enumerated_count: r.enumerated_count,
        }
    }
}

pub fn save_system(sys: &GlobalSystem, path: &Path) -> Result<(), IoError> {
    write_json(path, sys)
}

pub fn load_system(path: &Path) -> Result<GlobalSystem, IoError> {
    let sys: GlobalSystem = read_json(path)?;
    sys.validate().map_err(|e| IoError::Invalid {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(sys)
}
