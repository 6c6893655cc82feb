use attackid::io::{
    bundled_ieee30, load_attack_vector, load_network, load_records, load_schedule, load_snapshot, load_system,
    load_tables, parse_network, read_records, save_network, save_records, save_system, save_tables, write_records,
    IoError, RECORD_COLUMNS,
};
use attackid::cli::tables_for;
use attackid_core::experiment::run_series;
use attackid_core::linalg::DenseMatrix;
use attackid_core::model::BusKind;
use attackid_core::sensitivity::GlobalSystem;
use attackid_core::{ExperimentConfig, SeriesKind};
use std::fs;

const TWO_BUS: &str = r#"{
  "buses": [
    {"id": 1, "m": 1.0, "d": 1.0, "V": 1.0, "kind": "generator", "u_min": -0.4, "u_max": 0.9, "theta0": 0.0},
    {"id": 2, "m": 1.0, "d": 1.0, "V": 1.0, "kind": "controllable-load", "u_min": -0.4, "u_max": 0.0, "theta0": 0.0}
  ],
  "lines": [{"i": 1, "j": 2, "b": 1.0}],
  "partition": [{"name": "A", "members": [1]}, {"name": "B", "members": [2]}]
}"#;

#[test]
fn bundled_ieee30_has_expected_shape() {
    let m = bundled_ieee30();
    assert_eq!(m.n_buses(), 30);
    assert_eq!(m.n_subsystems(), 6);
    assert_eq!(m.d_u(), 30);
    assert_eq!(m.d_x(), 60);
    assert_eq!(m.d_z(), 18);
    assert_eq!(m.max_degree(), 5);
    assert_eq!(m.lines().len(), 41);
    let gens = m.buses().iter().filter(|b| b.kind == BusKind::Generator).count();
    assert_eq!(gens, 6);
}

#[test]
fn two_bus_parses_and_round_trips() {
    let m = parse_network(TWO_BUS, "two_bus.json").unwrap();
    assert_eq!(m.d_z(), 2);
    assert_eq!(m.bus(1).kind, BusKind::ControllableLoad);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    save_network(&m, &path).unwrap();
    assert_eq!(load_network(&path).unwrap(), m);
}

#[test]
fn zero_inertia_is_rejected_with_the_bus_named() {
    let bad = TWO_BUS.replacen("\"m\": 1.0", "\"m\": 0.0", 1);
    let err = parse_network(&bad, "bad.json").unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, IoError::Model { .. }));
    assert!(msg.contains("bus 1") && msg.contains("m"), "{msg}");
}

#[test]
fn malformed_json_names_the_file() {
    let err = parse_network("{\"buses\": [", "broken.json").unwrap_err();
    assert!(matches!(err, IoError::Json { .. }));
    assert!(err.to_string().starts_with("broken.json"));
}

#[test]
fn bus_facing_files_use_one_based_ids() {
    let m = parse_network(TWO_BUS, "two_bus.json").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let attack = dir.path().join("attack.json");
    fs::write(&attack, r#"{"inputs": [{"bus": 2, "delta": -0.1}]}"#).unwrap();
    assert_eq!(load_attack_vector(&attack, &m).unwrap(), vec![0.0, -0.1]);

    let sched = dir.path().join("sched.json");
    fs::write(&sched, r#"{"steps": [{"step": 4, "inputs": [{"bus": 1, "delta": 0.2}]}]}"#).unwrap();
    let s = load_schedule(&sched, &m).unwrap();
    assert_eq!(s.delta_at(4, 2), vec![0.2, 0.0]);

    fs::write(&attack, r#"{"inputs": [{"bus": 0, "delta": 1.0}]}"#).unwrap();
    assert!(matches!(load_attack_vector(&attack, &m), Err(IoError::Invalid { .. })));
}

#[test]
fn snapshot_lengths_are_checked() {
    let m = parse_network(TWO_BUS, "two_bus.json").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("state.json");
    fs::write(&p, r#"{"theta": [0.0, 0.0], "omega": [0.1, 0.0]}"#).unwrap();
    let snap = load_snapshot(&p, &m).unwrap();
    assert_eq!(snap.state().omega, vec![0.1, 0.0]);
    fs::write(&p, r#"{"theta": [0.0], "omega": [0.1, 0.0]}"#).unwrap();
    assert!(matches!(load_snapshot(&p, &m), Err(IoError::Invalid { .. })));
}

#[test]
fn records_and_tables_round_trip() {
    let m = parse_network(TWO_BUS, "two_bus.json").unwrap();
    let mut cfg = ExperimentConfig::new(SeriesKind::Attack1, 2, 12);
    cfg.k_samples = 4;
    let records = run_series(&m, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    save_records(&records, &path).unwrap();
    let back = load_records(&path).unwrap();
    assert_eq!(back.len(), records.len());
    // NaN fields defeat PartialEq; compare the serialized bytes instead
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_records(&records, &mut a).unwrap();
    write_records(&back, &mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(fs::read(&path).unwrap(), a);

    let tables = tables_for(&cfg, &records);
    let tp = dir.path().join("tables.json");
    save_tables(&tables, &tp).unwrap();
    assert_eq!(load_tables(&tp).unwrap(), tables);
}

#[test]
fn header_only_csv_is_empty() {
    let mut buf = Vec::new();
    write_records(&[], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.trim_end(), RECORD_COLUMNS.join(","));
    assert!(read_records(text.as_bytes()).unwrap().is_empty());
}

#[test]
fn system_dump_round_trips_and_is_validated() {
    let s = DenseMatrix::from_rows(&[vec![0.6, 0.0], vec![0.8, 0.0], vec![0.0, 1.0]]).unwrap();
    let sys = GlobalSystem::single_block(s, vec![0.3, 0.4, -1.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sys.json");
    save_system(&sys, &p).unwrap();
    assert_eq!(load_system(&p).unwrap(), sys);
    let text = fs::read_to_string(&p).unwrap().replace("\"n_inputs\": 2", "\"n_inputs\": 1");
    fs::write(&p, text).unwrap();
    assert!(matches!(load_system(&p), Err(IoError::Invalid { .. })));
}
