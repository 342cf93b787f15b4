use eninet::io::{parse_extxyz, read_extxyz, write_extxyz, RunConfig, TaskName};
use eninet::model::Head;
use eninet::verify::random_molecules;
use eninet::Error;
use proptest::prelude::*;

#[test]
fn forces_and_polarizability_columns() {
    let text = "3\nenergy=-76.4 polarizability=\"1 0 0 0 2 0 0 0 3\"\nO 0 0 0 0.1 0.2 0.3\nH 0.96 0 0 -0.1 0 0\nh -0.24 0.93 0 0 -0.2 -0.3\n";
    let mols = parse_extxyz(text).unwrap();
    assert_eq!(mols.len(), 1);
    let m = &mols[0];
    assert_eq!(m.atomic_numbers, vec![8, 1, 1]);
    assert_eq!(m.energy, Some(-76.4));
    assert_eq!(m.forces.as_ref().unwrap()[2], [0.0, -0.2, -0.3]);
    assert_eq!(m.polarizability.unwrap()[2][2], 3.0);
}

#[test]
fn malformed_frames_name_the_line() {
    let cases = [
        ("2\nenergy=1\nH 0 0 0\n", 4),
        ("x\n\n", 1),
        ("1\n\nXx 0 0 0\n", 3),
        ("1\n\nH 0 zero 0\n", 3),
        ("2\n\nH 0 0 0\nH 0 0 1 2\n", 4),
    ];
    for (text, line) in cases {
        match parse_extxyz(text) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mols: Vec<_> = random_molecules(3, 4, 2, 9)
        .into_iter()
        .map(|m| {
            let f = m.positions.iter().map(|p| [p[1], -p[0], 0.5 * p[2]]).collect();
            m.with_energy(-1.0 / 3.0).with_forces(f).unwrap()
        })
        .collect();
    let path = dir.path().join("a.xyz");
    std::fs::write(&path, write_extxyz(&mols)).unwrap();
    let back = read_extxyz(&path).unwrap();
    assert_eq!(back, mols);
}

#[test]
fn run_config_round_trips_and_sets_head() {
    let cfg = RunConfig::from_json(r#"{"task": "polarizability", "model": {"d": 32}, "train": {"epochs": 5}}"#).unwrap();
    assert_eq!(cfg.task, TaskName::Polarizability);
    assert_eq!(cfg.model.head, Head::Polarizability);
    assert_eq!(cfg.model.d, 32);
    assert_eq!(cfg.train.epochs, 5);
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    assert!(RunConfig::from_json(r#"{"model": {"d": 32, "depth": 2}}"#).is_err());
    assert!(RunConfig::from_json(r#"{"train": {"batch_size": 0}}"#).is_err());
}

#[test]
fn relative_dataset_path_follows_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"dataset": "data/x.xyz"}"#).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.dataset, dir.path().join("data/x.xyz"));
}

proptest! {
    #[test]
    fn coordinates_survive_write_then_parse(
        pos in prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), 1..10),
        e in -1e6f64..1e6,
    ) {
        let z = vec![6; pos.len()];
        // keep atoms apart so the molecule is valid
        let pos: Vec<_> = pos.iter().enumerate().map(|(k, p)| [p[0] + 3e3 * k as f64, p[1], p[2]]).collect();
        let m = eninet::Molecule::new(z, pos).unwrap().with_energy(e);
        let back = parse_extxyz(&write_extxyz(std::slice::from_ref(&m))).unwrap();
        for (a, b) in m.positions.iter().zip(&back[0].positions) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-12 * a[k].abs().max(1.0));
            }
        }
        prop_assert_eq!(back[0].energy, Some(e));
    }
}
