mod common;

use std::fs;
use std::process::Command;

use proptest::prelude::*;
use quasisol::experiment::{
    bregman_pairing, bregman_subgradient, bregman_subgradient_tol, build_phantom, make_noisy_data, run_experiment,
    Inclusion, NoiseSpec, RESULTS_HEADER,
};
use quasisol::fem::assemble_mass;
use quasisol::io::read_grid_csv;
use quasisol::{ExperimentConfig, ForwardModel, GridFunction, MassKind, Mesh, Phantom, Rect};

fn small_config() -> ExperimentConfig {
    ExperimentConfig { n: 16, noise: vec![1.0, 0.1, 0.01], ..ExperimentConfig::default() }
}

#[test]
fn standard_subgradient_normalization() {
    let mesh = Mesh::square_cells(64).unwrap();
    let fm = ForwardModel::from_mesh(&mesh, 1.0, MassKind::Lumped).unwrap();
    let u = build_phantom(&mesh, &Phantom::standard()).unwrap();
    let xi = bregman_subgradient(&u, fm.mass()).unwrap();
    assert!((bregman_pairing(&xi, fm.mass(), u.values()) - 4.0).abs() < 1e-10);
    let l1: f64 = xi.iter().zip(fm.mass().row_sums()).map(|(x, m)| x.abs() * m).sum();
    assert!((l1 - 1.0).abs() < 1e-10);
    // the pairing only sees the support of ξ
    let mut v = GridFunction::zeros(u.len());
    for i in 0..u.len() {
        if xi[i] != 0.0 {
            v[i] = u[i];
        }
    }
    assert!((bregman_pairing(&xi, fm.mass(), v.values()) - 4.0).abs() < 1e-10);
    // consistent and lumped mass give the same weights
    let consistent = assemble_mass(&mesh).unwrap();
    assert_eq!(bregman_subgradient(&u, &consistent).unwrap(), xi);
}

#[test]
fn constant_phantom_subgradient() {
    let mesh = Mesh::square_cells(8).unwrap();
    let m = assemble_mass(&mesh).unwrap();
    let u = GridFunction::constant(mesh.num_vertices(), -3.0);
    let xi = bregman_subgradient(&u, &m).unwrap();
    assert!(xi.iter().all(|&x| (x + 0.25).abs() < 1e-15));
    assert!((bregman_pairing(&xi, &m, u.values()) - 3.0).abs() < 1e-12);
    assert!(bregman_subgradient(&GridFunction::zeros(4), &assemble_mass(&Mesh::square_cells(1).unwrap()).unwrap()).is_err());
    let bumped = GridFunction::new(u.values().iter().enumerate().map(|(i, &v)| if i == 0 { v + 1e-9 } else { v }).collect());
    assert_eq!(bregman_subgradient_tol(&bumped, &m, 1e-6).unwrap().iter().filter(|&&x| x != 0.0).count(), 81);
}

#[test]
fn phantom_geometry() {
    let mesh = Mesh::square_cells(20).unwrap();
    let u = build_phantom(&mesh, &Phantom::standard()).unwrap();
    let at = |x: f64, y: f64| {
        let i = mesh.vertices().iter().position(|v| (v[0] - x).abs() < 1e-12 && (v[1] - y).abs() < 1e-12).unwrap();
        u[i]
    };
    assert_eq!(at(-0.5, -0.5), 4.0);
    assert_eq!(at(0.5, -0.5), -4.0);
    assert_eq!(at(-0.5, 0.5), 2.0);
    assert_eq!(at(0.5, 0.5), -2.0);
    assert_eq!(at(0.0, 0.0), 0.0);
    let json = serde_json::to_string(&Phantom::standard()).unwrap();
    let back: Phantom = serde_json::from_str(&json).unwrap();
    assert_eq!(back, Phantom::standard());
    let custom = Phantom {
        inclusions: vec![Inclusion { rect: Rect::new(-1.0, 0.0, -1.0, 1.0), value: -7.0 }],
        background: 1.0,
    };
    assert_eq!(custom.rho_dagger(), 7.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noise_level_identity(seed in any::<u64>(), s in 1e-6f64..10.0) {
        let mesh = Mesh::square_cells(12).unwrap();
        let fm = ForwardModel::from_mesh(&mesh, 1.0, MassKind::Lumped).unwrap();
        let y = fm.forward(&build_phantom(&mesh, &Phantom::standard()).unwrap()).unwrap();
        let spec = NoiseSpec { s, seed };
        let (yd, delta) = make_noisy_data(&y, &spec, fm.mass()).unwrap();
        let want = s / 100.0 * y.max_abs();
        prop_assert!((delta - want).abs() <= 1e-12 * want.max(1.0));
        prop_assert!((yd.sub(&y).mass_norm(fm.mass()) - delta).abs() <= 1e-15);
        let (again, _) = make_noisy_data(&y, &spec, fm.mass()).unwrap();
        prop_assert_eq!(again, yd);
    }
}

#[test]
fn zero_noise_returns_clean_data() {
    let mesh = Mesh::square_cells(4).unwrap();
    let m = assemble_mass(&mesh).unwrap();
    let y = GridFunction::constant(25, 0.5);
    let (yd, delta) = make_noisy_data(&y, &NoiseSpec { s: 0.0, seed: 3 }, &m).unwrap();
    assert_eq!((yd, delta), (y.clone(), 0.0));
    assert!(make_noisy_data(&y, &NoiseSpec { s: -1.0, seed: 3 }, &m).is_err());
}

#[test]
fn experiment_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config();
    let records = run_experiment(&config, Some(dir.path())).unwrap();
    assert_eq!(records.len(), 3);
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().next(), Some(RESULTS_HEADER));
    assert_eq!(results.lines().count(), 4);
    for i in 0..3 {
        let grid = read_grid_csv(fs::File::open(dir.path().join(format!("recon_{i}.csv"))).unwrap()).unwrap();
        assert_eq!(grid.len(), 17 * 17);
        assert!(dir.path().join(format!("trace_{i}.csv")).exists());
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("choice_{i}.json"))).unwrap()).unwrap();
        assert_eq!(json["success"].as_bool(), Some(records[i].success));
    }
    for r in &records {
        assert!(r.delta > 0.0 && r.err_inf >= 0.0 && r.err_l2 >= 0.0);
        assert!(r.bregman_distance >= -1e-10);
        if r.success {
            assert!(r.delta <= r.discrepancy && r.discrepancy <= config.tau * r.delta);
            assert!(r.rho <= 4.0 + 1e-6);
        }
    }
}

#[test]
fn config_round_trip_and_partial_files() {
    let config = small_config();
    let json = serde_json::to_string(&config).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), config);
    let partial: ExperimentConfig = serde_json::from_str(r#"{"n": 8, "mass": "consistent"}"#).unwrap();
    assert_eq!(partial.n, 8);
    assert_eq!(partial.mass, MassKind::Consistent);
    assert_eq!(partial.rho0, 10.0);
    assert_eq!(partial.mesh().unwrap().num_vertices(), 81);
    let vertices = ExperimentConfig { n: 8, n_is_vertices: true, ..ExperimentConfig::default() };
    assert_eq!(vertices.mesh().unwrap().num_vertices(), 64);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quasisol"))
}

#[test]
fn cli_runs_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let status = cli()
            .args(["--n", "16", "--noise", "1,0.1", "--seed", "7", "--out"])
            .arg(dir.path())
            .status()
            .unwrap();
        assert!(status.code() == Some(0) || status.code() == Some(1));
    }
    let ra = fs::read(a.path().join("results.csv")).unwrap();
    let rb = fs::read(b.path().join("results.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn cli_reads_config_and_phantom_files() {
    let dir = tempfile::tempdir().unwrap();
    let phantom = Phantom {
        inclusions: vec![Inclusion { rect: Rect::new(-0.5, 0.5, -0.5, 0.5), value: 3.0 }],
        background: 0.0,
    };
    let ppath = dir.path().join("phantom.json");
    fs::write(&ppath, serde_json::to_string(&phantom).unwrap()).unwrap();
    let cpath = dir.path().join("config.json");
    fs::write(&cpath, r#"{"n": 12, "noise": [0.5]}"#).unwrap();
    let out = dir.path().join("out");
    let output = cli()
        .arg("--config")
        .arg(&cpath)
        .arg("--phantom")
        .arg(&ppath)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.code() == Some(0) || output.status.code() == Some(1));
    let u = read_grid_csv(fs::File::open(out.join("u_true.csv")).unwrap()).unwrap();
    assert_eq!(u.len(), 13 * 13);
    assert_eq!(u.iter().fold(0.0f64, |m, r| m.max(r[2].abs())), 3.0);
}

#[test]
fn cli_rejects_bad_input() {
    let output = cli().args(["--noise", "abc"]).output().unwrap();
    assert!(!output.status.success());
    let output = cli().args(["--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
