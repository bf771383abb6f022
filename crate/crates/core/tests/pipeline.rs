//! End-to-end runs through the public API.

use std::fs;

use noisemix::coefficients::{read_coefficient_dump, write_coefficient_dump, GridSpec};
use noisemix::experiment::csv::{metrics_csv, HEADER};
use noisemix::experiment::sweep::{run_sweep, Axes, MANIFEST_NAME};
use noisemix::experiment::{run_scenario, simulate, ConfigFile, InitialState, ScenarioSpec};
use noisemix::noise::Scenario;
use noisemix::Error;

fn spec(scenario: Scenario, gamma_beta: f64, t_max: f64) -> ScenarioSpec {
    let mut s = ScenarioSpec::default().with_scenario(scenario);
    s.noise.relaxation.inverse_memory = gamma_beta;
    s.grid = GridSpec { dt: 0.01, t_max, s1_stride: 2 };
    s
}

#[test]
fn long_memory_capacity_dominates_short_memory() {
    let slow = run_scenario(&spec(Scenario::R, 0.1, 10.0)).unwrap();
    let fast = run_scenario(&spec(Scenario::R, 2.0, 10.0)).unwrap();
    let (a, b) = (slow.chi.unwrap(), fast.chi.unwrap());
    for i in 1..a.len() {
        assert!(a[i] > b[i], "t = {}: {} vs {}", slow.times[i], a[i], b[i]);
    }
}

#[test]
fn identical_specs_give_identical_csv() {
    let s = spec(Scenario::C, 0.3, 1.0);
    let a = metrics_csv(&run_scenario(&s).unwrap());
    let b = metrics_csv(&run_scenario(&s).unwrap());
    assert_eq!(a, b);
    assert!(a.starts_with(&format!("{HEADER}\n")));
    assert_eq!(a.lines().count(), 102);
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "scenario = \"R\"\ngamma_beta = 2.0\ndt = 0.02\nt_max = 1.0\nmetrics = \"capacity\"\n").unwrap();
    let s = ConfigFile::load(&path).unwrap().resolve().unwrap();
    let m = run_scenario(&s).unwrap();
    assert_eq!(m.len(), 51);
    let text = metrics_csv(&m);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row, ["0", "2", "", "R", "2", "0", "1", "1", "2.22044604925e-16", "0"]);
}

#[test]
fn matrix_file_state_matches_named_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.txt");
    fs::write(&path, "# (|01> + |10>)/sqrt2\n0 0 0 0\n0 0.5 0.5 0\n0 0.5 0.5 0\n0 0 0 0\n").unwrap();
    let mut named = spec(Scenario::C, 0.1, 1.0);
    let mut from_file = named.clone();
    from_file.initial_state = InitialState::MatrixFile(path);
    named.initial_state = InitialState::BellPsiPlus;
    let (a, b) = (run_scenario(&named).unwrap(), run_scenario(&from_file).unwrap());
    for (x, y) in a.chi.unwrap().iter().zip(b.chi.unwrap()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn coefficient_dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.qsdf");
    let sim = simulate(&spec(Scenario::C, 0.1, 0.5)).unwrap();
    let field = sim.field.unwrap();
    write_coefficient_dump(&field, &path).unwrap();
    let dump = read_coefficient_dump(&path).unwrap();
    assert_eq!((dump.version, dump.steps, dump.dt), (1, 50, 0.01));
    for c in 0..4 {
        assert_eq!(dump.series[c].as_slice(), field.integrated_series(c + 1));
    }
    assert!(simulate(&spec(Scenario::D, 0.1, 0.5)).unwrap().field.is_none());
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = spec(Scenario::C, 0.1, 0.5);
    base.noise.dephasing_markovian = false;
    let axes = Axes { gamma_beta: vec![0.1, 2.0], big_gamma_alpha: vec![1.0], scenarios: vec![Scenario::R, Scenario::D] };
    let report = run_sweep(&base, &axes, dir.path(), 2).unwrap();
    assert_eq!(report.entries.len(), 4);
    assert_eq!(report.failures(), 2);
    let manifest = fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.contains(",failed,")).count(), 2);
    assert_eq!(manifest.lines().filter(|l| l.contains(",ok,")).count(), 2);
    let failed = fs::read_to_string(dir.path().join("capacity-fidelity_D_gb0.1_Ga1.csv")).unwrap();
    assert_eq!(failed, format!("{HEADER}\n"));
    let ok = fs::read_to_string(dir.path().join("capacity-fidelity_R_gb2_Ga0.csv")).unwrap();
    assert_eq!(ok.lines().count(), 52);
    for e in &report.entries {
        if e.spec.scenario() == Scenario::D {
            assert!(matches!(e.error, Some(Error::Config(_))));
        }
    }
}

#[test]
fn figure_sweep_produces_seven_files() {
    let dir = tempfile::tempdir().unwrap();
    let base = spec(Scenario::C, 0.1, 0.2);
    let axes = Axes { gamma_beta: vec![0.1], big_gamma_alpha: vec![1.0, 2.0, 4.0], scenarios: Scenario::ALL.to_vec() };
    let report = run_sweep(&base, &axes, dir.path(), 3).unwrap();
    let csvs = fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().file_name() != MANIFEST_NAME).count();
    assert_eq!(csvs, 7);
    assert_eq!(report.failures(), 0);
    let r = report.find(Scenario::R, 0.1, 4.0).unwrap();
    assert_eq!(r.file_name, "capacity-fidelity_R_gb0.1_Ga0.csv");
}
