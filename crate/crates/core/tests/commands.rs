use std::path::{Path, PathBuf};

use hkdelay::io::{
    cmd_plot, cmd_run, cmd_sweep, cmd_verify, parse_csv, ExitStatus, ScenarioFile, SweepParam, TrajectoryTable,
};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn read_table(path: &Path) -> TrajectoryTable {
    parse_csv(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn final_diameter(t: &TrajectoryTable) -> f64 {
    let last = t.times.len() - 1;
    let xs: Vec<f64> = (0..t.entity_count()).map(|e| t.entity_at(last, e)[0]).collect();
    xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[test]
fn constant_leader_run_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let outcome = cmd_run(&scenario("single_leader_constant.json"), &out);
    assert_eq!(outcome.status, ExitStatus::Ok, "{}", outcome.message);
    let t = read_table(&out);
    assert_eq!((t.n_followers, t.n_leaders), (10, 1));
    let zero = t.times.iter().position(|&s| s == 0.0).unwrap();
    let xs: Vec<f64> = (0..11).map(|e| t.entity_at(zero, e)[0]).collect();
    let d0 = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(final_diameter(&t) < 0.01 * d0);
}

#[test]
fn consensus_histories_do_not_move() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("general_complete.json"))
        .unwrap()
        .replace(r#"{"random_constant": {"low": 0.0, "high": 10.0}}"#, r#"{"random_constant": {"low": 2.5, "high": 2.5}}"#)
        .replace("300.0", "20.0");
    let path = dir.path().join("still.json");
    std::fs::write(&path, text).unwrap();
    let out = dir.path().join("still.csv");
    assert_eq!(cmd_run(&path, &out).status, ExitStatus::Ok);
    let t = read_table(&out);
    for s in 0..t.times.len() {
        for e in 0..t.entity_count() {
            assert_eq!(t.entity_at(s, e), &[2.5]);
        }
    }
}

#[test]
fn malformed_chi_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("failing/star_broadcast.json"))
        .unwrap()
        .replace("[1, 0, 0, 0]]", "[1, 0, 0]]");
    let path = dir.path().join("bad.json");
    std::fs::write(&path, text).unwrap();
    let outcome = cmd_run(&path, &dir.path().join("x.csv"));
    assert_eq!(outcome.status, ExitStatus::InputError);
    assert!(outcome.message.contains("chi[3]"), "{}", outcome.message);
}

#[test]
fn star_broadcast_fails_verification_with_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("star.txt");
    let outcome = cmd_verify(&scenario("failing/star_broadcast.json"), &report);
    assert_eq!(outcome.status, ExitStatus::VerificationFailure);
    let text = std::fs::read_to_string(report).unwrap();
    assert!(text.contains("common_influencer      FAIL"), "{text}");
    assert!(text.contains("pair (0,1)"));
}

#[test]
fn verify_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    let path = scenario("two_leaders.json");
    assert_eq!(cmd_verify(&path, &a).status, ExitStatus::Ok);
    assert_eq!(cmd_verify(&path, &b).status, ExitStatus::Ok);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn every_golden_scenario_verifies() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(scenario("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let outcome = cmd_verify(&path, &dir.path().join("r.txt"));
            assert_eq!(outcome.status, ExitStatus::Ok, "{}: {}", path.display(), outcome.message);
        }
    }
}

#[test]
fn certified_rate_decreases_along_a_tau_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let (outcome, rows) = cmd_sweep(&scenario("general_complete.json"), SweepParam::Tau, &[1.0, 2.0, 5.0], dir.path());
    assert_eq!(outcome.status, ExitStatus::Ok);
    let gammas: Vec<f64> = rows.iter().map(|r| r.gamma_certified.unwrap()).collect();
    assert!(gammas.windows(2).all(|w| w[1] < w[0]), "{gammas:?}");
    assert!(rows.iter().all(|r| r.status == "pass"));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("value,gamma_certified,gamma_empirical,pass_count"));
    assert_eq!(summary.lines().count(), 4);
    assert!(dir.path().join("report_tau_5.txt").exists());
}

#[test]
fn doubling_the_speed_halves_the_arrival_time() {
    let dir = tempfile::tempdir().unwrap();
    let (_, rows) = cmd_sweep(&scenario("single_leader_controlled.json"), SweepParam::M, &[1.0, 2.0], dir.path());
    let t: Vec<f64> = rows.iter().map(|r| r.arrival_time.unwrap()).collect();
    assert!((t[0] - 5.0).abs() <= 0.01 && (t[1] - 2.5).abs() <= 0.01, "{t:?}");
}

#[test]
fn sweep_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("general_complete.json");
    assert_eq!(cmd_sweep(&path, SweepParam::Tau, &[], dir.path()).0.status, ExitStatus::InputError);
    assert_eq!(cmd_sweep(&path, SweepParam::M, &[1.0], dir.path()).0.status, ExitStatus::InputError);
}

#[test]
fn sweep_over_population_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = ScenarioFile::read(&scenario("general_complete.json")).unwrap();
    file.horizon_t = 30.0;
    let path = dir.path().join("short.json");
    std::fs::write(&path, file.to_json()).unwrap();
    let (outcome, rows) = cmd_sweep(&path, SweepParam::N, &[3.0, 6.0], &dir.path().join("out"));
    assert_eq!(outcome.status, ExitStatus::Ok);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.status == "pass"), "{rows:?}");
}

#[test]
fn controlled_plot_has_a_kinked_leader() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let svg = dir.path().join("c.svg");
    assert_eq!(cmd_run(&scenario("single_leader_controlled.json"), &csv).status, ExitStatus::Ok);
    assert_eq!(cmd_plot(&csv, &svg).status, ExitStatus::Ok);
    let text = std::fs::read_to_string(&svg).unwrap();
    let leader = text.lines().find(|l| l.contains("class=\"leader\"")).unwrap();
    let pts: Vec<(f64, f64)> = leader
        .split("points=\"")
        .nth(1)
        .unwrap()
        .trim_end_matches("\"/>")
        .split(' ')
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let last = *ys.last().unwrap();
    let flat_from = ys.iter().position(|&y| y == last).unwrap();
    // svg y grows downward: the leader climbs (y falls), then stays parked
    assert!(ys.windows(2).all(|w| w[1] <= w[0]));
    assert!(ys[0] > last && flat_from < ys.len() - 1);
    assert_eq!(cmd_plot(&svg, &dir.path().join("again.svg")).status, ExitStatus::InputError);
}
