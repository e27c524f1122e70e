use std::process::{Command, Output};

use sdre_cli::commands::{execute, exit_code};
use sdre_cli::config::{parse_matrix, Controller, ExperimentConfig};
use sdre_cli::trajectory_csv::{read_trajectory, write_trajectory};
use sdre_core::dynamics::RunStatus;

fn sdre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdre")).args(args).env_remove("SDRE_SEED").output().expect("launch sdre")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

/// `(approach, cost, status)` per table row.
fn table_rows(text: &str) -> Vec<(String, f64, String)> {
    text.lines()
        .skip(1)
        .map(|line| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            (cols[0].to_string(), cols[1].parse().unwrap(), cols[3].to_string())
        })
        .collect()
}

fn summary_cost(text: &str) -> f64 {
    text.split_whitespace().find_map(|kv| kv.strip_prefix("cost=")).unwrap().parse().unwrap()
}

fn value_after<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines().find_map(|l| l.strip_prefix(key)).unwrap()
}

#[test]
fn exit_codes_follow_run_status() {
    assert_eq!(exit_code(RunStatus::Completed), 0);
    assert_eq!(exit_code(RunStatus::Diverged(1.0)), 2);
    assert_eq!(exit_code(RunStatus::Diverged(7.0)), 2);
    assert_eq!(exit_code(RunStatus::SolverFailed(0.5)), 3);
}

#[test]
fn run_exit_codes() {
    let open = sdre(&["run", "--controller", "open-loop"]);
    assert_eq!(open.status.code(), Some(2));
    assert!(stdout(&open).contains("cost=inf"));
    assert!(stdout(&open).contains("status=diverged"));

    let bad_step = sdre(&["run", "--dt", "-1"]);
    assert_eq!(bad_step.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&bad_step.stderr).contains("`dt`"));

    let dir = tempfile::tempdir().unwrap();
    let unwritable = dir.path().join("missing").join("out.csv");
    let io = sdre(&["run", "--t-final", "0.01", "--out", unwritable.to_str().unwrap()]);
    assert_eq!(io.status.code(), Some(4));

    assert_eq!(sdre(&["launch"]).status.code(), Some(64));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.cfg");
    std::fs::write(&path, "# short horizon\ncontroller = open-loop\nt-final = 0.5\nx0 = 0.1, 0.1\n").unwrap();
    let from_file = sdre(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(from_file.status.code(), Some(0));
    assert!(stdout(&from_file).starts_with("controller=open-loop"));
    assert!(stdout(&from_file).contains("steps=500"));

    let overridden = sdre(&["run", "--config", path.to_str().unwrap(), "--controller", "sdre", "--t-final", "0.25"]);
    assert!(stdout(&overridden).starts_with("controller=sdre"));
    assert!(stdout(&overridden).contains("steps=250"));

    std::fs::write(&path, "t-final = 1\nnoise = loud\n").unwrap();
    let bad = sdre(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("`noise` on line 2"));
}

#[test]
fn compare_default_table() {
    let output = sdre(&["compare"]);
    assert_eq!(output.status.code(), Some(0));
    let rows = table_rows(&stdout(&output));
    let names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(names, ["sdre", "irl-sdre", "open-loop"]);
    assert!((rows[0].1 - rows[1].1).abs() <= 0.1);
    assert_eq!(rows[2].1, f64::INFINITY);
    assert_eq!(rows[2].2, "diverged");

    let run = sdre(&["run", "--controller", "sdre"]);
    assert_eq!(summary_cost(&stdout(&run)).to_bits(), rows[0].1.to_bits());
}

#[test]
fn compare_single_step_and_determinism() {
    let once = sdre(&["compare", "--t-final", "0.001"]);
    let rows = table_rows(&stdout(&once));
    assert_eq!(rows.len(), 3);
    for (name, cost, status) in &rows {
        assert!(*cost < 0.05, "{name}: {cost}");
        assert_eq!(status, "completed");
    }

    let strip = |o: &Output| table_rows(&stdout(o));
    let a = sdre(&["compare", "--t-final", "0.3", "--seed", "9"]);
    let b = sdre(&["compare", "--t-final", "0.3", "--seed", "9"]);
    let bits =
        |rows: Vec<(String, f64, String)>| rows.into_iter().map(|(n, c, s)| (n, c.to_bits(), s)).collect::<Vec<_>>();
    assert_eq!(bits(strip(&a)), bits(strip(&b)));
}

#[test]
fn solve_are_methods_agree() {
    let kleinman = sdre(&["solve-are", "--a", "1,1;1,-1", "--b", "1;1", "--q", "1,0;0,1", "--r", "1"]);
    assert_eq!(kleinman.status.code(), Some(0));
    let text = stdout(&kleinman);
    let residual: f64 = value_after(&text, "residual=").parse().unwrap();
    assert!(residual < 1e-9);
    let k_kleinman = parse_matrix(value_after(&text, "K=")).unwrap();

    let irl = sdre(&["solve-are", "--a", "1,1;1,-1", "--b", "1;1", "--method", "irl"]);
    assert_eq!(irl.status.code(), Some(0));
    let k_irl = parse_matrix(value_after(&stdout(&irl), "K=")).unwrap();
    assert!((&k_irl - &k_kleinman).norm_inf() < 1e-3);

    let scalar = sdre(&["solve-are", "--a", "-1", "--b", "1", "--q", "1", "--r", "1"]);
    let p = parse_matrix(value_after(&stdout(&scalar), "P=")).unwrap();
    assert!((p[(0, 0)] - 0.414214).abs() < 1e-6);
}

#[test]
fn solve_are_failures() {
    let uncontrollable = sdre(&["solve-are", "--a", "1,0;0,1", "--b", "1;0"]);
    assert_eq!(uncontrollable.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&uncontrollable.stderr).is_empty());

    let capped = sdre(&[
        "solve-are",
        "--a",
        "1,1;1,-1",
        "--b",
        "1;1",
        "--method",
        "irl",
        "--irl-nmax",
        "1",
        "--irl-tol",
        "1e-12",
    ]);
    assert_eq!(capped.status.code(), Some(3));

    let ragged = sdre(&["solve-are", "--a", "1,1;1", "--b", "1;1"]);
    assert_eq!(ragged.status.code(), Some(64));
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sdre"));
        cmd.args(["run", "--controller", "irl-sdre", "--t-final", "0.05"]).args(extra).env_remove("SDRE_SEED");
        if let Some(seed) = env {
            cmd.env("SDRE_SEED", seed);
        }
        summary_cost(&String::from_utf8(cmd.output().unwrap().stdout).unwrap())
    };
    assert_eq!(run(Some("5"), &[]).to_bits(), run(None, &["--seed", "5"]).to_bits());
    assert_eq!(run(Some("5"), &["--seed", "6"]).to_bits(), run(None, &["--seed", "6"]).to_bits());
}

#[test]
fn csv_round_trip_reproduces_cost() {
    for (x0, controller) in [
        (vec![3.0, 1.0], Controller::Sdre),
        (vec![-1.5, 2.0], Controller::Sdre),
        (vec![0.5, -0.5], Controller::OpenLoop),
        (vec![1.0, 0.5], Controller::IrlSdre),
    ] {
        let cfg = ExperimentConfig { x0, controller, t_final: 2.0, ..Default::default() };
        let record = execute(&cfg).unwrap();
        assert_eq!(record.report.status, RunStatus::Completed);
        let mut bytes = Vec::new();
        write_trajectory(&mut bytes, &record.trajectory, 2, 1).unwrap();
        let table = read_trajectory(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(table.rows.len(), record.trajectory.samples.len());
        let cost = table.integrated_cost(&cfg.model());
        assert!((cost - record.report.total_cost).abs() < 1e-9, "{cost} vs {}", record.report.total_cost);
        for (row, sample) in table.rows.iter().zip(&record.trajectory.samples) {
            assert_eq!(row.x, sample.x);
            assert_eq!(row.gain, sample.gain.as_slice());
        }
    }
}
