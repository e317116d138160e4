use std::path::Path;
use std::process::Command as Proc;

use biharm_cli::config::{NonlinearityChoice, PotentialSpec, SweepParam};
use biharm_cli::io::{field_csv, load_field, parse_field_csv, save_field, to_json};
use biharm_cli::{run, Command, RunConfig, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK};
use biharm_core::solvers::seeded_init;
use biharm_core::{build_grid, RadialField};

fn small(command: Command, dir: &Path) -> RunConfig {
    let mut cfg = RunConfig { command, out_dir: dir.to_path_buf(), ..RunConfig::default() };
    cfg.grid.r_max = Some(20.0);
    cfg.grid.n_points = 512;
    cfg
}

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_biharm"))
}

#[test]
fn config_round_trips_to_the_same_bytes() {
    let mut cfg = RunConfig::default();
    cfg.problem.lambda = 0.1 + 0.2;
    cfg.problem.potential = PotentialSpec::Radial { expr: "1-0.4*exp(-t^2)".into() };
    cfg.problem.nonlinearity =
        NonlinearityChoice::User { f: "t*exp(t^2)".into(), big_f: Some("(exp(t^2)-1)/2".into()), alpha0: 1.0, ar_mu: 2.0 };
    cfg.grid.r_max = Some(std::f64::consts::PI * 7.0);
    cfg.solver.seeds = vec![3, 1, 4];
    cfg.sweep = biharm_cli::config::SweepSpec { param: SweepParam::Gamma, values: vec![1.0 / 3.0, 2e-300, 6.02e23] };
    let a = to_json(&cfg).unwrap();
    let back = RunConfig::from_json(&a).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(to_json(&back).unwrap(), a);
}

#[test]
fn unknown_config_fields_are_rejected() {
    assert!(RunConfig::from_json(r#"{"comand":"solve"}"#).is_err());
    assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
}

#[test]
fn field_csv_round_trips_exactly() {
    for n in [2, 4] {
        let g = build_grid(13.7, 300, n).unwrap();
        let u = RadialField::from_fn(g.clone(), |r| (-r * r / 3.0).exp() * (1.0 + 1e-7 * r).sin() - 1e-300).unwrap();
        let back = parse_field_csv(&field_csv(&u), n).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(**back.grid(), *g);
    }
    let dir = tempfile::tempdir().unwrap();
    let g = build_grid(20.0, 64, 4).unwrap();
    let u = seeded_init(&g, 5).unwrap();
    let path = dir.path().join("u.csv");
    save_field(&path, &u).unwrap();
    assert_eq!(load_field(&path, 4).unwrap().values(), u.values());
}

#[test]
fn malformed_field_csv() {
    assert!(parse_field_csv("x,y\n0,1\n", 4).is_err());
    assert!(parse_field_csv("r,u\n0,1\n1,oops\n", 4).is_err());
    assert!(parse_field_csv("r,u\n0,1\n0.3,1\n1,1\n", 4).is_err());
}

#[test]
fn solve_is_deterministic_and_writes_artifacts() {
    let d1 = tempfile::tempdir().unwrap();
    let mut c1 = small(Command::Solve, d1.path());
    c1.solver.seeds = vec![1, 2];
    let o1 = run(&c1).unwrap();
    let first = std::fs::read(d1.path().join("solve.json")).unwrap();
    // second run overwrites the same files in place
    let o2 = run(&c1.clone()).unwrap();
    assert_eq!(o1.exit_code, EXIT_OK);
    assert_eq!(o2.exit_code, EXIT_OK);
    assert_eq!(std::fs::read(d1.path().join("solve.json")).unwrap(), first);
    assert!(d1.path().join("solve_seed2.csv").exists());
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("\"status\":\"converged\""));
}

#[test]
fn iteration_budget_gives_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let mut c = small(Command::Solve, d.path());
    c.solver.max_iters = 3;
    let o = run(&c).unwrap();
    assert_eq!(o.exit_code, EXIT_NOT_CONVERGED);
    let text = std::fs::read_to_string(d.path().join("solve.json")).unwrap();
    assert!(text.contains("\"status\":\"failed\""));
}

#[test]
fn other_commands_produce_reports() {
    let d = tempfile::tempdir().unwrap();
    for (cmd, name) in [
        (Command::Rearrange, "rearrange.json"),
        (Command::Moser, "moser.csv"),
        (Command::Check, "check.json"),
        (Command::Ratio, "ratio.json"),
    ] {
        let o = run(&small(cmd, d.path())).unwrap();
        assert_eq!(o.exit_code, EXIT_OK, "{name}");
        assert!(d.path().join(name).exists(), "{name}");
    }
    let moser = std::fs::read_to_string(d.path().join("moser.csv")).unwrap();
    assert!(moser.starts_with("k,b,K,l2_sq,lap_l2_sq"));
    assert_eq!(moser.lines().count(), 4);
    assert!(d.path().join("rearrange_out.csv").exists());
}

#[test]
fn sweep_is_ordered_and_independent_of_jobs() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let mut c = small(Command::Sweep, d1.path());
    c.sweep.values = vec![0.2, 0.4];
    c.jobs = 1;
    run(&c).unwrap();
    let mut c2 = c.clone();
    c2.out_dir = d2.path().to_path_buf();
    c2.jobs = 2;
    run(&c2).unwrap();
    let a = std::fs::read_to_string(d1.path().join("sweep.json")).unwrap();
    let b = std::fs::read_to_string(d2.path().join("sweep.json")).unwrap();
    let strip = |s: &str| s.split("\"report\"").nth(1).unwrap().to_string();
    assert_eq!(strip(&a), strip(&b));
    let first = a.find("\"value\":2.0000000000000001e-1").unwrap();
    let second = a.find("\"value\":4.0000000000000002e-1").unwrap();
    assert!(first < second);
}

#[test]
fn binary_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let st = bin().args(["check", "--g", "t", "--K", "1", "--out-dir", out]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_OK));
    let report = std::fs::read_to_string(d.path().join("check.json")).unwrap();
    assert!(report.contains("\"bounded_verdict\":\"fails\""));

    let st = bin().args(["solve", "--lambda", "2", "--out-dir", out]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_CONFIG));
    let st = bin().args(["check", "--g", "t*+2", "--out-dir", out]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_CONFIG));
    let st = bin().args(["nonsense"]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_CONFIG));
    let st = bin().args(["solve", "--grid", "20:256", "--max-iters", "2", "--out-dir", out]).status().unwrap();
    assert_eq!(st.code(), Some(EXIT_NOT_CONVERGED));
}

#[test]
fn flags_override_config_file_and_env_overrides_jobs() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = small(Command::Check, d.path());
    cfg.check.k = 3.0;
    cfg.jobs = 7;
    let path = d.path().join("run.json");
    std::fs::write(&path, to_json(&cfg).unwrap()).unwrap();
    let st = bin()
        .args(["check", "--config", path.to_str().unwrap(), "--K", "2", "--jobs", "3"])
        .env("BIHARM_JOBS", "5")
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(EXIT_OK));
    let report = std::fs::read_to_string(d.path().join("check.json")).unwrap();
    let echo: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(echo["config"]["check"]["K"], 2.0);
    assert_eq!(echo["config"]["jobs"], 5);
    assert_eq!(echo["config"]["grid"]["n_points"], 512);
}
