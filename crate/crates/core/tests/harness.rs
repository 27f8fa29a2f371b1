use std::process::Command;

use comprsma::harness::{
    parse_entries, run_experiment, summarize, to_csv_string, trial_seed, Axis, ExperimentSpec,
};
use comprsma::rate::Scheme;
use comprsma::CoreError;

/// A spec that runs in milliseconds per trial.
fn tiny() -> ExperimentSpec {
    let mut s = ExperimentSpec::default();
    for (k, v) in [
        ("n_bs", "1"),
        ("n_antennas", "2"),
        ("n_users", "2"),
        ("epochs", "3"),
        ("outer_iters", "2"),
        ("inner_iters", "1"),
        ("hidden_precoder", "8"),
        ("hidden_common", "4"),
        ("hidden_position", "8"),
        ("trials", "2"),
    ] {
        s.set(k, v).unwrap();
    }
    s
}

fn field_of(e: CoreError) -> String {
    match e {
        CoreError::Config { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn config_text_parsing() {
    let text = "# comment\n\n axis = power  # trailing\nvalues = 29, 33,37\nkinds = RSMA-MA,sdma-fpa\ntrials=5\nzeta1 = 2.5\nwall_time = yes\n";
    let s = ExperimentSpec::from_config_text(text).unwrap();
    assert_eq!(s.axis, Axis::Power);
    assert_eq!(s.values, vec![29.0, 33.0, 37.0]);
    assert_eq!(s.kinds, vec![Scheme::RSMA_MA, Scheme::SDMA_FPA]);
    assert_eq!(s.trials, 5);
    assert_eq!(s.meta.zeta[0], 2.5);
    assert!(s.wall_time);

    let e = parse_entries("a = 1\nnot a pair\n").unwrap_err();
    assert!(matches!(e, CoreError::Parse { line: 2, .. }));
    assert_eq!(field_of(ExperimentSpec::from_config_text("epochz = 3").unwrap_err()), "epochz");
    assert_eq!(field_of(ExperimentSpec::from_config_text("trials = -1").unwrap_err()), "trials");
    assert_eq!(field_of(ExperimentSpec::from_config_text("kinds = NOMA").unwrap_err()), "kinds");
}

#[test]
fn validation_names_the_field() {
    let mut s = tiny();
    s.axis = Axis::Power;
    s.values = vec![33.0, 29.0];
    assert_eq!(field_of(s.validate().unwrap_err()), "values");
    s.values = vec![];
    assert_eq!(field_of(s.validate().unwrap_err()), "values");
    let mut s = tiny();
    s.axis = Axis::Users;
    s.values = vec![1.0, 2.5];
    assert_eq!(field_of(s.validate().unwrap_err()), "values");
    let mut s = tiny();
    s.trials = 0;
    assert_eq!(field_of(s.validate().unwrap_err()), "trials");
    let mut s = tiny();
    s.set("epochs", "0").unwrap();
    assert_eq!(field_of(s.validate().unwrap_err()), "epochs");
}

#[test]
fn row_counts() {
    let mut s = tiny();
    s.trials = 1;
    s.kinds = vec![Scheme::RSMA_MA];
    assert_eq!(run_experiment(&s).unwrap().len(), 1);

    let mut s = tiny();
    s.axis = Axis::Power;
    s.values = vec![29.0, 33.0, 37.0];
    s.trials = 5;
    let rows = run_experiment(&s).unwrap();
    assert_eq!(rows.len(), 60);
    assert_eq!(rows.len(), s.expected_rows());
    // (kind, axis value, trial) order
    assert_eq!(rows[0].kind, Scheme::ALL[0]);
    assert_eq!(rows[5].axis_value, Some(33.0));
    assert_eq!(rows[15].kind, Scheme::ALL[1]);
    for r in &rows {
        assert!(r.sum_rate >= 0.0 || !r.feasible);
    }
}

#[test]
fn trials_are_paired_across_kinds_and_values() {
    let mut s = tiny();
    s.axis = Axis::Threshold;
    s.values = vec![0.2, 0.6];
    let rows = run_experiment(&s).unwrap();
    for r in &rows {
        let t = rows.iter().position(|q| q.seed == r.seed).unwrap() % s.trials;
        assert_eq!(r.seed, trial_seed(s.seed, t));
    }
    assert_ne!(trial_seed(0, 0), trial_seed(0, 1));
    assert_ne!(trial_seed(0, 0), trial_seed(1, 0));
}

#[test]
fn csv_is_deterministic_across_runs_and_workers() {
    let mut s = tiny();
    s.axis = Axis::Users;
    s.values = vec![1.0, 2.0];
    s.trials = 3;
    let a = to_csv_string(&run_experiment(&s).unwrap(), s.max_users()).unwrap();
    let b = to_csv_string(&run_experiment(&s).unwrap(), s.max_users()).unwrap();
    s.workers = 4;
    let c = to_csv_string(&run_experiment(&s).unwrap(), s.max_users()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    let header = a.lines().next().unwrap();
    assert_eq!(
        header,
        "seed,kind,axis,axis_value,sum_rate_bps_hz,feasible,wall_ms,rate_user_1,rate_user_2"
    );
    // one-user rows leave the second rate column empty
    let first = a.lines().nth(1).unwrap();
    assert!(first.ends_with(','));
    assert_eq!(first.split(',').nth(2), Some("users"));
}

#[test]
fn summary_matches_recomputation_from_csv() {
    let mut s = tiny();
    s.trials = 6;
    s.kinds = vec![Scheme::RSMA_FPA];
    let rows = run_experiment(&s).unwrap();
    let csv = to_csv_string(&rows, s.max_users()).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let mut vals = Vec::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        if &rec[5] == "true" {
            vals.push(rec[4].parse::<f64>().unwrap());
        }
    }
    let summary = summarize(&rows).unwrap();
    assert_eq!(summary.len(), 1);
    match summary[0].mean {
        Some(m) => assert!((m - vals.iter().sum::<f64>() / vals.len() as f64).abs() < 1e-12),
        None => assert!(vals.is_empty()),
    }
    assert_eq!(summary[0].infeasible_fraction, 1.0 - vals.len() as f64 / 6.0);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_comprsma"))
}

#[test]
fn cli_exit_codes_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "n_bs = 1\nn_antennas = 2\nn_users = 2\nepochs = 2\nouter_iters = 1\nhidden_precoder = 8\nhidden_common = 4\nhidden_position = 8\ntrials = 7\nkinds = SDMA-FPA\n",
    )
    .unwrap();
    let out = dir.path().join("rows.csv");
    let st = cli()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--trials", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3, "flag overrides the file's trial count");

    let st = cli()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "power", "--values", "37,33"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("values"));

    let st = cli().args(["run", "--config", "/nonexistent/file"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let st = cli()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--set", "bogus=1"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));

    let st = cli()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "none"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn cli_all_trials_failing_exits_3() {
    // An absurd step scale overflows the precoders in every trial.
    let st = cli()
        .args([
            "run", "--trials", "2", "--kinds", "SDMA-FPA", "--set", "n_bs=1", "--set", "n_users=1",
            "--set", "epochs=1", "--set", "outer_iters=1", "--set", "hidden_precoder=4",
            "--set", "hidden_common=4", "--set", "hidden_position=4", "--set",
            "step_scale_precoder=1e308", "--set", "power_dbm=300", "--set", "inner_iters=3",
        ])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(3), "{}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn cli_check_passes() {
    let st = cli().arg("check").output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stdout));
}
