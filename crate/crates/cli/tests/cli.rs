use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn tibandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tibandit")).args(args).output().expect("binary runs")
}

fn run_to(dir: &TempDir, file: &str, args: &[&str]) -> String {
    let out = dir.path().join(file);
    let mut all: Vec<&str> = args.to_vec();
    let out_str = out.to_str().unwrap().to_string();
    all.extend(["--out", &out_str]);
    let res = tibandit(&all);
    assert!(res.status.success(), "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
    fs::read_to_string(out).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn code(args: &[&str]) -> i32 {
    tibandit(args).status.code().unwrap()
}

#[test]
fn two_round_run_pulls_each_arm_once() {
    let dir = TempDir::new().unwrap();
    let csv = run_to(&dir, "a.csv", &["mab-sim", "--set", "experiment.horizon=2"]);
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("1,1,1,0.5,"));
    assert!(rows[1].starts_with("2,1,2,0.5,"));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let a = run_to(&dir, "a.csv", &["mab-sim", "--seed", "11"]);
    let b = run_to(&dir, "b.csv", &["mab-sim", "--seed", "11"]);
    let c = run_to(&dir, "c.csv", &["mab-sim", "--seed", "12"]);
    assert_eq!(a, b);
    assert_ne!(data_rows(&a), data_rows(&c));
}

#[test]
fn intercept_only_contextual_run_equals_two_arm_run() {
    let dir = TempDir::new().unwrap();
    for (mab, cmab) in [
        ("ti-thompson", "ti-thompson-lin"),
        ("ti-tempered-greedy", "ti-tempered-greedy-lin"),
        ("thompson", "thompson-lin"),
    ] {
        let m = run_to(
            &dir,
            "m.csv",
            &[
                "mab-sim",
                "--seed",
                "5",
                "--set",
                "experiment.mu=0.3",
                "--set",
                "experiment.m1=1",
                "--set",
                "experiment.m2=-0.5",
                "--set",
                &format!("policy.kind={mab}"),
            ],
        );
        let c = run_to(
            &dir,
            "c.csv",
            &[
                "cmab-sim",
                "--seed",
                "5",
                "--set",
                "experiment.beta=0.3",
                "--set",
                "experiment.b1=1",
                "--set",
                "experiment.b2=-0.5",
                "--set",
                &format!("policy.kind={cmab}"),
            ],
        );
        assert_eq!(data_rows(&m), data_rows(&c), "{mab}");
    }
}

#[test]
fn header_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let a = run_to(
        &dir,
        "a.csv",
        &["mab-sim", "--preset", "table3-tempereducb-T50", "--seed", "3", "--set", "experiment.m2=2"],
    );
    let header: String = a
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .take_while(|l| !l.starts_with("count_"))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = dir.path().join("echo.ini");
    fs::write(&cfg, header).unwrap();
    let b = run_to(&dir, "b.csv", &["mab-sim", "--config", cfg.to_str().unwrap()]);
    assert_eq!(a, b);
    assert!(a.contains("# kind = ti-tempered-ucb"));
    assert!(a.contains("# horizon = 50"));
}

#[test]
fn limit_paths_use_default_grid() {
    let dir = TempDir::new().unwrap();
    let csv = run_to(&dir, "l.csv", &["limit-sim", "--paths", "2"]);
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2 * 101);
    assert!(rows[100].starts_with("0,1,"));
    assert!(csv.contains("# grid = 100"));
}

#[test]
fn near_constant_policy_gives_linear_frequencies() {
    let dir = TempDir::new().unwrap();
    let csv = run_to(&dir, "l.csv", &["limit-sim", "--paths", "1", "--set", "policy.b=1e9"]);
    for row in data_rows(&csv) {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        let u = v[1];
        assert!((v[2] - u / 2.0).abs() < 1e-9 && (v[3] - u / 2.0).abs() < 1e-9, "{row}");
    }
}

#[test]
fn terminal_only_writes_one_row_per_path() {
    let dir = TempDir::new().unwrap();
    let csv = run_to(&dir, "t.csv", &["limit-sim", "--paths", "50000", "--terminal-only"]);
    assert_eq!(data_rows(&csv).len(), 50_000);
}

#[test]
fn contextual_limit_paths() {
    let dir = TempDir::new().unwrap();
    let csv = run_to(
        &dir,
        "c.csv",
        &[
            "limit-sim",
            "--paths",
            "3",
            "--terminal-only",
            "--set",
            "experiment.model=cmab",
            "--set",
            "experiment.beta=0 0",
            "--set",
            "experiment.b1=0 0",
            "--set",
            "experiment.b2=1 0",
            "--set",
            "policy.kind=ti-thompson-lin",
        ],
    );
    let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "path,u,c_1_1,c_1_2,c_2_1,c_2_2,s_1_11,s_1_22,s_2_11,s_2_22");
    assert_eq!(lines.len(), 4);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    assert_eq!(code(&["mab-sim", "--set", "experiment.horizn=3", "--out", out]), 2);
    assert_eq!(code(&["mab-sim", "--set", "experiment.horizon=abc", "--out", out]), 2);
    assert_eq!(code(&["mab-sim", "--set", "policy.kind=greedy", "--out", out]), 2);
    assert_eq!(code(&["mab-sim", "--preset", "table3-nothing", "--out", out]), 2);
    assert_eq!(code(&["mab-sim"]), 2);
    assert_eq!(code(&["power-curve", "--set", "mc.alternatives=", "--out", out]), 2);
    assert_eq!(code(&["ks-report", "--set", "mc.nuisance=0", "--out", out]), 2);
    assert_eq!(code(&["null-sample", "--set", "mc.statistics=ts-df:0.3", "--out", out]), 2);
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[experiment]\nhorizon = 10\nstray = 1\n").unwrap();
    let res = tibandit(&["mab-sim", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown key experiment.stray"));
    assert!(!Path::new(out).exists());
}

#[test]
fn module_errors_are_reported_verbatim() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    let res = tibandit(&["mab-sim", "--set", "policy.alpha=-1", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&res.stderr).trim(), "error: invalid hyperparameter: alpha = -1 must be > 0");
}

#[test]
fn io_failures_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("missing").join("x.csv");
    assert_eq!(code(&["mab-sim", "--out", out.to_str().unwrap()]), 3);
}

#[test]
fn help_lists_schema_keys_with_defaults() {
    let res = tibandit(&["mab-sim", "--help"]);
    let help = String::from_utf8_lossy(&res.stdout);
    assert!(res.status.success());
    assert!(help.contains("experiment.horizon") && help.contains("\"200\""));
    assert!(help.contains("policy.schedule"));
    assert!(!help.contains("mc.reps"));
    let res = tibandit(&["power-curve", "--help"]);
    let help = String::from_utf8_lossy(&res.stdout);
    assert!(help.contains("mc.alternatives") && help.contains("mc.np "));
}

#[test]
fn verbose_progress_goes_to_stdout_and_data_to_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("n.csv");
    let res = tibandit(&[
        "null-sample",
        "--verbose",
        "--threads",
        "2",
        "--set",
        "mc.reps=200",
        "--set",
        "mc.statistics=aw ts-t",
        "--set",
        "mc.hypothesis=two-sample",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(stdout.lines().filter(|l| l.contains("100%")).count(), 2);
    assert!(!stdout.contains(','));
    let csv = fs::read_to_string(out).unwrap();
    assert_eq!(data_rows(&csv).len(), 200);
    assert!(csv.contains("rep,aw,ts-t"));
}

#[test]
fn size_table_preset_matches_reference_size() {
    let dir = TempDir::new().unwrap();
    let csv =
        run_to(&dir, "s.csv", &["size-table", "--preset", "table3-thompsoninv-T200", "--set", "mc.statistics=aw"]);
    let row = data_rows(&csv)[0].to_string();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(&fields[..4], &["ti-thompson", "aw", "finite", "200"]);
    let size: f64 = fields[5].parse().unwrap();
    assert!((100.0 * size - 5.15).abs() <= 0.6, "{row}");
}

#[test]
fn power_curve_and_ks_report_layouts() {
    let dir = TempDir::new().unwrap();
    let csv = run_to(
        &dir,
        "p.csv",
        &["power-curve", "--set", "mc.reps=500", "--set", "mc.alternatives=0 3", "--set", "mc.np=true"],
    );
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("aw,0,") && rows[2].starts_with("np,0,"));
    let ks = run_to(
        &dir,
        "k.csv",
        &["ks-report", "--set", "mc.reps=500", "--set", "mc.statistics=ts-t", "--set", "mc.nuisance=0 10 50"],
    );
    let rows = data_rows(&ks);
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("ts-t,0,10,"));
}
