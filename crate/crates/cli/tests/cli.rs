use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use swapbell_cli::commands::{cmd_polytope, evaluate, outcome_table};
use swapbell_cli::config::RunConfig;
use swapbell_cli::table::read_outcomes;

fn swapbell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swapbell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const FIXED_N2: [&str; 6] = ["--r", "0.1575", "--m0", "0.5891", "--m1", "-0.1838"];

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bell_reports_all_correlators() {
    let out = swapbell(&[&["bell"], &FIXED_N2[..]].concat());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("bell       1.0566"), "{text}");
    for bits in ["00", "10", "01", "11"] {
        assert!(text.contains(&format!("E[{bits}]")));
    }
}

#[test]
fn unsqueezed_source_never_violates() {
    let out = swapbell(&["bell", "--r", "0", "--m0", "0.5", "--m1", "-0.2", "--p-dark-s", "1e-3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bell: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("bell"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(bell <= 1.0 + 1e-12);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "bad.toml", "parties = 2\nsqueezing = 0.1\n");
    assert_eq!(swapbell(&["bell", "--config", &unknown]).status.code(), Some(2));
    let bad_value = write(dir.path(), "eta.toml", "[noise]\neta_s = 1.2\n");
    assert_eq!(swapbell(&["bell", "--config", &bad_value]).status.code(), Some(2));
    assert_eq!(swapbell(&["bell", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
    assert_eq!(swapbell(&["bell", "--r", "0.1", "--m0", "0.5"]).status.code(), Some(2));
    assert_eq!(swapbell(&["to-km", "0"]).status.code(), Some(2));
    let csv = write(dir.path(), "t.csv", "g,n,probability\n0,0,0.5\n1,0,0.4\n0,1,0.5\n1,1,0.5\n");
    assert_eq!(swapbell(&["polytope", "--table", &csv]).status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_with_three() {
    // no squeezing and no dark counts: the herald can never fire
    let out = swapbell(&["bell", "--r", "0", "--m0", "0.5", "--m1", "0.1", "--p-dark-s", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("heralding"));
}

#[test]
fn empty_sweep_grid_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("sweep.csv");
    let cfg = write(dir.path(), "s.toml", "r = 0.15\nm0 = 0.59\nm1 = -0.18\n[sweep]\naxis = \"eta_S\"\nvalues = []\n");
    let out = swapbell(&["sweep", "--config", &cfg, "--output", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
}

#[test]
fn sweep_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let args = [
            &["sweep", "--axis", "p_d_S", "--start", "0", "--stop", "4e-4", "--steps", "5"][..],
            &FIXED_N2[..],
            &["--sweep-parties", "2,3", "--output", path.to_str().unwrap()][..],
        ]
        .concat();
        let out = swapbell(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[0].starts_with("axis,value,N,bell,p_success,correlator_0,"));
    assert_eq!(lines[0].split(',').count(), 5 + 8);
    assert!(lines[1].starts_with("p_d_S,0,2,"));
    // two-party rows leave the extra correlator columns empty
    assert!(lines[1].ends_with(",,,,"));
    assert!(lines[6].starts_with("p_d_S,0,3,"));
}

#[test]
fn sweep_over_eta_s_has_both_columns() {
    let args = [&["sweep", "--axis", "eta_S", "--values", "1.0,0.5,0.2"][..], &FIXED_N2[..]].concat();
    let out = swapbell(&args);
    assert!(out.status.success());
    let rows: Vec<Vec<f64>> = stdout(&out)
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    // heralding probability falls with the swap transmission
    assert!(rows[0][3] > rows[1][3] && rows[1][3] > rows[2][3]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "r = 0.1\nm0 = 0.5\nm1 = -0.2\n[noise]\neta_p = 0.5\n");
    let from_file = stdout(&swapbell(&["bell", "--config", &cfg]));
    let overridden = stdout(&swapbell(&["bell", "--config", &cfg, "--eta-p", "0.9"]));
    let direct = stdout(&swapbell(&["bell", "--r", "0.1", "--m0", "0.5", "--m1", "-0.2"]));
    assert_ne!(from_file, overridden);
    assert_eq!(overridden, direct);
}

#[test]
fn emitted_outcome_table_gives_same_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("outcomes.csv");
    let args = [&["bell"][..], &FIXED_N2[..], &["--outcomes", csv.to_str().unwrap()][..]].concat();
    assert!(swapbell(&args).status.success());

    let cfg = RunConfig::from_toml("r = 0.1575\nm0 = 0.5891\nm1 = -0.1838\n").unwrap();
    let direct = outcome_table(&cfg, &evaluate(&cfg).unwrap()).unwrap();
    let loaded = read_outcomes(fs::File::open(&csv).unwrap()).unwrap();
    let max_diff = direct
        .as_slice()
        .iter()
        .zip(loaded.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(max_diff < 1e-11);

    let scan = Some(Default::default());
    let from_config = cmd_polytope(&cfg, None, scan).unwrap();
    let from_file = cmd_polytope(&cfg, Some(&csv), scan).unwrap();
    let verdicts = |s: &str| -> Vec<String> {
        s.lines()
            .filter(|l| l.starts_with("full") || l.starts_with("marginal"))
            .map(|l| l.split(':').next().unwrap().to_string() + if l.contains("infeasible") { " no" } else { " yes" })
            .collect()
    };
    assert_eq!(verdicts(&from_config), verdicts(&from_file));
    assert!(from_file.contains("full table {1,2}: infeasible"));
}

#[test]
fn polytope_accepts_deterministic_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("g,n,probability\n");
    for n in ["00", "10", "01", "11"] {
        for g in ["00", "10", "01", "11"] {
            text.push_str(&format!("{g},{n},{}\n", if g == "11" { 1 } else { 0 }));
        }
    }
    let csv = write(dir.path(), "det.csv", &text);
    let out = swapbell(&["polytope", "--table", &csv, "--scan"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("full table {1,2}: LHV-feasible"));
    assert!(text.contains("marginal {1}: LHV-feasible"));
}

#[test]
fn oracle_check_passes() {
    let out = swapbell(&["oracle-check", "--r-values", "0.05,0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.matches("PASS").count(), 4);
    assert_eq!(swapbell(&["oracle-check", "-N", "4"]).status.code(), Some(2));
}

#[test]
fn fiber_conversion() {
    assert_eq!(stdout(&swapbell(&["to-km", "0.1"])), "33.333 km\n");
    assert_eq!(stdout(&swapbell(&["to-km", "1"])), "0.000 km\n");
    assert_eq!(stdout(&swapbell(&["to-km", "0.01"])), "66.667 km\n");
    assert_eq!(stdout(&swapbell(&["to-km", "0.5", "--loss-db-per-km", "0.2"])), "15.051 km\n");
}

#[test]
fn optimize_two_parties() {
    let out = swapbell(&["optimize", "-N", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let field = |name: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(name))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!((field("m0 ") - 0.59).abs() < 0.02);
    assert!((field("m1 ") + 0.18).abs() < 0.02);
    assert!(field("bell ") > 1.05);
}
