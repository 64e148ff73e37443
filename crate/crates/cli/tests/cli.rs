use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crakit::design::SafetyDesign;
use crakit::hybrid::{availability, Architecture, CraProfile};
use crakit::system::CpsSystem;

fn crakit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crakit"))
        .current_dir(dir)
        .args(args)
        .env_remove("CRAKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(forward: bool) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["acc", "--out", "acc.json"];
    if forward {
        args.push("--forward-only");
    }
    let o = crakit(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p = dir.path().join("acc.json");
    (dir, p)
}

#[test]
fn acc_spec_round_trips() {
    let (dir, p) = setup(false);
    let text = fs::read_to_string(&p).unwrap();
    let sys = CpsSystem::from_json(&text).unwrap();
    assert_eq!(sys.to_json(), text);
    assert_eq!(sys.relative_degree(), 2);
    let stdout = crakit(dir.path(), &["acc"]);
    assert_eq!(String::from_utf8_lossy(&stdout.stdout).trim_end(), text.trim_end());
}

#[test]
fn design_then_simulate_bftpp() {
    let (dir, _) = setup(false);
    let o = crakit(dir.path(), &["design", "--system", "acc.json", "--cra", "bftpp", "--out", "bft.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (d, _) = SafetyDesign::from_json(&fs::read_to_string(dir.path().join("bft.json")).unwrap()).unwrap();
    assert_eq!(d.epochs[..2], [2, 2]);
    assert!(d.report.holds() && d.report.min_margin() >= -1e-9);

    let o = crakit(
        dir.path(),
        &["simulate", "--design", "bft.json", "--cycles", "2", "--csv", "t.csv", "--events", "e.txt", "--svg", "t.svg"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.starts_with("t,v_l,v_f,D,u,status,h\n"));
    let events = fs::read_to_string(dir.path().join("e.txt")).unwrap();
    assert_eq!(events.lines().next(), Some("0,cyber intrusion"));
    assert!(events.lines().any(|l| l.ends_with(",controller restored")));
    let svg = fs::read_to_string(dir.path().join("t.svg")).unwrap();
    assert!(svg.contains("#d62728") && svg.contains("#2ca02c") && !svg.contains("#1f77b4"));
    assert!(svg.contains("h = 0") && svg.contains("h = c0"));
}

#[test]
fn yolo_run_has_no_designed_segments() {
    let (dir, _) = setup(true);
    let o = crakit(
        dir.path(),
        &["design", "--system", "acc.json", "--cra", "yolo", "--epochs", "N_4=5", "--c-max", "1,0", "--c-step", "0.05,1", "--out", "y.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = crakit(dir.path(), &["simulate", "--design", "y.json", "--csv", "t.csv", "--svg", "t.svg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("t.svg")).unwrap();
    assert!(svg.contains("#d62728") && svg.contains("#1f77b4") && !svg.contains("#2ca02c"));
}

#[test]
fn fixed_parameter_override_is_a_usage_error() {
    let (dir, _) = setup(false);
    let o = crakit(dir.path(), &["design", "--system", "acc.json", "--cra", "bftpp", "--epochs", "N_1=5", "--out", "x.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("N_1"));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn verify_rejects_accelerating_policy() {
    let (dir, _) = setup(false);
    let write = |name: &str, c: f64| {
        let text = format!(r#"{{"version": 1, "policy": {{"kind": "polynomial", "lambda": [[{{"c": {c}, "e": [0, 0, 0]}}]]}}}}"#);
        fs::write(dir.path().join(name), text).unwrap();
    };
    write("plus.json", 1.0);
    write("minus.json", -1.0);
    let o = crakit(dir.path(), &["verify", "--system", "acc.json", "--cra", "bftpp", "--policy", "plus.json"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let o = crakit(dir.path(), &["verify", "--system", "acc.json", "--cra", "bftpp", "--policy", "minus.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn parse_errors_exit_two() {
    let (dir, p) = setup(false);
    let text = fs::read_to_string(&p).unwrap().replacen("\"version\": 1", "\"version\": 1,\n  \"extra\": 0", 1);
    fs::write(dir.path().join("bad.json"), text).unwrap();
    let o = crakit(dir.path(), &["design", "--system", "bad.json", "--cra", "bftpp", "--out", "x.json"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("extra") && err.contains("line"), "{err}");

    assert_eq!(code(&crakit(dir.path(), &["design", "--system", "missing.json", "--cra", "bftpp", "--out", "x.json"])), 2);
    assert_eq!(code(&crakit(dir.path(), &["design", "--system", "acc.json", "--cra", "nope", "--out", "x.json"])), 2);
    assert_eq!(code(&crakit(dir.path(), &["frobnicate"])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_crakit"))
        .current_dir(dir.path())
        .args(["acc"])
        .env("CRAKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn unsafe_simulation_exits_one() {
    let (dir, _) = setup(false);
    let o = crakit(dir.path(), &["design", "--system", "acc.json", "--cra", "simplex", "--out", "s.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Swap the braking safety controller for full acceleration.
    let mut d: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    d["policy"]["lambda"][0][0]["c"] = serde_json::json!(1.0);
    fs::write(dir.path().join("bad.json"), d.to_string()).unwrap();
    let o = crakit(dir.path(), &["simulate", "--design", "bad.json", "--initial", "0,0,2.1", "--csv", "t.csv", "--events", "e.txt"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let events = fs::read_to_string(dir.path().join("e.txt")).unwrap();
    assert!(events.trim_end().ends_with("safety region crossed"));
}

fn parse_row(line: &str) -> (String, String, Vec<u32>) {
    let cells: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
    let epochs = cells[3]
        .trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(|s| s.trim().parse().unwrap())
        .collect();
    (cells[0].to_string(), cells[1].to_string(), epochs)
}

#[test]
fn compare_matches_golden_and_availability() {
    let (dir, _) = setup(true);
    let o = crakit(dir.path(), &["compare", "--system", "acc.json", "--case-study", "--out", "table.md"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("table.md")).unwrap();
    let golden = include_str!("golden/compare_forward_case_study.md");
    assert_eq!(table, golden);
    for (line, arch) in table.lines().skip(2).zip(Architecture::ALL) {
        let (title, avail, epochs) = parse_row(line);
        assert_eq!(title, arch.title());
        let profile = CraProfile::preset(arch, 0.1);
        let (on, nominal) = availability(&profile, &epochs);
        assert_eq!(avail, format!("{:.2}% ({:.2}%)", 100.0 * on, 100.0 * nominal));
    }
}
