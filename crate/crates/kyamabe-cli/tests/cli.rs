use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kyamabe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kyamabe")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constants_for_n4_k2() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["constants", "--n", "4", "--k", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().any(|l| l.split('=').map(str::trim).eq(["C_nk", "24"])), "{}", stdout(&o));
    let j = json(&d.path().join("constants.json"));
    assert!(j["rel_diff"].as_f64().unwrap() < 5e-3);
}

#[test]
fn constants_k1_is_consistent() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["constants", "--n", "6", "--k", "1"]);
    assert_eq!(code(&o), 0);
    let j = json(&d.path().join("constants.json"));
    assert_eq!(j["composed"], j["y1"]);
}

#[test]
fn verify_default_passes_with_enough_cases() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["verify"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let j = json(&d.path().join("verify.json"));
    assert_eq!(j["failed"], 0);
    let split = j["reports"].as_array().unwrap().iter().find(|r| r["name"].as_str().unwrap().starts_with("split identity")).unwrap();
    assert!(split["cases"].as_u64().unwrap() >= 10_000);
    assert!(fs::read_to_string(d.path().join("verify.xml")).unwrap().contains("<testsuites"));
}

#[test]
fn verify_is_deterministic_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&kyamabe(a.path(), &["verify", "--seed", "42"])), 0);
    assert_eq!(code(&kyamabe(b.path(), &["verify", "--seed", "42"])), 0);
    for f in ["verify.json", "verify.xml"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_suite_filter() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["verify", "--suite", "counterexamples", "--seed", "42"]);
    assert_eq!(code(&o), 0);
    let j = json(&d.path().join("verify.json"));
    let reports = j["reports"].as_array().unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r["suite"] == "counterexamples"));
    assert_eq!(code(&kyamabe(d.path(), &["verify", "--suite", "nonsense"])), 5);
}

#[test]
fn perturbed_sphere_flow_converges_to_sphere_constant() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["flow"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let j = json(&d.path().join("flow.json"));
    assert_eq!(j["verdict"], "converged");
    assert!(j["q_k_rel_diff"].as_f64().unwrap() < 0.01);
    let csv = fs::read_to_string(d.path().join("energy.csv")).unwrap();
    assert!(csv.starts_with("t,J,F_k,volume,min_sigma_k,Q_k\n"));
}

#[test]
fn tiny_constant_goes_extinct() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["flow", "--set", "preset=tiny-constant", "--set", "nodes=16"]);
    assert_eq!(code(&o), 4);
    assert_eq!(json(&d.path().join("flow.json"))["verdict"], "extinct");
}

#[test]
fn huge_constant_blows_up() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["flow", "--set", "preset=huge-constant", "--set", "nodes=16"]);
    assert_eq!(code(&o), 3);
    assert_eq!(json(&d.path().join("flow.json"))["verdict"], "inf-blowup");
}

#[test]
fn step_cap_reports_timeout() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["flow", "--set", "shoot=false", "--set", "nodes=16", "--set", "max_steps=5"]);
    assert_eq!(code(&o), 3);
    let j = json(&d.path().join("flow.json"));
    assert_eq!(j["verdict"], "timeout");
    assert_eq!(j["steps"], 5);
}

#[test]
fn resumed_run_continues_the_energy_csv_bitwise() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let common = ["flow", "--set", "preset=tiny-constant", "--set", "nodes=16", "--set", "extinct_margin=20"];
    let mut full = common.to_vec();
    full.extend(["--checkpoint-every", "40"]);
    assert_eq!(code(&kyamabe(&a, &full)), 4);
    let ck = a.join("checkpoints/step_00000080.json");
    assert!(ck.exists());
    let mut resumed = common.to_vec();
    let ck_str = ck.to_str().unwrap();
    resumed.extend(["--resume", ck_str]);
    assert_eq!(code(&kyamabe(&b, &resumed)), 4);
    let (x, y) = (fs::read(a.join("energy.csv")).unwrap(), fs::read(b.join("energy.csv")).unwrap());
    assert!(x.len() > 80 * 20);
    assert_eq!(x, y);
    assert_eq!(fs::read(a.join("final_state.json")).unwrap(), fs::read(b.join("final_state.json")).unwrap());
}

#[test]
fn resume_rejects_a_different_problem() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let args = ["flow", "--set", "preset=tiny-constant", "--set", "nodes=16", "--checkpoint-every", "10"];
    assert_eq!(code(&kyamabe(&a, &args)), 4);
    let ck = a.join("checkpoints/step_00000010.json");
    let o = kyamabe(&d.path().join("b"), &["flow", "--set", "nodes=16", "--set", "eps=0.5", "--resume", ck.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
}

#[test]
fn config_errors_exit_5() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(&cfg, "n = 4\ncolour = red\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&kyamabe(d.path(), &["flow", "--config", c])), 5);
    fs::write(&cfg, "n = 4\nk = 3\n").unwrap();
    assert_eq!(code(&kyamabe(d.path(), &["flow", "--config", c])), 5);
    fs::write(&cfg, "eps = lots\n").unwrap();
    assert_eq!(code(&kyamabe(d.path(), &["flow", "--config", c])), 5);
    assert_eq!(code(&kyamabe(d.path(), &["verify", "--threads", "0"])), 5);
    assert_eq!(code(&kyamabe(d.path(), &["no-such-command"])), 5);
    assert_eq!(code(&kyamabe(d.path(), &["flow", "--config", "/nonexistent/run.cfg"])), 5);
}

#[test]
fn config_file_drives_a_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(&cfg, "# tiny\npreset = tiny-constant\nnodes = 16 # coarse\n").unwrap();
    let o = kyamabe(d.path(), &["flow", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert_eq!(json(&d.path().join("flow.json"))["resumed_from"], serde_json::Value::Null);
}

#[test]
fn variational_witness_defect_table() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["variational", "--set", "levels=0.05,0.025"]);
    assert_eq!(code(&o), 0);
    let j = json(&d.path().join("variational.json"));
    let levels = j["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    assert!(levels.iter().all(|l| l["linf_inner"].as_f64().unwrap() > 0.1));
    let csv = fs::read_to_string(d.path().join("defect.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(d.path().join("defect_field.csv").exists());
}

#[test]
fn counterexample_table() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["counterexample"]);
    assert_eq!(code(&o), 0);
    let j = json(&d.path().join("counterexample.json"));
    assert_eq!(j["report"]["monotone"], true);
    assert_eq!(fs::read_to_string(d.path().join("blowup.csv")).unwrap().lines().count(), 5);
    let o = kyamabe(d.path(), &["counterexample", "--set", "eps_ladder=0.01,0.1"]);
    assert_eq!(code(&o), 5);
}

#[test]
fn functional_reports_values_and_poles() {
    let d = tempfile::tempdir().unwrap();
    let o = kyamabe(d.path(), &["functional", "--set", "nodes=9"]);
    assert_eq!(code(&o), 0);
    let j = json(&d.path().join("functional.json"));
    assert!(j["Q_k"].as_f64().unwrap() > 0.0);
    assert!(j["J_p"]["error"].is_string());
    let o = kyamabe(d.path(), &["functional", "--set", "n=5", "--set", "k=2", "--set", "nodes=7"]);
    assert_eq!(code(&o), 0);
    let j = json(&d.path().join("functional.json"));
    assert!(j["J_p"].is_number());
    assert!(j["sup_over_scaling"]["s_star"].is_number());
}
