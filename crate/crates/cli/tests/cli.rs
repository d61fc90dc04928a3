use std::path::Path;
use std::process::{Command, Output};

fn hwflow(config: &str, out: &Path, extra: &[&str]) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hwflow"))
        .arg("--config")
        .arg(&path)
        .arg("--out-dir")
        .arg(out)
        .args(extra)
        .env_remove("HWFLOW_OUT_DIR")
        .output()
        .unwrap()
}

const ORACLE: &str = r#"
kind = "oracle"
seed = 7
[run]
identity_cases = 200
roundtrip_cases = 50
[[flows]]
label = "half"
expect = { theta = 2.0, beta_minus = -4.0, beta_plus = 4.0 }
[flows.nu]
atoms = [[0.5, 1.0]]
"#;

fn column(report: &str, experiment: &str, col: usize) -> String {
    let line = report.lines().find(|l| l.starts_with(&format!("{experiment},"))).unwrap();
    // parameter_json is quoted and contains commas; split after it.
    let rest = &line[line.find("}\",").unwrap() + 3..];
    rest.split(',').nth(col).unwrap().to_string()
}

#[test]
fn oracle_reports_reference_values() {
    let out = tempfile::tempdir().unwrap();
    let o = hwflow(ORACLE, out.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.path().join("report.csv")).unwrap();
    assert!(report.starts_with("experiment,parameter_json,mean,stderr,n,target,z,gate,pass\n"));
    assert_eq!(column(&report, "oracle.theta", 0).parse::<f64>().unwrap(), 2.0);
    assert_eq!(column(&report, "oracle.beta_plus", 0).parse::<f64>().unwrap(), 4.0);
    assert_eq!(column(&report, "oracle.beta_minus", 0).parse::<f64>().unwrap(), -4.0);
    assert_eq!(column(&report, "oracle.theta_round_trip", 6), "true");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["kind"], "oracle");
    assert!(manifest["version"].is_string());
    assert!(manifest["timestamp"].is_u64());
}

#[test]
fn malformed_nu_names_the_key() {
    let out = tempfile::tempdir().unwrap();
    let o = hwflow("kind = \"oracle\"\n[nu]\natoms = [[1.5, 1.0]]\n", out.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nu.atoms[0]"));
    assert!(!out.path().join("report.csv").exists());
}

#[test]
fn unknown_run_key_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let o = hwflow("kind = \"density\"\n[run]\nreplica = 3\n", out.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.replica"));
}

#[test]
fn failed_gate_exits_nonzero_and_still_reports() {
    let out = tempfile::tempdir().unwrap();
    let o = hwflow(&ORACLE.replace("beta_plus = 4.0", "beta_plus = 4.5"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let report = std::fs::read_to_string(out.path().join("report.csv")).unwrap();
    assert_eq!(column(&report, "oracle.beta_plus", 6), "false");
    let manifest = std::fs::read_to_string(out.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("oracle.beta_plus"));
}

const WEB: &str = "kind = \"web\"\nseed = 11\n[run]\nhorizon = 16\nreplicas = 500\ntimes = [1, 4, 16]\n";

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(hwflow(WEB, a.path(), &["--threads", "1"]).status.success());
    assert!(hwflow(WEB, b.path(), &["--threads", "4"]).status.success());
    for f in ["report.csv", "coalescence_cdf.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_changes_draws_and_is_recorded() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    hwflow(WEB, a.path(), &[]);
    hwflow(WEB, b.path(), &["--seed-override", "12"]);
    assert_ne!(std::fs::read(a.path().join("report.csv")).unwrap(), std::fs::read(b.path().join("report.csv")).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 12);
    assert_eq!(manifest["config"]["seed"], 12);
}

#[test]
fn out_dir_defaults_to_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, ORACLE).unwrap();
    let target = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_hwflow"))
        .arg("--config")
        .arg(&cfg)
        .env("HWFLOW_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("report.csv").exists());
}

#[test]
fn flow_profile_emits_plot_data() {
    let out = tempfile::tempdir().unwrap();
    let cfg = "kind = \"flow\"\nseed = 3\n[run]\nmode = \"profile\"\neps = 0.05\nhorizon = 0.2\nhalf_width = 40\n\
               [[flows]]\n[flows.nu]\natoms = [[0.5, 1.0]]\n";
    let o = hwflow(cfg, out.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = std::fs::read_to_string(out.path().join("plotdata.csv")).unwrap();
    let mut lines = data.lines();
    assert_eq!(lines.next(), Some("t,x,mass"));
    let times: std::collections::BTreeSet<i64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(times.len(), 81);
}
