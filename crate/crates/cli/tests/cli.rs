use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use twistorlab::LambdaFamily;
use twistorlab_cli::config::BUNDLED;
use twistorlab_cli::report::Report;

fn twistorlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twistorlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s3_config() -> &'static str {
    BUNDLED.iter().find(|(n, _)| *n == "s3_constant_twist").unwrap().1
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_report(dir: &Path) -> Report {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn bundled_s3_config_passes_with_expected_scalars() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = twistorlab(&["run", "--config", "s3_constant_twist", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_report(&out);
    assert!(r.passed);
    assert_eq!(r.schema_version, twistorlab_cli::report::SCHEMA_VERSION);
    let e = r.scalar("energy_re").unwrap();
    assert!((e - 1.0 / std::f64::consts::PI).abs() < 1e-12);
    assert!((r.scalar("energy_twist_re").unwrap() - 2.0 * e).abs() < 1e-12);
    assert!(r.scalar("line_degree").unwrap().abs() < 1e-12);
    assert!(r.check("twist_energy_relation").unwrap().passed);
    assert!(r.checks.iter().all(|c| !c.reference.is_empty()));
    for f in ["checks.csv", "scalars.csv", "energy_density.csv", "fingerprints.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn empty_pipeline_exits_zero_with_empty_report() {
    let tmp = tempfile::tempdir().unwrap();
    let text = s3_config().replace(
        r#"pipeline = ["energy", "twist", "dual", "residue", "lightcone"]"#,
        "pipeline = []",
    );
    let config = write_config(tmp.path(), &text);
    let o = twistorlab(&["run", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_report(tmp.path());
    assert!(r.scalars.is_empty() && r.checks.is_empty() && r.passed);
}

#[test]
fn zero_tolerance_exits_one_and_lists_the_check() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{}\n[tolerances]\nblock_identity = 0.0\n", s3_config());
    let config = write_config(tmp.path(), &text);
    let o = twistorlab(&["twist", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("block_identity"));
    let r = read_report(tmp.path());
    assert!(!r.passed);
    assert!(!r.check("block_identity").unwrap().passed);
}

#[test]
fn invalid_configs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &s3_config().replace("solver = ", "solvr = "));
    let o = twistorlab(&["run", "--config", &config]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    let o = twistorlab(&["run", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_config_and_seed_give_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = twistorlab(&[
            "run",
            "--config",
            "s3_constant_twist",
            "--seed",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["report.json", "checks.csv", "scalars.csv", "fingerprints.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert_eq!(read_report(&a).seed, 5);
}

#[test]
fn single_step_subcommands_run_one_step() {
    let tmp = tempfile::tempdir().unwrap();
    let o = twistorlab(&[
        "energy",
        "--config",
        "s3_constant_twist",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_report(tmp.path());
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["energy_imag", "energy_sign"]);
}

#[test]
fn lightcone_on_strip_writes_willmore_data() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BUNDLED
        .iter()
        .find(|(n, _)| *n == "h3_strip_lightcone")
        .unwrap()
        .1
        .replace("nx = 129", "nx = 65")
        .replace("ny = 129", "ny = 65");
    let config = write_config(tmp.path(), &text);
    let o = twistorlab(&["lightcone", "--config", &config, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(tmp.path().join("willmore.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x,y,u,integrand_a,integrand_b,integrand_c,H,K");
    assert_eq!(lines.count(), 65 * 65);
}

#[test]
fn build_writes_solution_and_family() {
    let tmp = tempfile::tempdir().unwrap();
    let o = twistorlab(&[
        "build",
        "--config",
        "s3_constant_twist",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fam = LambdaFamily::from_json(&fs::read_to_string(tmp.path().join("family.json")).unwrap()).unwrap();
    assert_eq!(fam.range(), (-1, 1));
    assert!(read_report(tmp.path()).check("flatness").unwrap().passed);
}

#[test]
fn verify_mutation_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = twistorlab(&[
        "verify",
        "--mutate",
        "energy-sign",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let failing: Vec<&str> = stdout
        .lines()
        .filter(|l| l.starts_with('[') && l.contains("FAIL"))
        .collect();
    assert_eq!(failing.len(), 1, "{stdout}");
    assert!(failing[0].starts_with("[ 2]"));
    let json = fs::read_to_string(tmp.path().join("verify.json")).unwrap();
    assert!(json.contains("\"mutation\": \"energy-sign\""));
}
