use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mfps(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mfps"));
    cmd.args(args).env_remove("MFC_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn mfps")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir, "manifest.json")).unwrap()
}

#[test]
fn legendre_table() {
    let tmp = TempDir::new().unwrap();
    let out = mfps(&["legendre", "--xs", "0.04,1,2", "--output-dir", path(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(tmp.path(), "legendre.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "function,x,value,lower,upper,iterations,converged");
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let (v, lo, hi): (f64, f64, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap());
        assert!(lo <= v && v <= hi, "{line}");
        assert_eq!(f[6], "true");
    }
    assert_eq!(lines.iter().filter(|l| l.starts_with("alpha1")).count(), 3);
    let m = manifest(tmp.path());
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["outputs"][0]["file"], "legendre.csv");
}

#[test]
fn single_particle_simulation() {
    let tmp = TempDir::new().unwrap();
    let model = configs().join("two_velocities.json");
    let out = mfps(
        &["simulate", "--model", path(&model), "--particles", "1", "--horizon", "0", "--output-dir", path(tmp.path())],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(tmp.path(), "trajectory.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "replication,generation,particle_index,state");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,0,0,"));
    let stats = read(tmp.path(), "statistics.csv");
    assert_eq!(stats.lines().count(), 3);
}

#[test]
fn gaussian_simulation_writes_moments() {
    let tmp = TempDir::new().unwrap();
    let model = configs().join("gaussian.json");
    let out = mfps(
        &["simulate", "--model", path(&model), "-n", "50", "-r", "2", "--output-dir", path(tmp.path())],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(tmp.path(), "trajectory.csv").lines().count(), 1 + 2 * 11 * 50);
    assert_eq!(read(tmp.path(), "statistics.csv").lines().count(), 1 + 2 * 11 * 2);
}

#[test]
fn seed_from_environment_and_reproducible_bodies() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let model = configs().join("fk_two_state.json");
    let args = |dir: &TempDir| {
        vec![
            "simulate".to_string(),
            "--model".into(),
            path(&model).into(),
            "-n".into(),
            "20".into(),
            "-r".into(),
            "3".into(),
            "--output-dir".into(),
            path(dir.path()).into(),
        ]
    };
    let run = |dir: &TempDir, threads: &str| {
        let mut v = args(dir);
        v.extend(["--threads".to_string(), threads.to_string()]);
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        mfps(&refs, &[("MFC_SEED", "99")])
    };
    assert_eq!(run(&a, "1").status.code(), Some(0));
    assert_eq!(run(&b, "4").status.code(), Some(0));
    assert_eq!(read(a.path(), "trajectory.csv"), read(b.path(), "trajectory.csv"));
    assert_eq!(read(a.path(), "statistics.csv"), read(b.path(), "statistics.csv"));
    let m = manifest(a.path());
    assert_eq!(m["seed"], 99);
    assert_eq!(m["config"]["seed_source"], "env");
}

#[test]
fn certify_grid() {
    let tmp = TempDir::new().unwrap();
    let params = configs().join("params_iid.json");
    let out = mfps(
        &["certify", "--params", path(&params), "--xs", "0,2", "--ns", "100,400", "--output-dir", path(tmp.path())],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(tmp.path(), "certificates.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,N,bennett,hoeffding,bernstein_rate1,bernstein_rate2");
    assert_eq!(lines.len(), 5);
    let row: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(row[1], "100");
    // sqrt(2x) * beta on the V scale; 0.2 on the eta scale at N = 100.
    assert_eq!(row[3].parse::<f64>().unwrap(), 2.0);
    let zero: Vec<&str> = lines[1].split(',').collect();
    assert!(zero[2..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn certify_from_mixing_constants() {
    let tmp = TempDir::new().unwrap();
    let params = configs().join("params_mixing.json");
    let out = mfps(&["certify", "--params", path(&params), "--output-dir", path(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(tmp.path(), "certificates.csv").lines().count(), 5);
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn verify_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let model = configs().join("fk_two_state.json");
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{{"model_file": {:?}, "particles": 200, "replications": 400, "seed": 5,
                "thresholds": {{"variance_rel_tol": 0.3, "initial_variance_rel_tol": 0.3}}}}"#,
            path(&model)
        ),
    );
    let ok_dir = tmp.path().join("ok");
    let out = mfps(&["--config", path(&cfg), "verify", "--output-dir", path(&ok_dir)], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&ok_dir, "report.json")).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["passed"], true);

    let strict = write_config(
        tmp.path(),
        &format!(
            r#"{{"model_file": {:?}, "particles": 200, "replications": 400, "seed": 5,
                "thresholds": {{"variance_rel_tol": 0.0}}}}"#,
            path(&model)
        ),
    );
    let bad_dir = tmp.path().join("bad");
    let out = mfps(&["--config", path(&strict), "verify", "--output-dir", path(&bad_dir)], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(manifest(&bad_dir)["outcome"], "checks_failed");
}

#[test]
fn verify_is_thread_independent() {
    let tmp = TempDir::new().unwrap();
    let model = configs().join("fk_two_state.json");
    let mut bodies = vec![];
    for threads in ["1", "3"] {
        let dir = tmp.path().join(threads);
        let out = mfps(
            &[
                "verify", "--model", path(&model), "-n", "100", "-r", "300", "--seed", "8", "--threads", threads,
                "--output-dir", path(&dir),
            ],
            &[],
        );
        assert!(matches!(out.status.code(), Some(0) | Some(2)));
        bodies.push(read(&dir, "report.csv"));
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn validation_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let malformed = write_config(tmp.path(), "{\n  \"particles\": 10,\n  \"seed\": oops\n}");
    let out = mfps(&["--config", path(&malformed), "legendre", "--output-dir", path(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let unknown = write_config(tmp.path(), r#"{"particlez": 10}"#);
    let out = mfps(&["--config", path(&unknown), "legendre", "--output-dir", path(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("particlez"));

    let gaussian = configs().join("gaussian.json");
    let out = mfps(&["verify", "--model", path(&gaussian), "--output-dir", path(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(1));

    let out = mfps(&["verify", "--output-dir", path(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(1));

    let out = mfps(&["simulate", "--bogus-flag"], &[]);
    assert_eq!(out.status.code(), Some(1));

    let out = mfps(&["legendre", "--xs", "-1", "--output-dir", path(tmp.path())], &[]);
    assert_eq!(out.status.code(), Some(1));
}
