use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fedhybrid");

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn fedhybrid(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("FEDHYBRID_THREADS", t),
        None => cmd.env_remove("FEDHYBRID_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "problem.kind = linreg\nproblem.n = 6\nproblem.d = 5\nproblem.mu = 9\nrun.iters = 30\n\
                     run.seed = 3\nmethods = fedh-g, fedh-n, fedavg\n";

#[test]
fn run_writes_one_csv_per_method_with_k_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.conf", SMALL);
    let out = dir.path().join("out");
    let o = fedhybrid(
        &["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for m in ["fedh-g", "fedh-n", "fedavg"] {
        let text = std::fs::read_to_string(out.join(format!("{m}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,delta_lambda,delta_x,delta_combined,consensus_err,primal_grad_norm,fun_gap,elapsed_ms,uplink_bytes,downlink_bytes"
        );
        assert_eq!(lines.count(), 30, "{m}");
    }
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn cadence_controls_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.conf", &format!("{SMALL}run.metric_cadence = 7\n"));
    let out = dir.path().join("out");
    let o = fedhybrid(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--iters",
            "28",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("fedh-g.csv")).unwrap();
    let iters: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["7", "14", "21", "28"]);
}

#[test]
fn seed_override_beats_file_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.conf", SMALL);
    let out = dir.path().join("out");
    let o = fedhybrid(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "42",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["overrides"]["seed"], 42);
    assert_eq!(manifest["config"]["run.seed"], "3");
}

#[test]
fn unknown_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.conf", "problem.kind = linreg\nstepsizee = 1\n");
    for sub in ["run", "verify"] {
        let o = fedhybrid(&[sub, "--config", cfg.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("stepsizee"), "{}", stderr(&o));
    }
}

#[test]
fn missing_config_or_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedhybrid(
        &["run", "--config", dir.path().join("nope.conf").to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(
        dir.path(),
        "csv.conf",
        "problem.kind = linreg\nproblem.source = csv:missing.csv\nproblem.target = y\n",
    );
    let o = fedhybrid(&["verify", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("problem.source"), "{}", stderr(&o));
}

#[test]
fn runtime_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.conf", SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = fedhybrid(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            blocker.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn identical_output_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.conf",
        "problem.kind = logreg\nproblem.n = 5\nproblem.d = 4\nclients.newton = 1, 2\nrun.iters = 20\n\
         methods = fedhybrid, fedavg, mm-gradient\n",
    );
    let mut runs = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let o = fedhybrid(
            &["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
            Some(threads),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(["fedhybrid", "fedavg", "mm-gradient"].map(|m| std::fs::read(out.join(format!("{m}.csv"))).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn verify_linreg_auto_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("linreg.conf");
    let out = dir.path().join("out");
    let o = fedhybrid(
        &[
            "verify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).trim_end().ends_with("verify pass"));
}

#[test]
fn verify_oversized_stepsizes_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "big.conf",
        "problem.kind = linreg\nproblem.n = 4\nproblem.d = 3\nproblem.mu = 9\nstepsize.mode = manual\n\
         stepsize.gradient = 0.3, 1\nstepsize.newton = 3, 1\nclients.newton = 1, 2\nrun.iters = 50\n",
    );
    let o = fedhybrid(&["verify", "--config", cfg.to_str().unwrap()], None);
    let code = o.status.code();
    assert!(code == Some(0) || code == Some(1), "{code:?} {}", stderr(&o));
    let text = stdout(&o);
    for part in ["curvature", "dual derivatives", "monitors", "contraction", "verify "] {
        assert!(text.contains(part), "missing {part} in\n{text}");
    }
    assert_eq!(code == Some(0), text.trim_end().ends_with("verify pass"));
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        fedhybrid::config::Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
