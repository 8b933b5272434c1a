use std::fs;
use std::path::Path;
use std::process::Command;

use clap::Parser;
use stwave::cli::{run, Cli};

const SMALL: &str = r#"
length = 60.0
dx = 0.2
t_final = 4.0
realizations = 3
seed = 5
x0 = 24.0
xi = 0.5
"#;

fn write_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p.display().to_string()
}

fn stwave(args: &[&str]) -> Vec<std::path::PathBuf> {
    let mut argv = vec!["stwave"];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn value(recs: &[csv::StringRecord], run_id: &str, estimator: &str) -> f64 {
    recs.iter()
        .find(|r| &r[0] == run_id && &r[6] == estimator)
        .unwrap_or_else(|| panic!("no row {run_id}/{estimator}"))[7]
        .parse()
        .unwrap()
}

#[test]
fn deterministic_table_has_theory_and_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    stwave(&["deterministic", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    let recs = rows(&out.join("deterministic.csv"));
    assert!((value(&recs, "theory", "speed") - 1.0606601717798212).abs() < 1e-15);
    let frozen_c = value(&recs, "pdae", "lambda_fit_c");
    assert!(frozen_c.abs() < 1e-3, "{frozen_c}");
    assert!(value(&recs, "pde", "lambda_c") > 0.5);
    assert!(out.join("profile_pdae.csv").exists());
}

#[test]
fn identical_seed_gives_identical_bytes_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"spde\"\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    stwave(&["ensemble", "--config", &cfg, "--out-dir", a.to_str().unwrap()]);
    stwave(&["ensemble", "--config", &cfg, "--out-dir", b.to_str().unwrap(), "--threads", "2"]);
    stwave(&["ensemble", "--config", &cfg, "--out-dir", c.to_str().unwrap(), "--seed", "6"]);
    for name in ["results.csv", "mean_profile_spde.csv", "lambda_histogram_spde.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let ra = rows(&a.join("results.csv"));
    let rc = rows(&c.join("results.csv"));
    assert_eq!(&rc[0][13], "6");
    assert_ne!(value(&ra, "spde", "lambda_c"), value(&rc, "spde", "lambda_c"));
}

#[test]
fn both_kinds_report_a_weak_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    stwave(&["ensemble", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    let recs = rows(&out.join("results.csv"));
    assert!(value(&recs, "spde-vs-spdae", "weak_error") >= 0.0);
    assert_eq!(value(&recs, "spde", "completed_fraction"), 1.0);
    assert!(value(&recs, "spdae", "lambda_fit_c").abs() < 0.05);
}

#[test]
fn replay_reproduces_rows_and_responds_to_t0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"spde\"\ntrajectories = true\n");
    let out = dir.path().join("out");
    let written = stwave(&["ensemble", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    let files: Vec<String> = written
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "stw"))
        .map(|p| p.display().to_string())
        .collect();
    assert_eq!(files.len(), 3);

    let replay = dir.path().join("replay");
    let mut args = vec!["replay", "--out-dir", replay.to_str().unwrap()];
    args.extend(files.iter().map(|s| s.as_str()));
    stwave(&args);
    assert_eq!(rows(&out.join("results.csv")), rows(&replay.join("replay.csv")));

    let shifted = dir.path().join("shifted");
    let mut args = vec!["replay", "--t0", "1.0", "--out-dir", shifted.to_str().unwrap()];
    args.extend(files.iter().map(|s| s.as_str()));
    stwave(&args);
    let before = rows(&replay.join("replay.csv"));
    let after = rows(&shifted.join("replay.csv"));
    assert_ne!(value(&before, "spde", "lambda_fit_c"), value(&after, "spde", "lambda_fit_c"));

    let traj = stwave::trajectory::Trajectory::read(fs::File::open(&files[0]).unwrap()).unwrap();
    let again = stwave::trajectory::Trajectory::read(fs::File::open(&files[0]).unwrap()).unwrap();
    assert_eq!(traj.series.c.len(), again.series.c.len());
}

#[test]
fn replay_rejects_a_truncated_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"pde\"\ntrajectories = true\n");
    let out = dir.path().join("out");
    let written = stwave(&["ensemble", "--config", &cfg, "--realizations", "1", "--out-dir", out.to_str().unwrap()]);
    let file = written.iter().find(|p| p.extension().is_some_and(|e| e == "stw")).unwrap();
    let bytes = fs::read(file).unwrap();
    fs::write(file, &bytes[..bytes.len() - 100]).unwrap();
    let argv = ["stwave", "replay", file.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    let err = run(Cli::try_parse_from(argv).unwrap()).unwrap_err();
    assert!(matches!(err, stwave::Error::Corrupt(_)), "{err}");
}

#[test]
fn sweep_writes_one_block_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    stwave(&[
        "sweep", "--config", &cfg, "--realizations", "2", "--out-dir", out.to_str().unwrap(), "--mu2", "0,0.25", "--alpha", "-0.25,0.1",
    ]);
    let recs = rows(&out.join("sweep.csv"));
    let ids: std::collections::BTreeSet<&str> = recs.iter().map(|r| &r[0]).collect();
    assert_eq!(ids.len(), 4);
    assert!(ids.contains("sweep/stratonovich/alpha=0.1/mu2=0.25/xi=0.1"));
}

#[test]
fn empty_mu2_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep_mu2 = []\n");
    let argv = ["stwave", "sweep", "--config", &cfg, "--realizations", "2", "--out-dir", dir.path().to_str().unwrap()];
    assert!(run(Cli::try_parse_from(argv).unwrap()).is_err());
}

#[test]
fn binary_reports_unknown_keys_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "dt = 0.05\nnoise_amplitude = 0.1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stwave"))
        .args(["deterministic", "--config", p.to_str().unwrap(), "--out-dir"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("noise_amplitude") && msg.contains("line 2"), "{msg}");
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"pde\"\n");
    let run_with = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_stwave"))
            .args(["ensemble", "--config", &cfg, "--realizations", "1", "--out-dir"])
            .arg(dir.path().join("out"))
            .env(stwave::cli::THREADS_ENV, threads)
            .output()
            .unwrap()
    };
    assert!(run_with("1").status.success());
    assert!(!run_with("0x").status.success(), "a malformed thread count must be rejected");
}
