use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedcompress(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedcompress"));
    cmd.args(args).env_remove("FEDCOMPRESS_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn mode_all_is_bitwise_reproducible_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, threads) in dirs.iter().zip(["1", "1", "3"]) {
        let out = fedcompress(
            &[
                "--mode",
                "all",
                "--seed",
                "7",
                "--threads",
                threads,
                "--out",
                dir.to_str().unwrap(),
            ],
            &[],
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a = listing(&dirs[0]);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "comparison.csv",
            "metrics_fedavg.csv",
            "metrics_fedcompress-no-scs.csv",
            "metrics_fedcompress.csv",
            "metrics_fixed-cluster.csv",
            "summary_fedavg.txt",
            "summary_fedcompress-no-scs.txt",
            "summary_fedcompress.txt",
            "summary_fixed-cluster.txt",
        ]
    );
    assert!(a == listing(&dirs[1]), "repeat run differs");
    assert!(a == listing(&dirs[2]), "thread count changed outputs");
    let table = String::from_utf8(a[0].1.clone()).unwrap();
    assert!(
        table.contains("\nfedavg,") && table.contains(",0.00,1.0000,1.0000,"),
        "{table}"
    );
}

#[test]
fn config_file_overrides_and_env_default() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        "[fed]\nrounds = 2\nclients = 4\nparticipants = 2\n[data]\nsamples = 400\n",
    )
    .unwrap();
    let env_out = tmp.path().join("from_env");
    let out = fedcompress(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--mode",
            "fedavg",
            "--set",
            "fed.rounds=3",
            "--save-model",
        ],
        &[("FEDCOMPRESS_OUT", &env_out)],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(env_out.join("metrics_fedavg.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 3);
    let summary = fs::read_to_string(env_out.join("summary_fedavg.txt")).unwrap();
    assert!(summary.contains("config.fed.clients=4\n"));
    assert!(summary.contains("config.fed.rounds=3\n"));
    assert!(env_out.join("model_fedavg.fcmp").exists());
    assert!(!env_out.join("comparison.csv").exists());

    // --out wins over the environment.
    let flag_out = tmp.path().join("from_flag");
    let out = fedcompress(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--mode",
            "fedavg",
            "--out",
            flag_out.to_str().unwrap(),
        ],
        &[("FEDCOMPRESS_OUT", &env_out)],
    );
    assert!(out.status.success());
    assert!(flag_out.join("summary_fedavg.txt").exists());
}

#[test]
fn invalid_input_fails_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let o = out_dir.to_str().unwrap();
    for (args, needle) in [
        (
            vec!["--set", "controller.c_min=40", "--out", o],
            "controller.c_min",
        ),
        (vec!["--set", "fed.nope=1", "--out", o], "fed.nope"),
        (vec!["--mode", "fedzip", "--out", o], "fedzip"),
        (
            vec!["--config", "/nonexistent/exp.toml", "--out", o],
            "configuration",
        ),
    ] {
        let out = fedcompress(&args, &[]);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
    assert!(!out_dir.exists());
}

#[test]
fn config_out_dir_beats_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    let from_file = tmp.path().join("from_file");
    fs::write(
        &cfg,
        format!(
            "out_dir = {:?}\n[fed]\nrounds = 1\nclients = 2\nparticipants = 2\n[data]\nsamples = 200\n",
            from_file.to_str().unwrap()
        ),
    )
    .unwrap();
    let env_out = tmp.path().join("from_env");
    let out = fedcompress(
        &["--config", cfg.to_str().unwrap(), "--mode", "fedavg"],
        &[("FEDCOMPRESS_OUT", &env_out)],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(from_file.join("metrics_fedavg.csv").exists());
    assert!(!env_out.exists());
}
