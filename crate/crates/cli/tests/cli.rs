//! End-to-end tests of the `faprec` binary: exit codes, output files, and
//! byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn faprec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faprec"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_small_config(dir: &Path) {
    std::fs::write(
        dir.join("small.toml"),
        r#"
seed = 42

[system]
n_antennas = 16
n_users = 4

[train]
layers = 3
epochs = 2
samples_per_epoch = 40
batch_size = 20
val_samples = 20
"#,
    )
    .unwrap();
}

#[test]
fn zero_epoch_training_writes_the_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let out = faprec(
        dir.path(),
        &[
            "train",
            "--config",
            "small.toml",
            "--layers",
            "5",
            "--epochs",
            "0",
            "--out",
            "run",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    let params: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run/ide2net_params.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(params["t_layers"], 5);
    let gamma = params["gamma"].as_array().unwrap();
    let alpha = params["alpha"].as_array().unwrap();
    assert_eq!(gamma.len(), 5);
    assert!(gamma.iter().all(|v| v.as_f64().unwrap() == 1.0));
    assert!(alpha.iter().all(|v| v.as_f64().unwrap() == 0.95));
    // manifest and (empty) log exist
    assert!(dir.path().join("run/train_manifest.json").exists());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("run/train_log.csv")).unwrap(),
        "epoch,train_loss,val_loss,lr\n"
    );
}

#[test]
fn training_log_shows_the_decay_schedule() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sched.toml"),
        r#"
seed = 7

[system]
n_antennas = 8
n_users = 2

[train]
layers = 2
epochs = 4
samples_per_epoch = 20
batch_size = 20
val_samples = 10
lr_initial = 0.01
lr_decay_every = 2
lr_decay_factor = 10.0
lr_floor = 0.0001
"#,
    )
    .unwrap();
    let out = faprec(
        dir.path(),
        &["train", "--config", "sched.toml", "--out", "run"],
    );
    assert!(out.status.success(), "{:?}", out);
    let log = std::fs::read_to_string(dir.path().join("run/train_log.csv")).unwrap();
    let lrs: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(lrs.len(), 4);
    assert!((lrs[0] - 0.01).abs() < 1e-15);
    assert!((lrs[1] - 0.01).abs() < 1e-15);
    assert!((lrs[2] - 0.001).abs() < 1e-15);
    assert!((lrs[3] - 0.001).abs() < 1e-15);
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = faprec(
        dir.path(),
        &["train", "--config", "does_not_exist.toml"],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("does_not_exist.toml"), "{}", stderr);
}

#[test]
fn layers_sweep_has_one_row_per_value_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let args = [
        "sweep",
        "--config",
        "small.toml",
        "--kind",
        "layers",
        "--precoder",
        "ide2",
        "--values",
        "1,2,5,10,20,50",
        "--trials",
        "40",
    ];
    let mut first = args.to_vec();
    first.extend(["--out", "runA"]);
    let out = faprec(dir.path(), &first);
    assert!(out.status.success(), "{:?}", out);
    let csv_a = std::fs::read(dir.path().join("runA/sweep_layers_ide2.csv")).unwrap();
    let text = String::from_utf8(csv_a.clone()).unwrap();
    assert_eq!(text.lines().count(), 7, "header plus six rows:\n{}", text);
    assert!(text.starts_with(
        "sweep_value,ber,stderr,mse_mean,iui_mean,bits_total,trials_discarded\n"
    ));

    let mut second = args.to_vec();
    second.extend(["--out", "runB"]);
    let out = faprec(dir.path(), &second);
    assert!(out.status.success(), "{:?}", out);
    let csv_b = std::fs::read(dir.path().join("runB/sweep_layers_ide2.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "same seed must give byte-identical CSV");

    // manifest captures the merged config
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("runA/sweep_layers_ide2_manifest.json"))
            .unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["config"]["seed"], 42);
    assert_eq!(manifest["config"]["sweep"]["kind"], "layers");
}

#[test]
fn sweep_thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let run = |threads: &str, out_dir: &str| {
        let out = faprec(
            dir.path(),
            &[
                "sweep",
                "--config",
                "small.toml",
                "--kind",
                "snr",
                "--values",
                "6,14",
                "--trials",
                "30",
                "--threads",
                threads,
                "--out",
                out_dir,
            ],
        );
        assert!(out.status.success(), "{:?}", out);
        std::fs::read(dir.path().join(out_dir).join("sweep_snr_ide2.csv")).unwrap()
    };
    assert_eq!(run("1", "run1"), run("4", "run4"));
}

#[test]
fn eval_trained_net_round_trips_through_the_params_file() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let out = faprec(
        dir.path(),
        &["train", "--config", "small.toml", "--out", "run"],
    );
    assert!(out.status.success(), "{:?}", out);
    let out = faprec(
        dir.path(),
        &[
            "eval",
            "--config",
            "small.toml",
            "--precoder",
            "ide2-net",
            "--params",
            "run/ide2net_params.json",
            "--trials",
            "50",
            "--out",
            "run",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    let csv = std::fs::read_to_string(dir.path().join("run/eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn eval_requires_params_for_the_net() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let out = faprec(
        dir.path(),
        &[
            "eval",
            "--config",
            "small.toml",
            "--precoder",
            "ide2-net",
            "--out",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("parameter file"), "{}", stderr);
}

#[test]
fn oracle_lower_bound_and_refusal() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("oracle.toml"),
        r#"
seed = 3

[oracle]
n_antennas = 2
n_users = 2
instances = 60
t_max = 50
"#,
    )
    .unwrap();
    let out = faprec(
        dir.path(),
        &["oracle", "--config", "oracle.toml", "--out", "run"],
    );
    assert!(out.status.success(), "{:?}", out);
    let csv = std::fs::read_to_string(dir.path().join("run/oracle.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let ratio: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(ratio >= 1.0, "optimality violated: {}", line);
    }

    std::fs::write(
        dir.path().join("huge.toml"),
        "[oracle]\nn_antennas = 20\n",
    )
    .unwrap();
    let out = faprec(
        dir.path(),
        &["oracle", "--config", "huge.toml", "--out", "run2"],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("search space too large"), "{}", stderr);
}

#[test]
fn plot_emits_a_script_referencing_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let out = faprec(
        dir.path(),
        &[
            "sweep",
            "--config",
            "small.toml",
            "--kind",
            "snr",
            "--values",
            "14",
            "--trials",
            "10",
            "--out",
            "run",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    let out = faprec(
        dir.path(),
        &[
            "plot",
            "--csv",
            "run/sweep_snr_ide2.csv",
            "--kind",
            "snr",
            "--out",
            "run",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    let script = std::fs::read_to_string(dir.path().join("run/sweep_snr_ide2.gp")).unwrap();
    assert!(script.contains("sweep_snr_ide2.csv"));
    assert!(script.contains("set logscale y"));
}

#[test]
fn unknown_precoder_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write_small_config(dir.path());
    let out = faprec(
        dir.path(),
        &[
            "sweep",
            "--config",
            "small.toml",
            "--precoder",
            "squid",
            "--out",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown precoder"), "{}", stderr);
}
