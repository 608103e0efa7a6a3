use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qsynth(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qsynth"));
    cmd.args(args).env_remove("QSYNTH_CHECKPOINT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMOKE: &str = r#"seed = 2

[architecture]
data_qubits = 1
connectivity = "all-to-all"
gates = ["H", "T", "Tdg"]

[agent]
n_mcts_train = 16
n_mcts_eval = 32
games_per_epoch = 16
epochs_per_depth = 2
batch_size = 16
competition_games = 10

[network]
blocks = 1
channels = 4
policy_channels = 2
value_channels = 2

[curriculum]
mu = 1
sigma = 1.0
d_min = 1
d_max = 4
final_mu = 3
"#;

#[test]
fn train_then_synth_from_environment_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("smoke.toml");
    fs::write(&cfg, SMOKE).unwrap();
    let ck = dir.path().join("ck");
    let envs = [("QSYNTH_CHECKPOINT_DIR", ck.as_path())];

    let o = qsynth(&["train", "--config", cfg.to_str().unwrap()], &envs);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ck.join("level-003.json").exists());
    assert!(stdout(&o).contains("wrote"));

    // a second fresh run into the same directory is refused, a resume is not
    let o = qsynth(&["train", "--config", cfg.to_str().unwrap()], &envs);
    assert_eq!(o.status.code(), Some(2));
    let o = qsynth(&["train", "--config", cfg.to_str().unwrap(), "--resume"], &envs);
    assert!(o.status.success());

    let m = dir.path().join("ht.txt");
    fs::write(&m, "0.5+0.5i 0.5-0.5i\n0.5+0.5i -0.5+0.5i\n").unwrap();
    let o = qsynth(
        &["synth", "--matrix", m.to_str().unwrap(), "--max-steps", "4", "--out", dir.path().to_str().unwrap()],
        &envs,
    );
    let text = stdout(&o);
    if o.status.success() {
        assert!(text.contains("OPENQASM"));
        let v = qsynth(
            &["verify", "--circuit", dir.path().join("ht.qasm").to_str().unwrap(), "--matrix", m.to_str().unwrap()],
            &[],
        );
        assert!(v.status.success(), "{}", stdout(&v));
    } else {
        assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    }

    let o = qsynth(&["synth", "--target", "CS"], &envs);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("data qubit"));
}

#[test]
fn mcts_synth_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // iSWAP needs four gates; give the plain search room to find one
    let o = qsynth(
        &[
            "synth",
            "--mcts-only",
            "--target",
            "iSWAP",
            "--max-steps",
            "4",
            "--budget",
            "4000",
            "--seed",
            "1",
            "--out",
            out,
        ],
        &[],
    );
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let qasm = dir.path().join("iSWAP.qasm");
    let v = qsynth(&["verify", "--circuit", qasm.to_str().unwrap(), "--target", "iSWAP"], &[]);
    assert!(v.status.success());
    assert!(stdout(&v).ends_with("pass\n"));
    let v = qsynth(&["verify", "--circuit", qasm.to_str().unwrap(), "--target", "CS"], &[]);
    assert_eq!(v.status.code(), Some(1));
    let report = fs::read_to_string(dir.path().join("iSWAP.report.json")).unwrap();
    assert!(report.contains("\"success\": true"));
}

#[test]
fn bench_csv_is_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for f in [&a, &b] {
        let o = qsynth(
            &[
                "bench",
                "--mcts-only",
                "--min-depth",
                "1",
                "--max-depth",
                "3",
                "--n",
                "10",
                "--budget",
                "100",
                "--no-timing",
                "--seed",
                "9",
                "--out",
                f.to_str().unwrap(),
            ],
            &[],
        );
        assert!(o.status.success());
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("# qsynth-bench v1\ndepth,n,successes,mean_found_depth,mean_seconds\n1,10,"));
}

#[test]
fn config_errors_are_clean() {
    let dir = tempfile::tempdir().unwrap();
    let o = qsynth(&["train", "--config", dir.path().join("nope.toml").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: config error"), "{err}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SMOKE.replace("channels = 4", "channels = four")).unwrap();
    let o = qsynth(&["train", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 18"), "{err}");

    let m = dir.path().join("m.txt");
    fs::write(&m, "1 0\n0 0.5\n").unwrap();
    let o = qsynth(&["synth", "--mcts-only", "--qubits", "1", "--matrix", m.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not unitary"));
}
