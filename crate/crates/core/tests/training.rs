use std::fs;
use std::path::Path;

use qsynth::alphazero::{latest_checkpoint, training_run, AgentConfig, Checkpoint, TrainingSetup};
use qsynth::gates::{Architecture, GateKind};
use qsynth::network::NetConfig;
use qsynth::targets::CurriculumState;

fn setup(dir: &Path, final_mu: usize) -> TrainingSetup {
    let mut s = TrainingSetup::new(Architecture::all_to_all(1), vec![GateKind::H, GateKind::T]).unwrap();
    s.agent = AgentConfig {
        n_mcts_train: 16,
        games_per_epoch: 16,
        epochs_per_depth: 2,
        batch_size: 16,
        competition_games: 10,
        ..Default::default()
    };
    s.network = NetConfig { blocks: 1, channels: 4, policy_channels: 2, value_channels: 2, ..s.network };
    s.curriculum = CurriculumState { mu: 1, sigma: 1.0, d_min: 1, d_max: 4, ..Default::default() };
    s.final_mu = final_mu;
    s.seed = 21;
    s.checkpoint_dir = Some(dir.to_path_buf());
    s
}

#[test]
fn writes_a_checkpoint_per_level_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let summary = training_run(&setup(dir.path(), 3)).unwrap();
    assert_eq!(summary.checkpoints.len(), 3);
    assert_eq!(summary.epochs.len(), 6);
    assert_eq!(summary.last.levels_done, 3);
    assert_eq!(summary.last.competitions.len(), 3);
    assert_eq!(summary.last.curriculum.mu, 4);
    let latest = latest_checkpoint(dir.path()).unwrap().unwrap();
    assert!(latest.ends_with("level-003.json"));
    let cp = Checkpoint::load(&latest).unwrap();
    assert_eq!(cp.trainee, summary.last.trainee);
    let metrics = fs::read_to_string(dir.path().join("metrics.tsv")).unwrap();
    assert_eq!(metrics.lines().count(), 7);
    assert!(metrics.starts_with("level\tepoch\tmu"));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    training_run(&setup(full.path(), 3)).unwrap();
    training_run(&setup(split.path(), 1)).unwrap();
    let mut rest = setup(split.path(), 3);
    rest.resume = true;
    let summary = training_run(&rest).unwrap();
    assert_eq!(summary.checkpoints.len(), 2);
    let a = fs::read_to_string(full.path().join("level-003.json")).unwrap();
    let b = fs::read_to_string(split.path().join("level-003.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn resume_rejects_other_gate_set() {
    let dir = tempfile::tempdir().unwrap();
    training_run(&setup(dir.path(), 1)).unwrap();
    let mut other = setup(dir.path(), 2);
    other = TrainingSetup { gates: vec![GateKind::H, GateKind::T, GateKind::Tdg], resume: true, ..other };
    other.network = NetConfig { n_actions: 3, ..other.network };
    assert!(training_run(&other).is_err());
}

#[test]
fn corrupt_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("level-001.json");
    fs::write(&path, "{\"version\": 1}").unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(qsynth::Error::Checkpoint(_))));
    fs::write(&path, "{\"version\": 99}").unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(qsynth::Error::Checkpoint(m)) if m.contains("version")));
}
