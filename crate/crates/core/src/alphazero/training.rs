//! The self-play training loop, the competition gate, and checkpoints.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_network, play_game, self_play_game, AgentConfig, PlayOptions, ReplayRecord, TemperatureSchedule};
use crate::env::Environment;
use crate::error::{invalid, Error, Result};
use crate::gates::{ActionTable, Architecture, GateKind};
use crate::network::{NetConfig, Network, OptimizerState, TrainBatch};
use crate::rng::{derive, stream};
use crate::targets::{curriculum_next, sample_target, CurriculumState};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Shuffles `replay` and applies one optimizer step per batch; returns the
/// per-batch losses.
pub fn train_epoch<R: Rng + ?Sized>(
    net: &mut Network,
    opt: &mut OptimizerState,
    replay: &[ReplayRecord],
    config: &AgentConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if replay.is_empty() {
        return Err(invalid("empty replay"));
    }
    let mut order: Vec<usize> = (0..replay.len()).collect();
    order.shuffle(rng);
    let mut losses = Vec::with_capacity(order.len().div_ceil(config.batch_size));
    for chunk in order.chunks(config.batch_size) {
        let mut batch = TrainBatch::default();
        for &i in chunk {
            let r = &replay[i];
            batch.push(r.observation.clone(), r.policy.clone(), r.value, r.mask.clone());
        }
        losses.push(net.train_step(opt, &batch)?);
    }
    Ok(losses)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Keep {
    New,
    Best,
}

/// The new network replaces the best one only with at least `margin` more
/// wins.
pub fn decide(wins_new: usize, wins_best: usize, margin: usize) -> Keep {
    if wins_new >= wins_best + margin {
        Keep::New
    } else {
        Keep::Best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitionOutcome {
    pub wins_new: usize,
    pub wins_best: usize,
    pub keep: Keep,
}

/// Both networks play the same fresh curriculum targets greedily with the
/// training search budget.
pub fn competition(
    new: &Network,
    best: &Network,
    config: &AgentConfig,
    env: &Environment,
    curriculum: &CurriculumState,
    seed: u64,
) -> Result<CompetitionOutcome> {
    check_network(new, env)?;
    check_network(best, env)?;
    let search = config.plain_search(config.n_mcts_train);
    let greedy = TemperatureSchedule::constant(0.0);
    let outcomes: Vec<(bool, bool)> = (0..config.competition_games as u64)
        .into_par_iter()
        .map(|g| {
            let mut rng = stream(seed, &[g]);
            let depth = curriculum.sample_depth(&mut rng);
            let target = sample_target(depth, &env.table, &mut rng)?;
            let play = |net: &Network| -> Result<bool> {
                let opts = PlayOptions {
                    search: &search,
                    evaluator: Some(net),
                    temperature: &greedy,
                    record: false,
                    reuse_tree: false,
                };
                let mut game_rng = stream(seed, &[g, 1]);
                Ok(play_game(env, &target.unitary, depth, opts, &mut game_rng)?.won)
            };
            Ok((play(new)?, play(best)?))
        })
        .collect::<Result<_>>()?;
    let wins_new = outcomes.iter().filter(|o| o.0).count();
    let wins_best = outcomes.iter().filter(|o| o.1).count();
    Ok(CompetitionOutcome { wins_new, wins_best, keep: decide(wins_new, wins_best, config.competition_margin) })
}

/// Everything needed to continue training or to synthesize.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub arch: Architecture,
    pub gates: Vec<GateKind>,
    pub agent: AgentConfig,
    /// The network that won the latest competition.
    pub best: Network,
    /// The network being trained.
    pub trainee: Network,
    pub optimizer: OptimizerState,
    pub curriculum: CurriculumState,
    pub levels_done: usize,
    pub seed: u64,
    pub competitions: Vec<CompetitionOutcome>,
}

impl Checkpoint {
    pub fn table(&self) -> Result<ActionTable> {
        ActionTable::build(&self.gates, &self.arch)
    }

    /// Writes atomically through a temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let version = serde_json::from_str::<serde_json::Value>(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?
            .get("version")
            .and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Checkpoint(format!("{}: unsupported checkpoint version {version:?}", path.display())));
        }
        let cp: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let table = cp.table().map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let env = Environment::new(Arc::new(table));
        for net in [&cp.best, &cp.trainee] {
            check_network(net, &env).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        }
        if cp.optimizer.len() != cp.trainee.n_params() {
            return Err(Error::Checkpoint(format!("{}: optimizer state does not match", path.display())));
        }
        Ok(cp)
    }
}

fn checkpoint_name(levels_done: usize) -> String {
    format!("level-{levels_done:03}.json")
}

/// The checkpoint with the most completed levels in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    if !dir.exists() {
        return Ok(None);
    }
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(n) = name.strip_prefix("level-").and_then(|s| s.strip_suffix(".json")) else { continue };
        if let Ok(n) = n.parse::<usize>() {
            if best.as_ref().is_none_or(|(b, _)| n > *b) {
                best = Some((n, path));
            }
        }
    }
    Ok(best.map(|b| b.1))
}

#[derive(Clone, Debug)]
pub struct TrainingSetup {
    pub arch: Architecture,
    pub gates: Vec<GateKind>,
    pub agent: AgentConfig,
    pub network: NetConfig,
    /// Initial curriculum; its per-level game counts are taken from `agent`.
    pub curriculum: CurriculumState,
    /// Training stops once the level with this mean depth is done.
    pub final_mu: usize,
    pub seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from the latest checkpoint in `checkpoint_dir`.
    pub resume: bool,
}

impl TrainingSetup {
    /// Defaults for an architecture and gate set; the network shape is
    /// derived from the action table.
    pub fn new(arch: Architecture, gates: Vec<GateKind>) -> Result<Self> {
        let table = ActionTable::build(&gates, &arch)?;
        Ok(Self {
            network: NetConfig::new(table.dim(), table.len()),
            arch,
            gates,
            agent: AgentConfig::default(),
            curriculum: CurriculumState::default(),
            final_mu: 30,
            seed: 0,
            checkpoint_dir: None,
            resume: false,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub level: usize,
    pub epoch: usize,
    pub mu: usize,
    pub games: usize,
    pub wins: usize,
    pub mean_loss: f64,
}

impl EpochMetrics {
    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.games.max(1) as f64
    }
}

#[derive(Clone, Debug)]
pub struct TrainingSummary {
    pub epochs: Vec<EpochMetrics>,
    pub checkpoints: Vec<PathBuf>,
    pub last: Checkpoint,
}

const METRICS_HEADER: &str = "level\tepoch\tmu\tgames\twins\twin_rate\tmean_loss";

fn append_metrics(dir: &Path, m: &EpochMetrics) -> Result<()> {
    let path = dir.join("metrics.tsv");
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{METRICS_HEADER}")?;
    }
    writeln!(
        f,
        "{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.6}",
        m.level,
        m.epoch,
        m.mu,
        m.games,
        m.wins,
        m.win_rate(),
        m.mean_loss
    )?;
    Ok(())
}

fn fresh_checkpoint(setup: &TrainingSetup) -> Result<Checkpoint> {
    let mut init_rng = stream(setup.seed, &[0]);
    let trainee = Network::init(setup.network.clone(), &mut init_rng)?;
    let mut optimizer = OptimizerState::new(trainee.n_params());
    optimizer.lr = setup.agent.learning_rate;
    optimizer.l2 = setup.agent.l2;
    let mut curriculum = setup.curriculum.clone();
    curriculum.n_games_per_level = setup.agent.games_per_epoch;
    curriculum.epochs_per_depth = setup.agent.epochs_per_depth;
    curriculum.games_at_level = 0;
    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        arch: setup.arch.clone(),
        gates: setup.gates.clone(),
        agent: setup.agent.clone(),
        best: trainee.clone(),
        trainee,
        optimizer,
        curriculum,
        levels_done: 0,
        seed: setup.seed,
        competitions: Vec::new(),
    })
}

/// Runs curriculum levels until `final_mu` is done. Each level plays
/// `epochs_per_depth` epochs of self-play, training after each epoch on the
/// level's accumulated replay, then runs the competition and writes a
/// checkpoint. All randomness is derived from the seed and the
/// (level, epoch, game) position, so a resumed run matches an
/// uninterrupted one.
pub fn training_run(setup: &TrainingSetup) -> Result<TrainingSummary> {
    setup.agent.validate()?;
    let mut cp = match (&setup.checkpoint_dir, setup.resume) {
        (Some(dir), true) => match latest_checkpoint(dir)? {
            Some(path) => {
                let cp = Checkpoint::load(&path)?;
                if cp.arch != setup.arch || cp.gates != setup.gates {
                    return Err(Error::Checkpoint(format!(
                        "{}: architecture or gate set differs from the configuration",
                        path.display()
                    )));
                }
                cp
            }
            None => fresh_checkpoint(setup)?,
        },
        _ => fresh_checkpoint(setup)?,
    };
    if let Some(dir) = &setup.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let agent = cp.agent.clone();
    let seed = cp.seed;
    let env = Environment::new(Arc::new(cp.table()?));
    check_network(&cp.trainee, &env)?;

    let mut epochs = Vec::new();
    let mut checkpoints = Vec::new();
    while cp.curriculum.mu <= setup.final_mu {
        let level = cp.levels_done;
        let level_curriculum = cp.curriculum.clone();
        let mut replay: Vec<ReplayRecord> = Vec::new();
        for epoch in 0..agent.epochs_per_depth {
            let mut depth_rng = stream(seed, &[1, level as u64, epoch as u64]);
            let mut depths = Vec::with_capacity(agent.games_per_epoch);
            for _ in 0..agent.games_per_epoch {
                let (d, next) = curriculum_next(&cp.curriculum, &mut depth_rng);
                cp.curriculum = next;
                depths.push(d);
            }
            let trainee = &cp.trainee;
            let games: Vec<_> = depths
                .par_iter()
                .enumerate()
                .map(|(g, &depth)| {
                    let path = [level as u64, epoch as u64, g as u64];
                    let mut rng = stream(seed, &[2, path[0], path[1], path[2]]);
                    let target = sample_target(depth, &env.table, &mut rng)?;
                    let game_seed = derive(seed, &[3, path[0], path[1], path[2]]);
                    self_play_game(trainee, &agent, &env, &target.unitary, depth, game_seed)
                })
                .collect::<Result<_>>()?;
            let wins = games.iter().filter(|g| g.won).count();
            for g in games {
                replay.extend(g.trajectory);
            }
            let losses = if replay.is_empty() {
                Vec::new()
            } else {
                let mut rng = stream(seed, &[4, level as u64, epoch as u64]);
                train_epoch(&mut cp.trainee, &mut cp.optimizer, &replay, &agent, &mut rng)?
            };
            let mean_loss = if losses.is_empty() { 0.0 } else { losses.iter().sum::<f64>() / losses.len() as f64 };
            let m = EpochMetrics { level, epoch, mu: level_curriculum.mu, games: depths.len(), wins, mean_loss };
            if let Some(dir) = &setup.checkpoint_dir {
                append_metrics(dir, &m)?;
            }
            epochs.push(m);
        }
        let outcome =
            competition(&cp.trainee, &cp.best, &agent, &env, &level_curriculum, derive(seed, &[5, level as u64]))?;
        if outcome.keep == Keep::New {
            cp.best = cp.trainee.clone();
        }
        cp.competitions.push(outcome);
        cp.levels_done += 1;
        // the counter normally advances mu on the level's last game
        if cp.curriculum.mu == level_curriculum.mu {
            cp.curriculum.mu += 1;
            cp.curriculum.games_at_level = 0;
        }
        if let Some(dir) = &setup.checkpoint_dir {
            let path = dir.join(checkpoint_name(cp.levels_done));
            cp.save(&path)?;
            checkpoints.push(path);
        }
    }
    Ok(TrainingSummary { epochs, checkpoints, last: cp })
}
