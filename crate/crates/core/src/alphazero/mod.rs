//! Network-guided search: PUCT scoring, root noise, tempered action
//! selection, and game play for self-play and evaluation.

mod training;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::env::{Environment, GameState};
use crate::error::{invalid, Result};
use crate::linalg::Operator;
use crate::mcts::{continue_search, Evaluator, RootNoise, SearchConfig, SearchTree};
use crate::network::{Mode, Network};

pub use training::{
    competition, decide, latest_checkpoint, train_epoch, training_run, Checkpoint, CompetitionOutcome, EpochMetrics,
    Keep, TrainingSetup, TrainingSummary, CHECKPOINT_VERSION,
};

/// `Q + c·prior·√N / (n + 1)`.
pub fn puct_score(q: f64, prior: f64, n_child: f64, n_parent: f64, c_puct: f64) -> f64 {
    q + c_puct * prior * n_parent.max(0.0).sqrt() / (n_child + 1.0)
}

/// `(1 − eps)·prior + eps·η` with `η ~ Dir(alpha)` over the legal actions.
pub fn mix_dirichlet<R: Rng + ?Sized>(prior: &[f64], mask: &[bool], alpha: f64, eps: f64, rng: &mut R) -> Vec<f64> {
    let legal: Vec<usize> = (0..prior.len()).filter(|&i| mask[i]).collect();
    if legal.is_empty() {
        return vec![0.0; prior.len()];
    }
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let mut draws: Vec<f64> = legal.iter().map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        draws.fill(1.0 / legal.len() as f64);
    }
    let mut out = vec![0.0; prior.len()];
    for (k, &i) in legal.iter().enumerate() {
        out[i] = (1.0 - eps) * prior[i] + eps * draws[k];
    }
    out
}

/// The distribution `π^{1/T} / Σ π^{1/T}` for `T > 0`.
pub fn tempered(policy: &[f64], temperature: f64) -> Vec<f64> {
    let max = policy.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0.0; policy.len()];
    }
    let mut w: Vec<f64> =
        policy.iter().map(|&p| if p > 0.0 { (p / max).powf(1.0 / temperature) } else { 0.0 }).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Argmax at `T = 0`, otherwise a draw from the tempered distribution.
pub fn sample_action<R: Rng + ?Sized>(policy: &[f64], temperature: f64, rng: &mut R) -> Result<usize> {
    if policy.is_empty() {
        return Err(invalid("empty policy"));
    }
    if temperature <= 0.0 {
        return Ok(argmax(policy));
    }
    let w = tempered(policy, temperature);
    let dist = WeightedIndex::new(&w).map_err(|e| invalid(format!("policy is not a distribution: {e}")))?;
    Ok(dist.sample(rng))
}

/// Piecewise-constant temperature by step: `stages[k] = (until, T)` applies
/// while `step < until`, and `tail` afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub stages: Vec<(usize, f64)>,
    pub tail: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self { stages: vec![(5, 1.0), (15, 0.6)], tail: 0.4 }
    }
}

impl TemperatureSchedule {
    pub fn constant(t: f64) -> Self {
        Self { stages: Vec::new(), tail: t }
    }

    pub fn at(&self, step: usize) -> f64 {
        self.stages.iter().find(|(until, _)| step < *until).map(|s| s.1).unwrap_or(self.tail)
    }

    fn validate(&self) -> Result<()> {
        let temps = self.stages.iter().map(|s| s.1).chain([self.tail]);
        for t in temps {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid(format!("temperature {t} outside [0, 1]")));
            }
        }
        if self.stages.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid("temperature stages must have increasing boundaries"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub n_mcts_train: usize,
    pub n_mcts_eval: usize,
    pub c_puct: f64,
    pub dirichlet_alpha: f64,
    pub dirichlet_eps: f64,
    pub temperature: TemperatureSchedule,
    pub batch_size: usize,
    pub games_per_epoch: usize,
    pub epochs_per_depth: usize,
    pub competition_games: usize,
    pub competition_margin: usize,
    /// Value target for every step of a won game.
    pub value_win: f64,
    /// Value target for every step of a lost game.
    pub value_loss: f64,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            n_mcts_train: 200,
            n_mcts_eval: 400,
            c_puct: 1.25,
            dirichlet_alpha: 0.3,
            dirichlet_eps: 0.25,
            temperature: TemperatureSchedule::default(),
            batch_size: 64,
            games_per_epoch: 2048,
            epochs_per_depth: 5,
            competition_games: 100,
            competition_margin: 5,
            value_win: 1.0,
            value_loss: 0.0,
            learning_rate: 1e-3,
            l2: 1e-4,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mcts_train == 0 || self.n_mcts_eval == 0 {
            return Err(invalid("search budgets must be at least 1"));
        }
        if self.batch_size == 0 || self.games_per_epoch == 0 || self.epochs_per_depth == 0 {
            return Err(invalid("batch size, games per epoch and epochs per depth must be positive"));
        }
        if !(self.dirichlet_alpha > 0.0) || !(0.0..=1.0).contains(&self.dirichlet_eps) {
            return Err(invalid("dirichlet alpha must be positive and eps in [0, 1]"));
        }
        if !(self.c_puct >= 0.0) || !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) {
            return Err(invalid("c_puct, learning rate and l2 must be non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.value_win) || !(-1.0..=1.0).contains(&self.value_loss) {
            return Err(invalid("value targets must lie in [-1, 1]"));
        }
        self.temperature.validate()
    }

    /// Self-play search: training budget with root noise.
    pub fn self_play_search(&self) -> SearchConfig {
        SearchConfig {
            budget: self.n_mcts_train,
            c_puct: self.c_puct,
            root_noise: Some(RootNoise { alpha: self.dirichlet_alpha, eps: self.dirichlet_eps }),
            ..SearchConfig::default()
        }
    }

    /// Noise-free search at the given budget.
    pub fn plain_search(&self, budget: usize) -> SearchConfig {
        SearchConfig { budget, c_puct: self.c_puct, root_noise: None, ..SearchConfig::default() }
    }
}

/// One self-play position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    /// Real and imaginary planes of the state.
    pub observation: Vec<f64>,
    pub policy: Vec<f64>,
    pub value: f64,
    pub mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct GameRecord {
    pub won: bool,
    pub trajectory: Vec<ReplayRecord>,
    pub circuit: Circuit,
    pub final_state: GameState,
}

/// How one game picks its moves.
#[derive(Clone, Copy)]
pub struct PlayOptions<'a> {
    pub search: &'a SearchConfig,
    pub evaluator: Option<&'a dyn Evaluator>,
    pub temperature: &'a TemperatureSchedule,
    /// Keep `(observation, π, mask)` per step.
    pub record: bool,
    /// Carry the chosen child's subtree into the next step's search.
    pub reuse_tree: bool,
}

/// Searches from every position and plays the sampled action until the
/// game ends.
pub fn play_game<R: Rng + ?Sized>(
    env: &Environment,
    target: &Operator,
    max_steps: usize,
    opts: PlayOptions<'_>,
    rng: &mut R,
) -> Result<GameRecord> {
    let mut state = env.reset(target, max_steps)?;
    let mut trajectory = Vec::new();
    let mut carried: Option<SearchTree> = None;
    while !state.done {
        let start = carried.take().unwrap_or_else(|| SearchTree::new(state.clone()));
        let tree = continue_search(env, start, opts.search, opts.evaluator, rng)?;
        let res = tree.result();
        if opts.record {
            trajectory.push(ReplayRecord {
                observation: env.observe(&state).planes(),
                policy: res.policy.clone(),
                value: 0.0,
                mask: state.mask.clone(),
            });
        }
        let action = sample_action(&res.policy, opts.temperature.at(state.step), rng)?;
        state = env.step(&state, action)?.0;
        if opts.reuse_tree {
            carried = tree.subtree(action);
        }
    }
    Ok(GameRecord {
        won: state.won,
        trajectory,
        circuit: Circuit::from_history(&env.table, &state.history),
        final_state: state,
    })
}

/// Checks that a network's input and output sizes fit the environment.
pub fn check_network(net: &Network, env: &Environment) -> Result<()> {
    let cfg = net.config();
    if cfg.dim != env.table.dim() || cfg.n_actions != env.n_actions() {
        return Err(invalid(format!(
            "network expects dim {} with {} actions, environment has dim {} with {}",
            cfg.dim,
            cfg.n_actions,
            env.table.dim(),
            env.n_actions()
        )));
    }
    Ok(())
}

/// A self-play game: noisy root search at the training budget, scheduled
/// temperatures, and outcome values on every record.
pub fn self_play_game(
    evaluator: &dyn Evaluator,
    config: &AgentConfig,
    env: &Environment,
    target: &Operator,
    max_steps: usize,
    seed: u64,
) -> Result<GameRecord> {
    let search = config.self_play_search();
    let opts = PlayOptions {
        search: &search,
        evaluator: Some(evaluator),
        temperature: &config.temperature,
        record: true,
        reuse_tree: false,
    };
    let mut rng = crate::rng::stream(seed, &[]);
    let mut game = play_game(env, target, max_steps, opts, &mut rng)?;
    let z = if game.won { config.value_win } else { config.value_loss };
    for r in &mut game.trajectory {
        r.value = z;
    }
    Ok(game)
}

/// Plays the network's own argmax move at every step, without search.
pub fn play_greedy(net: &Network, env: &Environment, target: &Operator, max_steps: usize) -> Result<GameRecord> {
    check_network(net, env)?;
    let mut state = env.reset(target, max_steps)?;
    while !state.done {
        let (policy, _) = net.forward(&env.observe(&state), &state.mask, Mode::Eval)?;
        state = env.step(&state, argmax(&policy))?.0;
    }
    Ok(GameRecord {
        won: state.won,
        trajectory: Vec::new(),
        circuit: Circuit::from_history(&env.table, &state.history),
        final_state: state,
    })
}
