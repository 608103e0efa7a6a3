//! Monte Carlo Tree Search over the synthesis game.
//!
//! Without an evaluator the search is plain UCT with uniformly random
//! rollouts. With one, selection switches to PUCT using the evaluator's
//! priors and leaves are scored by its value estimate instead of a rollout.

use rand::Rng;

use crate::alphazero::{mix_dirichlet, puct_score};
use crate::env::{Environment, GameState};
use crate::error::{Error, Result};

/// Policy prior and value estimate for a non-terminal state.
pub trait Evaluator: Sync {
    /// Returns a prior over all actions (zero on illegal ones) and a value.
    fn evaluate(&self, env: &Environment, state: &GameState) -> (Vec<f64>, f64);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootNoise {
    pub alpha: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub budget: usize,
    /// UCT exploration constant.
    pub c_uct: f64,
    pub c_puct: f64,
    /// Dirichlet noise mixed into the root prior (PUCT only).
    pub root_noise: Option<RootNoise>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { budget: 400, c_uct: 0.5, c_puct: 1.25, root_noise: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Visit distribution at the root; zero on illegal actions.
    pub policy: Vec<f64>,
    /// Mean reward per root action; zero when unvisited.
    pub q_values: Vec<f64>,
    pub visits: Vec<u32>,
    /// `Σ_a π(a)·Q(a)`.
    pub value: f64,
}

/// `Q + C·√(ln N / n)`, with unvisited children at `+∞`.
///
/// Counts are taken as reals so the formula can be evaluated off-lattice.
pub fn uct_score(q: f64, n_child: f64, n_parent: f64, c: f64) -> f64 {
    if n_child <= 0.0 {
        return f64::INFINITY;
    }
    q + c * (n_parent.ln() / n_child).sqrt()
}

#[derive(Clone, Debug)]
struct Edge {
    action: usize,
    prior: f64,
    child: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SearchNode {
    pub state: GameState,
    pub visits: u32,
    pub total_reward: f64,
    edges: Vec<Edge>,
}

impl SearchNode {
    fn new(state: GameState, visits: u32) -> Self {
        let edges = state.legal_actions().map(|a| Edge { action: a, prior: 0.0, child: None }).collect();
        Self { state, visits, total_reward: 0.0, edges }
    }

    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.total_reward / self.visits as f64
        }
    }

    fn set_priors(&mut self, priors: &[f64]) {
        let sum: f64 = self.edges.iter().map(|e| priors[e.action].max(0.0)).sum();
        let uniform = 1.0 / self.edges.len().max(1) as f64;
        for e in &mut self.edges {
            e.prior = if sum > 0.0 { priors[e.action].max(0.0) / sum } else { uniform };
        }
    }
}

/// Arena-backed search tree; node 0 is the root.
#[derive(Clone, Debug)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl SearchTree {
    /// The root counts itself once.
    pub fn new(root: GameState) -> Self {
        Self { nodes: vec![SearchNode::new(root, 1)] }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Child node id reached from `id` through `action`, if expanded.
    pub fn child(&self, id: usize, action: usize) -> Option<usize> {
        self.nodes[id].edges.iter().find(|e| e.action == action).and_then(|e| e.child)
    }

    /// Adds a node under `parent` for `action` with zero statistics.
    pub fn attach(&mut self, parent: usize, action: usize, state: GameState) -> usize {
        let id = self.nodes.len();
        self.nodes.push(SearchNode::new(state, 0));
        if let Some(e) = self.nodes[parent].edges.iter_mut().find(|e| e.action == action) {
            e.child = Some(id);
        }
        id
    }

    /// Adds `reward` to every node on `path` and bumps its visit count.
    pub fn backpropagate(&mut self, path: &[usize], reward: f64) {
        for &id in path {
            let n = &mut self.nodes[id];
            n.visits += 1;
            n.total_reward += reward;
        }
    }

    /// The subtree below the root's `action` child as a new tree, keeping
    /// all statistics; `None` when that child was never expanded.
    pub fn subtree(&self, action: usize) -> Option<SearchTree> {
        let start = self.child(0, action)?;
        let mut remap = vec![usize::MAX; self.nodes.len()];
        remap[start] = 0;
        let mut order = vec![start];
        let mut i = 0;
        while i < order.len() {
            for e in &self.nodes[order[i]].edges {
                if let Some(c) = e.child {
                    remap[c] = order.len();
                    order.push(c);
                }
            }
            i += 1;
        }
        let nodes = order
            .iter()
            .map(|&id| {
                let mut n = self.nodes[id].clone();
                for e in &mut n.edges {
                    e.child = e.child.map(|c| remap[c]);
                }
                n
            })
            .collect();
        Some(SearchTree { nodes })
    }

    fn select_edge(&self, id: usize, cfg: &SearchConfig, guided: bool) -> Option<usize> {
        let node = &self.nodes[id];
        let mut best: Option<(usize, f64)> = None;
        for (k, e) in node.edges.iter().enumerate() {
            let (q, n) = match e.child {
                Some(c) => (self.nodes[c].q(), self.nodes[c].visits as f64),
                None => (0.0, 0.0),
            };
            let parent = node.visits as f64;
            let score =
                if guided { puct_score(q, e.prior, n, parent, cfg.c_puct) } else { uct_score(q, n, parent, cfg.c_uct) };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((k, score));
            }
        }
        best.map(|(k, _)| k)
    }

    /// Visit statistics at the root.
    pub fn result(&self) -> SearchResult {
        let root = self.root();
        let n_actions = root.state.mask.len();
        let mut visits = vec![0u32; n_actions];
        let mut q_values = vec![0.0; n_actions];
        for e in &root.edges {
            if let Some(c) = e.child {
                visits[e.action] = self.nodes[c].visits;
                q_values[e.action] = self.nodes[c].q();
            }
        }
        let total: u32 = visits.iter().sum();
        let policy: Vec<f64> =
            if total == 0 { vec![0.0; n_actions] } else { visits.iter().map(|&v| v as f64 / total as f64).collect() };
        let value = policy.iter().zip(&q_values).map(|(p, q)| p * q).sum();
        SearchResult { policy, q_values, visits, value }
    }
}

fn terminal_value(state: &GameState) -> f64 {
    if state.won {
        1.0
    } else {
        0.0
    }
}

/// Random legal moves until the game ends; 1 on a win, else 0.
pub fn rollout<R: Rng + ?Sized>(env: &Environment, state: &GameState, rng: &mut R) -> Result<f64> {
    let mut s = state.clone();
    let mut legal = Vec::with_capacity(env.n_actions());
    while !s.done {
        legal.clear();
        legal.extend(s.legal_actions());
        if legal.is_empty() {
            return Ok(0.0);
        }
        let a = legal[rng.random_range(0..legal.len())];
        s = env.step(&s, a)?.0;
    }
    Ok(terminal_value(&s))
}

/// Runs `cfg.budget` select/expand/evaluate/backpropagate iterations from
/// `root`. The root state is not modified.
pub fn run_search<R: Rng + ?Sized>(
    env: &Environment,
    root: &GameState,
    cfg: &SearchConfig,
    evaluator: Option<&dyn Evaluator>,
    rng: &mut R,
) -> Result<SearchResult> {
    let tree = search_tree(env, root, cfg, evaluator, rng)?;
    Ok(tree.result())
}

/// Like [`run_search`] but returns the whole tree.
pub fn search_tree<R: Rng + ?Sized>(
    env: &Environment,
    root: &GameState,
    cfg: &SearchConfig,
    evaluator: Option<&dyn Evaluator>,
    rng: &mut R,
) -> Result<SearchTree> {
    continue_search(env, SearchTree::new(root.clone()), cfg, evaluator, rng)
}

/// Runs `cfg.budget` more iterations on an existing tree, for example one
/// re-rooted with [`SearchTree::subtree`]. Guided searches reuse the priors
/// already stored at the root; root noise is mixed in afresh.
pub fn continue_search<R: Rng + ?Sized>(
    env: &Environment,
    mut tree: SearchTree,
    cfg: &SearchConfig,
    evaluator: Option<&dyn Evaluator>,
    rng: &mut R,
) -> Result<SearchTree> {
    let root = tree.nodes[0].state.clone();
    if root.done {
        return Err(Error::InvalidState("search from a finished game".into()));
    }
    if cfg.budget == 0 {
        return Err(Error::InvalidArgument("search budget must be at least 1".into()));
    }
    let guided = evaluator.is_some();
    if let Some(ev) = evaluator {
        let fresh = tree.nodes[0].edges.iter().all(|e| e.prior == 0.0);
        let mut priors = if fresh {
            ev.evaluate(env, &root).0
        } else {
            let mut p = vec![0.0; root.mask.len()];
            for e in &tree.nodes[0].edges {
                p[e.action] = e.prior;
            }
            p
        };
        if let Some(noise) = cfg.root_noise {
            priors = mix_dirichlet(&priors, &root.mask, noise.alpha, noise.eps, rng);
        }
        tree.nodes[0].set_priors(&priors);
    }

    let mut path = Vec::new();
    for _ in 0..cfg.budget {
        path.clear();
        let mut id = 0;
        path.push(id);
        let value = loop {
            let node = &tree.nodes[id];
            if node.state.done {
                break terminal_value(&node.state);
            }
            let Some(k) = tree.select_edge(id, cfg, guided) else {
                break 0.0;
            };
            let edge = tree.nodes[id].edges[k].clone();
            match edge.child {
                Some(c) => {
                    id = c;
                    path.push(id);
                }
                None => {
                    let (state, _) = env.step(&tree.nodes[id].state, edge.action)?;
                    let child = tree.attach(id, edge.action, state);
                    path.push(child);
                    let leaf = &tree.nodes[child].state;
                    break if leaf.done {
                        terminal_value(leaf)
                    } else if let Some(ev) = evaluator {
                        let (priors, v) = ev.evaluate(env, leaf);
                        tree.nodes[child].set_priors(&priors);
                        v
                    } else {
                        rollout(env, leaf, rng)?
                    };
                }
            }
        };
        tree.backpropagate(&path, value);
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{clifford_t, Action, ActionTable, Architecture, GateKind::*};
    use crate::linalg::Operator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn env1() -> Environment {
        Environment::new(Arc::new(ActionTable::build(&[H, T], &Architecture::all_to_all(1)).unwrap()))
    }

    #[test]
    fn uct_examples() {
        assert_eq!(uct_score(0.0, 1.0, 1.0, 1.0), 0.0);
        assert!((uct_score(0.5, 4.0, 4f64.exp(), 1.0) - 1.5).abs() < 1e-12);
        assert!(uct_score(0.0, 0.0, 10.0, 1.0) > uct_score(1.0, 1.0, 10.0, 100.0));
    }

    #[test]
    fn finds_one_gate_target() {
        let e = env1();
        let target = H.matrix();
        let root = e.reset(&target, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SearchConfig { budget: 50, ..Default::default() };
        let res = run_search(&e, &root, &cfg, None, &mut rng).unwrap();
        let best = res.policy.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(e.table.actions[best], Action::single(H, 0));
        assert!((res.policy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_one_is_one_hot() {
        let e = env1();
        let root = e.reset(&(&T.matrix() * &H.matrix()), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SearchConfig { budget: 1, ..Default::default() };
        let res = run_search(&e, &root, &cfg, None, &mut rng).unwrap();
        assert_eq!(res.policy.iter().filter(|&&p| p == 1.0).count(), 1);
        assert_eq!(res.policy.iter().filter(|&&p| p == 0.0).count(), res.policy.len() - 1);
    }

    #[test]
    fn illegal_actions_get_no_mass() {
        let table = Arc::new(ActionTable::build(&clifford_t(), &Architecture::all_to_all(2)).unwrap());
        let e = Environment::new(table.clone());
        let target = crate::targets::named_target("CS").unwrap();
        let s = e.reset(&target, 6).unwrap();
        let (s, _) = e.step(&s, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for budget in [1, 5, 50] {
            let cfg = SearchConfig { budget, ..Default::default() };
            let res = run_search(&e, &s, &cfg, None, &mut rng).unwrap();
            for (a, &legal) in s.mask.iter().enumerate() {
                if !legal {
                    assert_eq!(res.policy[a], 0.0);
                }
            }
        }
    }

    #[test]
    fn backpropagate_examples() {
        let e = env1();
        let root = e.reset(&(&T.matrix() * &H.matrix()), 4).unwrap();
        let mut tree = SearchTree::new(root.clone());
        let (s1, _) = e.step(&root, 1).unwrap();
        let (s2, _) = e.step(&s1, 0).unwrap();
        let a = tree.attach(0, 1, s1);
        let b = tree.attach(a, 0, s2);
        tree.backpropagate(&[0, a, b], 1.0);
        assert_eq!(tree.node(a).visits, 1);
        assert_eq!(tree.node(b).total_reward, 1.0);
        assert_eq!(tree.root().visits, 2);
        tree.backpropagate(&[0, a, b], 0.0);
        assert_eq!(tree.node(a).q(), 0.5);
        assert_eq!(tree.node(b).q(), 0.5);
    }

    #[test]
    fn root_counts_iterations_plus_one() {
        let table = Arc::new(ActionTable::build(&clifford_t(), &Architecture::all_to_all(2)).unwrap());
        let e = Environment::new(table);
        let s = e.reset(&crate::targets::named_target("CH").unwrap(), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SearchConfig { budget: 137, ..Default::default() };
        let tree = search_tree(&e, &s, &cfg, None, &mut rng).unwrap();
        assert_eq!(tree.root().visits, 138);
        let child_sum: u32 = (1..tree.len())
            .filter(|&id| (0..e.n_actions()).any(|a| tree.child(0, a) == Some(id)))
            .map(|id| tree.node(id).visits)
            .sum();
        assert_eq!(tree.root().visits, child_sum + 1);
        for id in 0..tree.len() {
            let q = tree.node(id).q();
            assert!((0.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn search_rejects_done_root_and_leaves_root_untouched() {
        let e = env1();
        let done = e.reset(&Operator::identity(2), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(run_search(&e, &done, &SearchConfig::default(), None, &mut rng).is_err());

        let root = e.reset(&(&T.matrix() * &H.matrix()), 4).unwrap();
        let before = root.clone();
        run_search(&e, &root, &SearchConfig { budget: 40, ..Default::default() }, None, &mut rng).unwrap();
        assert_eq!(root.m, before.m);
        assert_eq!(root.history, before.history);
    }

    #[test]
    fn equal_seeds_equal_results() {
        let table = Arc::new(ActionTable::build(&clifford_t(), &Architecture::all_to_all(2)).unwrap());
        let e = Environment::new(table);
        let s = e.reset(&crate::targets::named_target("CS").unwrap(), 5).unwrap();
        let cfg = SearchConfig { budget: 200, ..Default::default() };
        let a = run_search(&e, &s, &cfg, None, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = run_search(&e, &s, &cfg, None, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }
}
