//! Monte Carlo tree search over relative wrist actions.
//!
//! States are belief states: the pose reached so far, the most recent
//! observation bin, the accumulated observation histogram, and the set of
//! nominal poses already visited. Actions are the library's pooled
//! quantized relative actions; executing one lands on the nearest nominal
//! pose, and a pose may be visited at most once per episode. Simulated
//! observations are drawn from the learned transition model under the
//! current class belief.
//!
//! Rewards are in [0, 1]: each of the up-to-`horizon` moves contributes
//! `lambda / horizon * (1 - movement_cost)` and the final belief adds
//! `(1 - lambda) * (1 - misclassification)`, so a full path's reward is
//! one minus the classification-time objective it optimizes.

mod episode;

pub use episode::{
    random_policy, run_episode, EpisodeError, EpisodeResult, IterationRecord, Policy,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::descriptor::{BinIndex, HistogramDescriptor};
use crate::geometry::{movement_cost, Action, ActionKey};
use crate::model::{
    class_posterior, misclassification_cost, sample_next_observation, ClassPosterior, Library,
    Metric,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// Lookahead depth in moves.
    pub horizon: u32,
    /// Simulations per planning call.
    pub simulations: u32,
    /// Exploration constant of the upper confidence bound.
    pub exploration: f64,
    /// Weight of movement cost against misclassification, in [0, 1].
    pub lambda: f64,
    pub metric: Metric,
    /// Charge movement costs for rollout moves too. When off, moves below
    /// the expanded node count as free and only the tree path is charged.
    pub rollout_movement_cost: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            horizon: 5,
            simulations: 20,
            exploration: 1.0,
            lambda: 0.5,
            metric: Metric::Cosine,
            rollout_movement_cost: true,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon == 0 {
            return Err("horizon must be at least 1".into());
        }
        if self.simulations == 0 {
            return Err("simulations must be at least 1".into());
        }
        if !(self.exploration > 0.0) || !self.exploration.is_finite() {
            return Err(format!("exploration must be positive, got {}", self.exploration));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        Ok(())
    }
}

/// Belief state a planning call starts from.
#[derive(Debug, Clone)]
pub struct RootState {
    pub pose: u32,
    pub z: BinIndex,
    pub hist: HistogramDescriptor,
    pub visited: Vec<bool>,
}

/// Upper confidence bound of one edge. Untried edges are infinitely
/// attractive.
pub fn uct_bound(q: f64, edge_visits: u32, node_visits: u32, exploration: f64) -> f64 {
    if edge_visits == 0 {
        f64::INFINITY
    } else {
        q + exploration * (2.0 * (node_visits as f64).ln() / edge_visits as f64).sqrt()
    }
}

/// Adds one sample to a running mean, visit count first.
pub fn update_reward(q: &mut f64, visits: &mut u32, reward: f64) {
    *visits += 1;
    *q += (reward - *q) / *visits as f64;
}

#[derive(Debug, Clone)]
pub(crate) struct Edge {
    pub q: f64,
    pub n: u32,
    pub child: Option<usize>,
    pub landing: u32,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub depth: u32,
    pub z: BinIndex,
    pub hist: HistogramDescriptor,
    pub pose: u32,
    pub visited: Vec<bool>,
    pub posterior: ClassPosterior,
    pub n: u32,
    pub edges: BTreeMap<ActionKey, Edge>,
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    pub(crate) nodes: Vec<Node>,
}

impl SearchTree {
    fn new(lib: &Library, state: &RootState, metric: Metric) -> Self {
        let posterior = class_posterior(&state.hist, lib, metric);
        SearchTree {
            nodes: vec![Node {
                depth: 0,
                z: state.z,
                hist: state.hist.clone(),
                pose: state.pose,
                visited: state.visited.clone(),
                posterior,
                n: 0,
                edges: BTreeMap::new(),
            }],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_visits(&self) -> u32 {
        self.nodes[0].n
    }

    /// (key, mean reward, visits) of every tried root edge, ascending by
    /// key.
    pub fn root_edges(&self) -> Vec<(ActionKey, f64, u32)> {
        self.nodes[0]
            .edges
            .iter()
            .filter(|(_, e)| e.n > 0)
            .map(|(&k, e)| (k, e.q, e.n))
            .collect()
    }
}

/// One planned move: the quantized action chosen, a concrete action
/// realizing it, and the nominal pose it lands on.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedAction {
    pub vidx: usize,
    pub key: ActionKey,
    pub action: Action,
    pub landing: u32,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub tree: SearchTree,
    /// Reward of each simulation, in order. A simulation that finds no
    /// admissible action at the root reports exactly 0.
    pub rewards: Vec<f64>,
    /// Most-visited-value path from the root: argmax mean reward among
    /// tried edges at each level, ties to the lowest key.
    pub path: Vec<PlannedAction>,
}

/// Vocabulary indices whose landing pose is still unvisited.
fn admissible(lib: &Library, pose: u32, visited: &[bool]) -> Vec<usize> {
    (0..lib.vocab().len())
        .filter(|&v| !visited[lib.landing_of(pose, v) as usize])
        .collect()
}

/// UCT argmax over non-empty `(mean reward, visit count)` stats listed in
/// ascending action-key order: the first untried entry wins outright,
/// otherwise the highest bound, ties to the earliest entry.
pub fn select_by_uct<I>(stats: I, node_visits: u32, exploration: f64) -> usize
where
    I: IntoIterator<Item = (f64, u32)>,
{
    let mut best = 0;
    let mut best_bound = f64::NEG_INFINITY;
    for (i, (q, n)) in stats.into_iter().enumerate() {
        if n == 0 {
            return i;
        }
        let bound = uct_bound(q, n, node_visits, exploration);
        if bound > best_bound {
            best_bound = bound;
            best = i;
        }
    }
    best
}

/// UCT pick among `candidates` (vocabulary indices, ascending): first
/// untried wins, otherwise the highest bound; ties keep the lowest key.
fn uct_select(
    lib: &Library,
    node: &Node,
    candidates: &[usize],
    exploration: f64,
) -> usize {
    let stats = candidates.iter().map(|&v| {
        match node.edges.get(&lib.vocab()[v].0) {
            Some(e) => (e.q, e.n),
            None => (0.0, 0),
        }
    });
    candidates[select_by_uct(stats, node.n, exploration)]
}

/// Runs the configured number of simulations from `state` and returns the
/// tree, per-simulation rewards, and the extracted best path.
pub fn tree_search<R: Rng>(
    lib: &Library,
    state: &RootState,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> SearchOutcome {
    debug_assert!(cfg.validate().is_ok());
    let mut tree = SearchTree::new(lib, state, cfg.metric);
    let per_move = cfg.lambda / cfg.horizon as f64;
    let mut rewards = Vec::with_capacity(cfg.simulations as usize);

    for _ in 0..cfg.simulations {
        // selection: walk existing children until we expand or hit the
        // horizon
        let mut node_path = vec![0usize];
        let mut edge_path: Vec<(usize, ActionKey)> = Vec::new();
        let mut edge_reward = 0.0;
        let mut depleted_root = false;
        let reward = loop {
            let idx = *node_path.last().unwrap();
            if tree.nodes[idx].depth == cfg.horizon {
                // existing leaf at full depth: evaluate, add nothing
                break edge_reward
                    + (1.0 - cfg.lambda)
                        * (1.0 - misclassification_cost(&tree.nodes[idx].posterior));
            }
            let cands = admissible(lib, tree.nodes[idx].pose, &tree.nodes[idx].visited);
            if cands.is_empty() {
                if idx == 0 {
                    // exhausted root: nothing to plan, signal depletion
                    depleted_root = true;
                    break 0.0;
                }
                break edge_reward
                    + (1.0 - cfg.lambda)
                        * (1.0 - misclassification_cost(&tree.nodes[idx].posterior));
            }
            let v = uct_select(lib, &tree.nodes[idx], &cands, cfg.exploration);
            let (key, action) = lib.vocab()[v];
            let landing = lib.landing_of(tree.nodes[idx].pose, v);
            let edge = tree.nodes[idx].edges.entry(key).or_insert_with(|| Edge {
                q: 0.0,
                n: 0,
                child: None,
                landing,
                cost: movement_cost(&action, lib.cost_norms()),
            });
            edge_path.push((idx, key));
            edge_reward += per_move * (1.0 - edge.cost);
            if let Some(child) = edge.child {
                node_path.push(child);
                continue;
            }
            // expansion: one new node per simulation
            let znext = sample_next_observation(
                tree.nodes[idx].z,
                key,
                &tree.nodes[idx].posterior,
                lib,
                rng,
            );
            let mut hist = tree.nodes[idx].hist.clone();
            hist.accumulate([znext]);
            let mut visited = tree.nodes[idx].visited.clone();
            visited[landing as usize] = true;
            let posterior = class_posterior(&hist, lib, cfg.metric);
            let child = Node {
                depth: tree.nodes[idx].depth + 1,
                z: znext,
                hist,
                pose: landing,
                visited,
                posterior,
                n: 0,
                edges: BTreeMap::new(),
            };
            let child_idx = tree.nodes.len();
            tree.nodes.push(child);
            tree.nodes[idx].edges.get_mut(&key).unwrap().child = Some(child_idx);
            node_path.push(child_idx);
            break edge_reward + rollout(lib, &tree.nodes[child_idx], cfg, per_move, rng);
        };
        // backprop (skipped entirely for a depleted root: no path taken)
        if !depleted_root {
            for &idx in &node_path {
                tree.nodes[idx].n += 1;
            }
            for &(idx, key) in &edge_path {
                let e = tree.nodes[idx].edges.get_mut(&key).unwrap();
                update_reward(&mut e.q, &mut e.n, reward);
            }
        }
        rewards.push(reward);
    }

    let path = extract_best_path(lib, &tree);
    SearchOutcome {
        tree,
        rewards,
        path,
    }
}

/// Uniform-random continuation from `node` down to the horizon; returns
/// the reward of the tail (moves below `node` plus the terminal term).
fn rollout<R: Rng>(
    lib: &Library,
    node: &Node,
    cfg: &PlannerConfig,
    per_move: f64,
    rng: &mut R,
) -> f64 {
    let mut depth = node.depth;
    let mut z = node.z;
    let mut pose = node.pose;
    let mut hist = node.hist.clone();
    let mut visited = node.visited.clone();
    let mut posterior = node.posterior.clone();
    let mut reward = 0.0;
    while depth < cfg.horizon {
        let cands = admissible(lib, pose, &visited);
        if cands.is_empty() {
            break;
        }
        let v = cands[rng.gen_range(0..cands.len())];
        let (key, action) = lib.vocab()[v];
        let landing = lib.landing_of(pose, v);
        reward += per_move
            * if cfg.rollout_movement_cost {
                1.0 - movement_cost(&action, lib.cost_norms())
            } else {
                1.0
            };
        let znext = sample_next_observation(z, key, &posterior, lib, rng);
        hist.accumulate([znext]);
        posterior = class_posterior(&hist, lib, cfg.metric);
        visited[landing as usize] = true;
        z = znext;
        pose = landing;
        depth += 1;
    }
    reward + (1.0 - cfg.lambda) * (1.0 - misclassification_cost(&posterior))
}

/// Follows the highest-mean tried edge from the root through existing
/// children. Ties go to the lowest key; stops at an untried or childless
/// level.
fn extract_best_path(lib: &Library, tree: &SearchTree) -> Vec<PlannedAction> {
    let mut path = Vec::new();
    let mut idx = 0usize;
    loop {
        let node = &tree.nodes[idx];
        let mut best: Option<(&ActionKey, &Edge)> = None;
        for (key, edge) in &node.edges {
            if edge.n == 0 {
                continue;
            }
            if best.map_or(true, |(_, b)| edge.q > b.q) {
                best = Some((key, edge));
            }
        }
        let Some((&key, edge)) = best else { break };
        let vidx = lib
            .vocab()
            .binary_search_by_key(&key, |&(k, _)| k)
            .expect("tried edge key is in the vocabulary");
        path.push(PlannedAction {
            vidx,
            key,
            action: lib.vocab()[vidx].1,
            landing: edge.landing,
        });
        match edge.child {
            Some(child) => idx = child,
            None => break,
        }
    }
    path
}
