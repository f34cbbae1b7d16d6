//! Recognition episodes: repeatedly plan (or guess), move the wrist to a
//! nominal pose, grasp the real object, and fold the observed triangles
//! into the running histogram until the pose pool depletes or the
//! iteration cap is hit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

use super::{tree_search, PlannerConfig, RootState};
use crate::contact_sim::{guarded_enclosure, Mesh};
use crate::descriptor::{BinIndex, HistogramDescriptor};
use crate::model::{class_distances, observation_bins, posterior_from_distances, Library};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Full-horizon tree search.
    Tree,
    /// Tree search truncated to a single move of lookahead.
    Greedy,
    /// Uniform draw over unvisited poses, no model, no planning.
    Random,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Tree => "tree",
            Policy::Greedy => "greedy",
            Policy::Random => "random",
        }
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid planner configuration: {0}")]
    BadConfig(String),
    #[error("no grasp in the pose pool produced an observation")]
    NoContact,
    #[error("true class {0} is not in the library")]
    BadClass(usize),
}

/// State logged after every iteration. Iteration 0 is the initial grasp,
/// before any planned move.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: u32,
    /// Cumulative executed wrist relocations, failed initial attempts
    /// included.
    pub moves: u32,
    /// Cumulative contact points observed.
    pub contacts: usize,
    pub pose: u32,
    pub predicted: usize,
    pub correct: bool,
    /// Per-class descriptor distances, in library order.
    pub distances: Vec<f64>,
    pub posterior: Vec<f64>,
    /// Per-simulation planning rewards of this iteration; empty for
    /// iteration 0 and for the random policy.
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub true_class: usize,
    pub records: Vec<IterationRecord>,
    /// Episode ended because planning found no admissible action (every
    /// simulation returned exactly zero), not because of the iteration
    /// cap.
    pub depleted: bool,
}

struct EpisodeState {
    h: HistogramDescriptor,
    z: BinIndex,
    pose: u32,
    visited: Vec<bool>,
    moves: u32,
    contacts: usize,
}

impl EpisodeState {
    /// Grasps the true object at nominal pose `gid` and folds the result
    /// in. Returns how many observation bins the grasp produced.
    fn grasp(&mut self, lib: &Library, mesh: &Mesh, gid: u32) -> usize {
        self.pose = gid;
        self.visited[gid as usize] = true;
        let contacts = guarded_enclosure(mesh, lib.global_pose(gid), lib.hand());
        self.contacts += contacts.len();
        let tally = observation_bins(&contacts, lib.binning());
        let produced = tally.len();
        if let Some(&last) = tally.last() {
            self.z = last;
        }
        self.h.accumulate(tally);
        produced
    }

    fn record(&self, lib: &Library, cfg: &PlannerConfig, true_class: usize, iter: u32, rewards: Vec<f64>) -> IterationRecord {
        let distances = class_distances(&self.h, lib, cfg.metric);
        let posterior = posterior_from_distances(&distances);
        let predicted = posterior.predicted();
        IterationRecord {
            iter,
            moves: self.moves,
            contacts: self.contacts,
            pose: self.pose,
            predicted,
            correct: predicted == true_class,
            distances,
            posterior: posterior.probs().to_vec(),
            rewards,
        }
    }
}

/// Runs one recognition episode of `policy` against the true object
/// `mesh` (labelled `true_class` in the library). Deterministic in
/// `seed`.
pub fn run_episode(
    lib: &Library,
    mesh: &Mesh,
    true_class: usize,
    policy: Policy,
    cfg: &PlannerConfig,
    max_iterations: u32,
    seed: u64,
) -> Result<EpisodeResult, EpisodeError> {
    cfg.validate().map_err(EpisodeError::BadConfig)?;
    if true_class >= lib.class_count() {
        return Err(EpisodeError::BadClass(true_class));
    }
    let cfg = match policy {
        Policy::Greedy => PlannerConfig {
            horizon: 1,
            ..*cfg
        },
        _ => *cfg,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = EpisodeState {
        h: HistogramDescriptor::new(lib.binning()),
        z: BinIndex::default(),
        pose: 0,
        visited: vec![false; lib.pose_count()],
        moves: 0,
        contacts: 0,
    };

    // initial grasp: draw poses until one yields at least one triangle;
    // every failed attempt burns the pose and counts as a move
    loop {
        let Some(gid) = draw_unvisited(&state.visited, &mut rng) else {
            return Err(EpisodeError::NoContact);
        };
        if state.grasp(lib, mesh, gid) > 0 {
            break;
        }
        state.moves += 1;
    }
    let mut records = vec![state.record(lib, &cfg, true_class, 0, Vec::new())];
    let mut depleted = false;

    for iter in 1..=max_iterations {
        match policy {
            Policy::Tree | Policy::Greedy => {
                let root = RootState {
                    pose: state.pose,
                    z: state.z,
                    hist: state.h.clone(),
                    visited: state.visited.clone(),
                };
                let out = tree_search(lib, &root, &cfg, &mut rng);
                if out.path.is_empty() {
                    // pool depleted: log the all-zero planning rewards and
                    // stop
                    records.push(state.record(lib, &cfg, true_class, iter, out.rewards));
                    depleted = true;
                    break;
                }
                let step = &out.path[0];
                state.moves += 1;
                state.grasp(lib, mesh, step.landing);
                records.push(state.record(lib, &cfg, true_class, iter, out.rewards));
            }
            Policy::Random => {
                let Some(gid) = draw_unvisited(&state.visited, &mut rng) else {
                    depleted = true;
                    break;
                };
                state.moves += 1;
                state.grasp(lib, mesh, gid);
                records.push(state.record(lib, &cfg, true_class, iter, Vec::new()));
            }
        }
    }

    Ok(EpisodeResult {
        true_class,
        records,
        depleted,
    })
}

/// Uniform-random recognition baseline; visits poses without replacement
/// until the pool is exhausted or the cap is hit.
pub fn random_policy(
    lib: &Library,
    mesh: &Mesh,
    true_class: usize,
    max_iterations: u32,
    seed: u64,
) -> Result<EpisodeResult, EpisodeError> {
    run_episode(
        lib,
        mesh,
        true_class,
        Policy::Random,
        &PlannerConfig::default(),
        max_iterations,
        seed,
    )
}

fn draw_unvisited<R: Rng>(visited: &[bool], rng: &mut R) -> Option<u32> {
    let pool: Vec<u32> = visited
        .iter()
        .enumerate()
        .filter(|(_, &v)| !v)
        .map(|(i, _)| i as u32)
        .collect();
    if pool.is_empty() {
        None
    } else {
        Some(pool[rng.gen_range(0..pool.len())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_sim::{make_primitive, HandParams, PrimitiveKind};
    use crate::descriptor::Binning;
    use crate::geometry::{CostNorms, Pose, QuantRes};
    use crate::model::{generate_training_grid, train_object, Library, TrainedObject};
    use nalgebra::Vector3;
    use std::sync::OnceLock;

    fn sphere_library() -> &'static (Library, Mesh) {
        static LIB: OnceLock<(Library, Mesh)> = OnceLock::new();
        LIB.get_or_init(|| {
            let mesh = make_primitive(&PrimitiveKind::Sphere { radius: 0.035 }, 24).unwrap();
            let binning = Binning::default();
            let res = QuantRes::default();
            let grid = generate_training_grid(&mesh, 0.04, 0.08).unwrap();
            let obj =
                train_object("sphere", &mesh, grid, &HandParams::default(), &binning, &res)
                    .unwrap();
            let lib = Library::new(
                vec![obj],
                binning,
                HandParams::default(),
                res,
                CostNorms::default(),
            )
            .unwrap();
            (lib, mesh)
        })
    }

    #[test]
    fn single_class_is_correct_from_the_start() {
        let (lib, mesh) = sphere_library();
        let result = run_episode(
            lib,
            mesh,
            0,
            Policy::Tree,
            &PlannerConfig::default(),
            1000,
            7,
        )
        .unwrap();
        assert!(result.records[0].correct);
        assert!(result.records.iter().all(|r| r.correct));
        assert_eq!(result.records[0].posterior, vec![1.0]);
    }

    #[test]
    fn episode_terminates_by_depletion_with_zero_rewards() {
        let (lib, mesh) = sphere_library();
        let result = run_episode(
            lib,
            mesh,
            0,
            Policy::Tree,
            &PlannerConfig::default(),
            1000,
            11,
        )
        .unwrap();
        assert!(result.depleted);
        let last = result.records.last().unwrap();
        assert!(!last.rewards.is_empty());
        assert!(last.rewards.iter().all(|&r| r == 0.0));
        // every earlier iteration had signal
        for r in &result.records[1..result.records.len() - 1] {
            assert!(r.rewards.iter().any(|&x| x > 0.0), "iter {}", r.iter);
        }
    }

    #[test]
    fn iterations_are_consistent() {
        let (lib, mesh) = sphere_library();
        let result = run_episode(
            lib,
            mesh,
            0,
            Policy::Tree,
            &PlannerConfig::default(),
            1000,
            3,
        )
        .unwrap();
        for (i, r) in result.records.iter().enumerate() {
            assert_eq!(r.iter, i as u32);
        }
        for pair in result.records.windows(2) {
            assert!(pair[1].moves >= pair[0].moves);
            assert!(pair[1].contacts >= pair[0].contacts);
        }
        // rewards in range everywhere
        for r in &result.records {
            for &x in &r.rewards {
                assert!((0.0..=1.0 + 1e-12).contains(&x));
            }
        }
    }

    #[test]
    fn episodes_are_deterministic_in_the_seed() {
        let (lib, mesh) = sphere_library();
        let run = |seed| {
            run_episode(
                lib,
                mesh,
                0,
                Policy::Tree,
                &PlannerConfig::default(),
                60,
                seed,
            )
            .unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5).records, run(6).records);
    }

    #[test]
    fn greedy_plans_one_move_deep() {
        let (lib, mesh) = sphere_library();
        let result = run_episode(
            lib,
            mesh,
            0,
            Policy::Greedy,
            &PlannerConfig::default(),
            10,
            13,
        )
        .unwrap();
        assert!(result.records.len() > 1);
        let planned = &result.records[1];
        assert_eq!(
            planned.rewards.len(),
            PlannerConfig::default().simulations as usize
        );
    }

    #[test]
    fn random_visits_without_replacement_to_exhaustion() {
        let (lib, mesh) = sphere_library();
        let result = random_policy(lib, mesh, 0, 10_000, 99).unwrap();
        assert!(result.depleted);
        let mut seen = std::collections::BTreeSet::new();
        for r in &result.records {
            assert!(seen.insert(r.pose), "pose {} revisited", r.pose);
        }
        // initial failures plus logged grasps cover the whole pool
        let logged = result.records.len() as u32;
        let failures = result.records[0].moves;
        assert_eq!(logged + failures, lib.pose_count() as u32);
    }

    #[test]
    fn unreachable_poses_error_out() {
        // a fabricated library whose nominal poses never touch the object
        let binning = Binning::default();
        let res = QuantRes::default();
        let far = |x: f64| {
            Pose::new(Vector3::new(x, 5.0, 5.0), [1.0, 0.0, 0.0, 0.0]).unwrap()
        };
        let obj = TrainedObject::from_tallies(
            "ghost",
            vec![far(0.0), far(0.2)],
            vec![vec![BinIndex([1, 1, 1])], vec![BinIndex([2, 2, 2])]],
            &binning,
            &res,
        )
        .unwrap();
        let lib = Library::new(
            vec![obj],
            binning,
            HandParams::default(),
            res,
            CostNorms::default(),
        )
        .unwrap();
        let mesh = make_primitive(&PrimitiveKind::Sphere { radius: 0.03 }, 16).unwrap();
        let err = run_episode(
            &lib,
            &mesh,
            0,
            Policy::Tree,
            &PlannerConfig::default(),
            100,
            1,
        );
        assert!(matches!(err, Err(EpisodeError::NoContact)));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let (lib, mesh) = sphere_library();
        let bad_cfg = PlannerConfig {
            lambda: 2.0,
            ..PlannerConfig::default()
        };
        assert!(matches!(
            run_episode(lib, mesh, 0, Policy::Tree, &bad_cfg, 10, 1),
            Err(EpisodeError::BadConfig(_))
        ));
        assert!(matches!(
            run_episode(lib, mesh, 9, Policy::Tree, &PlannerConfig::default(), 10, 1),
            Err(EpisodeError::BadClass(9))
        ));
    }
}
