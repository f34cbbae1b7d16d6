//! Learned observation and transition models.
//!
//! Training grasps an object from a grid of wrist poses, records the
//! triangle-bin observations of each pose, and tabulates how observations
//! transform under every quantized relative action between grid poses.
//! Recognition scores a running observation histogram against each trained
//! object and turns the distances into a class posterior.

mod io;

pub use io::{load_library, save_library, ModelError, FORMAT_VERSION};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::contact_sim::{guarded_enclosure, ContactSet, HandParams, Mesh};
use crate::descriptor::{
    bin_triangle, cosine_distance, intersection_distance, triangles_from_contacts, BinIndex,
    Binning, HistogramDescriptor,
};
use crate::geometry::{
    apply_action, discretize_action, relative_action, Action, ActionKey, CostNorms, Pose, QuantRes,
};

/// Histogram comparison used for recognition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    Intersection,
}

/// Sparse categorical rows p(z' | z, a), keyed by observation bin and
/// quantized action.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionTable {
    rows: BTreeMap<(BinIndex, ActionKey), Vec<(BinIndex, f64)>>,
}

impl TransitionTable {
    pub fn row(&self, z: BinIndex, a: ActionKey) -> Option<&[(BinIndex, f64)]> {
        self.rows.get(&(z, a)).map(|r| r.as_slice())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(BinIndex, ActionKey), &Vec<(BinIndex, f64)>)> {
        self.rows.iter()
    }

    pub(crate) fn from_rows(rows: BTreeMap<(BinIndex, ActionKey), Vec<(BinIndex, f64)>>) -> Self {
        TransitionTable { rows }
    }
}

/// Tabulates transitions over every ordered pose pair (i, j), including
/// i = j: each observation of pose i, paired with each observation of
/// pose j under the quantized action from i to j, adds one count. Rows are
/// normalized to probability one.
pub fn build_transition_table(
    poses: &[Pose],
    tallies: &[Vec<BinIndex>],
    res: &QuantRes,
) -> TransitionTable {
    assert_eq!(poses.len(), tallies.len());
    let mut counts: HashMap<(BinIndex, ActionKey), HashMap<BinIndex, u64>> = HashMap::new();
    for (i, from) in poses.iter().enumerate() {
        if tallies[i].is_empty() {
            continue;
        }
        for (j, to) in poses.iter().enumerate() {
            if tallies[j].is_empty() {
                continue;
            }
            let key = discretize_action(&relative_action(from, to), res);
            for &z in &tallies[i] {
                let row = counts.entry((z, key)).or_default();
                for &znext in &tallies[j] {
                    *row.entry(znext).or_insert(0) += 1;
                }
            }
        }
    }
    let mut rows = BTreeMap::new();
    for (key, row) in counts {
        let total: u64 = row.values().sum();
        let mut normalized: Vec<(BinIndex, f64)> = row
            .into_iter()
            .map(|(z, c)| (z, c as f64 / total as f64))
            .collect();
        normalized.sort_by_key(|&(z, _)| z);
        rows.insert(key, normalized);
    }
    TransitionTable::from_rows(rows)
}

/// One trained object: its pose grid, per-pose observations, pooled
/// descriptor, and observation-transition table.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedObject {
    label: String,
    poses: Vec<Pose>,
    tallies: Vec<Vec<BinIndex>>,
    descriptor: HistogramDescriptor,
    observed_bins: Vec<BinIndex>,
    transitions: TransitionTable,
}

impl TrainedObject {
    /// Core constructor from per-pose observation tallies. Poses with empty
    /// tallies stay in the grid but contribute nothing.
    pub fn from_tallies(
        label: impl Into<String>,
        poses: Vec<Pose>,
        tallies: Vec<Vec<BinIndex>>,
        binning: &Binning,
        res: &QuantRes,
    ) -> Result<Self, ModelError> {
        let label = label.into();
        if poses.len() != tallies.len() {
            return Err(ModelError::TallyMismatch {
                label,
                poses: poses.len(),
                tallies: tallies.len(),
            });
        }
        if poses.is_empty() {
            return Err(ModelError::NoPoses { label });
        }
        let mut descriptor = HistogramDescriptor::new(binning);
        for tally in &tallies {
            descriptor.accumulate(tally.iter().copied());
        }
        if descriptor.total() == 0 {
            return Err(ModelError::EmptyDescriptor { label });
        }
        let observed_bins: Vec<BinIndex> = descriptor.iter_nonzero().map(|(b, _)| b).collect();
        let transitions = build_transition_table(&poses, &tallies, res);
        Ok(TrainedObject {
            label,
            poses,
            tallies,
            descriptor,
            observed_bins,
            transitions,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn tallies(&self) -> &[Vec<BinIndex>] {
        &self.tallies
    }

    pub fn descriptor(&self) -> &HistogramDescriptor {
        &self.descriptor
    }

    /// Distinct bins this object was ever observed in, ascending.
    pub fn observed_bins(&self) -> &[BinIndex] {
        &self.observed_bins
    }

    pub fn transitions(&self) -> &TransitionTable {
        &self.transitions
    }
}

/// Bins the triangles of one grasp, in enumeration order.
pub fn observation_bins(contacts: &ContactSet, binning: &Binning) -> Vec<BinIndex> {
    triangles_from_contacts(&contacts.points)
        .iter()
        .map(|t| bin_triangle(t, binning))
        .collect()
}

/// Grasps the object at every grid pose and trains from the outcomes.
pub fn train_object(
    label: impl Into<String>,
    mesh: &Mesh,
    grid: Vec<Pose>,
    hand: &HandParams,
    binning: &Binning,
    res: &QuantRes,
) -> Result<TrainedObject, ModelError> {
    let contact_sets: Vec<ContactSet> = grid
        .iter()
        .map(|p| guarded_enclosure(mesh, p, hand))
        .collect();
    train_object_from_contacts(label, grid, &contact_sets, binning, res)
}

/// Trains from already-simulated grasp outcomes (one per pose).
pub fn train_object_from_contacts(
    label: impl Into<String>,
    poses: Vec<Pose>,
    contact_sets: &[ContactSet],
    binning: &Binning,
    res: &QuantRes,
) -> Result<TrainedObject, ModelError> {
    let tallies: Vec<Vec<BinIndex>> = contact_sets
        .iter()
        .map(|c| observation_bins(c, binning))
        .collect();
    TrainedObject::from_tallies(label, poses, tallies, binning, res)
}

/// Wrist-pose grid for training: rings around the object's vertical axis
/// at several heights, plus a downward-looking cap lattice above it. Every
/// ring has at least 8 poses.
pub fn generate_training_grid(
    mesh: &Mesh,
    spacing: f64,
    standoff: f64,
) -> Result<Vec<Pose>, ModelError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(ModelError::BadGridParam {
            name: "spacing",
            value: spacing,
        });
    }
    if !(standoff > 0.0) || !standoff.is_finite() {
        return Err(ModelError::BadGridParam {
            name: "standoff",
            value: standoff,
        });
    }
    let (lo, hi) = mesh.bounds();
    let center = (lo + hi) / 2.0;
    let lateral = mesh
        .vertices()
        .iter()
        .map(|v| ((v.x - center.x).powi(2) + (v.y - center.y).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let ring_radius = lateral + standoff;

    let mut poses = Vec::new();
    // lateral rings, approach axis aimed at the object's vertical axis
    let height = hi.z - lo.z;
    let levels = ((height / spacing).floor() as usize).max(1);
    for li in 0..levels {
        let z = lo.z + height * (li as f64 + 0.5) / levels as f64;
        let count = ((2.0 * std::f64::consts::PI * ring_radius / spacing).floor() as usize).max(8);
        for k in 0..count {
            let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let position = Vector3::new(
                center.x + ring_radius * a.cos(),
                center.y + ring_radius * a.sin(),
                z,
            );
            let dir = Vector3::new(-a.cos(), -a.sin(), 0.0);
            poses.push(pose_looking(position, dir));
        }
    }
    // cap lattice above the object, looking straight down
    let cap_z = hi.z + standoff;
    poses.push(pose_looking(
        Vector3::new(center.x, center.y, cap_z),
        -Vector3::z(),
    ));
    let mut r = spacing;
    while r <= lateral {
        let count = ((2.0 * std::f64::consts::PI * r / spacing).floor() as usize).max(6);
        for k in 0..count {
            let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let position =
                Vector3::new(center.x + r * a.cos(), center.y + r * a.sin(), cap_z);
            poses.push(pose_looking(position, -Vector3::z()));
        }
        r += spacing;
    }
    Ok(poses)
}

/// Pose at `position` whose approach axis (+z) points along `dir`, with a
/// deterministic roll convention.
fn pose_looking(position: Vector3<f64>, dir: Vector3<f64>) -> Pose {
    let z = dir.normalize();
    let reference = if z.dot(&Vector3::z()).abs() < 0.999 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let x = reference.cross(&z).normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    Pose::from_parts(position, q)
}

/// Class posterior over the trained objects.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    probs: Vec<f64>,
}

impl ClassPosterior {
    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0);
        ClassPosterior {
            probs: vec![1.0 / classes as f64; classes],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Argmax class, ties resolved to the lowest index.
    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[self.predicted()]
    }
}

/// Per-class descriptor distances of `h` against the library, in class
/// order. An all-zero `h` (nothing observed yet) scores 1 everywhere.
pub fn class_distances(h: &HistogramDescriptor, lib: &Library, metric: Metric) -> Vec<f64> {
    lib.objects
        .iter()
        .map(|o| {
            let d = match metric {
                Metric::Cosine => cosine_distance(h, &o.descriptor),
                Metric::Intersection => intersection_distance(h, &o.descriptor),
            };
            d.unwrap_or(1.0)
        })
        .collect()
}

/// Converts distances to a posterior: similarity 1 - d per class,
/// normalized; uniform when every similarity is zero.
pub fn posterior_from_distances(distances: &[f64]) -> ClassPosterior {
    assert!(!distances.is_empty());
    let sims: Vec<f64> = distances.iter().map(|d| (1.0 - d).max(0.0)).collect();
    let total: f64 = sims.iter().sum();
    if total <= 0.0 {
        return ClassPosterior::uniform(distances.len());
    }
    ClassPosterior {
        probs: sims.iter().map(|s| s / total).collect(),
    }
}

pub fn class_posterior(h: &HistogramDescriptor, lib: &Library, metric: Metric) -> ClassPosterior {
    posterior_from_distances(&class_distances(h, lib, metric))
}

/// Probability that the argmax class is wrong: 1 - max posterior.
pub fn misclassification_cost(posterior: &ClassPosterior) -> f64 {
    1.0 - posterior.max_prob()
}

/// Draws the next observation bin: first a class from the posterior, then
/// a bin from that class's transition row for (z, a). A (z, a) pair the
/// class never saw falls back to a uniform draw over the class's observed
/// bins.
pub fn sample_next_observation<R: Rng>(
    z: BinIndex,
    a: ActionKey,
    posterior: &ClassPosterior,
    lib: &Library,
    rng: &mut R,
) -> BinIndex {
    debug_assert_eq!(posterior.probs().len(), lib.objects.len());
    let y = categorical(posterior.probs().iter().copied(), rng);
    let object = &lib.objects[y];
    match object.transitions.row(z, a) {
        Some(row) => {
            let idx = categorical(row.iter().map(|&(_, p)| p), rng);
            row[idx].0
        }
        None => {
            let bins = object.observed_bins();
            bins[rng.gen_range(0..bins.len())]
        }
    }
}

/// Index draw from unnormalized weights by cumulative scan.
fn categorical<R: Rng>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let w: Vec<f64> = weights.collect();
    let total: f64 = w.iter().sum();
    debug_assert!(total > 0.0);
    let u = rng.gen_range(0.0..total);
    let mut cum = 0.0;
    for (i, &p) in w.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    w.len() - 1
}

/// Trained library: the objects plus the pooled action vocabulary and the
/// landing table mapping (pose, action) to the nominal pose the action
/// reaches.
#[derive(Debug, Clone)]
pub struct Library {
    objects: Vec<TrainedObject>,
    binning: Binning,
    hand: HandParams,
    res: QuantRes,
    cost_norms: CostNorms,
    /// Distinct quantized actions over all ordered pose pairs of all
    /// objects, ascending by key, each with the first concrete action that
    /// produced it.
    vocab: Vec<(ActionKey, Action)>,
    /// Global pose id -> (object index, pose index).
    pose_owner: Vec<(usize, usize)>,
    /// landing[pose id][vocab index] -> global pose id nearest to the
    /// action's endpoint.
    landing: Vec<Vec<u32>>,
}

impl Library {
    pub fn new(
        objects: Vec<TrainedObject>,
        binning: Binning,
        hand: HandParams,
        res: QuantRes,
        cost_norms: CostNorms,
    ) -> Result<Self, ModelError> {
        if objects.is_empty() {
            return Err(ModelError::EmptyLibrary);
        }
        for (i, a) in objects.iter().enumerate() {
            if a.descriptor.dims() != binning.bins() {
                return Err(ModelError::BinningMismatch {
                    label: a.label.clone(),
                });
            }
            for b in &objects[..i] {
                if a.label == b.label {
                    return Err(ModelError::DuplicateLabel(a.label.clone()));
                }
            }
        }

        let mut vocab_map: BTreeMap<ActionKey, Action> = BTreeMap::new();
        for o in &objects {
            for from in &o.poses {
                for to in &o.poses {
                    let action = relative_action(from, to);
                    let key = discretize_action(&action, &res);
                    vocab_map.entry(key).or_insert(action);
                }
            }
        }
        let vocab: Vec<(ActionKey, Action)> = vocab_map.into_iter().collect();

        let mut pose_owner = Vec::new();
        for (oi, o) in objects.iter().enumerate() {
            for pi in 0..o.poses.len() {
                pose_owner.push((oi, pi));
            }
        }

        let mut lib = Library {
            objects,
            binning,
            hand,
            res,
            cost_norms,
            vocab,
            pose_owner,
            landing: Vec::new(),
        };
        lib.landing = lib.build_landing_table();
        Ok(lib)
    }

    fn build_landing_table(&self) -> Vec<Vec<u32>> {
        use rayon::prelude::*;
        let pose_count = self.pose_owner.len();
        (0..pose_count)
            .into_par_iter()
            .map(|gid| {
                let from = *self.global_pose(gid as u32);
                self.vocab
                    .iter()
                    .map(|(_, action)| {
                        let end = apply_action(&from, action);
                        let mut best = 0u32;
                        let mut best_d = f64::INFINITY;
                        for q in 0..pose_count {
                            let d = self.pose_distance(&end, self.global_pose(q as u32));
                            if d < best_d {
                                best_d = d;
                                best = q as u32;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect()
    }

    /// Unsaturated translation + rotation distance used for nominal-pose
    /// snapping.
    fn pose_distance(&self, a: &Pose, b: &Pose) -> f64 {
        let rel = relative_action(a, b);
        rel.translation().norm() / self.cost_norms.trans()
            + rel.rotation_angle() / self.cost_norms.rot()
    }

    pub fn objects(&self) -> &[TrainedObject] {
        &self.objects
    }

    pub fn class_count(&self) -> usize {
        self.objects.len()
    }

    pub fn label(&self, class: usize) -> &str {
        self.objects[class].label()
    }

    pub fn find_class(&self, label: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.label() == label)
    }

    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    pub fn hand(&self) -> &HandParams {
        &self.hand
    }

    pub fn res(&self) -> &QuantRes {
        &self.res
    }

    pub fn cost_norms(&self) -> &CostNorms {
        &self.cost_norms
    }

    pub fn vocab(&self) -> &[(ActionKey, Action)] {
        &self.vocab
    }

    pub fn pose_count(&self) -> usize {
        self.pose_owner.len()
    }

    pub fn pose_owner(&self, gid: u32) -> (usize, usize) {
        self.pose_owner[gid as usize]
    }

    pub fn global_pose(&self, gid: u32) -> &Pose {
        let (oi, pi) = self.pose_owner[gid as usize];
        &self.objects[oi].poses[pi]
    }

    /// Nominal pose reached by executing vocab action `vidx` from pose
    /// `gid`.
    pub fn landing_of(&self, gid: u32, vidx: usize) -> u32 {
        self.landing[gid as usize][vidx]
    }
}
