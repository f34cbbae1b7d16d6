//! Wrist poses, relative actions between them, and the coarse action
//! quantization used to pool actions into a shared vocabulary.
//!
//! Orientations are unit quaternions kept in a canonical form (scalar part
//! >= 0) so that q and -q, which encode the same rotation, always quantize
//! to the same key.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("quaternion norm {0} too small to normalize")]
    DegenerateQuaternion(f64),
    #[error("normalization constant must be positive and finite, got {0}")]
    BadNormalization(f64),
    #[error("quantization resolution must be positive and finite, got {0}")]
    BadResolution(f64),
}

const MIN_QUAT_NORM: f64 = 1e-9;

/// Renormalizes and flips sign so the scalar part is non-negative.
/// Already-unit quaternions pass through bit-exactly, which keeps
/// serialize/deserialize round trips idempotent.
fn canonical_unit(w: f64, x: f64, y: f64, z: f64) -> Result<UnitQuaternion<f64>, GeometryError> {
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    if !(norm > MIN_QUAT_NORM) || !norm.is_finite() {
        return Err(GeometryError::DegenerateQuaternion(norm));
    }
    let (mut w, mut x, mut y, mut z) = if (norm - 1.0).abs() <= 1e-12 {
        (w, x, y, z)
    } else {
        (w / norm, x / norm, y / norm, z / norm)
    };
    if w < 0.0 {
        w = -w;
        x = -x;
        y = -y;
        z = -z;
    }
    Ok(UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(
        w, x, y, z,
    )))
}

fn canonicalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// A wrist pose: rigid transform from the wrist frame to the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRaw", into = "PoseRaw")]
pub struct Pose {
    translation: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize, Clone)]
struct PoseRaw {
    t: [f64; 3],
    q: [f64; 4],
}

impl TryFrom<PoseRaw> for Pose {
    type Error = GeometryError;
    fn try_from(r: PoseRaw) -> Result<Self, GeometryError> {
        Pose::new(Vector3::from(r.t), r.q)
    }
}

impl From<Pose> for PoseRaw {
    fn from(p: Pose) -> PoseRaw {
        PoseRaw {
            t: p.translation.into(),
            q: [
                p.orientation.w,
                p.orientation.i,
                p.orientation.j,
                p.orientation.k,
            ],
        }
    }
}

impl Pose {
    /// Builds a pose from a translation and a (w, x, y, z) quaternion.
    /// The quaternion is renormalized; a near-zero norm is rejected.
    pub fn new(translation: Vector3<f64>, quat_wxyz: [f64; 4]) -> Result<Self, GeometryError> {
        let [w, x, y, z] = quat_wxyz;
        Ok(Pose {
            translation,
            orientation: canonical_unit(w, x, y, z)?,
        })
    }

    pub fn identity() -> Self {
        Pose {
            translation: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn from_parts(translation: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose {
            translation,
            orientation: canonicalize(orientation),
        }
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.orientation
    }

    /// Maps a point from the wrist frame into the world frame.
    pub fn transform_point(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.translation
    }

    /// Rotates a direction from the wrist frame into the world frame.
    pub fn rotate(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    /// Composition self * other (other expressed in self's frame).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.translation + self.orientation * other.translation,
            orientation: canonicalize(self.orientation * other.orientation),
        }
    }
}

/// Relative wrist displacement: the transform from the current wrist frame
/// to the next one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRaw", into = "PoseRaw")]
pub struct Action {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl TryFrom<PoseRaw> for Action {
    type Error = GeometryError;
    fn try_from(r: PoseRaw) -> Result<Self, GeometryError> {
        Action::new(Vector3::from(r.t), r.q)
    }
}

impl From<Action> for PoseRaw {
    fn from(a: Action) -> PoseRaw {
        PoseRaw {
            t: a.translation.into(),
            q: [a.rotation.w, a.rotation.i, a.rotation.j, a.rotation.k],
        }
    }
}

impl Action {
    pub fn new(translation: Vector3<f64>, quat_wxyz: [f64; 4]) -> Result<Self, GeometryError> {
        let [w, x, y, z] = quat_wxyz;
        Ok(Action {
            translation,
            rotation: canonical_unit(w, x, y, z)?,
        })
    }

    pub fn identity() -> Self {
        Action {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn from_parts(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Action {
            translation,
            rotation: canonicalize(rotation),
        }
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    /// Rotation magnitude in radians, in [0, pi].
    pub fn rotation_angle(&self) -> f64 {
        2.0 * self.rotation.w.abs().min(1.0).acos()
    }

    /// The action undoing this one.
    pub fn inverse(&self) -> Action {
        let inv = self.rotation.inverse();
        Action {
            translation: -(inv * self.translation),
            rotation: canonicalize(inv),
        }
    }
}

/// Action that moves the wrist from `from` to `to`, expressed in `from`'s
/// frame. Invariant under any common world-frame motion of both poses.
pub fn relative_action(from: &Pose, to: &Pose) -> Action {
    let inv = from.orientation.inverse();
    Action {
        translation: inv * (to.translation - from.translation),
        rotation: canonicalize(inv * to.orientation),
    }
}

/// Executes a relative action from a pose: the returned pose satisfies
/// `apply_action(p, relative_action(p, q)) == q`.
pub fn apply_action(pose: &Pose, action: &Action) -> Pose {
    Pose {
        translation: pose.translation + pose.orientation * action.translation,
        orientation: canonicalize(pose.orientation * action.rotation),
    }
}

/// Normalization constants for the movement cost. Both must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostNormsRaw", into = "CostNormsRaw")]
pub struct CostNorms {
    trans: f64,
    rot: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct CostNormsRaw {
    trans: f64,
    rot: f64,
}

impl TryFrom<CostNormsRaw> for CostNorms {
    type Error = GeometryError;
    fn try_from(r: CostNormsRaw) -> Result<Self, GeometryError> {
        CostNorms::new(r.trans, r.rot)
    }
}

impl From<CostNorms> for CostNormsRaw {
    fn from(n: CostNorms) -> CostNormsRaw {
        CostNormsRaw {
            trans: n.trans,
            rot: n.rot,
        }
    }
}

impl CostNorms {
    pub fn new(trans: f64, rot: f64) -> Result<Self, GeometryError> {
        if !(trans > 0.0) || !trans.is_finite() {
            return Err(GeometryError::BadNormalization(trans));
        }
        if !(rot > 0.0) || !rot.is_finite() {
            return Err(GeometryError::BadNormalization(rot));
        }
        Ok(CostNorms { trans, rot })
    }

    pub fn trans(&self) -> f64 {
        self.trans
    }

    pub fn rot(&self) -> f64 {
        self.rot
    }
}

impl Default for CostNorms {
    fn default() -> Self {
        CostNorms {
            trans: 0.30,
            rot: std::f64::consts::PI,
        }
    }
}

/// Movement cost of an action: equal-weight sum of a translation term and a
/// rotation term, each clipped at 1, so the result lies in [0, 1].
pub fn movement_cost(action: &Action, norms: &CostNorms) -> f64 {
    let t = (action.translation.norm() / norms.trans).min(1.0);
    let r = (action.rotation_angle() / norms.rot).min(1.0);
    0.5 * t + 0.5 * r
}

/// Floor-quantization resolutions for pooling actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuantResRaw", into = "QuantResRaw")]
pub struct QuantRes {
    trans: f64,
    quat: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct QuantResRaw {
    trans: f64,
    quat: f64,
}

impl TryFrom<QuantResRaw> for QuantRes {
    type Error = GeometryError;
    fn try_from(r: QuantResRaw) -> Result<Self, GeometryError> {
        QuantRes::new(r.trans, r.quat)
    }
}

impl From<QuantRes> for QuantResRaw {
    fn from(q: QuantRes) -> QuantResRaw {
        QuantResRaw {
            trans: q.trans,
            quat: q.quat,
        }
    }
}

impl QuantRes {
    pub fn new(trans: f64, quat: f64) -> Result<Self, GeometryError> {
        if !(trans > 0.0) || !trans.is_finite() {
            return Err(GeometryError::BadResolution(trans));
        }
        if !(quat > 0.0) || !quat.is_finite() {
            return Err(GeometryError::BadResolution(quat));
        }
        Ok(QuantRes { trans, quat })
    }

    pub fn trans(&self) -> f64 {
        self.trans
    }

    pub fn quat(&self) -> f64 {
        self.quat
    }
}

impl Default for QuantRes {
    fn default() -> Self {
        QuantRes {
            trans: 0.06,
            quat: 0.05,
        }
    }
}

/// Integer cell coordinates of a floor-quantized action. Total order and
/// hashing make keys usable for vocabulary pooling and deterministic
/// tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionKey {
    pub t: [i64; 3],
    pub q: [i64; 4],
}

/// Quantizes an action onto the shared vocabulary grid: each translation
/// component is floored at `res.trans`, each canonical quaternion component
/// at `res.quat`.
pub fn discretize_action(action: &Action, res: &QuantRes) -> ActionKey {
    let cell = |v: f64, r: f64| (v / r).floor() as i64;
    let t = action.translation;
    let q = action.rotation;
    ActionKey {
        t: [
            cell(t.x, res.trans),
            cell(t.y, res.trans),
            cell(t.z, res.trans),
        ],
        q: [
            cell(q.w, res.quat),
            cell(q.i, res.quat),
            cell(q.j, res.quat),
            cell(q.k, res.quat),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const EPSILON: f64 = 1e-9;

    fn homogeneous(t: Vector3<f64>, q: UnitQuaternion<f64>) -> Matrix4<f64> {
        let mut m = q.to_rotation_matrix().to_homogeneous();
        m[(0, 3)] = t.x;
        m[(1, 3)] = t.y;
        m[(2, 3)] = t.z;
        m
    }

    fn pose_matrix(p: &Pose) -> Matrix4<f64> {
        homogeneous(p.translation(), p.orientation())
    }

    fn random_pose(rng: &mut StdRng) -> Pose {
        let t = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let q = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        match Pose::new(t, q) {
            Ok(p) => p,
            Err(_) => Pose::identity(),
        }
    }

    fn matrices_close(a: &Matrix4<f64>, b: &Matrix4<f64>, tol: f64) -> bool {
        (a - b).iter().all(|d| d.abs() <= tol)
    }

    #[test]
    fn relative_action_of_equal_poses_is_identity() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let p = random_pose(&mut rng);
            let a = relative_action(&p, &p);
            assert!(a.translation().norm() <= EPSILON);
            // acos near 1 is ill-conditioned; compare components instead
            let q = a.rotation();
            assert!((q.w - 1.0).abs() <= EPSILON);
            assert!(q.vector().norm() <= EPSILON);
        }
    }

    #[test]
    fn relative_action_pure_translation() {
        let p = Pose::identity();
        let q = Pose::new(Vector3::new(1.0, 0.0, 0.0), [1.0, 0.0, 0.0, 0.0]).unwrap();
        let a = relative_action(&p, &q);
        assert!((a.translation() - Vector3::new(1.0, 0.0, 0.0)).norm() <= EPSILON);
        assert!(a.rotation_angle() <= EPSILON);
    }

    /// Composition checked against an independent 4x4 homogeneous-matrix
    /// route: M(apply_action(p, a)) must equal M(p) * M(a).
    #[test]
    fn apply_action_matches_matrix_composition() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            let q = random_pose(&mut rng);
            let a = relative_action(&p, &q);
            let composed = apply_action(&p, &a);

            let m_expected = pose_matrix(&p) * homogeneous(a.translation(), a.rotation());
            assert!(matrices_close(&pose_matrix(&composed), &m_expected, EPSILON));
            // and the round trip lands on q
            assert!(matrices_close(&pose_matrix(&composed), &pose_matrix(&q), EPSILON));
        }
    }

    #[test]
    fn zero_quaternion_rejected() {
        let err = Pose::new(Vector3::zeros(), [0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(err, Err(GeometryError::DegenerateQuaternion(_))));
    }

    #[test]
    fn movement_cost_identity_is_zero() {
        let norms = CostNorms::default();
        assert_eq!(movement_cost(&Action::identity(), &norms), 0.0);
    }

    #[test]
    fn movement_cost_pure_translation() {
        let norms = CostNorms::new(0.30, std::f64::consts::PI).unwrap();
        let a = Action::new(Vector3::new(0.15, 0.0, 0.0), [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((movement_cost(&a, &norms) - 0.25).abs() <= EPSILON);
    }

    #[test]
    fn movement_cost_pure_rotation() {
        let norms = CostNorms::new(0.30, std::f64::consts::PI).unwrap();
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let a = Action::from_parts(Vector3::zeros(), q);
        assert!((movement_cost(&a, &norms) - 0.25).abs() <= EPSILON);
    }

    #[test]
    fn movement_cost_translation_saturates() {
        let norms = CostNorms::new(0.30, std::f64::consts::PI).unwrap();
        for mag in [0.30, 0.5, 10.0] {
            let a = Action::new(Vector3::new(mag, 0.0, 0.0), [1.0, 0.0, 0.0, 0.0]).unwrap();
            assert!((movement_cost(&a, &norms) - 0.5).abs() <= EPSILON);
        }
    }

    #[test]
    fn movement_cost_rejects_bad_norms() {
        assert!(CostNorms::new(0.0, 1.0).is_err());
        assert!(CostNorms::new(1.0, -2.0).is_err());
        assert!(CostNorms::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn discretize_identity_action() {
        let key = discretize_action(&Action::identity(), &QuantRes::default());
        assert_eq!(key.t, [0, 0, 0]);
        assert_eq!(key.q, [20, 0, 0, 0]);
    }

    #[test]
    fn discretize_same_cell_translations() {
        let res = QuantRes::default();
        let a = Action::new(Vector3::new(0.030, 0.0, 0.0), [1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Action::new(Vector3::new(0.031, 0.0, 0.0), [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(discretize_action(&a, &res), discretize_action(&b, &res));
    }

    #[test]
    fn discretize_quaternion_sign_flip_same_key() {
        let res = QuantRes::default();
        let a = Action::new(Vector3::zeros(), [0.5, 0.5, 0.5, 0.5]).unwrap();
        let b = Action::new(Vector3::zeros(), [-0.5, -0.5, -0.5, -0.5]).unwrap();
        assert_eq!(discretize_action(&a, &res), discretize_action(&b, &res));
    }

    /// Cell centers re-quantize to their own cell: flooring is stable away
    /// from boundaries.
    #[test]
    fn discretize_cell_centers_stable() {
        let res = QuantRes::default();
        for i in -5i64..5 {
            for j in -5i64..5 {
                let t = Vector3::new(
                    (i as f64 + 0.5) * res.trans(),
                    (j as f64 + 0.5) * res.trans(),
                    0.5 * res.trans(),
                );
                let a = Action::new(t, [1.0, 0.0, 0.0, 0.0]).unwrap();
                let key = discretize_action(&a, &res);
                assert_eq!(key.t, [i, j, 0]);
            }
        }
    }

    #[test]
    fn quant_res_rejects_non_positive() {
        assert!(QuantRes::new(0.0, 0.05).is_err());
        assert!(QuantRes::new(0.06, -0.05).is_err());
    }

    proptest! {
        /// apply_action(p, relative_action(p, q)) recovers q, checked with
        /// the matrix oracle.
        #[test]
        fn prop_relative_apply_round_trip(seed in 0u64..5000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let p = random_pose(&mut rng);
            let q = random_pose(&mut rng);
            let back = apply_action(&p, &relative_action(&p, &q));
            prop_assert!(matrices_close(&pose_matrix(&back), &pose_matrix(&q), EPSILON));
        }

        /// relative_action is invariant under a common world-frame motion.
        #[test]
        fn prop_relative_action_frame_invariant(seed in 0u64..5000) {
            let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(2654435761).wrapping_add(1));
            let p = random_pose(&mut rng);
            let q = random_pose(&mut rng);
            let g = random_pose(&mut rng);
            let a = relative_action(&p, &q);
            let b = relative_action(&g.compose(&p), &g.compose(&q));
            prop_assert!((a.translation() - b.translation()).norm() <= 1e-8);
            let qa = a.rotation();
            let qb = b.rotation();
            let dot = (qa.w * qb.w + qa.i * qb.i + qa.j * qb.j + qa.k * qb.k).abs();
            prop_assert!(dot >= 1.0 - 1e-8);
        }

        /// Cost is symmetric under action inversion and lies in [0, 1].
        #[test]
        fn prop_movement_cost_symmetric_bounded(seed in 0u64..5000) {
            let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9e3779b9).wrapping_add(3));
            let p = random_pose(&mut rng);
            let q = random_pose(&mut rng);
            let a = relative_action(&p, &q);
            let norms = CostNorms::default();
            let c = movement_cost(&a, &norms);
            let ci = movement_cost(&a.inverse(), &norms);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!((c - ci).abs() <= EPSILON);
        }
    }
}
