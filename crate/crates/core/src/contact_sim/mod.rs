//! Geometric grasp simulation: a three-finger hand teleports to a wrist
//! pose and closes each finger along a circular sweep until it first
//! penetrates the object, reporting the penetrating sensor sites projected
//! back onto the surface as Boolean contact points.

mod mesh;
mod primitives;

pub use mesh::{Mesh, MeshError};
pub use primitives::{make_primitive, PrimitiveKind};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::geometry::Pose;

#[derive(Debug, Error, PartialEq)]
pub enum HandError {
    #[error("hand parameter {name} = {value} is invalid")]
    BadParam { name: &'static str, value: f64 },
}

/// Kinematic description of the simulated hand. Fingers sit at equal
/// angular spacing about the wrist approach axis (+z of the wrist frame)
/// on the palm rim, and each closes along a single-DOF circular sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct HandParams {
    pub finger_count: u32,
    pub sensors_per_finger: u32,
    /// Finger length in meters; sensor sites are spaced evenly along it.
    pub finger_length: f64,
    /// Distance of the finger bases from the wrist axis, meters.
    pub palm_radius: f64,
    /// Angular spacing between adjacent fingers, radians.
    pub finger_spread_angle: f64,
    /// Number of discrete steps in the closing sweep.
    pub sweep_steps: u32,
}

impl Default for HandParams {
    fn default() -> Self {
        HandParams {
            finger_count: 3,
            sensors_per_finger: 9,
            finger_length: 0.16,
            palm_radius: 0.04,
            finger_spread_angle: 2.0 * PI / 3.0,
            sweep_steps: 64,
        }
    }
}

impl HandParams {
    pub fn validate(&self) -> Result<(), HandError> {
        let bad = |name: &'static str, value: f64| HandError::BadParam { name, value };
        if self.finger_count == 0 {
            return Err(bad("finger_count", 0.0));
        }
        if self.sensors_per_finger == 0 {
            return Err(bad("sensors_per_finger", 0.0));
        }
        if !(self.finger_length > 0.0) {
            return Err(bad("finger_length", self.finger_length));
        }
        if !(self.palm_radius > 0.0) {
            return Err(bad("palm_radius", self.palm_radius));
        }
        if !(self.finger_spread_angle > 0.0) {
            return Err(bad("finger_spread_angle", self.finger_spread_angle));
        }
        if self.sweep_steps == 0 {
            return Err(bad("sweep_steps", 0.0));
        }
        Ok(())
    }

    pub fn total_sensor_sites(&self) -> u32 {
        self.finger_count * self.sensors_per_finger
    }
}

/// Sweep angle at which fingers start (splayed outward past the palm
/// plane) and stop (curled inward), measured from the approach axis.
const SWEEP_OPEN: f64 = 0.60 * PI;
const SWEEP_CLOSE: f64 = -0.45 * PI;

/// Boolean contact points of one executed grasp, in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet {
    pub points: Vec<Vector3<f64>>,
    pub wrist: Pose,
}

impl ContactSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Per-finger sweep outcome, for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerTrace {
    /// Sweep step at which the finger halted, if it touched at all.
    pub halt_step: Option<u32>,
    /// Indices into `ContactSet::points` contributed by this finger.
    pub contact_indices: Vec<usize>,
}

/// Closes all fingers around the object from a teleported wrist pose.
/// Each finger halts at the first sweep step where any of its sensor
/// sites falls inside the mesh; those sites, projected to the nearest
/// surface point, are the finger's contacts.
pub fn guarded_enclosure(mesh: &Mesh, wrist: &Pose, hand: &HandParams) -> ContactSet {
    guarded_enclosure_traced(mesh, wrist, hand).0
}

/// As `guarded_enclosure`, also reporting per-finger halt steps.
pub fn guarded_enclosure_traced(
    mesh: &Mesh,
    wrist: &Pose,
    hand: &HandParams,
) -> (ContactSet, Vec<FingerTrace>) {
    hand.validate().expect("hand parameters already validated");
    let mut points = Vec::new();
    let mut traces = Vec::with_capacity(hand.finger_count as usize);

    for finger in 0..hand.finger_count {
        let theta = finger as f64 * hand.finger_spread_angle;
        let radial = Vector3::new(theta.cos(), theta.sin(), 0.0);
        let base = radial * hand.palm_radius;

        let mut trace = FingerTrace {
            halt_step: None,
            contact_indices: Vec::new(),
        };
        'sweep: for step in 0..=hand.sweep_steps {
            let phi =
                SWEEP_OPEN + (SWEEP_CLOSE - SWEEP_OPEN) * step as f64 / hand.sweep_steps as f64;
            let dir = radial * phi.sin() + Vector3::z() * phi.cos();
            let mut penetrating: Vec<Vector3<f64>> = Vec::new();
            for s in 1..=hand.sensors_per_finger {
                let reach = hand.finger_length * s as f64 / hand.sensors_per_finger as f64;
                let site = wrist.transform_point(base + dir * reach);
                if mesh.contains(&site) {
                    penetrating.push(site);
                }
            }
            if !penetrating.is_empty() {
                trace.halt_step = Some(step);
                for site in penetrating {
                    trace.contact_indices.push(points.len());
                    points.push(mesh.nearest_surface_point(&site));
                }
                break 'sweep;
            }
        }
        traces.push(trace);
    }

    (
        ContactSet {
            points,
            wrist: *wrist,
        },
        traces,
    )
}
