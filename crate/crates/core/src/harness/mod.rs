//! Experiment harness: a declarative experiment configuration, library
//! training from it, and the train / recognize / compare commands the
//! binary exposes.

mod compare;
mod csv;
mod svg;

pub use compare::{
    group_curve, run_compare, write_compare_outputs, CellResult, CompareResults, GroupCurve,
    POLICIES,
};
pub use csv::write_episode_csv;
pub use svg::{plot_lines, PlotSeries, PlotStyle};

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

use crate::contact_sim::{make_primitive, HandParams, Mesh, MeshError};
use crate::descriptor::Binning;
use crate::geometry::{CostNorms, QuantRes};
use crate::model::{
    generate_training_grid, train_object, Library, ModelError, TrainedObject,
};
use crate::planner::{EpisodeError, PlannerConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    BadConfig(String),
    #[error("unknown object label `{0}`")]
    UnknownObject(String),
    #[error("model does not match configuration: {0}")]
    ModelMismatch(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One object of the experiment: a label and the geometry that realizes
/// it, either a parametric primitive or a triangle mesh on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub label: String,
    #[serde(flatten)]
    pub shape: ShapeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeSpec {
    Primitive(crate::contact_sim::PrimitiveKind),
    ObjFile { obj: std::path::PathBuf },
}

/// Full experiment description. The default is the five-object desk set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objects: Vec<ObjectSpec>,
    /// Mesh tessellation segments.
    pub tessellation: u32,
    /// Training grid pose spacing, meters.
    pub spacing: f64,
    /// Training grid standoff from the object surface, meters.
    pub standoff: f64,
    pub binning: Binning,
    pub quantization: QuantRes,
    pub cost_norms: CostNorms,
    pub hand: HandParams,
    pub planner: PlannerConfig,
    /// Episode repetitions per object and policy.
    pub seeds: u32,
    /// Master seed the per-episode seeds derive from.
    pub seed_base: u64,
    /// Iteration cap per episode.
    pub max_iterations: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        use crate::contact_sim::PrimitiveKind as K;
        let spec = |label: &str, shape: K| ObjectSpec {
            label: label.to_owned(),
            shape: ShapeSpec::Primitive(shape),
        };
        ExperimentConfig {
            // five primitives tuned for mutually distinct triangle
            // signatures: small ball, broad slab, thin rod, thin-walled
            // cup, thick-walled shallow bowl. With 0.028 m spacing each
            // trains from 33-59 poses.
            objects: vec![
                spec("sphere", K::Sphere { radius: 0.035 }),
                spec(
                    "box",
                    K::Box {
                        x: 0.11,
                        y: 0.11,
                        z: 0.03,
                    },
                ),
                spec(
                    "cylinder",
                    K::Cylinder {
                        radius: 0.015,
                        height: 0.095,
                    },
                ),
                spec(
                    "open_cup",
                    K::OpenCup {
                        radius: 0.035,
                        height: 0.08,
                        thickness: 0.006,
                    },
                ),
                spec(
                    "bowl",
                    K::Bowl {
                        radius: 0.05,
                        thickness: 0.012,
                    },
                ),
            ],
            tessellation: 24,
            spacing: 0.028,
            standoff: 0.07,
            binning: Binning::default(),
            quantization: QuantRes::default(),
            cost_norms: CostNorms::default(),
            hand: HandParams::default(),
            planner: PlannerConfig::default(),
            seeds: 20,
            seed_base: 7,
            max_iterations: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.objects.is_empty() {
            return Err(HarnessError::BadConfig("no objects".into()));
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[..i] {
                if a.label == b.label {
                    return Err(HarnessError::BadConfig(format!(
                        "duplicate object label `{}`",
                        a.label
                    )));
                }
            }
        }
        if self.tessellation < 3 {
            return Err(HarnessError::BadConfig(format!(
                "tessellation must be at least 3, got {}",
                self.tessellation
            )));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(HarnessError::BadConfig(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        if !(self.standoff > 0.0) || !self.standoff.is_finite() {
            return Err(HarnessError::BadConfig(format!(
                "standoff must be positive, got {}",
                self.standoff
            )));
        }
        if self.seeds == 0 {
            return Err(HarnessError::BadConfig("seeds must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(HarnessError::BadConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        self.planner.validate().map_err(HarnessError::BadConfig)?;
        self.hand
            .validate()
            .map_err(|e| HarnessError::BadConfig(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Compact single-line form, embedded in every output file.
    pub fn provenance(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn mesh(&self, index: usize) -> Result<Mesh, HarnessError> {
        match &self.objects[index].shape {
            ShapeSpec::Primitive(kind) => Ok(make_primitive(kind, self.tessellation)?),
            ShapeSpec::ObjFile { obj } => Ok(Mesh::load_obj(obj)?),
        }
    }

    pub fn class_of(&self, label: &str) -> Result<usize, HarnessError> {
        self.objects
            .iter()
            .position(|o| o.label == label)
            .ok_or_else(|| HarnessError::UnknownObject(label.to_owned()))
    }
}

/// Trains every configured object from scratch and assembles the library.
pub fn train_library(config: &ExperimentConfig) -> Result<Library, HarnessError> {
    config.validate()?;
    let mut objects = Vec::with_capacity(config.objects.len());
    for (i, spec) in config.objects.iter().enumerate() {
        let mesh = config.mesh(i)?;
        let grid = generate_training_grid(&mesh, config.spacing, config.standoff)?;
        objects.push(train_object(
            spec.label.clone(),
            &mesh,
            grid,
            &config.hand,
            &config.binning,
            &config.quantization,
        )?);
    }
    Ok(Library::new(
        objects,
        config.binning,
        config.hand,
        config.quantization,
        config.cost_norms,
    )?)
}

/// Checks that a loaded library was trained under `config`.
pub fn check_library(config: &ExperimentConfig, lib: &Library) -> Result<(), HarnessError> {
    if lib.class_count() != config.objects.len() {
        return Err(HarnessError::ModelMismatch(format!(
            "{} classes in model, {} objects in config",
            lib.class_count(),
            config.objects.len()
        )));
    }
    for (i, spec) in config.objects.iter().enumerate() {
        if lib.label(i) != spec.label {
            return Err(HarnessError::ModelMismatch(format!(
                "class {} is `{}` in the model but `{}` in the config",
                i,
                lib.label(i),
                spec.label
            )));
        }
    }
    if lib.binning() != &config.binning {
        return Err(HarnessError::ModelMismatch("binning differs".into()));
    }
    if lib.res() != &config.quantization {
        return Err(HarnessError::ModelMismatch("quantization differs".into()));
    }
    Ok(())
}

/// Per-cell episode seed: a few mixing rounds over the dimension indices
/// so neighbouring cells get unrelated streams.
pub fn cell_seed(base: u64, object: u64, policy: u64, repetition: u64) -> u64 {
    fn splitmix(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut s = base;
    for v in [object, policy, repetition] {
        let m = splitmix(&mut s);
        s = m ^ v.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
    splitmix(&mut s)
}

/// Median of an unordered sample; even-sized samples average the two
/// middle values. Empty input is the caller's bug.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Extracts a serializable training summary used by the train command's
/// stdout report.
pub fn object_summary(o: &TrainedObject) -> String {
    format!(
        "{}: {} poses, {} observations, {} transition rows",
        o.label(),
        o.poses().len(),
        o.descriptor().total(),
        o.transitions().len()
    )
}
