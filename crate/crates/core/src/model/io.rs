//! Versioned JSON persistence for trained libraries.
//!
//! The file stores raw training evidence (poses, per-pose observation
//! tallies) alongside the derived descriptor and transition rows. Loading
//! rebuilds the derived data from the evidence and rejects the file if the
//! stored copies disagree, so a model file can never drift from what its
//! observations imply. The landing table is always recomputed, never
//! stored.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

use super::{Library, TrainedObject};
use crate::contact_sim::HandParams;
use crate::descriptor::{BinIndex, Binning};
use crate::geometry::{ActionKey, CostNorms, Pose, QuantRes};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("object `{label}`: {poses} poses but {tallies} tallies")]
    TallyMismatch {
        label: String,
        poses: usize,
        tallies: usize,
    },
    #[error("object `{label}` has no training poses")]
    NoPoses { label: String },
    #[error("object `{label}` produced no observations during training")]
    EmptyDescriptor { label: String },
    #[error("invalid grid parameter {name} = {value}")]
    BadGridParam { name: &'static str, value: f64 },
    #[error("library has no objects")]
    EmptyLibrary,
    #[error("duplicate object label `{0}`")]
    DuplicateLabel(String),
    #[error("object `{label}` binning differs from library binning")]
    BinningMismatch { label: String },
    #[error("model file version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("object `{label}`: stored descriptor does not match its observations")]
    DescriptorMismatch { label: String },
    #[error("object `{label}`: transition row for ({z:?}, {a:?}) sums to {sum}")]
    RowNotNormalized {
        label: String,
        z: BinIndex,
        a: ActionKey,
        sum: f64,
    },
    #[error("object `{label}`: stored transitions do not match its observations")]
    TransitionMismatch { label: String },
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    format_version: u32,
    binning: Binning,
    hand: HandParams,
    quantization: QuantRes,
    cost_norms: CostNorms,
    objects: Vec<ObjectFile>,
}

#[derive(Serialize, Deserialize)]
struct ObjectFile {
    label: String,
    poses: Vec<Pose>,
    tallies: Vec<Vec<BinIndex>>,
    /// Sparse descriptor counts, ascending by bin.
    descriptor: Vec<(BinIndex, u64)>,
    transitions: Vec<TransitionRowFile>,
}

#[derive(Serialize, Deserialize)]
struct TransitionRowFile {
    z: BinIndex,
    a: ActionKey,
    row: Vec<(BinIndex, f64)>,
}

pub fn save_library(lib: &Library, path: &Path) -> Result<(), ModelError> {
    let file = LibraryFile {
        format_version: FORMAT_VERSION,
        binning: *lib.binning(),
        hand: *lib.hand(),
        quantization: *lib.res(),
        cost_norms: *lib.cost_norms(),
        objects: lib
            .objects()
            .iter()
            .map(|o| ObjectFile {
                label: o.label().to_owned(),
                poses: o.poses().to_vec(),
                tallies: o.tallies().to_vec(),
                descriptor: o.descriptor().iter_nonzero().collect(),
                transitions: o
                    .transitions()
                    .iter()
                    .map(|(&(z, a), row)| TransitionRowFile {
                        z,
                        a,
                        row: row.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_library(path: &Path) -> Result<Library, ModelError> {
    let file: LibraryFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if file.format_version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let mut objects = Vec::with_capacity(file.objects.len());
    for stored in file.objects {
        let rebuilt = TrainedObject::from_tallies(
            stored.label.clone(),
            stored.poses,
            stored.tallies,
            &file.binning,
            &file.quantization,
        )?;
        let rebuilt_descriptor: Vec<(BinIndex, u64)> =
            rebuilt.descriptor().iter_nonzero().collect();
        if stored.descriptor != rebuilt_descriptor {
            return Err(ModelError::DescriptorMismatch {
                label: stored.label,
            });
        }
        for t in &stored.transitions {
            let sum: f64 = t.row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::RowNotNormalized {
                    label: stored.label,
                    z: t.z,
                    a: t.a,
                    sum,
                });
            }
        }
        let stored_rows: BTreeMap<(BinIndex, ActionKey), Vec<(BinIndex, f64)>> = stored
            .transitions
            .into_iter()
            .map(|t| ((t.z, t.a), t.row))
            .collect();
        let matches = stored_rows.len() == rebuilt.transitions().len()
            && rebuilt
                .transitions()
                .iter()
                .all(|(k, row)| stored_rows.get(k).map(Vec::as_slice) == Some(row.as_slice()));
        if !matches {
            return Err(ModelError::TransitionMismatch {
                label: stored.label,
            });
        }
        objects.push(rebuilt);
    }
    Library::new(
        objects,
        file.binning,
        file.hand,
        file.quantization,
        file.cost_norms,
    )
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use nalgebra::Vector3;
    use serde_json::Value;
    use tempfile::tempdir;

    fn sample_library() -> Library {
        let binning = Binning::default();
        let res = QuantRes::default();
        let p = |t: [f64; 3], q: [f64; 4]| Pose::new(Vector3::from(t), q).unwrap();
        let b = |i: u16, j: u16, k: u16| BinIndex([i, j, k]);
        let a = TrainedObject::from_tallies(
            "alpha",
            vec![
                p([0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]),
                p([0.17, -0.04, 0.02], [0.9, 0.1, -0.2, 0.3]),
            ],
            vec![vec![b(1, 2, 3), b(1, 2, 3), b(4, 0, 1)], vec![b(2, 2, 2)]],
            &binning,
            &res,
        )
        .unwrap();
        let c = TrainedObject::from_tallies(
            "beta",
            vec![
                p([0.0, 0.1, 0.0], [1.0, 0.0, 0.0, 0.0]),
                p([0.0, -0.1, 0.0], [0.7, 0.7, 0.0, 0.0]),
            ],
            vec![vec![b(9, 9, 9)], vec![b(0, 0, 0), b(9, 9, 9)]],
            &binning,
            &res,
        )
        .unwrap();
        Library::new(
            vec![a, c],
            binning,
            HandParams::default(),
            res,
            CostNorms::default(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let lib = sample_library();
        save_library(&lib, &path).unwrap();
        let loaded = load_library(&path).unwrap();
        assert_eq!(lib.objects(), loaded.objects());
        assert_eq!(lib.vocab(), loaded.vocab());
        assert_eq!(lib.binning(), loaded.binning());
        assert_eq!(lib.res(), loaded.res());
        for gid in 0..lib.pose_count() as u32 {
            for v in 0..lib.vocab().len() {
                assert_eq!(lib.landing_of(gid, v), loaded.landing_of(gid, v));
            }
        }
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        let lib = sample_library();
        save_library(&lib, &p1).unwrap();
        save_library(&lib, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert!(!b1.is_empty());
        assert_eq!(b1, b2);
    }

    fn tamper(path: &Path, f: impl FnOnce(&mut Value)) {
        let mut v: Value =
            serde_json::from_reader(BufReader::new(File::open(path).unwrap())).unwrap();
        f(&mut v);
        let out = File::create(path).unwrap();
        serde_json::to_writer_pretty(BufWriter::new(out), &v).unwrap();
    }

    #[test]
    fn rejects_wrong_version() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_library(&sample_library(), &path).unwrap();
        tamper(&path, |v| v["format_version"] = Value::from(999));
        assert!(matches!(
            load_library(&path),
            Err(ModelError::VersionMismatch {
                found: 999,
                expected: FORMAT_VERSION
            })
        ));
    }

    #[test]
    fn rejects_tampered_descriptor() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_library(&sample_library(), &path).unwrap();
        tamper(&path, |v| {
            let count = &mut v["objects"][0]["descriptor"][0][1];
            *count = Value::from(count.as_u64().unwrap() + 1);
        });
        assert!(matches!(
            load_library(&path),
            Err(ModelError::DescriptorMismatch { .. })
        ));
    }

    #[test]
    fn rejects_unnormalized_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_library(&sample_library(), &path).unwrap();
        tamper(&path, |v| {
            v["objects"][0]["transitions"][0]["row"][0][1] = Value::from(0.25);
        });
        assert!(matches!(
            load_library(&path),
            Err(ModelError::RowNotNormalized { .. })
        ));
    }

    #[test]
    fn rejects_swapped_transition_target() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_library(&sample_library(), &path).unwrap();
        tamper(&path, |v| {
            // retarget a single-entry row to a bin the evidence never
            // produced for it; the sum stays 1 so only the rebuild check
            // can catch it
            v["objects"][1]["transitions"][0]["row"][0][0] = serde_json::json!([5, 5, 5]);
        });
        assert!(matches!(
            load_library(&path),
            Err(ModelError::TransitionMismatch { .. })
        ));
    }
}
