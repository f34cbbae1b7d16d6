//! Triangle histograms over contact points.
//!
//! Every 3-combination of contact points yields a triangle summarized by
//! (l0, l1, a0): the two longest side lengths in descending order and the
//! angle opposite the longest side. Features are binned on a fixed lattice
//! and tallied into a dense histogram that recognition compares with
//! cosine or intersection distance.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("invalid triangle feature: l0={l0} l1={l1} a0={a0}")]
    InvalidFeature { l0: f64, l1: f64, a0: f64 },
    #[error("bins per axis must be >= 1")]
    EmptyBinning,
    #[error("feature range bound must be positive, got {0}")]
    BadRange(f64),
    #[error("histogram dimensions differ: {0:?} vs {1:?}")]
    DimsMismatch([u16; 3], [u16; 3]),
    #[error("distance undefined for an all-zero histogram")]
    EmptyHistogram,
}

/// Minimum altitude (meters) below which a triangle is considered
/// degenerate and dropped.
pub const DEGENERACY_ALTITUDE: f64 = 1e-6;

/// Scale- and rotation-free triangle summary. `l0 >= l1` are the two
/// longest sides; `a0` is the angle opposite `l0` (the largest angle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleFeature {
    pub l0: f64,
    pub l1: f64,
    pub a0: f64,
}

impl TriangleFeature {
    pub fn new(l0: f64, l1: f64, a0: f64) -> Result<Self, DescriptorError> {
        let valid = l0 >= l1 && l1 > 0.0 && a0 > 0.0 && a0 < std::f64::consts::PI;
        if !valid || !l0.is_finite() || !a0.is_finite() {
            return Err(DescriptorError::InvalidFeature { l0, l1, a0 });
        }
        Ok(TriangleFeature { l0, l1, a0 })
    }

    /// Feature of the triangle spanned by three points, or None when the
    /// triangle is degenerate (smallest altitude under `DEGENERACY_ALTITUDE`).
    pub fn from_points(
        p0: &Vector3<f64>,
        p1: &Vector3<f64>,
        p2: &Vector3<f64>,
    ) -> Option<TriangleFeature> {
        let mut sides = [(p1 - p2).norm(), (p0 - p2).norm(), (p0 - p1).norm()];
        sides.sort_by(|a, b| b.partial_cmp(a).expect("side lengths are finite"));
        let [l0, l1, l2] = sides;
        if l0 <= 0.0 {
            return None;
        }
        let area = 0.5 * (p1 - p0).cross(&(p2 - p0)).norm();
        // smallest altitude is the one onto the longest side
        if 2.0 * area / l0 < DEGENERACY_ALTITUDE {
            return None;
        }
        let cos_a0 = ((l1 * l1 + l2 * l2 - l0 * l0) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
        Some(TriangleFeature {
            l0,
            l1,
            a0: cos_a0.acos(),
        })
    }
}

/// Every 3-combination of the contact points, degenerate triangles dropped.
pub fn triangles_from_contacts(points: &[Vector3<f64>]) -> Vec<TriangleFeature> {
    let n = points.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                if let Some(f) = TriangleFeature::from_points(&points[i], &points[j], &points[k]) {
                    out.push(f);
                }
            }
        }
    }
    out
}

/// Uniform binning lattice: sides on [0, l_max], angle on [0, pi]. Values
/// above the top edge clamp into the last bin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "BinningRaw", into = "BinningRaw")]
pub struct Binning {
    bins: [u16; 3],
    l_max: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct BinningRaw {
    bins: [u16; 3],
    l_max: f64,
}

impl TryFrom<BinningRaw> for Binning {
    type Error = DescriptorError;
    fn try_from(r: BinningRaw) -> Result<Self, DescriptorError> {
        Binning::new(r.bins, r.l_max)
    }
}

impl From<Binning> for BinningRaw {
    fn from(b: Binning) -> BinningRaw {
        BinningRaw {
            bins: b.bins,
            l_max: b.l_max,
        }
    }
}

impl Binning {
    pub fn new(bins: [u16; 3], l_max: f64) -> Result<Self, DescriptorError> {
        if bins.iter().any(|&b| b == 0) {
            return Err(DescriptorError::EmptyBinning);
        }
        if !(l_max > 0.0) || !l_max.is_finite() {
            return Err(DescriptorError::BadRange(l_max));
        }
        Ok(Binning { bins, l_max })
    }

    pub fn bins(&self) -> [u16; 3] {
        self.bins
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn total_bins(&self) -> usize {
        self.bins.iter().map(|&b| b as usize).product()
    }
}

impl Default for Binning {
    fn default() -> Self {
        Binning {
            bins: [10, 10, 10],
            l_max: 0.25,
        }
    }
}

/// Lattice cell of a binned triangle, as (l0, l1, a0) bin coordinates.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct BinIndex(pub [u16; 3]);

fn axis_bin(value: f64, hi: f64, bins: u16) -> u16 {
    let width = hi / bins as f64;
    let cell = (value / width).floor();
    if cell < 0.0 {
        0
    } else if cell >= bins as f64 {
        bins - 1
    } else {
        cell as u16
    }
}

/// Floor-bins a feature; out-of-range values clamp to the edge bins.
pub fn bin_triangle(f: &TriangleFeature, binning: &Binning) -> BinIndex {
    let [b0, b1, b2] = binning.bins;
    BinIndex([
        axis_bin(f.l0, binning.l_max, b0),
        axis_bin(f.l1, binning.l_max, b1),
        axis_bin(f.a0, std::f64::consts::PI, b2),
    ])
}

/// Dense triangle-count histogram over the binning lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramDescriptor {
    dims: [u16; 3],
    counts: Vec<u64>,
    total: u64,
}

impl HistogramDescriptor {
    pub fn new(binning: &Binning) -> Self {
        HistogramDescriptor {
            dims: binning.bins,
            counts: vec![0; binning.total_bins()],
            total: 0,
        }
    }

    pub fn dims(&self) -> [u16; 3] {
        self.dims
    }

    /// Total triangle count across all bins.
    pub fn total(&self) -> u64 {
        self.total
    }

    fn flat(&self, b: BinIndex) -> usize {
        let [i, j, k] = b.0;
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        (i as usize * self.dims[1] as usize + j as usize) * self.dims[2] as usize + k as usize
    }

    pub fn count(&self, b: BinIndex) -> u64 {
        self.counts[self.flat(b)]
    }

    /// Adds one observation per bin index; order does not matter.
    pub fn accumulate<I: IntoIterator<Item = BinIndex>>(&mut self, bins: I) {
        for b in bins {
            let idx = self.flat(b);
            self.counts[idx] += 1;
            self.total += 1;
        }
    }

    /// Non-zero bins in ascending index order.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (BinIndex, u64)> + '_ {
        let [_, dj, dk] = [self.dims[0], self.dims[1], self.dims[2]];
        self.counts.iter().enumerate().filter_map(move |(f, &c)| {
            if c == 0 {
                return None;
            }
            let k = (f % dk as usize) as u16;
            let j = ((f / dk as usize) % dj as usize) as u16;
            let i = (f / (dk as usize * dj as usize)) as u16;
            Some((BinIndex([i, j, k]), c))
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

fn check_dims(a: &HistogramDescriptor, b: &HistogramDescriptor) -> Result<(), DescriptorError> {
    if a.dims != b.dims {
        return Err(DescriptorError::DimsMismatch(a.dims, b.dims));
    }
    Ok(())
}

/// 1 - cos(h1, h2); scale-invariant, in [0, 1] for count histograms.
pub fn cosine_distance(
    a: &HistogramDescriptor,
    b: &HistogramDescriptor,
) -> Result<f64, DescriptorError> {
    check_dims(a, b)?;
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.counts.iter().zip(&b.counts) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(DescriptorError::EmptyHistogram);
    }
    Ok((1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0))
}

/// 1 - sum of elementwise minima of the L1-normalized histograms; in [0, 1].
pub fn intersection_distance(
    a: &HistogramDescriptor,
    b: &HistogramDescriptor,
) -> Result<f64, DescriptorError> {
    check_dims(a, b)?;
    if a.total == 0 || b.total == 0 {
        return Err(DescriptorError::EmptyHistogram);
    }
    let (ta, tb) = (a.total as f64, b.total as f64);
    let mut overlap = 0.0;
    for (&x, &y) in a.counts.iter().zip(&b.counts) {
        overlap += (x as f64 / ta).min(y as f64 / tb);
    }
    Ok((1.0 - overlap).clamp(0.0, 1.0))
}
