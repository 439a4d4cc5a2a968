//! Channel similarity and per-anchor similarity groups.
//!
//! Every channel gets its own (possibly overlapping) group: the anchor plus
//! the `max(1, ⌈θ/100 · K⌉) − 1` channels most cosine-similar to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ActivationStack;
use crate::raster::Grid;

pub const DEFAULT_THETA: f64 = 5.0;

fn cosine_slices(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Cosine similarity of two maps flattened row-major; 0 when either is all-zero.
pub fn cosine_similarity(a: &Grid, b: &Grid) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::input(format!("map shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(cosine_slices(&a.data, &b.data))
}

/// Symmetric `K × K` matrix of pairwise channel cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    size: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Wraps raw row-major values. Used for hand-built matrices in tests
    /// and for replaying dumped matrices.
    pub fn from_values(size: usize, values: Vec<f64>) -> Result<Self> {
        if size == 0 || values.len() != size * size {
            return Err(Error::input("similarity matrix must be K×K with K ≥ 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite similarity"));
        }
        Ok(SimilarityMatrix { size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.size + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.size..(k + 1) * self.size]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when channel `k` has zero self-similarity, i.e. an all-zero map.
    pub fn is_zero_channel(&self, k: usize) -> bool {
        self.get(k, k) == 0.0
    }
}

/// Pairwise cosine similarities of the stack's channels. Diagonal entries
/// are exactly 1 for nonzero channels and 0 for all-zero ones.
pub fn similarity_matrix(acts: &ActivationStack) -> SimilarityMatrix {
    let k = acts.channels;
    let norms: Vec<f64> = (0..k).map(|c| acts.channel(c).iter().map(|v| v * v).sum::<f64>()).collect();
    let mut values = vec![0.0; k * k];
    for a in 0..k {
        values[a * k + a] = if norms[a] == 0.0 { 0.0 } else { 1.0 };
        for b in a + 1..k {
            let s = cosine_slices(acts.channel(a), acts.channel(b));
            values[a * k + b] = s;
            values[b * k + a] = s;
        }
    }
    SimilarityMatrix { size: k, values }
}

/// The channels switched together when scoring `anchor`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelGroup {
    pub anchor: usize,
    /// Member indices in ascending order; always contains `anchor`.
    pub members: Vec<usize>,
}

impl ChannelGroup {
    pub fn singleton(anchor: usize) -> Self {
        ChannelGroup { anchor, members: vec![anchor] }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.members.binary_search(&k).is_ok()
    }
}

/// `max(1, ⌈θ/100 · K⌉)`.
pub fn group_size(channels: usize, theta: f64) -> usize {
    // θ·K first so integral products (5·100) stay exact before dividing.
    let raw = theta * channels as f64 / 100.0;
    let size = (raw - 1e-9).ceil().max(1.0) as usize;
    size.min(channels)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 100.0) {
        return Err(Error::input(format!("theta must be in (0, 100], got {theta}")));
    }
    Ok(())
}

/// Group of channel `k`: the anchor first, then the most similar remaining
/// channels, ties going to the smaller index. An all-zero anchor gets `{k}`.
pub fn similarity_group(matrix: &SimilarityMatrix, k: usize, theta: f64) -> Result<ChannelGroup> {
    check_theta(theta)?;
    if k >= matrix.size {
        return Err(Error::input(format!("channel {k} out of range (K = {})", matrix.size)));
    }
    if matrix.is_zero_channel(k) {
        return Ok(ChannelGroup::singleton(k));
    }
    let size = group_size(matrix.size, theta);
    let row = matrix.row(k);
    let mut others: Vec<usize> = (0..matrix.size).filter(|&l| l != k).collect();
    others.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    let mut members: Vec<usize> = std::iter::once(k).chain(others.into_iter().take(size - 1)).collect();
    members.sort_unstable();
    Ok(ChannelGroup { anchor: k, members })
}

pub fn all_groups(matrix: &SimilarityMatrix, theta: f64) -> Result<Vec<ChannelGroup>> {
    (0..matrix.size).map(|k| similarity_group(matrix, k, theta)).collect()
}

/// Debug dump layout: `{"K": int, "theta": float, "groups": [[int, ...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDump {
    #[serde(rename = "K")]
    pub k: usize,
    pub theta: f64,
    pub groups: Vec<Vec<usize>>,
}

impl GroupDump {
    pub fn new(theta: f64, groups: &[ChannelGroup]) -> Self {
        GroupDump { k: groups.len(), theta, groups: groups.iter().map(|g| g.members.clone()).collect() }
    }
}
