//! Datasets, missing-value masks and feature groupings.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Boolean matrix marking missing entries (`true` = missing), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MissingMask {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
}

impl MissingMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, mask: vec![false; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != rows * cols {
            bail!(Shape, "mask has {} entries, expected {}x{}", mask.len(), rows, cols);
        }
        Ok(Self { rows, cols, mask })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, missing: bool) {
        self.mask[row * self.cols + col] = missing;
    }

    pub fn any(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }
}

/// Dense feature matrix `[n x d]` with optional integer labels.
///
/// Missing entries are tracked by an explicit [`MissingMask`]; the stored
/// value at a missing position is `NaN` and must not be read as data. Every
/// other entry is finite. Column order is whatever the caller supplied and
/// is never changed.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Option<Vec<usize>>,
    feature_names: Option<Vec<String>>,
    missing: Option<MissingMask>,
}

/// Bitwise on features, so missing (`NaN`) entries compare equal and
/// `0.0` differs from `-0.0`.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.d == other.d
            && self.labels == other.labels
            && self.feature_names == other.feature_names
            && self.missing == other.missing
            && self.features.iter().zip(&other.features).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Dataset {
    /// Builds a dataset from row-major features. All entries must be finite.
    pub fn new(features: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        Self::with_missing(features, n, d, None)
    }

    /// Like [`Dataset::new`], but entries flagged in `missing` may hold any
    /// value; they are normalized to `NaN`.
    pub fn with_missing(mut features: Vec<f64>, n: usize, d: usize, missing: Option<MissingMask>) -> Result<Self> {
        if n == 0 || d == 0 {
            bail!(Shape, "dataset needs n >= 1 and d >= 1, got {}x{}", n, d);
        }
        if features.len() != n * d {
            bail!(Shape, "feature buffer has {} entries, expected {}x{}", features.len(), n, d);
        }
        if let Some(mask) = &missing {
            if mask.rows() != n || mask.cols() != d {
                bail!(Shape, "missing mask is {}x{}, dataset is {}x{}", mask.rows(), mask.cols(), n, d);
            }
        }
        for (k, v) in features.iter_mut().enumerate() {
            let is_missing = missing.as_ref().is_some_and(|m| m.as_slice()[k]);
            if is_missing {
                *v = f64::NAN;
            } else if !v.is_finite() {
                bail!(Domain, "non-finite value at row {}, column {}", k / d, k % d);
            }
        }
        let missing = missing.filter(MissingMask::any);
        Ok(Self { n, d, features, labels: None, feature_names: None, missing })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                bail!(Shape, "row {} has {} values, expected {}", i, r.len(), d);
            }
            features.extend_from_slice(r);
        }
        Self::new(features, n, d)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            bail!(Shape, "{} labels for {} rows", labels.len(), self.n);
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            bail!(Shape, "{} feature names for {} columns", names.len(), self.d);
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    /// Non-missing values of column `j`.
    pub fn observed_column(&self, j: usize) -> Vec<f64> {
        (0..self.n).filter(|&i| !self.is_missing(i, j)).map(|i| self.get(i, j)).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        match &self.labels {
            Some(l) => Ok(l),
            None => bail!(Precondition, "dataset has no labels"),
        }
    }

    /// `max(label) + 1`, or `None` when unlabeled.
    pub fn class_count(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn missing(&self) -> Option<&MissingMask> {
        self.missing.as_ref()
    }

    #[inline]
    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing.as_ref().is_some_and(|m| m.get(i, j))
    }

    pub fn has_missing(&self) -> bool {
        self.missing.is_some()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            if i >= self.n {
                bail!(Shape, "row index {} out of range for {} rows", i, self.n);
            }
            features.extend_from_slice(self.row(i));
        }
        let missing = self.missing.as_ref().map(|m| {
            let mut out = MissingMask::new(idx.len(), self.d);
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..self.d {
                    out.set(r, j, m.get(i, j));
                }
            }
            out
        });
        let mut out = Self::with_missing(features, idx.len(), self.d, missing)?;
        out.labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Replaces the feature matrix, keeping labels and names.
    pub fn replace_features(&self, features: Vec<f64>, missing: Option<MissingMask>) -> Result<Self> {
        let mut out = Self::with_missing(features, self.n, self.d, missing)?;
        out.labels = self.labels.clone();
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Per-column mean over observed entries.
    pub fn column_means(&self) -> Vec<f64> {
        (0..self.d).map(|j| crate::math::mean(&self.observed_column(j))).collect()
    }

    /// Per-column population standard deviation over observed entries.
    pub fn column_stds(&self) -> Vec<f64> {
        (0..self.d)
            .map(|j| {
                let col = self.observed_column(j);
                let m = crate::math::mean(&col);
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len().max(1) as f64;
                crate::math::sqrt(var)
            })
            .collect()
    }
}

/// How features map to players.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupingKind {
    Identity,
    /// Consecutive runs of `block_size` features; the last block may be short.
    ContiguousBlocks(usize),
    Explicit(Vec<usize>),
}

/// Surjective map from feature index to group id in `0..groups`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureGrouping {
    group_of: Vec<usize>,
    groups: usize,
}

impl FeatureGrouping {
    pub fn identity(d: usize) -> Self {
        Self { group_of: (0..d).collect(), groups: d }
    }

    pub fn new(d: usize, kind: GroupingKind) -> Result<Self> {
        if d == 0 {
            bail!(Validation, "grouping needs at least one feature");
        }
        match kind {
            GroupingKind::Identity => Ok(Self::identity(d)),
            GroupingKind::ContiguousBlocks(size) => {
                if size == 0 {
                    bail!(Validation, "block size must be positive");
                }
                let group_of: Vec<usize> = (0..d).map(|i| i / size).collect();
                Ok(Self { groups: d.div_ceil(size), group_of })
            }
            GroupingKind::Explicit(group_of) => {
                if group_of.len() != d {
                    bail!(Validation, "explicit grouping has {} entries for {} features", group_of.len(), d);
                }
                let groups = group_of.iter().copied().max().map_or(0, |m| m + 1);
                let mut seen = vec![false; groups];
                for &g in &group_of {
                    seen[g] = true;
                }
                if let Some(gap) = seen.iter().position(|s| !s) {
                    bail!(Validation, "group id {} is unused; ids must cover 0..{}", gap, groups);
                }
                Ok(Self { group_of, groups })
            }
        }
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn features(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn is_identity(&self) -> bool {
        self.groups == self.group_of.len() && self.group_of.iter().enumerate().all(|(i, &g)| i == g)
    }

    /// Feature indices belonging to group `g`, ascending.
    pub fn members(&self, g: usize) -> Vec<usize> {
        self.group_of.iter().enumerate().filter(|(_, &x)| x == g).map(|(i, _)| i).collect()
    }

    /// Group-level OR of a feature-level mask.
    pub fn group_mask(&self, feature_mask: &[bool]) -> Vec<bool> {
        let mut out = vec![false; self.groups];
        for (i, &m) in feature_mask.iter().enumerate() {
            if m {
                out[self.group_of[i]] = true;
            }
        }
        out
    }
}

pub fn make_grouping(d: usize, kind: GroupingKind) -> Result<FeatureGrouping> {
    FeatureGrouping::new(d, kind)
}
