//! Synthetic datasets and invertible, label-preserving shifts with known
//! pre-shift rows.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::data::{Dataset, MissingMask};
use crate::error::{bail, Result};
use crate::math;
use crate::metrics::{LabelPreservation, ShiftDescriptor, ShiftScenario};
use crate::rng::{normal, RngSpec, StreamRng};

/// Labels `i mod C`, shuffled.
fn balanced_labels(n: usize, classes: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    y.shuffle(rng);
    y
}

/// `C` isotropic Gaussian clusters with equal class counts (within one).
///
/// Cluster means are drawn from a standard normal and rescaled so that the
/// closest pair sits exactly `separation * noise` apart (`separation` when
/// `noise` is zero).
pub fn make_blobs(n: usize, d: usize, classes: usize, separation: f64, noise: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        bail!(Domain, "blobs need at least 2 classes");
    }
    if d == 0 {
        bail!(Domain, "blobs need at least one feature");
    }
    if n < classes {
        bail!(Domain, "{} samples cannot cover {} classes", n, classes);
    }
    if !(separation > 0.0) || !separation.is_finite() {
        bail!(Domain, "class separation must be positive");
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        bail!(Domain, "noise must be nonnegative");
    }
    let spec = RngSpec::new(seed);
    let mut rng = spec.stream("shiftgen/blobs/means", 0);
    let means = loop {
        let raw: Vec<f64> = (0..classes * d).map(|_| normal(&mut rng)).collect();
        let mut closest = f64::INFINITY;
        for a in 0..classes {
            for b in a + 1..classes {
                let dist: f64 = (0..d).map(|k| raw[a * d + k] - raw[b * d + k]).map(|v| v * v).sum();
                closest = closest.min(math::sqrt(dist));
            }
        }
        if closest > 1e-9 {
            let target = if noise > 0.0 { separation * noise } else { separation };
            break raw.into_iter().map(|v| v * target / closest).collect::<Vec<_>>();
        }
    };
    let mut rng = spec.stream("shiftgen/blobs/samples", 0);
    let labels = balanced_labels(n, classes, &mut rng);
    let mut features = Vec::with_capacity(n * d);
    for &y in &labels {
        for k in 0..d {
            let mu = means[y * d + k];
            features.push(if noise > 0.0 { mu + noise * normal(&mut rng) } else { mu });
        }
    }
    Dataset::new(features, n, d)?.with_labels(labels)
}

/// `round(fraction * d)` distinct features (at least one), sorted.
pub fn random_subset(d: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if d == 0 || !(fraction > 0.0 && fraction <= 1.0) {
        bail!(Domain, "feature fraction must lie in (0, 1] and d must be positive");
    }
    let k = (math::round(fraction * d as f64) as usize).clamp(1, d);
    let mut out = index::sample(&mut RngSpec::new(seed).stream("shiftgen/subset", 0), d, k).into_vec();
    out.sort_unstable();
    Ok(out)
}

/// Parametric corruption families. `None` parameters take per-feature
/// defaults computed on the clean data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    /// `x + b`; default `b = 0.5 * feature std`.
    Brightness { offset: Option<f64> },
    /// `m + factor * (x - m)`; default midpoint is the feature mean.
    Contrast { factor: f64, midpoint: Option<f64> },
    /// `x + eps`, `eps ~ N(0, sigma^2)`; default `sigma = feature std`.
    GaussianNoise { sigma: Option<f64> },
    /// Each entry replaced with probability `rate` by `low` or `high`
    /// (equiprobable); defaults are the feature minimum and maximum.
    Impulse { rate: f64, low: Option<f64>, high: Option<f64> },
    /// A `rate` share of each column's rows (rounded) marked missing.
    Missing { rate: f64 },
}

pub const DEFAULT_BRIGHTNESS_STD: f64 = 0.5;
pub const DEFAULT_CONTRAST: f64 = 0.3;
pub const DEFAULT_NOISE_STD: f64 = 1.0;
pub const DEFAULT_IMPULSE_RATE: f64 = 0.1;
pub const DEFAULT_MISSING_RATE: f64 = 0.25;

impl Corruption {
    pub fn name(&self) -> &'static str {
        match self {
            Corruption::Brightness { .. } => "brightness",
            Corruption::Contrast { .. } => "contrast",
            Corruption::GaussianNoise { .. } => "gaussian_noise",
            Corruption::Impulse { .. } => "impulse",
            Corruption::Missing { .. } => "missing",
        }
    }

    fn params(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        match *self {
            Corruption::Brightness { offset } => push("b", offset),
            Corruption::Contrast { factor, midpoint } => {
                push("gamma", Some(factor));
                push("midpoint", midpoint);
            }
            Corruption::GaussianNoise { sigma } => push("sigma", sigma),
            Corruption::Impulse { rate, low, high } => {
                push("p", Some(rate));
                push("low", low);
                push("high", high);
            }
            Corruption::Missing { rate } => push("q", Some(rate)),
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: Option<f64>, what: &str| -> Result<()> {
            match v {
                Some(x) if !x.is_finite() => bail!(Domain, "{} must be finite", what),
                _ => Ok(()),
            }
        };
        let unit = |v: f64, what: &str| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                bail!(Domain, "{} must lie in [0, 1], got {}", what, v);
            }
            Ok(())
        };
        match *self {
            Corruption::Brightness { offset } => finite(offset, "brightness offset"),
            Corruption::Contrast { factor, midpoint } => {
                finite(Some(factor), "contrast factor")?;
                finite(midpoint, "contrast midpoint")
            }
            Corruption::GaussianNoise { sigma } => {
                finite(sigma, "noise sigma")?;
                if sigma.is_some_and(|s| s < 0.0) {
                    bail!(Domain, "noise sigma must be nonnegative");
                }
                Ok(())
            }
            Corruption::Impulse { rate, low, high } => {
                unit(rate, "impulse rate")?;
                finite(low, "impulse low")?;
                finite(high, "impulse high")
            }
            Corruption::Missing { rate } => unit(rate, "missing rate"),
        }
    }
}

/// Applies `kind` to the columns in `subset`. The result's source and
/// pre-shift sets are both the clean data; target row `j` is the corrupted
/// row `j`. Labels are copied unchanged.
pub fn apply_corruption(data: &Dataset, kind: Corruption, subset: &[usize], seed: u64) -> Result<ShiftScenario> {
    kind.validate()?;
    let (n, d) = (data.n(), data.d());
    if let Some(&bad) = subset.iter().find(|&&j| j >= d) {
        bail!(Domain, "feature {} out of range for {} features", bad, d);
    }
    if data.has_missing() {
        bail!(Domain, "corruptions need complete clean data");
    }
    let mut cols = subset.to_vec();
    cols.sort_unstable();
    cols.dedup();

    let means = data.column_means();
    let stds = data.column_stds();
    let mut feats = data.features().to_vec();
    let mut missing = None;
    let mut rng = RngSpec::new(seed).stream("shiftgen/corruption", 0);
    match kind {
        Corruption::Brightness { offset } => {
            for &j in &cols {
                let b = offset.unwrap_or(DEFAULT_BRIGHTNESS_STD * stds[j]);
                if b != 0.0 {
                    (0..n).for_each(|i| feats[i * d + j] += b);
                }
            }
        }
        Corruption::Contrast { factor, midpoint } => {
            if factor != 1.0 {
                for &j in &cols {
                    let m = midpoint.unwrap_or(means[j]);
                    (0..n).for_each(|i| feats[i * d + j] = m + factor * (feats[i * d + j] - m));
                }
            }
        }
        Corruption::GaussianNoise { sigma } => {
            // row-major draw order keeps realizations independent of `cols` order
            for i in 0..n {
                for &j in &cols {
                    let s = sigma.unwrap_or(DEFAULT_NOISE_STD * stds[j]);
                    let eps = normal(&mut rng);
                    if s != 0.0 {
                        feats[i * d + j] += s * eps;
                    }
                }
            }
        }
        Corruption::Impulse { rate, low, high } => {
            let (mins, maxs) = column_range(data);
            for i in 0..n {
                for &j in &cols {
                    let hit = rng.random::<f64>() < rate;
                    let upper = rng.random::<bool>();
                    if hit {
                        feats[i * d + j] = if upper { high.unwrap_or(maxs[j]) } else { low.unwrap_or(mins[j]) };
                    }
                }
            }
        }
        Corruption::Missing { rate } => {
            let k = math::round(rate * n as f64) as usize;
            let mut mask = MissingMask::new(n, d);
            for &j in &cols {
                for i in index::sample(&mut rng, n, k.min(n)) {
                    mask.set(i, j, true);
                }
            }
            missing = Some(mask);
        }
    }
    let target = data.replace_features(feats, missing)?;
    let mut params = kind.params();
    if let Corruption::Missing { .. } = kind {
        params.push(("columns".to_string(), cols.len() as f64));
    }
    Ok(ShiftScenario {
        source: data.clone(),
        target,
        pre_shift: data.clone(),
        descriptor: ShiftDescriptor { kind: kind.name().to_string(), params, features: cols, seed },
        label_preserving: LabelPreservation::ExactZero,
        n_train: None,
    })
}

fn column_range(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    (0..data.d())
        .map(|j| {
            let col = data.observed_column(j);
            (col.iter().copied().fold(f64::INFINITY, f64::min), col.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .unzip()
}

/// Replaces missing entries with training-column means.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanImputer {
    pub means: Vec<f64>,
}

impl MeanImputer {
    /// Column means over the observed training entries.
    pub fn fit(train: &Dataset) -> Result<Self> {
        let mut means = Vec::with_capacity(train.d());
        for j in 0..train.d() {
            let col = train.observed_column(j);
            if col.is_empty() {
                bail!(Training, "column {} has no observed training rows", j);
            }
            means.push(math::mean(&col));
        }
        Ok(Self { means })
    }

    pub fn impute(&self, data: &Dataset) -> Result<Dataset> {
        if data.d() != self.means.len() {
            bail!(Shape, "imputer fitted on {} features, data has {}", self.means.len(), data.d());
        }
        let Some(mask) = data.missing() else {
            return Ok(data.clone());
        };
        let d = data.d();
        let mut feats = data.features().to_vec();
        for (k, &m) in mask.as_slice().iter().enumerate() {
            if m {
                feats[k] = self.means[k % d];
            }
        }
        data.replace_features(feats, None)
    }
}

/// A dataset with a binary group attribute kept outside the features.
/// `group[i]` is `true` for group B.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub data: Dataset,
    pub group: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSplit {
    /// Group A only.
    pub source: Dataset,
    /// Targets with group-B fractions `fractions[k]`.
    pub targets: Vec<Dataset>,
    pub fractions: Vec<f64>,
    /// Rows of the input data making up the source and each target.
    pub source_rows: Vec<usize>,
    pub target_rows: Vec<Vec<usize>>,
}

/// Source of `m` group-A rows plus three size-`m` targets whose group-B
/// shares are `0`, `mix / 2` and `mix`, where `m = min(|A| / 2, |B|)`.
///
/// Target group-A rows are drawn from the A rows not used by the source.
pub fn selection_bias_split(data: &GroupedDataset, mix: f64, seed: u64) -> Result<SelectionSplit> {
    if !(0.0..=1.0).contains(&mix) {
        bail!(Domain, "target mix must lie in [0, 1]");
    }
    if data.group.len() != data.data.n() {
        bail!(Shape, "{} group flags for {} rows", data.group.len(), data.data.n());
    }
    let spec = RngSpec::new(seed);
    let mut a: Vec<usize> = (0..data.group.len()).filter(|&i| !data.group[i]).collect();
    let b: Vec<usize> = (0..data.group.len()).filter(|&i| data.group[i]).collect();
    let m = (a.len() / 2).min(b.len());
    if m == 0 {
        bail!(Domain, "insufficient samples per group: |A| = {}, |B| = {}", a.len(), b.len());
    }
    a.shuffle(&mut spec.stream("shiftgen/selection/source", 0));
    let source = data.data.select_rows(&a[..m])?;
    let held_out = &a[m..];
    let fractions = vec![0.0, 0.5 * mix, mix];
    let mut targets = Vec::with_capacity(3);
    let mut target_rows = Vec::with_capacity(3);
    for (k, &f) in fractions.iter().enumerate() {
        let mut rng = spec.stream("shiftgen/selection/target", k as u64);
        let nb = math::round(f * m as f64) as usize;
        let mut rows: Vec<usize> = index::sample(&mut rng, held_out.len(), m - nb).into_iter().map(|i| held_out[i]).collect();
        rows.extend(index::sample(&mut rng, b.len(), nb).into_iter().map(|i| b[i]));
        rows.shuffle(&mut rng);
        targets.push(data.data.select_rows(&rows)?);
        target_rows.push(rows);
    }
    Ok(SelectionSplit { source, targets, fractions, source_rows: a[..m].to_vec(), target_rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSignalConfig {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    /// Features offset by `delta` for group B.
    pub band: Vec<usize>,
    pub delta: f64,
    /// Standard deviation of the per-class mean of every feature.
    pub class_scale: f64,
    pub seed: u64,
}

impl GroupSignalConfig {
    pub fn new(n: usize, d: usize, band: Vec<usize>, delta: f64, seed: u64) -> Self {
        Self { n, d, classes: 2, band, delta, class_scale: 1.0, seed }
    }
}

/// Unit-variance Gaussian data with random per-class means on every feature.
/// Half the rows (shuffled) form group B, which is offset by `delta` on the
/// band. Class and group are drawn independently.
pub fn make_group_signal_data(cfg: &GroupSignalConfig) -> Result<GroupedDataset> {
    let (n, d) = (cfg.n, cfg.d);
    if cfg.band.is_empty() {
        bail!(Domain, "band must be nonempty");
    }
    if let Some(&bad) = cfg.band.iter().find(|&&j| j >= d) {
        bail!(Domain, "band feature {} out of range for {} features", bad, d);
    }
    if cfg.classes < 2 || n < cfg.classes {
        bail!(Domain, "need at least 2 classes and one row per class");
    }
    if !cfg.delta.is_finite() || !(cfg.class_scale >= 0.0) {
        bail!(Domain, "group effect and class scale must be finite, scale nonnegative");
    }
    let spec = RngSpec::new(cfg.seed);
    let mut rng = spec.stream("shiftgen/group/means", 0);
    let means: Vec<f64> = (0..cfg.classes * d).map(|_| cfg.class_scale * normal(&mut rng)).collect();
    let mut rng = spec.stream("shiftgen/group/samples", 0);
    let labels = balanced_labels(n, cfg.classes, &mut rng);
    let mut group: Vec<bool> = (0..n).map(|i| i % 2 == 1).collect();
    group.shuffle(&mut spec.stream("shiftgen/group/assign", 0));
    let mut in_band = vec![false; d];
    cfg.band.iter().for_each(|&j| in_band[j] = true);
    let mut features = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..d {
            let offset = if group[i] && in_band[j] { cfg.delta } else { 0.0 };
            features.push(means[labels[i] * d + j] + normal(&mut rng) + offset);
        }
    }
    Ok(GroupedDataset { data: Dataset::new(features, n, d)?.with_labels(labels)?, group })
}
