//! Comparison methods built on standard (feature-removal) Shapley values:
//! local attribution difference (LAD) and attribution times shift (AxS).

use alloc::vec;
use alloc::vec::Vec;

use crate::data::FeatureGrouping;
use crate::drift::KsResult;
use crate::error::{bail, Result};
use crate::model::Classifier;
use crate::shapley::{self, Attribution, EstimatorConfig, Method, ValueFunctionSpec, ValueKind};

/// How absent features are filled for standard attributions.
#[derive(Debug, Clone, Copy)]
pub enum StandardBackground<'a> {
    /// Absent features set to zero.
    Zeros,
    /// Absent features averaged over these background rows (row-major).
    Marginal(&'a [f64]),
}

/// Standard Shapley attribution of `f_class(x)`.
pub fn standard_attribution<M: Classifier + ?Sized>(
    model: &M,
    x: &[f64],
    class: usize,
    grouping: &FeatureGrouping,
    background: StandardBackground<'_>,
    estimator: &EstimatorConfig,
    seed: u64,
) -> Result<Attribution> {
    let zeros;
    let kind = match background {
        StandardBackground::Zeros => {
            zeros = vec![0.0; x.len()];
            ValueKind::Baseline { x, baseline: &zeros, class }
        }
        StandardBackground::Marginal(rows) => ValueKind::Marginal { x, background: rows, class },
    };
    let spec = ValueFunctionSpec::new(model, grouping, kind)?;
    let mut att = estimator.estimate(&spec, seed)?;
    att.player_kind = shapley::player_kind(grouping);
    Ok(att)
}

/// `|phi(x_t) - phi(x_s)|`, both explaining the class `argmax f(x_t)`.
///
/// The result carries the `x_t` game's `v_empty`/`v_full`; efficiency does
/// not hold after taking absolute values.
pub fn lad<M: Classifier + ?Sized>(
    model: &M,
    x_t: &[f64],
    x_s: &[f64],
    grouping: &FeatureGrouping,
    background: StandardBackground<'_>,
    estimator: &EstimatorConfig,
    seed: u64,
) -> Result<Attribution> {
    if x_t.len() != x_s.len() {
        bail!(Shape, "x_t has {} values, x_s has {}", x_t.len(), x_s.len());
    }
    let class = shapley::explained_class(model, x_t)?;
    // same seed on both sides: identical coalition designs for the kernel path
    let mut at_target = standard_attribution(model, x_t, class, grouping, background, estimator, seed)?;
    let at_source = standard_attribution(model, x_s, class, grouping, background, estimator, seed)?;
    at_target.values = at_target.values.iter().zip(&at_source.values).map(|(a, b)| (a - b).abs()).collect();
    at_target.method = Method::Lad;
    at_target.degenerate |= at_source.degenerate;
    Ok(at_target)
}

/// `phi(x_t)` restricted to groups containing a drifted feature.
pub fn axs<M: Classifier + ?Sized>(
    model: &M,
    x_t: &[f64],
    drift: &KsResult,
    grouping: &FeatureGrouping,
    background: StandardBackground<'_>,
    estimator: &EstimatorConfig,
    seed: u64,
) -> Result<Attribution> {
    if drift.mask.len() != x_t.len() {
        bail!(Shape, "drift mask has {} entries for {} features", drift.mask.len(), x_t.len());
    }
    let class = shapley::explained_class(model, x_t)?;
    let mut att = standard_attribution(model, x_t, class, grouping, background, estimator, seed)?;
    apply_group_mask(&mut att.values, &grouping.group_mask(&drift.mask));
    att.method = Method::Axs;
    Ok(att)
}

fn apply_group_mask(values: &mut [f64], group_mask: &[bool]) {
    values.iter_mut().zip(group_mask).filter(|(_, &m)| !m).for_each(|(v, _)| *v = 0.0);
}

/// Drifted groups (OR over member features).
pub fn drifted_groups(drift: &KsResult, grouping: &FeatureGrouping) -> Vec<usize> {
    grouping.group_mask(&drift.mask).iter().enumerate().filter(|(_, &m)| m).map(|(g, _)| g).collect()
}
