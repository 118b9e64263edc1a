//! Evaluation of shift attributions against ground truth: Shift-Faithfulness,
//! Complexity, ROAR-S, Global Performance-Correlation and the group
//! importance ratio.
//!
//! Correlations are Pearson throughout. Zero-variance correlations yield
//! `None` rather than an error so callers can exclude and count them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::data::{Dataset, FeatureGrouping};
use crate::error::{bail, Result};
use crate::exec::Executor;
use crate::math;
use crate::model::{self, Classifier, LossKind, ModelKind, TrainConfig};
use crate::pipeline::{self, MonitorConfig};
use crate::rng::RngSpec;
use crate::shapley::{partial_shift, Attribution, Coalition};
use crate::transport::mean_loss;

/// Default threshold on `|v_full - v_empty|` below which an instance is
/// treated as having no measurable anticipated change.
pub const DEFAULT_TAU: f64 = 1e-4;

/// Whether a generated shift is known to preserve labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LabelPreservation {
    ExactZero,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShiftDescriptor {
    pub kind: String,
    pub params: Vec<(String, f64)>,
    /// Shifted feature indices.
    pub features: Vec<usize>,
    pub seed: u64,
}

/// A shift with ground truth: target row `j` is the shifted version of
/// `pre_shift` row `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftScenario {
    pub source: Dataset,
    pub target: Dataset,
    pub pre_shift: Dataset,
    pub descriptor: ShiftDescriptor,
    pub label_preserving: LabelPreservation,
    /// Leading rows forming the training split, when the scenario has one.
    pub n_train: Option<usize>,
}

impl ShiftScenario {
    pub fn validate(&self) -> Result<()> {
        let (s, t, p) = (&self.source, &self.target, &self.pre_shift);
        if s.d() != t.d() || p.d() != t.d() {
            bail!(Shape, "scenario feature counts differ: {}, {}, {}", s.d(), t.d(), p.d());
        }
        if p.n() != t.n() {
            bail!(Shape, "pre-shift has {} rows, target has {}", p.n(), t.n());
        }
        if let Some(k) = self.n_train {
            if k == 0 || k >= t.n() || k >= s.n() {
                bail!(Shape, "train split of {} rows leaves no test rows", k);
            }
        }
        Ok(())
    }

    /// Splits every dataset at row `n_train` into train and test scenarios.
    pub fn split(&self, n_train: usize) -> Result<(Self, Self)> {
        if n_train == 0 || n_train >= self.target.n() || n_train >= self.source.n() {
            bail!(Shape, "cannot split {} rows at {}", self.target.n(), n_train);
        }
        let part = |ds: &Dataset, lo: usize, hi: usize| ds.select_rows(&(lo..hi).collect::<Vec<_>>());
        let mk = |lo_s: usize, hi_s: usize, lo_t: usize, hi_t: usize| -> Result<Self> {
            Ok(Self {
                source: part(&self.source, lo_s, hi_s)?,
                target: part(&self.target, lo_t, hi_t)?,
                pre_shift: part(&self.pre_shift, lo_t, hi_t)?,
                descriptor: self.descriptor.clone(),
                label_preserving: self.label_preserving,
                n_train: None,
            })
        };
        Ok((mk(0, n_train, 0, n_train)?, mk(n_train, self.source.n(), n_train, self.target.n())?))
    }

    pub fn split_default(&self) -> Result<(Self, Self)> {
        self.split(self.n_train.unwrap_or(self.target.n() / 2))
    }
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (math::mean(a), math::mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / math::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// One target instance with its ground truth.
#[derive(Debug, Clone, Copy)]
pub struct FaithInstance<'a> {
    pub x_t: &'a [f64],
    pub y_t: usize,
    pub pre_shift: &'a [f64],
    pub y_s: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaithConfig {
    pub subset_size: usize,
    pub n_subsets: usize,
    pub loss: LossKind,
}

impl FaithConfig {
    /// 100 subsets of a quarter of the players (at least one, at most `g - 1`).
    pub fn for_players(g: usize) -> Self {
        let subset_size = (math::ceil(g as f64 / 4.0) as usize).clamp(1, g.saturating_sub(1).max(1));
        Self { subset_size, n_subsets: 100, loss: LossKind::CrossEntropy }
    }
}

/// Shift-Faithfulness of one attribution.
///
/// Correlates `sum_{i in K} phi_i` with
/// `L(f(x_t), y_t) - L(f(x_t with K reverted to pre-shift), y_s)` over
/// `n_subsets` uniformly drawn coalitions of fixed size.
pub fn shift_faithfulness<M: Classifier + ?Sized>(
    phi: &Attribution,
    model: &M,
    instance: FaithInstance<'_>,
    grouping: &FeatureGrouping,
    config: &FaithConfig,
    seed: u64,
) -> Result<Option<f64>> {
    let g = grouping.groups();
    if phi.values.len() != g {
        bail!(Shape, "attribution has {} players, grouping has {}", phi.values.len(), g);
    }
    if config.subset_size == 0 || config.subset_size >= g {
        bail!(Domain, "subset size {} must lie in [1, {}]", config.subset_size, g.saturating_sub(1));
    }
    let d = grouping.features();
    let c = model.class_count();
    let full_loss = config.loss.evaluate(&model.predict_proba(instance.x_t)?, instance.y_t)?;
    let mut rng = RngSpec::new(seed).stream("metrics/sfaith", 0);
    let mut sums = Vec::with_capacity(config.n_subsets);
    let mut rows = Vec::with_capacity(config.n_subsets * d);
    for _ in 0..config.n_subsets {
        let members = index::sample(&mut rng, g, config.subset_size).into_vec();
        sums.push(members.iter().map(|&i| phi.values[i]).sum::<f64>());
        // keep the complement at target values, revert K
        let kept = Coalition::from_members(g, &members)?.complement();
        rows.extend(partial_shift(instance.x_t, instance.pre_shift, &kept, grouping)?);
    }
    let probs = model.predict_proba_batch(&rows)?;
    let mut deltas = Vec::with_capacity(config.n_subsets);
    for p in probs.chunks_exact(c) {
        deltas.push(full_loss - config.loss.evaluate(p, instance.y_s)?);
    }
    Ok(pearson(&sums, &deltas))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaithSummary {
    pub per_instance: Vec<Option<f64>>,
    /// Mean over instances that were kept and produced a correlation.
    pub mean: Option<f64>,
    /// Positions excluded by the marginal-change filter.
    pub excluded: Vec<usize>,
    /// Kept positions whose correlation was undefined.
    pub undefined: Vec<usize>,
}

/// Positions whose `|v_full - v_empty|` is below `tau`.
pub fn marginal_instances(attributions: &[Attribution], tau: f64) -> Vec<bool> {
    attributions.iter().map(|a| (a.v_full - a.v_empty).abs() < tau).collect()
}

/// S-Faith for attributions of scenario target rows `rows[k]`.
///
/// `exclude[k]` drops an instance from the mean (see [`marginal_instances`]).
pub fn shift_faithfulness_scenario<M: Classifier + Sync + ?Sized, E: Executor>(
    attributions: &[Attribution],
    rows: &[usize],
    exclude: &[bool],
    model: &M,
    scenario: &ShiftScenario,
    grouping: &FeatureGrouping,
    config: &FaithConfig,
    seed: u64,
    executor: &E,
) -> Result<FaithSummary> {
    if attributions.len() != rows.len() || exclude.len() != rows.len() {
        bail!(Shape, "attributions, rows and exclusion flags differ in length");
    }
    let y_t = scenario.target.require_labels()?;
    let y_s = scenario.pre_shift.labels().or(scenario.source.labels()).unwrap_or(y_t);
    let spec = RngSpec::new(seed);
    let per_instance = executor.map(rows.len(), |k| {
        if exclude[k] {
            return Ok(None);
        }
        let j = rows[k];
        if j >= scenario.target.n() {
            bail!(Shape, "row {} out of range", j);
        }
        let inst = FaithInstance { x_t: scenario.target.row(j), y_t: y_t[j], pre_shift: scenario.pre_shift.row(j), y_s: y_s[j] };
        shift_faithfulness(&attributions[k], model, inst, grouping, config, spec.derive("metrics/sfaith", j as u64))
    })?;
    let excluded: Vec<usize> = exclude.iter().enumerate().filter(|(_, &e)| e).map(|(k, _)| k).collect();
    let undefined: Vec<usize> = (0..rows.len()).filter(|&k| !exclude[k] && per_instance[k].is_none()).collect();
    let kept: Vec<f64> = per_instance.iter().flatten().copied().collect();
    let mean = (!kept.is_empty()).then(|| math::mean(&kept));
    Ok(FaithSummary { per_instance, mean, excluded, undefined })
}

/// Entropy (nats) of `|phi| / sum |phi|`; `None` if all values are zero.
pub fn complexity(phi: &Attribution) -> Option<f64> {
    let total: f64 = phi.values.iter().map(|v| v.abs()).sum();
    if !(total > 0.0) {
        return None;
    }
    let p: Vec<f64> = phi.values.iter().map(|v| v.abs() / total).collect();
    Some(model::entropy(&p))
}

/// `max(0, l_t_tilde - l_s_tilde) / (l_t - l_s)`.
pub fn roar_s_ratio(l_t_tilde: f64, l_s_tilde: f64, l_t: f64, l_s: f64, tau: f64) -> Result<f64> {
    let denom = l_t - l_s;
    if !(denom > tau) {
        bail!(Evaluation, "shift has no measurable effect (loss gap {denom:.3e} <= {tau:.1e})");
    }
    Ok((l_t_tilde - l_s_tilde).max(0.0) / denom)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoarOutcome {
    pub roar_s: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_s"))]
    pub l_s: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_t"))]
    pub l_t: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_s_tilde"))]
    pub l_s_tilde: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_t_tilde"))]
    pub l_t_tilde: f64,
}

#[derive(Debug, Clone)]
pub struct RoarConfig {
    pub model_kind: ModelKind,
    pub train: TrainConfig,
    pub removal_fraction: f64,
    pub monitor: MonitorConfig,
    pub tau: f64,
}

/// Top `k` players by attribution value, ties to the lowest index.
pub fn top_players(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn remove_features(data: &Dataset, removals: &[Vec<usize>], fill: &[f64]) -> Result<Dataset> {
    let d = data.d();
    let mut feats = data.features().to_vec();
    let mut missing = data.missing().cloned();
    for (i, cols) in removals.iter().enumerate() {
        for &j in cols {
            feats[i * d + j] = fill[j];
            if let Some(m) = missing.as_mut() {
                m.set(i, j, false);
            }
        }
    }
    data.replace_features(feats, missing)
}

/// Remove, retrain and shift.
///
/// Trains on the source training split, attributes the shift on both
/// target splits, replaces each instance's top attributed features with the
/// source-training feature mean in all four splits (source row `j` shares
/// the removal of its paired target row `j`), retrains, and reports the
/// share of the shift-induced loss gap that remains.
pub fn roar_s<E: Executor>(
    train_split: &ShiftScenario,
    test_split: &ShiftScenario,
    config: &RoarConfig,
    executor: &E,
) -> Result<RoarOutcome> {
    if !(0.0..=1.0).contains(&config.removal_fraction) {
        bail!(Domain, "removal fraction must lie in [0, 1]");
    }
    train_split.validate()?;
    test_split.validate()?;
    if train_split.source.n() != train_split.target.n() || test_split.source.n() != test_split.target.n() {
        bail!(Shape, "ROAR-S needs paired source and target rows in each split");
    }
    let kind = config.model_kind;
    let loss = LossKind::CrossEntropy;
    let f = model::train(kind, &train_split.source, &config.train)?;
    let l_s = mean_loss(&f, &test_split.source, test_split.source.require_labels()?, loss)?;
    let l_t = mean_loss(&f, &test_split.target, test_split.target.require_labels()?, loss)?;
    if !(l_t - l_s > config.tau) {
        bail!(Evaluation, "shift has no measurable effect (L_t - L_s = {:.3e})", l_t - l_s);
    }

    let g = config.monitor.grouping.groups();
    let k = math::ceil(config.removal_fraction * g as f64) as usize;
    let fill = train_split.source.column_means();
    let mut removed = Vec::with_capacity(2);
    for (split_idx, split) in [train_split, test_split].into_iter().enumerate() {
        let removals: Vec<Vec<usize>> = if k == 0 {
            vec![Vec::new(); split.target.n()]
        } else {
            let mut cfg = config.monitor.clone();
            cfg.seed = RngSpec::new(config.monitor.seed).derive("metrics/roar", split_idx as u64);
            let outcome = pipeline::monitor(&f, &split.source, &split.target, None, &cfg, executor)?;
            if outcome.target_rows.len() != split.target.n() {
                bail!(Shape, "ROAR-S attributions must cover every target row");
            }
            outcome
                .attributions
                .iter()
                .map(|a| {
                    let mut cols: Vec<usize> =
                        top_players(&a.values, k).into_iter().flat_map(|p| config.monitor.grouping.members(p)).collect();
                    cols.sort_unstable();
                    cols
                })
                .collect()
        };
        removed.push((remove_features(&split.source, &removals, &fill)?, remove_features(&split.target, &removals, &fill)?));
    }
    let (src_train, _) = &removed[0];
    let (src_test, tgt_test) = &removed[1];
    let f_tilde = model::train(kind, src_train, &config.train)?;
    let l_s_tilde = mean_loss(&f_tilde, src_test, src_test.require_labels()?, loss)?;
    let l_t_tilde = mean_loss(&f_tilde, tgt_test, tgt_test.require_labels()?, loss)?;
    let roar_s = roar_s_ratio(l_t_tilde, l_s_tilde, l_t, l_s, config.tau)?;
    Ok(RoarOutcome { roar_s, l_s, l_t, l_s_tilde, l_t_tilde })
}

/// Per-instance loss impact of a corruption: `L(f(imputed), y) - L(f(clean), y)`.
pub fn corruption_loss_change<M: Classifier + ?Sized>(
    model: &M,
    imputed: &Dataset,
    clean: &Dataset,
    labels: &[usize],
    loss: LossKind,
) -> Result<Vec<f64>> {
    if imputed.n() != clean.n() || imputed.d() != clean.d() || labels.len() != clean.n() {
        bail!(Shape, "imputed, clean and label sets are not aligned");
    }
    let c = model.class_count();
    let a = model.predict_proba_batch(imputed.features())?;
    let b = model.predict_proba_batch(clean.features())?;
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| Ok(loss.evaluate(&a[i * c..(i + 1) * c], y)? - loss.evaluate(&b[i * c..(i + 1) * c], y)?))
        .collect()
}

/// Global Performance-Correlation between a column's attribution and the
/// per-instance loss change caused by corrupting (then imputing) it.
pub fn gpc<M: Classifier + ?Sized>(
    phi_j: &[f64],
    model: &M,
    imputed: &Dataset,
    clean: &Dataset,
    labels: &[usize],
    loss: LossKind,
) -> Result<Option<f64>> {
    let delta = corruption_loss_change(model, imputed, clean, labels, loss)?;
    gpc_from_changes(phi_j, &delta)
}

pub fn gpc_from_changes(phi_j: &[f64], loss_change: &[f64]) -> Result<Option<f64>> {
    if phi_j.len() != loss_change.len() {
        bail!(Shape, "{} attributions for {} instances", phi_j.len(), loss_change.len());
    }
    if phi_j.len() < 3 {
        bail!(Evaluation, "GPC needs at least 3 instances, got {}", phi_j.len());
    }
    Ok(pearson(phi_j, loss_change))
}

/// Share of total absolute attribution that falls on `designated` groups.
pub fn group_importance_ratio(attributions: &[Attribution], designated: &[usize]) -> Result<Option<f64>> {
    if attributions.is_empty() {
        bail!(Domain, "no attributions");
    }
    let g = attributions[0].values.len();
    if let Some(&bad) = designated.iter().find(|&&x| x >= g) {
        bail!(Domain, "designated group {} out of range for {} groups", bad, g);
    }
    let mut flag = vec![false; g];
    designated.iter().for_each(|&x| flag[x] = true);
    let (mut part, mut total) = (0.0, 0.0);
    for a in attributions {
        if a.values.len() != g {
            bail!(Shape, "attributions disagree on the player count");
        }
        for (i, v) in a.values.iter().enumerate() {
            total += v.abs();
            if flag[i] {
                part += v.abs();
            }
        }
    }
    Ok((total > 0.0).then(|| part / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::{Estimator, Method, PlayerKind};

    fn att(values: Vec<f64>) -> Attribution {
        Attribution {
            values,
            player_kind: PlayerKind::Features,
            method: Method::Xpe,
            estimator: Estimator::Exact,
            v_empty: 0.0,
            v_full: 1.0,
            degenerate: false,
        }
    }

    #[test]
    fn pearson_closed_form() {
        // means 2 and 0; cov -4; variances 2 and 14 -> r = -4 / sqrt(28)
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, -3.0]).unwrap();
        assert!((r - (-4.0 / libm::sqrt(28.0))).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn gpc_examples() {
        let d = [0.3, -0.1, 0.7, 0.0];
        assert_eq!(gpc_from_changes(&d, &d).unwrap(), Some(1.0));
        assert_eq!(gpc_from_changes(&[2.0; 4], &d).unwrap(), None);
        assert!(gpc_from_changes(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn complexity_examples() {
        assert!((complexity(&att(vec![0.5, -0.5, 0.5, 0.5])).unwrap() - libm::log(4.0)).abs() < 1e-12);
        assert_eq!(complexity(&att(vec![0.0, 3.0, 0.0])).unwrap(), 0.0);
        assert!((complexity(&att(vec![2.0, -2.0, 0.0, 0.0])).unwrap() - libm::log(2.0)).abs() < 1e-12);
        assert_eq!(complexity(&att(vec![0.0, 0.0])), None);
    }

    #[test]
    fn roar_ratio_examples() {
        assert_eq!(roar_s_ratio(0.4, 0.4, 0.9, 0.4, DEFAULT_TAU).unwrap(), 0.0);
        assert_eq!(roar_s_ratio(0.9, 0.4, 0.9, 0.4, DEFAULT_TAU).unwrap(), 1.0);
        assert_eq!(roar_s_ratio(0.3, 0.5, 0.9, 0.4, DEFAULT_TAU).unwrap(), 0.0);
        assert!(matches!(roar_s_ratio(0.3, 0.5, 0.4, 0.4, DEFAULT_TAU), Err(crate::Error::Evaluation(_))));
    }

    #[test]
    fn group_ratio_examples() {
        let a = [att(vec![1.0, -3.0])];
        assert_eq!(group_importance_ratio(&a, &[1]).unwrap(), Some(0.75));
        assert_eq!(group_importance_ratio(&a, &[0, 1]).unwrap(), Some(1.0));
        let b = [att(vec![0.0, 2.0])];
        assert_eq!(group_importance_ratio(&b, &[0]).unwrap(), Some(0.0));
        assert_eq!(group_importance_ratio(&[att(vec![0.0, 0.0])], &[0]).unwrap(), None);
    }

    #[test]
    fn top_players_breaks_ties_low() {
        assert_eq!(top_players(&[0.5, 2.0, 2.0, -1.0], 2), vec![1, 2]);
        assert_eq!(top_players(&[1.0, 1.0, 1.0], 1), vec![0]);
        assert!(top_players(&[1.0], 0).is_empty());
    }
}
