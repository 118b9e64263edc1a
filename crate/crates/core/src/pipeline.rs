//! End-to-end monitoring: transport, label-free performance estimate,
//! drift mask and per-instance shift attributions.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::seq::index;
use rand::Rng;

use crate::baselines::{self, StandardBackground};
use crate::data::{Dataset, FeatureGrouping};
use crate::drift::{drift_mask, KsResult};
use crate::error::{bail, Result};
use crate::exec::Executor;
use crate::model::{Classifier, LossKind};
use crate::rng::RngSpec;
use crate::shapley::{self, Attribution, Estimator, EstimatorConfig, Method, ShiftAttributionInput, ShiftMethod};
use crate::shiftgen::MeanImputer;
use crate::transport::{
    self, cost_matrix, coupling_to_maps, equalize_counts, label_transport_accuracy, mean_loss, solve_coupling, transfer_labels, CostKind,
    Embeddings, LabelTransfer, Subsample, TransportMap,
};

/// Background rows drawn from the source for marginal standard attributions.
pub const DEFAULT_BACKGROUND_ROWS: usize = 30;

/// How the comparison methods fill absent features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    Zeros,
    /// Average over this many uniformly drawn source rows.
    Marginal(usize),
}

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub method: Method,
    pub loss: LossKind,
    pub alpha: f64,
    pub grouping: FeatureGrouping,
    pub estimator: EstimatorConfig,
    pub background: BackgroundMode,
    pub seed: u64,
}

impl MonitorConfig {
    pub fn new(method: Method, grouping: FeatureGrouping, seed: u64) -> Self {
        Self {
            method,
            loss: LossKind::CrossEntropy,
            alpha: 0.05,
            grouping,
            estimator: EstimatorConfig::default(),
            background: BackgroundMode::Zeros,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonitorOutcome {
    pub subsample: Subsample,
    /// Original target row of each attributed instance.
    pub target_rows: Vec<usize>,
    /// Original source row matched to each attributed instance.
    pub matched_source_index: Vec<usize>,
    pub objective: f64,
    pub cost_kind: CostKind,
    pub embedding_used: bool,
    /// Maps in subsampled coordinates.
    pub map: TransportMap,
    pub estimated_labels: Option<Vec<usize>>,
    pub estimated_target_loss: Option<f64>,
    pub source_loss: Option<f64>,
    pub label_transport_accuracy: Option<f64>,
    pub drift: KsResult,
    pub attributions: Vec<Attribution>,
    pub warnings: Vec<String>,
}

fn impute_if_needed(data: &Dataset, imputer: &MeanImputer, what: &str, warnings: &mut Vec<String>) -> Result<Dataset> {
    if !data.has_missing() {
        return Ok(data.clone());
    }
    let count = data.missing().map_or(0, |m| m.count());
    warnings.push(format!("{count} missing {what} values imputed with source column means"));
    imputer.impute(data)
}

/// Runs the monitoring pipeline for `model` on a source/target pair.
///
/// Missing values are mean-imputed (means from the source) before transport
/// and attribution; the drift test uses the observed entries only. When the
/// row counts differ the larger side is subsampled.
pub fn monitor<M, E>(
    model: &M,
    source: &Dataset,
    target: &Dataset,
    embeddings: Option<Embeddings<'_>>,
    cfg: &MonitorConfig,
    executor: &E,
) -> Result<MonitorOutcome>
where
    M: Classifier + Sync + ?Sized,
    E: Executor,
{
    if source.d() != target.d() {
        bail!(Shape, "source has {} features, target has {}", source.d(), target.d());
    }
    if model.input_dim() != source.d() {
        bail!(Shape, "model expects {} features, data has {}", model.input_dim(), source.d());
    }
    if cfg.grouping.features() != source.d() {
        bail!(Shape, "grouping covers {} features, data has {}", cfg.grouping.features(), source.d());
    }
    cfg.estimator.validate()?;
    let spec = RngSpec::new(cfg.seed);
    let mut warnings = Vec::new();

    let drift = drift_mask(source, target, cfg.alpha)?;
    let imputer = MeanImputer::fit(source)?;
    let source_full = impute_if_needed(source, &imputer, "source", &mut warnings)?;
    let target_full = impute_if_needed(target, &imputer, "target", &mut warnings)?;

    let subsample = equalize_counts(source.n(), target.n(), &mut spec.stream("pipeline/subsample", 0));
    warnings.extend(subsample.describe());
    let (source_rows, target_rows): (Vec<usize>, Vec<usize>) = match &subsample {
        Subsample::None => ((0..source.n()).collect(), (0..target.n()).collect()),
        Subsample::Source(idx) => (idx.clone(), (0..target.n()).collect()),
        Subsample::Target(idx) => ((0..source.n()).collect(), idx.clone()),
    };
    let (src, tgt) = match &subsample {
        Subsample::None => (source_full.clone(), target_full.clone()),
        Subsample::Source(idx) => (source_full.select_rows(idx)?, target_full.clone()),
        Subsample::Target(idx) => (source_full.clone(), target_full.select_rows(idx)?),
    };
    let picked;
    let embeddings = match embeddings {
        Some(e) if !matches!(subsample, Subsample::None) => {
            let take = |buf: &[f64], rows: &[usize]| -> Result<Vec<f64>> {
                let mut out = Vec::with_capacity(rows.len() * e.dim);
                for &r in rows {
                    let chunk =
                        buf.get(r * e.dim..(r + 1) * e.dim).ok_or_else(|| crate::Error::Shape(format!("embedding row {r} missing")))?;
                    out.extend_from_slice(chunk);
                }
                Ok(out)
            };
            picked = (take(e.source, &source_rows)?, take(e.target, &target_rows)?);
            Some(Embeddings { source: &picked.0, target: &picked.1, dim: e.dim })
        }
        other => other,
    };

    let costs = cost_matrix(&src, &tgt, embeddings)?;
    let coupling = solve_coupling(&costs)?;
    let map = coupling_to_maps(&coupling);
    let matched_source_index = map.inverse.iter().map(|&s| source_rows[s]).collect();

    let transfer: Option<LabelTransfer> = if src.labels().is_some() { Some(transfer_labels(&map, &src)?) } else { None };
    if transfer.is_none() {
        warnings.push(String::from("source is unlabeled; no performance estimate"));
    }
    let estimated_target_loss = transfer.as_ref().map(|t| transport::estimate_target_performance(model, &tgt, t, cfg.loss)).transpose()?;
    let source_loss = source_full.labels().map(|y| mean_loss(model, &source_full, y, cfg.loss)).transpose()?;
    let label_accuracy = match (&transfer, tgt.labels()) {
        (Some(t), Some(y)) => Some(label_transport_accuracy(t, y)?),
        _ => None,
    };

    let attributions = match cfg.method {
        Method::Xpe | Method::Xppe => {
            let method = if cfg.method == Method::Xpe { ShiftMethod::Xpe } else { ShiftMethod::Xppe };
            let input = ShiftAttributionInput {
                model,
                source: &src,
                target: &tgt,
                map: &map,
                transfer: transfer.as_ref(),
                grouping: &cfg.grouping,
                loss: cfg.loss,
                estimator: cfg.estimator,
                rng: spec,
            };
            shapley::attribute_dataset(method, &input, executor)?
        }
        Method::Lad | Method::Axs => {
            let background_rows = match cfg.background {
                BackgroundMode::Zeros => None,
                BackgroundMode::Marginal(k) => {
                    if k == 0 {
                        bail!(Domain, "background needs at least one row");
                    }
                    let mut rng = spec.stream("pipeline/background", 0);
                    let mut rows = index::sample(&mut rng, source_full.n(), k.min(source_full.n())).into_vec();
                    rows.sort_unstable();
                    Some(source_full.select_rows(&rows)?.features().to_vec())
                }
            };
            let background = match &background_rows {
                None => StandardBackground::Zeros,
                Some(rows) => StandardBackground::Marginal(rows),
            };
            let method = cfg.method;
            executor.map(tgt.n(), |j| {
                let seed = spec.derive("shapley/kernel", j as u64);
                if method == Method::Lad {
                    baselines::lad(model, tgt.row(j), src.row(map.inverse[j]), &cfg.grouping, background, &cfg.estimator, seed)
                } else {
                    baselines::axs(model, tgt.row(j), &drift, &cfg.grouping, background, &cfg.estimator, seed)
                }
            })?
        }
        Method::Random => {
            let kind = shapley::player_kind(&cfg.grouping);
            let g = cfg.grouping.groups();
            executor.map(tgt.n(), |j| {
                let mut rng = spec.stream("pipeline/random", j as u64);
                Ok(Attribution {
                    values: (0..g).map(|_| rng.random::<f64>()).collect(),
                    player_kind: kind,
                    method: Method::Random,
                    estimator: Estimator::None,
                    v_empty: 0.0,
                    v_full: 0.0,
                    degenerate: false,
                })
            })?
        }
        Method::Shapley => bail!(Domain, "plain Shapley is not a shift attribution method"),
    };
    let degenerate = attributions.iter().filter(|a| a.degenerate).count();
    if degenerate > 0 {
        warnings.push(format!("{degenerate} instances had a constant sampled value function; split uniformly"));
    }

    Ok(MonitorOutcome {
        subsample,
        target_rows,
        matched_source_index,
        objective: coupling.objective(),
        cost_kind: costs.kind(),
        embedding_used: costs.embedding_used(),
        map,
        estimated_labels: transfer.map(|t| t.estimated_labels),
        estimated_target_loss,
        source_loss,
        label_transport_accuracy: label_accuracy,
        drift,
        attributions,
        warnings,
    })
}

/// Group indices whose members overlap `features`.
pub fn groups_of(grouping: &FeatureGrouping, features: &[usize]) -> Vec<usize> {
    let d = grouping.features();
    let mut mask = vec![false; d];
    features.iter().filter(|&&j| j < d).for_each(|&j| mask[j] = true);
    grouping.group_mask(&mask).iter().enumerate().filter(|(_, &m)| m).map(|(g, _)| g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::model::{train, ModelKind, TrainConfig};
    use crate::shiftgen::make_blobs;

    #[test]
    fn identical_target_gives_source_loss_and_zero_xpe() {
        let ds = make_blobs(40, 3, 2, 4.0, 1.0, 1).unwrap();
        let m = train(ModelKind::LogisticRegression, &ds, &TrainConfig::default()).unwrap();
        let cfg = MonitorConfig::new(Method::Xpe, FeatureGrouping::identity(3), 5);
        let out = monitor(&m, &ds, &ds, None, &cfg, &Sequential).unwrap();
        assert!((out.estimated_target_loss.unwrap() - out.source_loss.unwrap()).abs() < 1e-9);
        assert_eq!(out.label_transport_accuracy, Some(1.0));
        assert!(out.attributions.iter().all(|a| a.values.iter().all(|&v| v == 0.0)));
        assert_eq!(out.matched_source_index, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn unequal_counts_are_subsampled() {
        let ds = make_blobs(30, 2, 2, 4.0, 1.0, 2).unwrap();
        let tgt = ds.select_rows(&(0..20).collect::<Vec<_>>()).unwrap();
        let m = train(ModelKind::LogisticRegression, &ds, &TrainConfig::default()).unwrap();
        let cfg = MonitorConfig::new(Method::Xppe, FeatureGrouping::identity(2), 5);
        let out = monitor(&m, &ds, &tgt, None, &cfg, &Sequential).unwrap();
        assert!(matches!(out.subsample, Subsample::Source(ref idx) if idx.len() == 20));
        assert_eq!(out.attributions.len(), 20);
        assert!(out.warnings.iter().any(|w| w.contains("subsampled")));
    }

    #[test]
    fn all_methods_run() {
        let ds = make_blobs(24, 3, 2, 4.0, 1.0, 3).unwrap();
        let tgt = ds.replace_features(ds.features().iter().map(|v| v + 1.0).collect(), None).unwrap();
        let m = train(ModelKind::LogisticRegression, &ds, &TrainConfig::default()).unwrap();
        for method in [Method::Xpe, Method::Xppe, Method::Lad, Method::Axs, Method::Random] {
            let mut cfg = MonitorConfig::new(method, FeatureGrouping::identity(3), 1);
            cfg.background = BackgroundMode::Marginal(DEFAULT_BACKGROUND_ROWS);
            let out = monitor(&m, &ds, &tgt, None, &cfg, &Sequential).unwrap();
            assert_eq!(out.attributions.len(), 24);
            assert!(out.attributions.iter().all(|a| a.method == method));
        }
    }

    #[test]
    fn xpe_needs_labeled_source() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let m = crate::model::TrainedModel::initialize(ModelKind::LogisticRegression, 1, 2, &TrainConfig::default());
        let cfg = MonitorConfig::new(Method::Xpe, FeatureGrouping::identity(1), 1);
        assert!(matches!(monitor(&m, &ds, &ds, None, &cfg, &Sequential), Err(crate::Error::Precondition(_))));
        let cfg = MonitorConfig::new(Method::Xppe, FeatureGrouping::identity(1), 1);
        assert!(monitor(&m, &ds, &ds, None, &cfg, &Sequential).is_ok());
    }
}
