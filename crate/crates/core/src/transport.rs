//! Exact discrete optimal transport between two empirical samples.
//!
//! With `n` source and `n` target points under uniform weights, an optimal
//! Kantorovich plan exists at an extreme point of the transport polytope,
//! i.e. a permutation matrix scaled by `1/n`. The plan is therefore computed
//! as a linear assignment problem, solved exactly with a shortest augmenting
//! path method with dual potentials (`O(n^3)`).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::model::{Classifier, LossKind};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CostKind {
    SquaredEuclidean,
    Precomputed,
}

impl CostKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostKind::SquaredEuclidean => "squared_euclidean",
            CostKind::Precomputed => "precomputed",
        }
    }
}

/// Pairwise costs `[n_s x n_t]`, row-major, finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
    kind: CostKind,
    embedding_used: bool,
}

impl CostMatrix {
    pub fn precomputed(costs: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if costs.len() != rows * cols {
            bail!(Shape, "cost buffer has {} entries, expected {}x{}", costs.len(), rows, cols);
        }
        if let Some(k) = costs.iter().position(|c| !c.is_finite() || *c < 0.0) {
            bail!(Domain, "cost at ({}, {}) is not a finite nonnegative number", k / cols, k % cols);
        }
        Ok(Self { rows, cols, costs, kind: CostKind::Precomputed, embedding_used: false })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            bail!(Shape, "ragged cost matrix");
        }
        Self::precomputed(rows.concat(), r, c)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn embedding_used(&self) -> bool {
        self.embedding_used
    }

    /// Multiplies every cost by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.costs.iter_mut().for_each(|c| *c *= factor);
        out
    }
}

/// Row-major embedding matrices used in place of raw features for the cost.
#[derive(Debug, Clone, Copy)]
pub struct Embeddings<'a> {
    pub source: &'a [f64],
    pub target: &'a [f64],
    pub dim: usize,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean costs between source and target rows, or between
/// their embeddings when supplied.
pub fn cost_matrix(source: &Dataset, target: &Dataset, embedding: Option<Embeddings<'_>>) -> Result<CostMatrix> {
    let (ns, nt) = (source.n(), target.n());
    let (src, tgt, dim, embedding_used) = match embedding {
        Some(e) => {
            if e.dim == 0 || e.source.len() != ns * e.dim || e.target.len() != nt * e.dim {
                bail!(
                    Shape,
                    "embeddings must be {}x{} and {}x{}, got {} and {} values",
                    ns,
                    e.dim,
                    nt,
                    e.dim,
                    e.source.len(),
                    e.target.len()
                );
            }
            (e.source, e.target, e.dim, true)
        }
        None => {
            if source.d() != target.d() {
                bail!(Shape, "source has {} features, target has {}", source.d(), target.d());
            }
            (source.features(), target.features(), source.d(), false)
        }
    };
    if src.iter().chain(tgt).any(|v| !v.is_finite()) {
        bail!(Domain, "cost inputs contain missing or non-finite values; impute first");
    }
    let mut costs = Vec::with_capacity(ns * nt);
    for i in 0..ns {
        let a = &src[i * dim..(i + 1) * dim];
        for j in 0..nt {
            costs.push(squared_distance(a, &tgt[j * dim..(j + 1) * dim]));
        }
    }
    Ok(CostMatrix { rows: ns, cols: nt, costs, kind: CostKind::SquaredEuclidean, embedding_used })
}

/// Solves the square linear assignment problem.
///
/// Returns `assignment[row] = col` minimizing `sum costs[row][assignment[row]]`.
/// Deterministic: ties in the augmenting-path search go to the lowest column.
pub fn solve_assignment(costs: &CostMatrix) -> Result<Vec<usize>> {
    let n = costs.rows();
    if n == 0 {
        bail!(Domain, "empty cost matrix");
    }
    if costs.cols() != n {
        bail!(Shape, "assignment needs a square cost matrix, got {}x{}", n, costs.cols());
    }

    // 1-based arrays; index 0 is a virtual column used as the path root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of_col[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Transport plan between uniform empirical measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    rows: usize,
    cols: usize,
    plan: Vec<f64>,
    objective: f64,
}

impl Coupling {
    /// Wraps an externally computed plan, checking marginals within `1e-9`.
    pub fn from_plan(plan: Vec<f64>, rows: usize, cols: usize, costs: Option<&CostMatrix>) -> Result<Self> {
        if plan.len() != rows * cols || rows == 0 || cols == 0 {
            bail!(Shape, "plan has {} entries, expected {}x{}", plan.len(), rows, cols);
        }
        if plan.iter().any(|p| !p.is_finite() || *p < 0.0) {
            bail!(Domain, "plan entries must be finite and nonnegative");
        }
        let tol = 1e-9;
        for i in 0..rows {
            let s: f64 = plan[i * cols..(i + 1) * cols].iter().sum();
            if (s - 1.0 / rows as f64).abs() > tol {
                bail!(Validation, "row {} of the plan sums to {}, expected 1/{}", i, s, rows);
            }
        }
        for j in 0..cols {
            let s: f64 = (0..rows).map(|i| plan[i * cols + j]).sum();
            if (s - 1.0 / cols as f64).abs() > tol {
                bail!(Validation, "column {} of the plan sums to {}, expected 1/{}", j, s, cols);
            }
        }
        let objective = match costs {
            Some(c) => {
                if c.rows() != rows || c.cols() != cols {
                    bail!(Shape, "cost matrix does not match plan shape");
                }
                plan.iter().zip(c.as_slice()).map(|(p, c)| p * c).sum()
            }
            None => f64::NAN,
        };
        Ok(Self { rows, cols, plan, objective })
    }

    fn from_assignment(assignment: &[usize], costs: &CostMatrix) -> Self {
        let n = assignment.len();
        let w = 1.0 / n as f64;
        let mut plan = vec![0.0; n * n];
        let mut total = 0.0;
        for (i, &j) in assignment.iter().enumerate() {
            plan[i * n + j] = w;
            total += costs.get(i, j);
        }
        Self { rows: n, cols: n, plan, objective: total * w }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn plan(&self) -> &[f64] {
        &self.plan
    }

    /// `sum costs * plan`.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Conditional weights of the source samples given target column `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// Optimal coupling for equal-size uniform marginals.
pub fn solve_coupling(costs: &CostMatrix) -> Result<Coupling> {
    if costs.rows() == 0 || costs.cols() == 0 {
        bail!(Domain, "empty cost matrix");
    }
    if costs.rows() != costs.cols() {
        bail!(Shape, "exact solver needs equal sample counts, got {} source and {} target; subsample first", costs.rows(), costs.cols());
    }
    let assignment = solve_assignment(costs)?;
    Ok(Coupling::from_assignment(&assignment, costs))
}

/// Deterministic reductions of a coupling.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportMap {
    /// Source index -> most related target index.
    pub forward: Vec<usize>,
    /// Target index -> most related source index.
    pub inverse: Vec<usize>,
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

/// Per-row and per-column argmax of the plan, ties to the lowest index.
pub fn coupling_to_maps(plan: &Coupling) -> TransportMap {
    let forward = (0..plan.rows()).map(|i| argmax_lowest((0..plan.cols()).map(|j| plan.get(i, j)))).collect();
    let inverse = (0..plan.cols()).map(|j| argmax_lowest((0..plan.rows()).map(|i| plan.get(i, j)))).collect();
    TransportMap { forward, inverse }
}

/// Target labels estimated from matched source samples.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelTransfer {
    pub estimated_labels: Vec<usize>,
    pub matched_source_index: Vec<usize>,
}

pub fn transfer_labels(map: &TransportMap, source: &Dataset) -> Result<LabelTransfer> {
    let labels = match source.labels() {
        Some(l) => l,
        None => bail!(Precondition, "label transfer needs a labeled source"),
    };
    let mut estimated = Vec::with_capacity(map.inverse.len());
    for &s in &map.inverse {
        if s >= labels.len() {
            bail!(Shape, "map points at source row {} but source has {} rows", s, labels.len());
        }
        estimated.push(labels[s]);
    }
    Ok(LabelTransfer { estimated_labels: estimated, matched_source_index: map.inverse.clone() })
}

/// Mean loss of `model` on the target rows against transferred labels.
pub fn estimate_target_performance<M: Classifier + ?Sized>(
    model: &M,
    target: &Dataset,
    transfer: &LabelTransfer,
    loss: LossKind,
) -> Result<f64> {
    mean_loss(model, target, &transfer.estimated_labels, loss)
}

/// Mean loss of `model` on `data` against `labels`.
pub fn mean_loss<M: Classifier + ?Sized>(model: &M, data: &Dataset, labels: &[usize], loss: LossKind) -> Result<f64> {
    if labels.len() != data.n() {
        bail!(Shape, "{} labels for {} rows", labels.len(), data.n());
    }
    if data.d() != model.input_dim() {
        bail!(Shape, "model expects {} features, data has {}", model.input_dim(), data.d());
    }
    let probs = model.predict_proba_batch(data.features())?;
    let c = model.class_count();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += loss.evaluate(&probs[i * c..(i + 1) * c], y)?;
    }
    Ok(total / labels.len() as f64)
}

/// Fraction of positions where the transferred label equals the true one.
pub fn label_transport_accuracy(transfer: &LabelTransfer, true_labels: &[usize]) -> Result<f64> {
    let est = &transfer.estimated_labels;
    if est.len() != true_labels.len() {
        bail!(Shape, "{} estimated labels vs {} true labels", est.len(), true_labels.len());
    }
    if est.is_empty() {
        bail!(Domain, "no labels to compare");
    }
    let hits = est.iter().zip(true_labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / est.len() as f64)
}

/// Which side was reduced to equalize sample counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subsample {
    None,
    Source(Vec<usize>),
    Target(Vec<usize>),
}

impl Subsample {
    pub fn describe(&self) -> Option<String> {
        match self {
            Subsample::None => None,
            Subsample::Source(idx) => Some(alloc::format!("source subsampled to {} rows", idx.len())),
            Subsample::Target(idx) => Some(alloc::format!("target subsampled to {} rows", idx.len())),
        }
    }
}

/// Uniformly subsamples the larger of two row counts down to the smaller.
/// The kept indices are returned in ascending order.
pub fn equalize_counts(n_source: usize, n_target: usize, rng: &mut StreamRng) -> Subsample {
    use core::cmp::Ordering;
    let pick = |n: usize, k: usize, rng: &mut StreamRng| {
        let mut v = index::sample(rng, n, k).into_vec();
        v.sort_unstable();
        v
    };
    match n_source.cmp(&n_target) {
        Ordering::Equal => Subsample::None,
        Ordering::Greater => Subsample::Source(pick(n_source, n_target, rng)),
        Ordering::Less => Subsample::Target(pick(n_target, n_source, rng)),
    }
}
