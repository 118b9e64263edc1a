//! Coalition games and Shapley value estimators.
//!
//! A game assigns a real value to every coalition of players (features or
//! feature groups). [`exact_shapley`] enumerates all `2^g` coalitions;
//! [`kernel_shapley`] samples coalitions under the Shapley kernel and solves
//! the efficiency-constrained weighted least-squares problem, which recovers
//! the exact values once every coalition is covered.
//!
//! The value functions of interest simulate *partial feature shifts*: a
//! coalition `K` keeps the target values of its members and reverts every
//! other feature to the matched pre-shift (source) values.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};

use crate::data::{Dataset, FeatureGrouping};
use crate::error::{bail, Result};
use crate::exec::Executor;
use crate::math;
use crate::model::{argmax, entropy, loss, Classifier, LossKind};
use crate::rng::{RngSpec, StreamRng};
use crate::transport::{LabelTransfer, TransportMap};

/// Hard limit for full enumeration.
pub const MAX_EXACT_PLAYERS: usize = 20;

/// Rows per model call when evaluating many coalitions.
const BATCH_ROWS: usize = 8192;

/// Set of player ids over `0..players`, stored as a bitset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coalition {
    players: usize,
    words: Vec<u64>,
}

impl Coalition {
    pub fn empty(players: usize) -> Self {
        Self { players, words: vec![0; players.div_ceil(64).max(1)] }
    }

    pub fn full(players: usize) -> Self {
        let mut c = Self::empty(players);
        (0..players).for_each(|i| c.insert(i));
        c
    }

    pub fn from_members(players: usize, members: &[usize]) -> Result<Self> {
        let mut c = Self::empty(players);
        for &m in members {
            if m >= players {
                bail!(Domain, "player {} out of range for {} players", m, players);
            }
            c.insert(m);
        }
        Ok(c)
    }

    /// Coalition from the low `players` bits of `mask`.
    pub fn from_mask(players: usize, mask: u64) -> Self {
        let mut c = Self::empty(players);
        c.words[0] = if players >= 64 { mask } else { mask & ((1u64 << players) - 1) };
        c
    }

    pub fn players(&self) -> usize {
        self.players
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.players && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < self.players);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn complement(&self) -> Self {
        let mut c = Self::empty(self.players);
        (0..self.players).filter(|&i| !self.contains(i)).for_each(|i| c.insert(i));
        c
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.players).filter(move |&i| self.contains(i))
    }
}

/// A cooperative game over `players()` players.
pub trait CoalitionGame {
    fn players(&self) -> usize;

    /// Values of the given coalitions, in order.
    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>>;

    fn value(&self, coalition: &Coalition) -> Result<f64> {
        Ok(self.values(core::slice::from_ref(coalition))?[0])
    }
}

/// Game backed by a closure.
pub struct FnGame<F> {
    players: usize,
    f: F,
}

impl<F: Fn(&Coalition) -> f64> FnGame<F> {
    pub fn new(players: usize, f: F) -> Self {
        Self { players, f }
    }
}

impl<F: Fn(&Coalition) -> f64> CoalitionGame for FnGame<F> {
    fn players(&self) -> usize {
        self.players
    }

    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        Ok(coalitions.iter().map(&self.f).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PlayerKind {
    Features,
    Groups,
}

/// What produced an attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    /// Plain Shapley values of an arbitrary game.
    Shapley,
    Xpe,
    Xppe,
    Lad,
    Axs,
    Random,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Shapley => "shapley",
            Method::Xpe => "xpe",
            Method::Xppe => "xppe",
            Method::Lad => "lad",
            Method::Axs => "axs",
            Method::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "shapley" => Method::Shapley,
            "xpe" => Method::Xpe,
            "xppe" => Method::Xppe,
            "lad" => Method::Lad,
            "axs" => Method::Axs,
            "random" => Method::Random,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Estimator {
    Exact,
    Kernel,
    None,
}

/// Per-player Shapley values of one game.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Attribution {
    pub values: Vec<f64>,
    pub player_kind: PlayerKind,
    pub method: Method,
    pub estimator: Estimator,
    pub v_empty: f64,
    pub v_full: f64,
    /// Set when the kernel regression was degenerate and the total was
    /// split uniformly instead.
    pub degenerate: bool,
}

impl Attribution {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn efficiency_gap(&self) -> f64 {
        (self.sum() - (self.v_full - self.v_empty)).abs()
    }
}

/// Exact Shapley values by full enumeration (`g <= 20`).
pub fn exact_shapley<G: CoalitionGame + ?Sized>(game: &G) -> Result<Attribution> {
    let g = game.players();
    if g == 0 {
        bail!(Domain, "game has no players");
    }
    if g > MAX_EXACT_PLAYERS {
        bail!(Capacity, "{} players exceed the exact limit of {}; use the kernel estimator", g, MAX_EXACT_PLAYERS);
    }
    let count = 1usize << g;
    let mut v = Vec::with_capacity(count);
    let mut chunk = Vec::with_capacity(BATCH_ROWS.min(count));
    for mask in 0..count as u64 {
        chunk.push(Coalition::from_mask(g, mask));
        if chunk.len() == BATCH_ROWS {
            v.extend(game.values(&chunk)?);
            chunk.clear();
        }
    }
    if !chunk.is_empty() {
        v.extend(game.values(&chunk)?);
    }
    if v.len() != count {
        bail!(Evaluation, "game returned {} values for {} coalitions", v.len(), count);
    }

    // weight of a coalition of size s not containing i: s!(g-s-1)!/g!
    let weights: Vec<f64> = (0..g).map(|s| 1.0 / (g as f64 * math::binomial(g - 1, s))).collect();
    let mut phi = vec![0.0; g];
    for (i, slot) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..count {
            if mask & bit == 0 {
                acc += weights[mask.count_ones() as usize] * (v[mask | bit] - v[mask]);
            }
        }
        *slot = acc;
    }
    Ok(Attribution {
        values: phi,
        player_kind: PlayerKind::Features,
        method: Method::Shapley,
        estimator: Estimator::Exact,
        v_empty: v[0],
        v_full: v[count - 1],
        degenerate: false,
    })
}

/// Shapley kernel weight of a coalition of size `s` among `g` players.
pub fn kernel_weight(g: usize, s: usize) -> f64 {
    (g as f64 - 1.0) / (math::binomial(g, s) * s as f64 * (g - s) as f64)
}

/// Weighted coalition design for the kernel regression.
fn kernel_design(g: usize, budget: usize, rng: &mut StreamRng) -> BTreeMap<Coalition, f64> {
    let mut design: BTreeMap<Coalition, f64> = BTreeMap::new();
    let total_nontrivial = if g < 63 { (1u64 << g) - 2 } else { u64::MAX };
    if (budget as u64) >= total_nontrivial {
        for mask in 1..(1u64 << g) - 1 {
            let c = Coalition::from_mask(g, mask);
            let w = kernel_weight(g, c.len());
            design.insert(c, w);
        }
        return design;
    }

    // Sizes s and g-s are handled together. Size classes are enumerated
    // completely, smallest first, while the budget covers their expected
    // share; the remaining sizes are sampled with complements.
    let num_sizes = g / 2; // ceil((g-1)/2)
    let num_paired = (g - 1) / 2;
    let mut size_weight: Vec<f64> = (1..=num_sizes).map(|s| kernel_weight(g, s) * math::binomial(g, s)).collect();
    for w in size_weight.iter_mut().take(num_paired) {
        *w *= 2.0;
    }
    let norm: f64 = size_weight.iter().sum();
    size_weight.iter_mut().for_each(|w| *w /= norm);

    let mut full_sizes = 0;
    let mut samples_left = budget as f64;
    let mut remaining = size_weight.clone();
    for s in 1..=num_sizes {
        let mut nsubsets = math::binomial(g, s);
        let paired = s <= num_paired;
        if paired {
            nsubsets *= 2.0;
        }
        if samples_left * remaining[s - 1] / nsubsets < 1.0 - 1e-8 {
            break;
        }
        full_sizes += 1;
        samples_left -= nsubsets;
        if remaining[s - 1] < 1.0 {
            let r = 1.0 - remaining[s - 1];
            remaining.iter_mut().for_each(|w| *w /= r);
        }
        let mut w = size_weight[s - 1] / math::binomial(g, s);
        if paired {
            w /= 2.0;
        }
        for_each_combination(g, s, |members| {
            let mut c = Coalition::empty(g);
            members.iter().for_each(|&m| c.insert(m));
            if paired {
                design.insert(c.complement(), w);
            }
            design.insert(c, w);
        });
    }

    if full_sizes < num_sizes && samples_left >= 1.0 {
        let mut probs: Vec<f64> = size_weight.clone();
        for p in probs.iter_mut().take(num_paired) {
            *p /= 2.0;
        }
        let probs = &probs[full_sizes..];
        let psum: f64 = probs.iter().sum();
        let mut sampled: BTreeMap<Coalition, f64> = BTreeMap::new();
        let mut left = samples_left as usize;
        let mut draws = 0usize;
        let max_draws = 4 * left + 16;
        while left > 0 && draws < max_draws {
            draws += 1;
            let mut u = rng.random::<f64>() * psum;
            let mut pick = probs.len() - 1;
            for (k, p) in probs.iter().enumerate() {
                if u < *p {
                    pick = k;
                    break;
                }
                u -= p;
            }
            let s = pick + full_sizes + 1;
            let mut c = Coalition::empty(g);
            for m in index::sample(rng, g, s) {
                c.insert(m);
            }
            let comp = c.complement();
            let fresh = !sampled.contains_key(&c);
            *sampled.entry(c).or_insert(0.0) += 1.0;
            if fresh {
                left -= 1;
            }
            if left > 0 && s <= num_paired {
                *sampled.entry(comp).or_insert(0.0) += 1.0;
                if fresh {
                    left -= 1;
                }
            }
        }
        let weight_left: f64 = size_weight[full_sizes..].iter().sum();
        let sampled_total: f64 = sampled.values().sum();
        for (c, w) in sampled {
            *design.entry(c).or_insert(0.0) += w * weight_left / sampled_total;
        }
    }
    design
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // rightmost position that can still advance
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Sampled Shapley values via the efficiency-constrained kernel regression.
///
/// `v(empty)` and `v(full)` are always evaluated exactly and enter as
/// constraints, so the estimate sums to `v(full) - v(empty)` by
/// construction. With `budget >= 2^g - 2` every coalition is used and the
/// result equals the exact Shapley values.
pub fn kernel_shapley<G: CoalitionGame + ?Sized>(game: &G, budget: usize, seed: u64) -> Result<Attribution> {
    let g = game.players();
    if g < 2 {
        bail!(Domain, "kernel estimator needs at least two players, got {}", g);
    }
    if budget < 2 {
        bail!(Domain, "kernel estimator needs a budget of at least 2 coalitions");
    }
    let mut rng = StreamRng::seed_from_u64(seed);
    let design = kernel_design(g, budget, &mut rng);
    let anchors = [Coalition::empty(g), Coalition::full(g)];
    let anchor_values = game.values(&anchors)?;
    let (v_empty, v_full) = (anchor_values[0], anchor_values[1]);
    let total = v_full - v_empty;

    let coalitions: Vec<Coalition> = design.keys().cloned().collect();
    let weights: Vec<f64> = design.values().copied().collect();
    let mut values = Vec::with_capacity(coalitions.len());
    for chunk in coalitions.chunks(BATCH_ROWS) {
        values.extend(game.values(chunk)?);
    }

    let mut out = Attribution {
        values: vec![total / g as f64; g],
        player_kind: PlayerKind::Features,
        method: Method::Shapley,
        estimator: Estimator::Kernel,
        v_empty,
        v_full,
        degenerate: false,
    };
    if values.is_empty() || values.iter().all(|&v| v == values[0]) {
        out.degenerate = true;
        return Ok(out);
    }

    // Eliminate the last player through the efficiency constraint:
    //   y - z_last * total = sum_{i<g-1} (z_i - z_last) * phi_i
    let p = g - 1;
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwy = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for ((c, &w), &v) in coalitions.iter().zip(&weights).zip(&values) {
        let z_last = if c.contains(p) { 1.0 } else { 0.0 };
        for (i, r) in row.iter_mut().enumerate() {
            *r = (if c.contains(i) { 1.0 } else { 0.0 }) - z_last;
        }
        let y = v - v_empty - z_last * total;
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            xtwy[a] += w * row[a] * y;
            for b in 0..p {
                xtwx[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    let beta = match xtwx.clone().cholesky() {
        Some(ch) => ch.solve(&xtwy),
        None => match xtwx.svd(true, true).solve(&xtwy, 1e-12) {
            Ok(b) => b,
            Err(_) => {
                out.degenerate = true;
                return Ok(out);
            }
        },
    };
    if beta.iter().any(|b| !b.is_finite()) {
        out.degenerate = true;
        return Ok(out);
    }
    let partial: f64 = beta.iter().sum();
    out.values = beta.iter().copied().chain(core::iter::once(total - partial)).collect();
    Ok(out)
}

/// Exact enumeration up to `exact_cap` players, kernel estimator beyond.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimatorConfig {
    pub exact_cap: usize,
    pub budget: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { exact_cap: 12, budget: 3000 }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exact_cap > MAX_EXACT_PLAYERS {
            bail!(Validation, "exact cap {} exceeds {}", self.exact_cap, MAX_EXACT_PLAYERS);
        }
        if self.budget < 2 {
            bail!(Validation, "budget must be at least 2");
        }
        Ok(())
    }

    pub fn estimate<G: CoalitionGame + ?Sized>(&self, game: &G, seed: u64) -> Result<Attribution> {
        if game.players() <= self.exact_cap || game.players() < 2 {
            exact_shapley(game)
        } else {
            kernel_shapley(game, self.budget, seed)
        }
    }
}

/// Hybrid input: features whose group is in `coalition` come from `present`,
/// all others from `absent`.
fn compose_into(present: &[f64], absent: &[f64], coalition: &Coalition, grouping: &FeatureGrouping, out: &mut Vec<f64>) {
    let group_of = grouping.group_of();
    out.extend(present.iter().zip(absent).zip(group_of).map(|((&p, &a), &g)| if coalition.contains(g) { p } else { a }));
}

/// Partial shift of `x_t`: members of `coalition` keep their target values,
/// the complement is reverted to the source counterpart `x_s`.
pub fn partial_shift(x_t: &[f64], x_s: &[f64], coalition: &Coalition, grouping: &FeatureGrouping) -> Result<Vec<f64>> {
    if x_t.len() != x_s.len() || x_t.len() != grouping.features() {
        bail!(Shape, "inputs of length {} and {} for {} grouped features", x_t.len(), x_s.len(), grouping.features());
    }
    if coalition.players() != grouping.groups() {
        bail!(Domain, "coalition over {} players but grouping has {} groups", coalition.players(), grouping.groups());
    }
    let mut out = Vec::with_capacity(x_t.len());
    compose_into(x_t, x_s, coalition, grouping, &mut out);
    Ok(out)
}

/// The quantity a coalition game measures.
#[derive(Debug, Clone, Copy)]
pub enum ValueKind<'a> {
    /// Probability of `class` with absent features set to a fixed baseline.
    Baseline { x: &'a [f64], baseline: &'a [f64], class: usize },
    /// Probability of `class` averaged over background rows filling absent features.
    Marginal { x: &'a [f64], background: &'a [f64], class: usize },
    /// Probability of `class` at the partial shift between `x_t` and `x_s`.
    TransportPrediction { x_t: &'a [f64], x_s: &'a [f64], class: usize },
    /// Probability of `class` averaged over source rows weighted by a coupling column.
    CouplingPrediction { x_t: &'a [f64], sources: &'a [f64], weights: &'a [f64], class: usize },
    /// Loss against an estimated label at the partial shift.
    XpeLoss { x_t: &'a [f64], x_s: &'a [f64], label: usize, loss: LossKind },
    /// Predictive entropy at the partial shift.
    XppeEntropy { x_t: &'a [f64], x_s: &'a [f64] },
}

/// A model-backed coalition game over feature groups.
#[derive(Debug, Clone)]
pub struct ValueFunctionSpec<'a, M: ?Sized> {
    model: &'a M,
    grouping: &'a FeatureGrouping,
    kind: ValueKind<'a>,
}

impl<'a, M: Classifier + ?Sized> ValueFunctionSpec<'a, M> {
    pub fn new(model: &'a M, grouping: &'a FeatureGrouping, kind: ValueKind<'a>) -> Result<Self> {
        let d = model.input_dim();
        if grouping.features() != d {
            bail!(Shape, "grouping covers {} features, model expects {}", grouping.features(), d);
        }
        let c = model.class_count();
        let check = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != d {
                bail!(Shape, "{} has {} values, model expects {}", name, v.len(), d);
            }
            Ok(())
        };
        let check_class = |class: usize| -> Result<()> {
            if class >= c {
                bail!(Domain, "output class {} out of range for {} classes", class, c);
            }
            Ok(())
        };
        match kind {
            ValueKind::Baseline { x, baseline, class } => {
                check("x", x)?;
                check("baseline", baseline)?;
                check_class(class)?;
            }
            ValueKind::Marginal { x, background, class } => {
                check("x", x)?;
                if background.is_empty() || background.len() % d != 0 {
                    bail!(Shape, "background must hold at least one row of {} values", d);
                }
                check_class(class)?;
            }
            ValueKind::TransportPrediction { x_t, x_s, class } => {
                check("x_t", x_t)?;
                check("x_s", x_s)?;
                check_class(class)?;
            }
            ValueKind::CouplingPrediction { x_t, sources, weights, class } => {
                check("x_t", x_t)?;
                if sources.len() != weights.len() * d || weights.is_empty() {
                    bail!(Shape, "coupling column has {} weights for {} source values", weights.len(), sources.len());
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                    bail!(Domain, "coupling weights must be nonnegative with positive mass");
                }
                check_class(class)?;
            }
            ValueKind::XpeLoss { x_t, x_s, label, .. } => {
                check("x_t", x_t)?;
                check("x_s", x_s)?;
                check_class(label)?;
            }
            ValueKind::XppeEntropy { x_t, x_s } => {
                check("x_t", x_t)?;
                check("x_s", x_s)?;
            }
        }
        Ok(Self { model, grouping, kind })
    }

    pub fn kind(&self) -> &ValueKind<'a> {
        &self.kind
    }

    pub fn grouping(&self) -> &FeatureGrouping {
        self.grouping
    }

    fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let c = self.model.class_count();
        let p = self.model.predict_proba_batch(rows)?;
        if p.len() * self.model.input_dim() != rows.len() * c {
            bail!(Prediction, "model returned {} probabilities for {} rows", p.len(), rows.len() / self.model.input_dim());
        }
        Ok(p)
    }

    /// Evaluates a batch of coalitions whose inputs are single hybrid rows.
    fn pointwise(
        &self,
        present: &[f64],
        absent: &[f64],
        coalitions: &[Coalition],
        reduce: impl Fn(&[f64]) -> Result<f64>,
    ) -> Result<Vec<f64>> {
        let d = self.model.input_dim();
        let c = self.model.class_count();
        let mut rows = Vec::with_capacity(coalitions.len() * d);
        for k in coalitions {
            compose_into(present, absent, k, self.grouping, &mut rows);
        }
        let p = self.predict(&rows)?;
        p.chunks_exact(c).map(reduce).collect()
    }

    /// Evaluates coalitions whose value averages over several fill-in rows.
    fn averaged(
        &self,
        present: &[f64],
        fills: &[f64],
        weights: Option<&[f64]>,
        class: usize,
        coalitions: &[Coalition],
    ) -> Result<Vec<f64>> {
        let d = self.model.input_dim();
        let c = self.model.class_count();
        let fill_rows: Vec<(usize, f64)> = match weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                w.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, &x)| (i, x / total)).collect()
            }
            None => {
                let m = fills.len() / d;
                (0..m).map(|i| (i, 1.0 / m as f64)).collect()
            }
        };
        let per_chunk = (BATCH_ROWS / fill_rows.len()).max(1);
        let mut out = Vec::with_capacity(coalitions.len());
        for chunk in coalitions.chunks(per_chunk) {
            let mut rows = Vec::with_capacity(chunk.len() * fill_rows.len() * d);
            for k in chunk {
                for &(i, _) in &fill_rows {
                    compose_into(present, &fills[i * d..(i + 1) * d], k, self.grouping, &mut rows);
                }
            }
            let p = self.predict(&rows)?;
            for (kk, _) in chunk.iter().enumerate() {
                let mut acc = 0.0;
                for (r, &(_, w)) in fill_rows.iter().enumerate() {
                    acc += w * p[(kk * fill_rows.len() + r) * c + class];
                }
                out.push(acc);
            }
        }
        Ok(out)
    }
}

impl<M: Classifier + ?Sized> CoalitionGame for ValueFunctionSpec<'_, M> {
    fn players(&self) -> usize {
        self.grouping.groups()
    }

    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        let g = self.grouping.groups();
        if let Some(bad) = coalitions.iter().find(|k| k.players() != g) {
            bail!(Domain, "coalition over {} players but the game has {}", bad.players(), g);
        }
        match self.kind {
            ValueKind::Baseline { x, baseline, class } => self.pointwise(x, baseline, coalitions, |p| Ok(p[class])),
            ValueKind::TransportPrediction { x_t, x_s, class } => self.pointwise(x_t, x_s, coalitions, |p| Ok(p[class])),
            ValueKind::XpeLoss { x_t, x_s, label, loss: kind } => self.pointwise(x_t, x_s, coalitions, |p| loss(kind, p, label)),
            ValueKind::XppeEntropy { x_t, x_s } => self.pointwise(x_t, x_s, coalitions, |p| Ok(entropy(p))),
            ValueKind::Marginal { x, background, class } => self.averaged(x, background, None, class, coalitions),
            ValueKind::CouplingPrediction { x_t, sources, weights, class } => self.averaged(x_t, sources, Some(weights), class, coalitions),
        }
    }
}

pub fn evaluate_value<M: Classifier + ?Sized>(spec: &ValueFunctionSpec<'_, M>, coalition: &Coalition) -> Result<f64> {
    spec.value(coalition)
}

/// The class explained by prediction-type games: `argmax f(x)`.
pub fn explained_class<M: Classifier + ?Sized>(model: &M, x: &[f64]) -> Result<usize> {
    Ok(argmax(&model.predict_proba(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftMethod {
    Xpe,
    Xppe,
}

/// Inputs shared by every instance of a dataset attribution.
pub struct ShiftAttributionInput<'a, M: ?Sized> {
    pub model: &'a M,
    pub source: &'a Dataset,
    pub target: &'a Dataset,
    pub map: &'a TransportMap,
    /// Required for XPE.
    pub transfer: Option<&'a LabelTransfer>,
    pub grouping: &'a FeatureGrouping,
    pub loss: LossKind,
    pub estimator: EstimatorConfig,
    pub rng: RngSpec,
}

/// XPE or XPPE attribution of a single target instance.
pub fn attribute_instance<M: Classifier + ?Sized>(
    method: ShiftMethod,
    input: &ShiftAttributionInput<'_, M>,
    j: usize,
) -> Result<Attribution> {
    let x_t = input.target.row(j);
    let s = *input.map.inverse.get(j).ok_or_else(|| crate::Error::Shape(alloc::format!("no matched source for target row {j}")))?;
    if s >= input.source.n() {
        bail!(Shape, "map points at source row {} but source has {} rows", s, input.source.n());
    }
    let x_s = input.source.row(s);
    let kind = match method {
        ShiftMethod::Xpe => {
            let transfer = match input.transfer {
                Some(t) => t,
                None => bail!(Precondition, "XPE needs transferred labels"),
            };
            ValueKind::XpeLoss { x_t, x_s, label: transfer.estimated_labels[j], loss: input.loss }
        }
        ShiftMethod::Xppe => ValueKind::XppeEntropy { x_t, x_s },
    };
    let spec = ValueFunctionSpec::new(input.model, input.grouping, kind)?;
    let mut att = input.estimator.estimate(&spec, input.rng.derive("shapley/kernel", j as u64))?;
    att.method = match method {
        ShiftMethod::Xpe => Method::Xpe,
        ShiftMethod::Xppe => Method::Xppe,
    };
    att.player_kind = player_kind(input.grouping);
    Ok(att)
}

pub(crate) fn player_kind(grouping: &FeatureGrouping) -> PlayerKind {
    if grouping.is_identity() {
        PlayerKind::Features
    } else {
        PlayerKind::Groups
    }
}

/// One attribution per target row, in row order.
pub fn attribute_dataset<M, E>(method: ShiftMethod, input: &ShiftAttributionInput<'_, M>, executor: &E) -> Result<Vec<Attribution>>
where
    M: Classifier + Sync + ?Sized,
    E: Executor,
{
    input.estimator.validate()?;
    if input.source.d() != input.target.d() {
        bail!(Shape, "source has {} features, target has {}", input.source.d(), input.target.d());
    }
    if input.map.inverse.len() != input.target.n() {
        bail!(Shape, "map covers {} target rows, target has {}", input.map.inverse.len(), input.target.n());
    }
    if method == ShiftMethod::Xpe && input.transfer.is_none() {
        bail!(Precondition, "XPE needs transferred labels");
    }
    executor.map(input.target.n(), |j| attribute_instance(method, input, j))
}

/// Describes a player set for reports.
pub fn describe_players(grouping: &FeatureGrouping) -> String {
    alloc::format!("{} {}", grouping.groups(), if grouping.is_identity() { "features" } else { "groups" })
}
