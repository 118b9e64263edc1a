//! Command-line front-end: generate, train, monitor, evaluate, roars, predict.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use xpe_core::metrics::{self, FaithConfig, LabelPreservation, RoarConfig, DEFAULT_TAU};
use xpe_core::pipeline::{self, BackgroundMode, MonitorConfig, DEFAULT_BACKGROUND_ROWS};
use xpe_core::shapley::{Attribution, Estimator, EstimatorConfig};
use xpe_core::shiftgen::{self, Corruption, GroupSignalConfig, MeanImputer};
use xpe_core::transport::Embeddings;
use xpe_core::{model, Classifier, Dataset, FeatureGrouping, GroupingKind, LossKind, Method, ModelKind, TrainConfig, TrainedModel};

use crate::bridge::ExternalModel;
use crate::csv_io::{format_value, parse_matrix, read_dataset, read_embeddings, render_matrix, Labels, DEFAULT_LABEL_COLUMN};
use crate::error::{io_err, Error, Result};
use crate::export;
use crate::model_io::{load_model, save_model};
use crate::parallel::{default_threads, RayonExecutor};
use crate::report::{Report, RunConfig};
use crate::scenario_io::{read_scenario, write_scenario, ScenarioDir, ScenarioMeta};

#[derive(Debug, Parser)]
#[command(name = "xpe", version, about = "Label-free performance estimation and shift attribution for classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic shift scenario directory.
    Generate(GenerateArgs),
    /// Train a built-in model on a labeled CSV.
    Train(TrainArgs),
    /// Estimate target performance and attribute it to features.
    Monitor(MonitorArgs),
    /// Add evaluation metrics to a monitoring report.
    Evaluate(EvaluateArgs),
    /// Remove-and-retrain evaluation of an attribution method.
    Roars(RoarsArgs),
    /// Class probabilities for headerless CSV rows on stdin.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataKind {
    Blobs,
    GroupSignal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CorruptionKind {
    Brightness,
    Contrast,
    GaussianNoise,
    Impulse,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Logreg,
    Mlp,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Logreg => ModelKind::LogisticRegression,
            ModelArg::Mlp => ModelKind::Mlp1Hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Xpe,
    Xppe,
    Lad,
    Axs,
    Random,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Xpe => Method::Xpe,
            MethodArg::Xppe => Method::Xppe,
            MethodArg::Lad => Method::Lad,
            MethodArg::Axs => Method::Axs,
            MethodArg::Random => Method::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    CrossEntropy,
    ZeroOne,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::CrossEntropy => LossKind::CrossEntropy,
            LossArg::ZeroOne => LossKind::ZeroOne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackgroundArg {
    Zeros,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Sfaith,
    Cpx,
    Gpc,
    Ratio,
}

/// `identity`, `blocks:K` or `explicit:g0,g1,...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingSpec(pub String);

impl GroupingSpec {
    pub fn kind(&self) -> std::result::Result<GroupingKind, String> {
        let s = self.0.as_str();
        if s == "identity" {
            return Ok(GroupingKind::Identity);
        }
        if let Some(k) = s.strip_prefix("blocks:") {
            let k: usize = k.parse().map_err(|_| format!("invalid block size {k:?}"))?;
            return Ok(GroupingKind::ContiguousBlocks(k));
        }
        if let Some(list) = s.strip_prefix("explicit:") {
            return parse_usize_list(list).map(GroupingKind::Explicit);
        }
        Err(format!("unknown grouping {s:?} (expected identity, blocks:K or explicit:g0,g1,...)"))
    }

    pub fn build(&self, d: usize) -> Result<FeatureGrouping> {
        let kind = self.kind().map_err(Error::Usage)?;
        Ok(FeatureGrouping::new(d, kind)?)
    }
}

fn parse_grouping(s: &str) -> std::result::Result<GroupingSpec, String> {
    let spec = GroupingSpec(s.to_owned());
    spec.kind().map(|_| spec)
}

fn parse_usize_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',').map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid index {t:?}"))).collect()
}

/// Comma-separated indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexList(pub Vec<usize>);

fn parse_index_list(s: &str) -> std::result::Result<IndexList, String> {
    parse_usize_list(s).map(IndexList)
}

/// `HxW`.
fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("grid must look like HxW, got {s:?}"))?;
    match (h.parse(), w.parse()) {
        (Ok(h), Ok(w)) if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(format!("invalid grid {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Output scenario directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Minimum distance between class means, in units of the noise std.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    /// Within-class noise std.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, value_enum)]
    pub corruption: Option<CorruptionKind>,
    /// Brightness offset.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Contrast factor.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    /// Contrast midpoint.
    #[arg(long, allow_hyphen_values = true)]
    pub midpoint: Option<f64>,
    /// Gaussian noise std.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Impulse rate.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub low: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub high: Option<f64>,
    /// Missing rate.
    #[arg(long)]
    pub q: Option<f64>,
    /// Shifted features, comma separated.
    #[arg(long, value_parser = parse_index_list, conflicts_with = "fraction")]
    pub features: Option<IndexList>,
    /// Share of features to shift, drawn with the seed.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Leading rows forming the training split.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Group-signal band, comma separated.
    #[arg(long, value_parser = parse_index_list)]
    pub band: Option<IndexList>,
    /// Group-signal offset on the band.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub delta: f64,
    /// Group-B share of the strongest target.
    #[arg(long, default_value_t = 1.0)]
    pub mix: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct TrainingFlags {
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
}

impl TrainingFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_units: self.hidden,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    pub label_column: String,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct ModelFlags {
    /// Model JSON written by `train`.
    #[arg(long, conflicts_with = "model_cmd")]
    pub model: Option<PathBuf>,
    /// Shell command reading CSV rows on stdin and writing probability rows.
    #[arg(long)]
    pub model_cmd: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct EstimatorFlags {
    #[arg(long, default_value = "identity", value_parser = parse_grouping)]
    pub grouping: GroupingSpec,
    /// Coalition budget of the kernel estimator.
    #[arg(long, default_value_t = 3000)]
    pub budget: usize,
    /// Largest player count solved by exact enumeration.
    #[arg(long, default_value_t = 12)]
    pub exact_cap: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "cross-entropy")]
    pub loss: LossArg,
    /// Fill for absent features in the lad/axs baselines.
    #[arg(long, value_enum, default_value = "zeros")]
    pub background: BackgroundArg,
    #[arg(long, default_value_t = DEFAULT_BACKGROUND_ROWS)]
    pub background_rows: usize,
}

impl EstimatorFlags {
    fn monitor_config(&self, method: Method, d: usize, seed: u64) -> Result<MonitorConfig> {
        let mut cfg = MonitorConfig::new(method, self.grouping.build(d)?, seed);
        cfg.loss = self.loss.into();
        cfg.alpha = self.alpha;
        cfg.estimator = EstimatorConfig { exact_cap: self.exact_cap, budget: self.budget };
        cfg.estimator.validate()?;
        cfg.background = match self.background {
            BackgroundArg::Zeros => BackgroundMode::Zeros,
            BackgroundArg::Marginal => BackgroundMode::Marginal(self.background_rows),
        };
        Ok(cfg)
    }

    fn background_name(&self) -> String {
        match self.background {
            BackgroundArg::Zeros => "zeros".into(),
            BackgroundArg::Marginal => format!("marginal:{}", self.background_rows),
        }
    }
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "xpe")]
    pub method: MethodArg,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
    /// Headerless embedding rows for the source, aligned with its rows.
    #[arg(long, requires = "target_embeddings")]
    pub source_embeddings: Option<PathBuf>,
    #[arg(long, requires = "source_embeddings")]
    pub target_embeddings: Option<PathBuf>,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-instance PGM heatmaps (needs --grid).
    #[arg(long, requires = "grid")]
    pub heatmap_dir: Option<PathBuf>,
    /// Player grid `HxW` for heatmaps.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    #[arg(long)]
    pub attributions_csv: Option<PathBuf>,
    #[arg(long)]
    pub coupling_json: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cpx")]
    pub metrics: Vec<MetricArg>,
    /// Instances whose anticipated change is below this are left out of S-Faith.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Players (groups) for the importance ratio, comma separated.
    #[arg(long, value_parser = parse_index_list)]
    pub designated: Option<IndexList>,
    #[arg(long)]
    pub subset_size: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub subsets: usize,
    /// Overrides the model recorded in the report.
    #[command(flatten)]
    pub model: ModelFlags,
    /// Where to write the updated report; defaults to --report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct RoarsArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "xpe")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "mlp")]
    pub model_kind: ModelArg,
    #[arg(long, default_value_t = 0.05)]
    pub removal: f64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelFlags,
}

/// Built-in or external classifier.
pub enum LoadedModel {
    Builtin(TrainedModel),
    External(ExternalModel),
}

impl Classifier for LoadedModel {
    fn input_dim(&self) -> usize {
        match self {
            LoadedModel::Builtin(m) => m.input_dim(),
            LoadedModel::External(m) => m.input_dim(),
        }
    }

    fn class_count(&self) -> usize {
        match self {
            LoadedModel::Builtin(m) => m.class_count(),
            LoadedModel::External(m) => m.class_count(),
        }
    }

    fn predict_proba_batch(&self, rows: &[f64]) -> xpe_core::Result<Vec<f64>> {
        match self {
            LoadedModel::Builtin(m) => m.predict_proba_batch(rows),
            LoadedModel::External(m) => m.predict_proba_batch(rows),
        }
    }
}

impl ModelFlags {
    fn describe(&self) -> Option<String> {
        match (&self.model, &self.model_cmd) {
            (Some(p), _) => Some(p.display().to_string()),
            (None, Some(c)) => Some(format!("cmd:{c}")),
            (None, None) => None,
        }
    }

    /// `probe` is one input row used to learn an external model's class count.
    fn load(&self, probe: &[f64]) -> Result<LoadedModel> {
        match (&self.model, &self.model_cmd) {
            (Some(p), _) => Ok(LoadedModel::Builtin(load_model(p)?)),
            (None, Some(c)) => Ok(LoadedModel::External(ExternalModel::connect(c, probe)?)),
            (None, None) => Err(Error::Usage("one of --model or --model-cmd is required".into())),
        }
    }
}

/// A row without missing values (zeros if every row has one).
fn probe_row(data: &Dataset) -> Vec<f64> {
    (0..data.n()).find(|&i| (0..data.d()).all(|j| !data.is_missing(i, j))).map_or_else(|| vec![0.0; data.d()], |i| data.row(i).to_vec())
}

fn executor(threads: usize) -> Result<RayonExecutor> {
    let threads = if threads == 0 { default_threads() } else { threads };
    RayonExecutor::new(threads).map_err(|e| Error::Schema(format!("cannot start thread pool: {e}")))
}

fn print_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    writeln!(out, "{text}").map_err(io_err("<stdout>"))
}

/// Runs a parsed command, writing machine output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(&a, out),
        Command::Train(a) => train(&a, out),
        Command::Monitor(a) => monitor(&a, out),
        Command::Evaluate(a) => evaluate(&a, out),
        Command::Roars(a) => roars(&a, out),
        Command::Predict(a) => predict(&a, out),
    }
}

fn corruption(a: &GenerateArgs) -> Result<Corruption> {
    let kind = a.corruption.ok_or_else(|| Error::Usage("--kind blobs needs --corruption".into()))?;
    Ok(match kind {
        CorruptionKind::Brightness => Corruption::Brightness { offset: a.b },
        CorruptionKind::Contrast => Corruption::Contrast { factor: a.gamma.unwrap_or(shiftgen::DEFAULT_CONTRAST), midpoint: a.midpoint },
        CorruptionKind::GaussianNoise => Corruption::GaussianNoise { sigma: a.sigma },
        CorruptionKind::Impulse => Corruption::Impulse { rate: a.p.unwrap_or(shiftgen::DEFAULT_IMPULSE_RATE), low: a.low, high: a.high },
        CorruptionKind::Missing => Corruption::Missing { rate: a.q.unwrap_or(shiftgen::DEFAULT_MISSING_RATE) },
    })
}

fn generate_flags(a: &GenerateArgs) -> BTreeMap<String, String> {
    let mut f = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        f.insert(k.to_owned(), v);
    };
    put("n", a.n.to_string());
    put("d", a.d.to_string());
    put("seed", a.seed.to_string());
    match a.kind {
        DataKind::Blobs => {
            put("kind", "blobs".into());
            put("classes", a.classes.to_string());
            put("separation", format_value(a.separation));
            put("noise", format_value(a.noise));
        }
        DataKind::GroupSignal => {
            put("kind", "group-signal".into());
            put("delta", format_value(a.delta));
            put("mix", format_value(a.mix));
        }
    }
    for (k, v) in [
        ("b", a.b),
        ("gamma", a.gamma),
        ("midpoint", a.midpoint),
        ("sigma", a.sigma),
        ("p", a.p),
        ("low", a.low),
        ("high", a.high),
        ("q", a.q),
        ("fraction", a.fraction),
    ] {
        if let Some(v) = v {
            put(k, format_value(v));
        }
    }
    if let Some(c) = a.corruption {
        put("corruption", c.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default());
    }
    if let Some(n) = a.n_train {
        put("n_train", n.to_string());
    }
    f
}

fn generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let flags = generate_flags(a);
    let scenario = match a.kind {
        DataKind::Blobs => {
            let kind = corruption(a)?;
            let features = match &a.features {
                Some(f) => f.0.clone(),
                None => shiftgen::random_subset(a.d, a.fraction.unwrap_or(0.25), a.seed)?,
            };
            let data = shiftgen::make_blobs(a.n, a.d, a.classes, a.separation, a.noise, a.seed)?;
            let mut sc = shiftgen::apply_corruption(&data, kind, &features, a.seed)?;
            sc.n_train = a.n_train;
            sc.validate()?;
            ScenarioDir::from_shift(&sc, "blobs", flags)
        }
        DataKind::GroupSignal => {
            let band = a.band.clone().map(|b| b.0).ok_or_else(|| Error::Usage("--kind group-signal needs --band".into()))?;
            let grouped = shiftgen::make_group_signal_data(&GroupSignalConfig::new(a.n, a.d, band.clone(), a.delta, a.seed))?;
            let split = shiftgen::selection_bias_split(&grouped, a.mix, a.seed)?;
            let mut parameters = BTreeMap::new();
            parameters.insert("delta".to_owned(), a.delta);
            parameters.insert("mix".to_owned(), a.mix);
            let names = ["none", "medium", "strong"];
            ScenarioDir {
                source: split.source.clone(),
                target: split.targets[2].clone(),
                pre_shift: None,
                extra: names.iter().zip(&split.targets).map(|(n, t)| ((*n).to_owned(), t.clone())).collect(),
                meta: ScenarioMeta {
                    kind: "group_signal".into(),
                    corruption: None,
                    parameters,
                    features: band,
                    seed: a.seed,
                    label_preserving: LabelPreservation::Unknown,
                    n_train: a.n_train,
                    extra_targets: Vec::new(),
                    flags,
                },
            }
        }
    };
    write_scenario(&a.out, &scenario)?;
    print_json(
        out,
        &json!({
            "scenario": a.out.display().to_string(),
            "source_rows": scenario.source.n(),
            "target_rows": scenario.target.n(),
            "features": scenario.meta.features,
        }),
    )
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let data = read_dataset(&a.data, Labels::Required(&a.label_column))?;
    let fitted = model::train(a.model.into(), &data, &a.training.config(a.seed))?;
    save_model(&a.out, &fitted)?;
    let summary = fitted.training.clone();
    print_json(
        out,
        &json!({
            "model": a.out.display().to_string(),
            "epochs_run": summary.as_ref().map_or(0, |s| s.epochs_run),
            "train_loss": summary.as_ref().map(|s| s.train_loss),
            "validation_loss": summary.as_ref().and_then(|s| s.validation_loss),
            "train_accuracy": model::accuracy(&fitted, &data)?,
        }),
    )
}

fn monitor(a: &MonitorArgs, out: &mut dyn Write) -> Result<()> {
    let labels = Labels::IfPresent(DEFAULT_LABEL_COLUMN);
    let source = read_dataset(&a.source, labels)?;
    let target = read_dataset(&a.target, labels)?;
    let model = a.model.load(&probe_row(&source))?;
    let cfg = a.estimator.monitor_config(a.method.into(), source.d(), a.seed)?;
    let embeddings = match (&a.source_embeddings, &a.target_embeddings) {
        (Some(s), Some(t)) => {
            let (es, rs, ws) = read_embeddings(s)?;
            let (et, rt, wt) = read_embeddings(t)?;
            if rs != source.n() || rt != target.n() || ws != wt {
                return Err(Error::Schema(format!(
                    "embeddings are {rs}x{ws} and {rt}x{wt} for {} source and {} target rows",
                    source.n(),
                    target.n()
                )));
            }
            Some((es, et, ws))
        }
        _ => None,
    };
    let emb = embeddings.as_ref().map(|(s, t, dim)| Embeddings { source: s, target: t, dim: *dim });
    let outcome = pipeline::monitor(&model, &source, &target, emb, &cfg, &executor(a.threads)?)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let config = RunConfig {
        method: cfg.method.as_str().to_owned(),
        model: a.model.describe().unwrap_or_default(),
        source: a.source.display().to_string(),
        target: a.target.display().to_string(),
        grouping: a.estimator.grouping.0.clone(),
        loss: a.estimator.loss.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default(),
        alpha: cfg.alpha,
        exact_cap: cfg.estimator.exact_cap,
        budget: cfg.estimator.budget,
        background: a.estimator.background_name(),
        source_embeddings: a.source_embeddings.as_ref().map(|p| p.display().to_string()),
        target_embeddings: a.target_embeddings.as_ref().map(|p| p.display().to_string()),
    };
    let report = Report::from_outcome(a.seed, config, &outcome);
    if let Some(path) = &a.attributions_csv {
        std::fs::write(path, export::attribution_csv(&report)).map_err(io_err(path))?;
    }
    if let Some(path) = &a.coupling_json {
        std::fs::write(path, export::coupling_json(&outcome.map, outcome.objective, outcome.cost_kind)?).map_err(io_err(path))?;
    }
    if let (Some(dir), Some((h, w))) = (&a.heatmap_dir, a.grid) {
        export::write_heatmaps(&report, dir, h, w)?;
    }
    match &a.out {
        Some(path) => {
            report.save(path)?;
            print_json(
                out,
                &json!({
                    "report": path.display().to_string(),
                    "instances": report.instances.len(),
                    "estimated_target_loss": report.performance.estimated_target_loss,
                    "source_loss": report.performance.source_loss,
                    "drifted_features": outcome.drift.drifted().collect::<Vec<_>>(),
                }),
            )
        }
        None => write!(out, "{}", report.to_json()?).map_err(io_err("<stdout>")),
    }
}

fn report_attributions(report: &Report) -> Vec<Attribution> {
    report
        .instances
        .iter()
        .map(|i| Attribution {
            values: i.attribution.values.clone(),
            player_kind: i.attribution.players,
            method: Method::parse(&i.attribution.method).unwrap_or(Method::Shapley),
            estimator: Estimator::None,
            v_empty: i.attribution.v_empty,
            v_full: i.attribution.v_full,
            degenerate: false,
        })
        .collect()
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, Value::from)
}

fn evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let mut report = Report::load(&a.report)?;
    let atts = report_attributions(&report);
    let rows: Vec<usize> = report.instances.iter().map(|i| i.index).collect();
    let scenario = a.scenario.as_ref().map(read_scenario).transpose()?;
    let needs = |m: MetricArg| a.metrics.contains(&m);
    let mut block = Map::new();

    if needs(MetricArg::Cpx) {
        let per: Vec<Option<f64>> = atts.iter().map(metrics::complexity).collect();
        let kept: Vec<f64> = per.iter().flatten().copied().collect();
        let mean = (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64);
        block.insert("complexity".into(), json!({ "per_instance": per, "mean": opt(mean) }));
    }

    if needs(MetricArg::Ratio) {
        let designated = match (&a.designated, &scenario) {
            (Some(d), _) => d.0.clone(),
            (None, Some(s)) => {
                let d = s.source.d();
                let grouping = GroupingSpec(report.config.grouping.clone()).build(d)?;
                pipeline::groups_of(&grouping, &s.meta.features)
            }
            (None, None) => return Err(Error::Usage("ratio needs --designated or --scenario".into())),
        };
        let value = metrics::group_importance_ratio(&atts, &designated)?;
        block.insert("group_ratio".into(), json!({ "designated": designated, "value": opt(value) }));
    }

    if needs(MetricArg::Sfaith) || needs(MetricArg::Gpc) {
        let scenario = scenario.as_ref().ok_or_else(|| Error::Usage("sfaith and gpc need --scenario".into()))?;
        let truth = scenario.shift_scenario()?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= truth.target.n()) {
            return Err(Error::Schema(format!("report instance {bad} is outside the scenario target ({} rows)", truth.target.n())));
        }
        let d = truth.target.d();
        let grouping = GroupingSpec(report.config.grouping.clone()).build(d)?;
        let flags = if a.model.model.is_some() || a.model.model_cmd.is_some() {
            a.model.clone()
        } else {
            match report.config.model.strip_prefix("cmd:") {
                Some(c) => ModelFlags { model: None, model_cmd: Some(c.to_owned()) },
                None => ModelFlags { model: Some(PathBuf::from(&report.config.model)), model_cmd: None },
            }
        };
        let model = flags.load(&probe_row(&truth.pre_shift))?;
        let loss: LossKind = match report.config.loss.as_str() {
            "zero-one" => LossKind::ZeroOne,
            _ => LossKind::CrossEntropy,
        };

        if needs(MetricArg::Sfaith) {
            let mut fc = FaithConfig::for_players(grouping.groups());
            fc.n_subsets = a.subsets;
            fc.loss = loss;
            if let Some(k) = a.subset_size {
                fc.subset_size = k;
            }
            let exclude = metrics::marginal_instances(&atts, a.tau);
            let summary = metrics::shift_faithfulness_scenario(
                &atts,
                &rows,
                &exclude,
                &model,
                &truth,
                &grouping,
                &fc,
                a.seed,
                &executor(a.threads)?,
            )?;
            let excluded: Vec<usize> = summary.excluded.iter().map(|&k| rows[k]).collect();
            block.insert(
                "s_faith".into(),
                json!({
                    "per_instance": summary.per_instance,
                    "mean": opt(summary.mean),
                    "undefined_instances": summary.undefined.iter().map(|&k| rows[k]).collect::<Vec<_>>(),
                    "subset_size": fc.subset_size,
                    "subsets": fc.n_subsets,
                }),
            );
            block.insert("excluded_instances".into(), json!(excluded));
            block.insert("tau".into(), json!(a.tau));
        }

        if needs(MetricArg::Gpc) {
            let labels = truth.target.require_labels()?;
            let imputed = MeanImputer::fit(&truth.source)?.impute(&truth.target)?;
            let change = metrics::corruption_loss_change(&model, &imputed, &truth.pre_shift, labels, loss)?;
            let change: Vec<f64> = rows.iter().map(|&r| change[r]).collect();
            let mut entries = Vec::new();
            for &j in &truth.descriptor.features {
                let player = grouping.group_of()[j];
                let phi: Vec<f64> = atts.iter().map(|a| a.values[player]).collect();
                let r = metrics::gpc_from_changes(&phi, &change)?;
                entries.push(json!({ "feature": j, "player": player, "value": opt(r) }));
            }
            block.insert("gpc".into(), Value::Array(entries));
        }
    }

    for (k, v) in &block {
        report.metrics.insert(k.clone(), v.clone());
    }
    report.save(a.out.as_ref().unwrap_or(&a.report))?;
    print_json(out, &Value::Object(block))
}

fn roars(a: &RoarsArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = read_scenario(&a.scenario)?;
    let truth = scenario.shift_scenario()?;
    let (train_split, test_split) = truth.split_default()?;
    let monitor = a.estimator.monitor_config(a.method.into(), truth.source.d(), a.seed)?;
    let cfg =
        RoarConfig { model_kind: a.model_kind.into(), train: a.training.config(a.seed), removal_fraction: a.removal, monitor, tau: a.tau };
    let outcome = metrics::roar_s(&train_split, &test_split, &cfg, &executor(a.threads)?)?;
    print_json(out, &outcome)
}

fn predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let mut text = String::new();
    std::io::stdin().read_to_string(&mut text).map_err(io_err("<stdin>"))?;
    let (values, rows, width) = parse_matrix(&text, "<stdin>")?;
    if rows == 0 {
        return Ok(());
    }
    let model = a.model.load(&values[..width])?;
    if width != model.input_dim() {
        return Err(Error::Schema(format!("input rows have {width} values, model expects {}", model.input_dim())));
    }
    let probs = model.predict_proba_batch(&values)?;
    write!(out, "{}", render_matrix(&probs, model.class_count())).map_err(io_err("<stdout>"))
}

/// Exit status for an error: 2 for usage problems, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) => 2,
        _ => 1,
    }
}
