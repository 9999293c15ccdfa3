//! Experiment orchestration: generate, inject, fit, evaluate, aggregate.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::biasinject::{BiasKind, BiasSpec, Scope};
use crate::error::{Result, SandboxError};
use crate::glm::{self, FitSettings, ModelCoeffs, WeightedSample};
use crate::interventions::{
    grid_search_eo, predict_dataset, threshold_postprocess, CorrelationRemover, GridSpec, Predictor,
};
use crate::metrics::{self, EoMode, MetricReport};
use crate::synthgen::{
    calibrate_feature_shift, sample_ground_truth, BayesParams, Dataset, GenConfig, Group,
};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Intervention {
    None,
    #[default]
    GridSearchEO,
    PostProcessEO,
    CorrelationRemover {
        alpha: f64,
    },
}

impl Intervention {
    pub fn as_str(&self) -> &'static str {
        match self {
            Intervention::None => "None",
            Intervention::GridSearchEO => "GridSearchEO",
            Intervention::PostProcessEO => "PostProcessEO",
            Intervention::CorrelationRemover { .. } => "CorrelationRemover",
        }
    }
}

/// The x-axis of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Bias intensities at a fixed base-rate difference.
    BiasLevels(Vec<f64>),
    /// Majority-minus-minority base-rate differences at one bias intensity.
    BaseRateDifferences { differences: Vec<f64>, bias_level: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Generation settings for one split: `gen.n` rows each for train and test.
    pub gen: GenConfig,
    /// Kind, scope and feature of the injected bias; the level comes from the sweep.
    pub bias: BiasSpec,
    pub sweep: Sweep,
    /// Used with [`Sweep::BiasLevels`]; `None` keeps `gen.feature_shift`.
    pub base_rate_difference: Option<f64>,
    pub intervention: Intervention,
    pub grid: GridSpec,
    pub fit: FitSettings,
    pub eo_mode: EoMode,
    pub repetitions: usize,
    pub master_seed: u64,
}

/// One sweep coordinate resolved to concrete run parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// Value reported in the `bias_level` column.
    pub x: f64,
    pub bias_level: f64,
    pub feature_shift: f64,
}

fn check_difference(d: f64) -> Result<()> {
    if !(d > -0.5 && d < 0.5) {
        return Err(SandboxError::invalid(
            "base_rate_difference",
            format!("must lie strictly between -0.5 and 0.5, got {d}"),
        ));
    }
    Ok(())
}

fn shift_for(difference: f64, coeffs: &[f64; 3]) -> Result<f64> {
    check_difference(difference)?;
    // The minority base rate is 0.5 by symmetry of its feature law.
    calibrate_feature_shift(0.5 + difference, coeffs)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.grid.validate()?;
        if self.repetitions == 0 {
            return Err(SandboxError::invalid("repetitions", "must be at least 1"));
        }
        if self.fit.max_iter == 0 || !(self.fit.grad_tol > 0.0) || !(self.fit.max_coef > 0.0) {
            return Err(SandboxError::invalid("solver", "iteration cap, tolerance and coefficient cap must be positive"));
        }
        if let Intervention::CorrelationRemover { alpha } = self.intervention {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(SandboxError::invalid("alpha", "must lie in [0, 1]"));
            }
        }
        let xs = match &self.sweep {
            Sweep::BiasLevels(levels) => {
                if let Some(d) = self.base_rate_difference {
                    check_difference(d)?;
                }
                levels
            }
            Sweep::BaseRateDifferences { differences, bias_level } => {
                BiasSpec { level: *bias_level, ..self.bias }.validate()?;
                differences.iter().try_for_each(|&d| check_difference(d))?;
                differences
            }
        };
        if xs.is_empty() {
            return Err(SandboxError::invalid("levels", "sweep grid must be nonempty"));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SandboxError::invalid("levels", "sweep grid must be strictly ascending"));
        }
        if let Sweep::BiasLevels(levels) = &self.sweep {
            for &l in levels {
                BiasSpec { level: l, ..self.bias }.validate()?;
            }
        }
        Ok(())
    }

    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let coeffs = &self.gen.bayes.coeffs_a;
        match &self.sweep {
            Sweep::BiasLevels(levels) => {
                let shift = match self.base_rate_difference {
                    Some(d) => shift_for(d, coeffs)?,
                    None => self.gen.feature_shift,
                };
                Ok(levels
                    .iter()
                    .map(|&l| SweepPoint { x: l, bias_level: l, feature_shift: shift })
                    .collect())
            }
            Sweep::BaseRateDifferences { differences, bias_level } => differences
                .iter()
                .map(|&d| {
                    Ok(SweepPoint {
                        x: d,
                        bias_level: *bias_level,
                        feature_shift: shift_for(d, coeffs)?,
                    })
                })
                .collect(),
        }
    }

    pub fn with_repetitions(mut self, r: usize) -> Self {
        self.repetitions = r;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelVariant {
    BayesAnalytic,
    BayesDataDriven,
    Biased,
    Intervened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Test,
    Train,
}

/// Evaluation subset. Ordered as the emitted strings sort: `A < B < all`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    A,
    B,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Accuracy,
    EoDisparity,
    FidelityAgreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Ok,
    ExcludedNotApplicable,
}

macro_rules! string_enum {
    ($t:ty, $what:literal, { $($v:path => $s:literal),+ $(,)? }) => {
        impl $t {
            pub const ALL: &'static [$t] = &[$($v),+];

            pub fn as_str(self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = SandboxError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    other => Err(SandboxError::invalid($what, format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

string_enum!(ModelVariant, "model_variant", {
    ModelVariant::BayesAnalytic => "bayes_analytic",
    ModelVariant::BayesDataDriven => "bayes_datadriven",
    ModelVariant::Biased => "biased",
    ModelVariant::Intervened => "intervened",
});
string_enum!(Split, "split", { Split::Test => "test", Split::Train => "train" });
string_enum!(GroupKey, "group", { GroupKey::A => "A", GroupKey::B => "B", GroupKey::All => "all" });
string_enum!(Metric, "metric", {
    Metric::Accuracy => "accuracy",
    Metric::EoDisparity => "eo_disparity",
    Metric::FidelityAgreement => "fidelity_agreement",
});
string_enum!(Status, "status", {
    Status::Ok => "ok",
    Status::ExcludedNotApplicable => "excluded_not_applicable",
});

impl GroupKey {
    fn group(self) -> Option<Group> {
        match self {
            GroupKey::A => Some(Group::A),
            GroupKey::B => Some(Group::B),
            GroupKey::All => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: String,
    pub run_index: usize,
    pub bias_level: f64,
    pub model_variant: ModelVariant,
    pub split: Split,
    pub group: GroupKey,
    pub metric: Metric,
    /// NaN when excluded.
    pub value: f64,
    pub status: Status,
}

impl RunRecord {
    /// Canonical output order.
    pub fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.bias_level
            .total_cmp(&other.bias_level)
            .then(self.run_index.cmp(&other.run_index))
            .then(self.model_variant.cmp(&other.model_variant))
            .then(self.split.cmp(&other.split))
            .then(self.group.cmp(&other.group))
            .then(self.metric.cmp(&other.metric))
            // Ties only occur in hand-built record sets; keep the order total anyway.
            .then_with(|| self.experiment.cmp(&other.experiment))
            .then(self.value.total_cmp(&other.value))
            .then(self.status.cmp(&other.status))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub experiment: String,
    pub bias_level: f64,
    pub model_variant: ModelVariant,
    pub split: Split,
    pub group: GroupKey,
    pub metric: Metric,
    /// NaN when no run was usable.
    pub mean: f64,
    /// Population standard deviation across usable runs.
    pub std: f64,
    pub count: usize,
    pub excluded: usize,
}

/// Per-run generator. Every (sweep index, run index) pair maps to its own
/// ChaCha stream under the master seed.
pub fn run_rng(master_seed: u64, level_index: usize, run_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((level_index as u64) << 32) | (run_index as u64 & 0xffff_ffff));
    rng
}

fn unit_samples(ds: &Dataset) -> Vec<WeightedSample> {
    ds.features
        .iter()
        .zip(&ds.group)
        .zip(&ds.label)
        .map(|((x, &g), &y)| WeightedSample::new(x, g, y, 1.0))
        .collect()
}

fn fit_plain(ds: &Dataset, settings: &FitSettings) -> Result<ModelCoeffs> {
    Ok(glm::fit_weighted_logreg(&unit_samples(ds), settings)?.coeffs)
}

fn fit_intervention(cfg: &ExperimentConfig, train: &Dataset, biased: &ModelCoeffs) -> Result<Option<Predictor>> {
    Ok(Some(match cfg.intervention {
        Intervention::None => return Ok(None),
        Intervention::GridSearchEO => grid_search_eo(train, &cfg.grid, &cfg.fit)?,
        Intervention::PostProcessEO => {
            let scores: Vec<f64> = train
                .features
                .iter()
                .zip(&train.group)
                .map(|(x, &g)| glm::predict_score(biased, x, g))
                .collect();
            Predictor::Thresholds(threshold_postprocess(&scores, &train.group, &train.label, *biased)?)
        }
        Intervention::CorrelationRemover { alpha } => {
            let remover = CorrelationRemover::fit(train, alpha)?;
            let model = fit_plain(&remover.transform(train), &cfg.fit)?;
            Predictor::Residualized { remover, model }
        }
    }))
}

struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    run_index: usize,
    x: f64,
    out: Vec<RunRecord>,
}

impl RunContext<'_> {
    fn push_report(&mut self, variant: ModelVariant, split: Split, report: Option<&MetricReport>) {
        for &group in GroupKey::ALL {
            for &metric in Metric::ALL {
                let value = report.and_then(|r| {
                    let v = match metric {
                        Metric::Accuracy => &r.accuracy,
                        Metric::EoDisparity => &r.eo_disparity,
                        Metric::FidelityAgreement => &r.fidelity_to_bayes,
                    };
                    v.get(group.group())
                });
                self.out.push(RunRecord {
                    experiment: self.cfg.name.clone(),
                    run_index: self.run_index,
                    bias_level: self.x,
                    model_variant: variant,
                    split,
                    group,
                    metric,
                    value: value.unwrap_or(f64::NAN),
                    status: if value.is_some() { Status::Ok } else { Status::ExcludedNotApplicable },
                });
            }
        }
    }
}

fn evaluate_on(preds: &[bool], ds: &Dataset, mode: EoMode) -> Option<MetricReport> {
    metrics::evaluate(preds, &ds.group, &ds.label, &ds.bayes_label, mode).ok()
}

/// One repetition at one sweep point.
pub fn run_single(cfg: &ExperimentConfig, level_index: usize, run_index: usize) -> Result<Vec<RunRecord>> {
    let points = cfg.sweep_points()?;
    let point = *points.get(level_index).ok_or_else(|| {
        SandboxError::invalid("level_index", format!("{level_index} is outside the sweep of {}", points.len()))
    })?;
    let mut rng = run_rng(cfg.master_seed, level_index, run_index);

    let gen = GenConfig { feature_shift: point.feature_shift, ..cfg.gen };
    let test_gen = GenConfig {
        bayes: BayesParams { noise_minority: gen.bayes.noise_majority, ..gen.bayes },
        ..gen
    };
    let train = sample_ground_truth(&gen, &mut rng);
    let test = sample_ground_truth(&test_gen, &mut rng);
    let biased_train = BiasSpec { level: point.bias_level, ..cfg.bias }.apply(&train, &mut rng)?;

    let datadriven = fit_plain(&train, &cfg.fit)?;
    let biased = match fit_plain(&biased_train, &cfg.fit) {
        Ok(m) => Some(m),
        Err(e) if e.is_precondition_failure() => None,
        Err(e) => return Err(e),
    };
    let intervened = match &biased {
        Some(b) => match fit_intervention(cfg, &biased_train, b) {
            Ok(p) => p.map(Some),
            Err(e) if e.is_precondition_failure() => Some(None),
            Err(e) => return Err(e),
        },
        None => (cfg.intervention != Intervention::None).then_some(None),
    };

    let mut variants: Vec<(ModelVariant, Option<Predictor>)> = vec![
        (ModelVariant::BayesAnalytic, None),
        (ModelVariant::BayesDataDriven, Some(Predictor::Linear(datadriven))),
        (ModelVariant::Biased, biased.map(Predictor::Linear)),
    ];
    if let Some(p) = intervened {
        variants.push((ModelVariant::Intervened, p));
    }

    let mut ctx = RunContext { cfg, run_index, x: point.x, out: Vec::new() };
    // Randomized predictors draw from their own stream so that adding a
    // variant never shifts the data draws above.
    let mut pred_rng = ChaCha8Rng::seed_from_u64(rng.random());
    for (variant, predictor) in &variants {
        for (split, ds) in [(Split::Test, &test), (Split::Train, &biased_train)] {
            let report = match (variant, predictor) {
                (ModelVariant::BayesAnalytic, _) => evaluate_on(&ds.bayes_label, ds, cfg.eo_mode),
                (_, Some(p)) => evaluate_on(&predict_dataset(p, ds, &mut pred_rng), ds, cfg.eo_mode),
                (_, None) => None,
            };
            ctx.push_report(*variant, split, report.as_ref());
        }
    }
    ctx.out.sort_by(RunRecord::sort_key_cmp);
    Ok(ctx.out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRecord>,
}

/// Mean and population standard deviation per key, skipping excluded runs.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRecord> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    let key_cmp = |a: &RunRecord, b: &RunRecord| {
        a.bias_level
            .total_cmp(&b.bias_level)
            .then(a.model_variant.cmp(&b.model_variant))
            .then(a.split.cmp(&b.split))
            .then(a.group.cmp(&b.group))
            .then(a.metric.cmp(&b.metric))
    };
    sorted.sort_by(|a, b| key_cmp(a, b).then(a.run_index.cmp(&b.run_index)));
    sorted
        .chunk_by(|a, b| key_cmp(a, b) == Ordering::Equal)
        .map(|chunk| {
            let first = chunk[0];
            let ok: Vec<f64> = chunk.iter().filter(|r| r.status == Status::Ok).map(|r| r.value).collect();
            let (mean, std) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let n = ok.len() as f64;
                let mean = ok.iter().sum::<f64>() / n;
                let var = ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (mean, var.sqrt())
            };
            AggregateRecord {
                experiment: first.experiment.clone(),
                bias_level: first.bias_level,
                model_variant: first.model_variant,
                split: first.split,
                group: first.group,
                metric: first.metric,
                mean,
                std,
                count: ok.len(),
                excluded: chunk.len() - ok.len(),
            }
        })
        .collect()
}

/// Runs the given sweep indices (all when `None`) for every repetition.
/// `workers = Some(1)` runs serially; other values size a thread pool.
pub fn run_experiment_subset(
    cfg: &ExperimentConfig,
    level_indices: Option<&[usize]>,
    workers: Option<usize>,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let n_points = cfg.sweep_points()?.len();
    let levels: Vec<usize> = match level_indices {
        Some(ix) => ix.to_vec(),
        None => (0..n_points).collect(),
    };
    let tasks: Vec<(usize, usize)> = levels
        .iter()
        .flat_map(|&l| (0..cfg.repetitions).map(move |r| (l, r)))
        .collect();

    let run_all = || -> Result<Vec<Vec<RunRecord>>> {
        tasks.par_iter().map(|&(l, r)| run_single(cfg, l, r)).collect()
    };
    let chunks = match workers {
        Some(1) => tasks.iter().map(|&(l, r)| run_single(cfg, l, r)).collect::<Result<Vec<_>>>()?,
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| SandboxError::invalid("workers", e.to_string()))?
            .install(run_all)?,
        None => run_all()?,
    };
    let mut records: Vec<RunRecord> = chunks.into_iter().flatten().collect();
    records.sort_by(RunRecord::sort_key_cmp);
    let aggregates = aggregate(&records);
    Ok(ExperimentResult { records, aggregates })
}

pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    run_experiment_subset(cfg, None, workers)
}

pub const PRESET_NAMES: [&str; 8] = [
    "fig3_small",
    "fig3_mid",
    "fig3_large",
    "fig4_baserates",
    "fig5_sampling",
    "fig6_label",
    "fig7_feature",
    "appendix_post",
];

/// `0, step, 2·step, …, last` with each value computed as `k·num/den` to
/// avoid accumulated rounding.
fn ladder(num: u32, den: u32, last_k: u32) -> Vec<f64> {
    (0..=last_k).map(|k| (k * num) as f64 / den as f64).collect()
}

fn base_config(name: &str, total_n: usize, bias: BiasSpec, levels: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        gen: GenConfig {
            n: total_n / 2,
            minority_fraction: 0.2,
            feature_shift: 0.0,
            bayes: BayesParams::with_noise(0.4),
        },
        bias,
        sweep: Sweep::BiasLevels(levels),
        base_rate_difference: None,
        intervention: Intervention::GridSearchEO,
        grid: GridSpec::default(),
        fit: FitSettings::default(),
        eo_mode: EoMode::Odds,
        repetitions: 50,
        master_seed: 2023,
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let under = BiasSpec::new(BiasKind::UnderRepresentation, 0.0);
    let fig3 = |n| base_config(name, n, under, ladder(5, 100, 19));
    Ok(match name {
        "fig3_small" => fig3(600),
        "fig3_mid" => fig3(6_000),
        "fig3_large" => fig3(60_000),
        "fig4_baserates" => {
            let mut c = fig3(60_000);
            let differences = (-4i32..=4).map(|k| k as f64 / 10.0).collect();
            c.sweep = Sweep::BaseRateDifferences { differences, bias_level: 0.4 };
            c
        }
        "fig5_sampling" => {
            let mut levels = ladder(5, 100, 19);
            levels.push(0.99);
            base_config(name, 60_000, BiasSpec::new(BiasKind::Sampling, 0.0), levels)
        }
        "fig6_label" => base_config(
            name,
            60_000,
            BiasSpec::new(BiasKind::LabelNoise, 0.0).with_scope(Scope::WholeMinority),
            ladder(5, 100, 9),
        ),
        "fig7_feature" => base_config(
            name,
            60_000,
            BiasSpec::new(BiasKind::FeatureMissing, 0.0).with_scope(Scope::WholeMinority),
            ladder(1, 10, 10),
        ),
        "appendix_post" => {
            let mut c = fig3(60_000);
            c.intervention = Intervention::PostProcessEO;
            c
        }
        other => {
            return Err(SandboxError::invalid(
                "preset",
                format!("unknown preset `{other}`; valid names: {}", PRESET_NAMES.join(", ")),
            ))
        }
    })
}
