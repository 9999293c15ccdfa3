//! TOML experiment configuration.
//!
//! ```toml
//! [generation]
//! n = 30000                  # rows per split
//! minority_fraction = 0.2
//! eta = 0.4
//! base_rate_difference = 0.0
//!
//! [bias]
//! kind = "UnderRepresentation"
//! levels = [0.0, 0.2, 0.4]
//!
//! [intervention]
//! kind = "GridSearchEO"
//!
//! [harness]
//! repetitions = 10
//! seed = 2023
//! ```

use serde::Deserialize;
use thiserror::Error;

use crate::biasinject::{BiasKind, BiasSpec, Scope};
use crate::error::SandboxError;
use crate::glm::FitSettings;
use crate::harness::{ExperimentConfig, Intervention, Sweep};
use crate::interventions::GridSpec;
use crate::metrics::EoMode;
use crate::synthgen::{BayesParams, GenConfig, DEFAULT_COEFFS_A, DEFAULT_COEFFS_B};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.to_string(), message: message.into() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    generation: RawGeneration,
    bias: RawBias,
    #[serde(default)]
    intervention: RawIntervention,
    #[serde(default)]
    harness: RawHarness,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeneration {
    n: i64,
    #[serde(default = "default_minority_fraction")]
    minority_fraction: f64,
    #[serde(default = "default_eta")]
    eta: f64,
    eta_minority: Option<f64>,
    feature_shift: Option<f64>,
    base_rate_difference: Option<f64>,
    coeffs_a: Option<[f64; 3]>,
    coeffs_b: Option<[f64; 3]>,
}

fn default_minority_fraction() -> f64 {
    0.2
}

fn default_eta() -> f64 {
    0.4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBias {
    kind: String,
    scope: Option<String>,
    feature_index: Option<i64>,
    levels: Option<Vec<f64>>,
    /// Fixed intensity for a base-rate sweep.
    level: Option<f64>,
    base_rate_differences: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntervention {
    #[serde(default = "default_intervention")]
    kind: String,
    #[serde(default = "default_lambda_limit")]
    lambda_limit: f64,
    #[serde(default = "default_grid_size")]
    grid_size: i64,
    #[serde(default = "default_tradeoff")]
    tradeoff: f64,
    alpha: Option<f64>,
    #[serde(default = "default_eo_mode")]
    eo_mode: String,
}

impl Default for RawIntervention {
    fn default() -> Self {
        RawIntervention {
            kind: default_intervention(),
            lambda_limit: default_lambda_limit(),
            grid_size: default_grid_size(),
            tradeoff: default_tradeoff(),
            alpha: None,
            eo_mode: default_eo_mode(),
        }
    }
}

fn default_intervention() -> String {
    "GridSearchEO".into()
}

fn default_lambda_limit() -> f64 {
    2.0
}

fn default_grid_size() -> i64 {
    10
}

fn default_tradeoff() -> f64 {
    0.5
}

fn default_eo_mode() -> String {
    "odds".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarness {
    #[serde(default = "default_name")]
    name: String,
    #[serde(default = "default_repetitions")]
    repetitions: i64,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_max_iter")]
    max_iter: i64,
    #[serde(default = "default_grad_tol")]
    grad_tol: f64,
    #[serde(default = "default_max_coef")]
    max_coef: f64,
}

impl Default for RawHarness {
    fn default() -> Self {
        RawHarness {
            name: default_name(),
            repetitions: default_repetitions(),
            seed: default_seed(),
            max_iter: default_max_iter(),
            grad_tol: default_grad_tol(),
            max_coef: default_max_coef(),
        }
    }
}

fn default_name() -> String {
    "custom".into()
}

fn default_repetitions() -> i64 {
    50
}

fn default_seed() -> u64 {
    2023
}

fn default_max_iter() -> i64 {
    FitSettings::default().max_iter as i64
}

fn default_grad_tol() -> f64 {
    FitSettings::default().grad_tol
}

fn default_max_coef() -> f64 {
    FitSettings::default().max_coef
}

fn check_noise(path: &str, eta: f64) -> Result<(), ConfigError> {
    if !(eta >= 0.0) {
        return Err(err(path, format!("noise must be >= 0, got {eta}")));
    }
    if eta >= 0.5 {
        return Err(err(path, format!("noise must be < 0.5, got {eta}")));
    }
    Ok(())
}

fn positive_count(path: &str, v: i64) -> Result<usize, ConfigError> {
    if v < 1 {
        return Err(err(path, format!("must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

/// Prefixes the section to a validation error raised by the core types.
fn lift(section: &str, e: SandboxError) -> ConfigError {
    match e {
        SandboxError::InvalidParameter { name, reason } => err(&format!("{section}.{name}"), reason),
        other => err(section, other.to_string()),
    }
}

fn check_levels(path: &str, kind: BiasKind, levels: &[f64]) -> Result<(), ConfigError> {
    if levels.is_empty() {
        return Err(err(path, "must contain at least one value"));
    }
    for (i, &l) in levels.iter().enumerate() {
        if !(0.0..=1.0).contains(&l) {
            return Err(err(&format!("{path}[{i}]"), format!("must be in [0, 1], got {l}")));
        }
        if kind == BiasKind::LabelNoise && l >= 0.5 {
            return Err(err(
                &format!("{path}[{i}]"),
                format!("label bias cannot exceed 50%: must be < 0.5, got {l}"),
            ));
        }
    }
    if levels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(err(path, "must be strictly ascending"));
    }
    Ok(())
}

fn check_difference(path: &str, d: f64) -> Result<(), ConfigError> {
    if !(d > -0.5 && d < 0.5) {
        return Err(err(path, format!("must lie strictly between -0.5 and 0.5, got {d}")));
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        // serde reports the innermost key only; recover the table from the span.
        let path = e
            .span()
            .and_then(|s| section_at(text, s.start))
            .unwrap_or_else(|| "<document>".to_string());
        err(&path, msg)
    })?;

    let g = &raw.generation;
    let n = positive_count("generation.n", g.n)?;
    check_noise("generation.eta", g.eta)?;
    let eta_min = g.eta_minority.unwrap_or(g.eta);
    check_noise("generation.eta_minority", eta_min)?;
    if !(g.minority_fraction > 0.0 && g.minority_fraction <= 0.5) {
        return Err(err(
            "generation.minority_fraction",
            format!("must be in (0, 0.5], got {}", g.minority_fraction),
        ));
    }
    if g.feature_shift.is_some() && g.base_rate_difference.is_some() {
        return Err(err(
            "generation.feature_shift",
            "give either feature_shift or base_rate_difference, not both",
        ));
    }
    if let Some(d) = g.base_rate_difference {
        check_difference("generation.base_rate_difference", d)?;
    }
    let gen = GenConfig {
        n,
        minority_fraction: g.minority_fraction,
        feature_shift: g.feature_shift.unwrap_or(0.0),
        bayes: BayesParams {
            coeffs_a: g.coeffs_a.unwrap_or(DEFAULT_COEFFS_A),
            coeffs_b: g.coeffs_b.unwrap_or(DEFAULT_COEFFS_B),
            noise_majority: g.eta,
            noise_minority: eta_min,
        },
    };
    gen.validate().map_err(|e| lift("generation", e))?;

    let b = &raw.bias;
    let kind: BiasKind = b.kind.parse().map_err(|m: String| err("bias.kind", m))?;
    let scope = match &b.scope {
        Some(s) => s.parse::<Scope>().map_err(|m| err("bias.scope", m))?,
        None => kind.default_scope(),
    };
    let feature_index = match (kind, b.feature_index) {
        (BiasKind::FeatureMissing, None) => Some(0),
        (BiasKind::FeatureMissing, Some(i)) if (0..3).contains(&i) => Some(i as usize),
        (BiasKind::FeatureMissing, Some(i)) => {
            return Err(err("bias.feature_index", format!("must be 0, 1 or 2, got {i}")))
        }
        (_, Some(_)) => {
            return Err(err("bias.feature_index", "only allowed when kind = \"FeatureMissing\""))
        }
        (_, None) => None,
    };
    let sweep = match (&b.levels, &b.base_rate_differences) {
        (Some(levels), None) => {
            if b.level.is_some() {
                return Err(err("bias.level", "only used together with base_rate_differences"));
            }
            check_levels("bias.levels", kind, levels)?;
            Sweep::BiasLevels(levels.clone())
        }
        (None, Some(diffs)) => {
            if g.base_rate_difference.is_some() {
                return Err(err(
                    "generation.base_rate_difference",
                    "not allowed when bias.base_rate_differences is given",
                ));
            }
            let level = b.level.ok_or_else(|| {
                err("bias.level", "required with base_rate_differences (a single bias intensity)")
            })?;
            check_levels("bias.level", kind, &[level])?;
            if diffs.is_empty() {
                return Err(err("bias.base_rate_differences", "must contain at least one value"));
            }
            for (i, &d) in diffs.iter().enumerate() {
                check_difference(&format!("bias.base_rate_differences[{i}]"), d)?;
            }
            if diffs.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(err("bias.base_rate_differences", "must be strictly ascending"));
            }
            Sweep::BaseRateDifferences { differences: diffs.clone(), bias_level: level }
        }
        (Some(_), Some(_)) => {
            return Err(err("bias", "give either levels or base_rate_differences, not both"))
        }
        (None, None) => {
            return Err(err("bias.levels", "missing; give levels or base_rate_differences"))
        }
    };

    let iv = &raw.intervention;
    let intervention = match iv.kind.as_str() {
        "None" => Intervention::None,
        "GridSearchEO" => Intervention::GridSearchEO,
        "PostProcessEO" => Intervention::PostProcessEO,
        "CorrelationRemover" => {
            let alpha = iv.alpha.unwrap_or(1.0);
            if !(0.0..=1.0).contains(&alpha) {
                return Err(err("intervention.alpha", format!("must be in [0, 1], got {alpha}")));
            }
            Intervention::CorrelationRemover { alpha }
        }
        other => {
            return Err(err(
                "intervention.kind",
                format!(
                    "unknown intervention `{other}`, expected one of None, GridSearchEO, PostProcessEO, CorrelationRemover"
                ),
            ))
        }
    };
    if iv.alpha.is_some() && !matches!(intervention, Intervention::CorrelationRemover { .. }) {
        return Err(err("intervention.alpha", "only allowed when kind = \"CorrelationRemover\""));
    }
    let grid = GridSpec {
        lambda_limit: iv.lambda_limit,
        grid_size: positive_count("intervention.grid_size", iv.grid_size)?,
        tradeoff_weight: iv.tradeoff,
    };
    grid.validate().map_err(|e| match e {
        SandboxError::InvalidParameter { name: "tradeoff_weight", reason } => {
            err("intervention.tradeoff", reason)
        }
        e => lift("intervention", e),
    })?;
    let eo_mode: EoMode = iv.eo_mode.parse().map_err(|e| lift("intervention", e))?;

    let h = &raw.harness;
    let repetitions = positive_count("harness.repetitions", h.repetitions)?;
    let fit = FitSettings {
        max_iter: positive_count("harness.max_iter", h.max_iter)?,
        grad_tol: h.grad_tol,
        max_coef: h.max_coef,
    };
    if !(fit.grad_tol > 0.0 && fit.grad_tol.is_finite()) {
        return Err(err("harness.grad_tol", format!("must be positive, got {}", fit.grad_tol)));
    }
    if !(fit.max_coef > 0.0 && fit.max_coef.is_finite()) {
        return Err(err("harness.max_coef", format!("must be positive, got {}", fit.max_coef)));
    }
    if h.name.is_empty() || h.name.contains([',', '"', '\n', '\r']) {
        return Err(err("harness.name", "must be nonempty and free of commas, quotes and newlines"));
    }

    let cfg = ExperimentConfig {
        name: h.name.clone(),
        gen,
        bias: BiasSpec { kind, level: 0.0, scope, feature_index },
        sweep,
        base_rate_difference: g.base_rate_difference,
        intervention,
        grid,
        fit,
        eo_mode,
        repetitions,
        master_seed: h.seed,
    };
    cfg.validate().map_err(|e| lift("config", e))?;
    Ok(cfg)
}

/// Dotted path of the innermost `[table]` header preceding byte `offset`,
/// plus the key on the offending line when there is one.
fn section_at(text: &str, offset: usize) -> Option<String> {
    let before = &text[..offset.min(text.len())];
    let section = before
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line
        .split_once('=')
        .map(|(k, _)| k.trim().to_string())
        .filter(|k| !k.is_empty() && !k.starts_with('['));
    match (section, key) {
        (Some(s), Some(k)) => Some(format!("{s}.{k}")),
        (Some(s), None) => Some(s),
        (None, Some(k)) => Some(k),
        (None, None) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[generation]\nn = 1000\n\n[bias]\nkind = \"UnderRepresentation\"\nlevels = [0.0, 0.5]\n";

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid, GridSpec { lambda_limit: 2.0, grid_size: 10, tradeoff_weight: 0.5 });
        assert_eq!(c.intervention, Intervention::GridSearchEO);
        assert_eq!(c.eo_mode, EoMode::Odds);
        assert_eq!(c.gen.n, 1000);
        assert_eq!(c.gen.minority_fraction, 0.2);
        assert_eq!(c.gen.bayes, BayesParams::with_noise(0.4));
        assert_eq!(c.bias.scope, Scope::PositiveMinority);
        assert_eq!(c.repetitions, 50);
        assert_eq!(c.master_seed, 2023);
        assert_eq!(c.fit, FitSettings::default());
        assert_eq!(c.sweep, Sweep::BiasLevels(vec![0.0, 0.5]));
    }

    #[test]
    fn eta_half_is_rejected() {
        let doc = MINIMAL.replace("n = 1000", "n = 1000\neta = 0.5");
        let e = parse_config(&doc).unwrap_err();
        assert_eq!(e.path, "generation.eta");
        assert!(e.message.contains("noise must be < 0.5"), "{e}");
    }

    #[test]
    fn label_noise_above_half_is_rejected() {
        let doc = MINIMAL
            .replace("UnderRepresentation", "LabelNoise")
            .replace("[0.0, 0.5]", "[0.0, 0.6]");
        let e = parse_config(&doc).unwrap_err();
        assert_eq!(e.path, "bias.levels[1]");
        assert!(e.message.contains("< 0.5"));
    }

    #[test]
    fn unknown_key_names_its_table() {
        let doc = MINIMAL.replace("n = 1000", "n = 1000\nsize = 4");
        let e = parse_config(&doc).unwrap_err();
        assert!(e.path.starts_with("generation"), "{e}");
        assert!(e.message.contains("size"), "{e}");
        let e = parse_config(&format!("{MINIMAL}\n[extras]\nx = 1\n")).unwrap_err();
        assert!(e.message.contains("extras"), "{e}");
    }

    #[test]
    fn missing_required_section_is_an_error() {
        assert!(parse_config("[generation]\nn = 10\n").is_err());
        assert!(parse_config("[generation]\nn = 0\n[bias]\nkind=\"Sampling\"\nlevels=[0.0]\n")
            .unwrap_err()
            .path
            .contains("generation.n"));
    }

    #[test]
    fn descending_levels_are_rejected() {
        let e = parse_config(&MINIMAL.replace("[0.0, 0.5]", "[0.5, 0.0]")).unwrap_err();
        assert_eq!(e.path, "bias.levels");
    }

    #[test]
    fn base_rate_sweep_needs_single_level() {
        let doc = "[generation]\nn = 100\n[bias]\nkind = \"UnderRepresentation\"\nbase_rate_differences = [-0.2, 0.0, 0.2]\n";
        assert_eq!(parse_config(doc).unwrap_err().path, "bias.level");
        let ok = parse_config(&format!("{doc}level = 0.4\n")).unwrap();
        assert_eq!(
            ok.sweep,
            Sweep::BaseRateDifferences { differences: vec![-0.2, 0.0, 0.2], bias_level: 0.4 }
        );
    }

    #[test]
    fn feature_index_only_for_missingness() {
        let doc = MINIMAL.replace("levels", "feature_index = 1\nlevels");
        assert_eq!(parse_config(&doc).unwrap_err().path, "bias.feature_index");
        let doc = doc.replace("UnderRepresentation", "FeatureMissing");
        assert_eq!(parse_config(&doc).unwrap().bias.feature_index, Some(1));
    }

    #[test]
    fn full_document_round_trips_fields() {
        let doc = r#"
[generation]
n = 500
minority_fraction = 0.3
eta = 0.2
eta_minority = 0.1
base_rate_difference = 0.1

[bias]
kind = "LabelNoise"
scope = "NegativeMinority"
levels = [0.0, 0.1]

[intervention]
kind = "CorrelationRemover"
alpha = 0.5
eo_mode = "opportunity"

[harness]
name = "trial"
repetitions = 3
seed = 9
max_iter = 40
"#;
        let c = parse_config(doc).unwrap();
        assert_eq!(c.name, "trial");
        assert_eq!(c.intervention, Intervention::CorrelationRemover { alpha: 0.5 });
        assert_eq!(c.eo_mode, EoMode::Opportunity);
        assert_eq!(c.gen.bayes.noise_minority, 0.1);
        assert_eq!(c.base_rate_difference, Some(0.1));
        assert_eq!(c.bias.scope, Scope::NegativeMinority);
        assert_eq!((c.repetitions, c.master_seed, c.fit.max_iter), (3, 9, 40));
    }
}
