//! Bias injectors. Each takes a training set and returns a corrupted copy;
//! group-A rows are never modified.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Result, SandboxError};
use crate::synthgen::{Dataset, Group};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BiasKind {
    UnderRepresentation,
    Sampling,
    LabelNoise,
    FeatureMissing,
}

impl BiasKind {
    pub const ALL: [BiasKind; 4] = [
        BiasKind::UnderRepresentation,
        BiasKind::Sampling,
        BiasKind::LabelNoise,
        BiasKind::FeatureMissing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BiasKind::UnderRepresentation => "UnderRepresentation",
            BiasKind::Sampling => "Sampling",
            BiasKind::LabelNoise => "LabelNoise",
            BiasKind::FeatureMissing => "FeatureMissing",
        }
    }

    pub fn default_scope(self) -> Scope {
        match self {
            BiasKind::UnderRepresentation => Scope::PositiveMinority,
            _ => Scope::WholeMinority,
        }
    }
}

impl fmt::Display for BiasKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        BiasKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown bias kind `{s}`, expected one of UnderRepresentation, Sampling, LabelNoise, FeatureMissing"
                )
            })
    }
}

/// Which minority rows a bias applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    WholeMinority,
    PositiveMinority,
    NegativeMinority,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::WholeMinority => "WholeMinority",
            Scope::PositiveMinority => "PositiveMinority",
            Scope::NegativeMinority => "NegativeMinority",
        }
    }

    pub fn contains(self, group: Group, label: bool) -> bool {
        group == Group::B
            && match self {
                Scope::WholeMinority => true,
                Scope::PositiveMinority => label,
                Scope::NegativeMinority => !label,
            }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "WholeMinority" => Ok(Scope::WholeMinority),
            "PositiveMinority" => Ok(Scope::PositiveMinority),
            "NegativeMinority" | "NegativeMinorityComplement" => Ok(Scope::NegativeMinority),
            _ => Err(format!(
                "unknown scope `{s}`, expected one of WholeMinority, PositiveMinority, NegativeMinority"
            )),
        }
    }
}

/// One injectable corruption at a fixed intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSpec {
    pub kind: BiasKind,
    pub level: f64,
    pub scope: Scope,
    /// Feature coordinate zeroed by `FeatureMissing`; `None` for other kinds.
    pub feature_index: Option<usize>,
}

impl BiasSpec {
    pub fn new(kind: BiasKind, level: f64) -> Self {
        BiasSpec {
            kind,
            level,
            scope: kind.default_scope(),
            feature_index: (kind == BiasKind::FeatureMissing).then_some(0),
        }
    }

    pub fn with_scope(mut self, scope: Scope) -> Self {
        self.scope = scope;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_level(self.kind, self.level)?;
        match (self.kind, self.feature_index) {
            (BiasKind::FeatureMissing, Some(i)) if i < 3 => Ok(()),
            (BiasKind::FeatureMissing, Some(i)) => Err(SandboxError::invalid(
                "feature_index",
                format!("must be 0, 1 or 2, got {i}"),
            )),
            (BiasKind::FeatureMissing, None) => Err(SandboxError::invalid(
                "feature_index",
                "required for FeatureMissing",
            )),
            (_, Some(_)) => Err(SandboxError::invalid(
                "feature_index",
                "only allowed for FeatureMissing",
            )),
            (_, None) => Ok(()),
        }
    }

    pub fn apply<R: Rng + ?Sized>(&self, ds: &Dataset, rng: &mut R) -> Result<Dataset> {
        self.validate()?;
        Ok(match self.kind {
            BiasKind::UnderRepresentation | BiasKind::Sampling => {
                drop_in_scope(ds, self.level, self.scope, rng)
            }
            BiasKind::LabelNoise => inject_label_bias(ds, self.level, self.scope, rng),
            BiasKind::FeatureMissing => inject_feature_missingness(
                ds,
                self.level,
                self.feature_index.unwrap_or(0),
                self.scope,
                rng,
            ),
        })
    }
}

pub(crate) fn validate_level(kind: BiasKind, level: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&level) {
        return Err(SandboxError::invalid(
            "level",
            format!("bias level must be in [0, 1], got {level}"),
        ));
    }
    if kind == BiasKind::LabelNoise && level >= 0.5 {
        return Err(SandboxError::invalid(
            "level",
            format!("label bias must be < 0.5, got {level}"),
        ));
    }
    Ok(())
}

/// Drops each in-scope row (selected by observed label) with probability `level`.
pub fn drop_in_scope<R: Rng + ?Sized>(
    ds: &Dataset,
    level: f64,
    scope: Scope,
    rng: &mut R,
) -> Dataset {
    let keep: Vec<bool> = (0..ds.len())
        .map(|i| !(scope.contains(ds.group[i], ds.label[i]) && rng.random::<f64>() < level))
        .collect();
    ds.retain_mask(&keep)
}

/// Removes each positively labeled minority row with probability `level` (= 1 - β).
pub fn inject_underrepresentation<R: Rng + ?Sized>(
    ds: &Dataset,
    level: f64,
    rng: &mut R,
) -> Dataset {
    drop_in_scope(ds, level, Scope::PositiveMinority, rng)
}

/// Removes each minority row with probability `level`.
pub fn inject_sampling_bias<R: Rng + ?Sized>(ds: &Dataset, level: f64, rng: &mut R) -> Dataset {
    drop_in_scope(ds, level, Scope::WholeMinority, rng)
}

/// Re-draws the labels of in-scope minority rows from their noiseless label
/// with flip probability `minority_noise`. Scope is decided by the noiseless
/// label, and the new noise replaces whatever noise the row carried.
pub fn inject_label_bias<R: Rng + ?Sized>(
    ds: &Dataset,
    minority_noise: f64,
    scope: Scope,
    rng: &mut R,
) -> Dataset {
    let mut out = ds.clone();
    for i in 0..out.len() {
        if scope.contains(out.group[i], out.bayes_label[i]) {
            let flip = rng.random::<f64>() < minority_noise;
            out.label[i] = out.bayes_label[i] ^ flip;
        }
    }
    out
}

/// Sets coordinate `feature_index` of in-scope rows to exactly 0 with probability `level`.
pub fn inject_feature_missingness<R: Rng + ?Sized>(
    ds: &Dataset,
    level: f64,
    feature_index: usize,
    scope: Scope,
    rng: &mut R,
) -> Dataset {
    let mut out = ds.clone();
    for i in 0..out.len() {
        if scope.contains(out.group[i], out.label[i]) && rng.random::<f64>() < level {
            out.features[i][feature_index] = 0.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{sample_ground_truth, BayesParams, GenConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, eta: f64, seed: u64) -> Dataset {
        let cfg = GenConfig {
            n,
            minority_fraction: 0.2,
            feature_shift: 0.0,
            bayes: BayesParams::with_noise(eta),
        };
        sample_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn level_zero_is_identity() {
        let ds = data(3_000, 0.4, 1);
        assert_eq!(inject_underrepresentation(&ds, 0.0, &mut rng(2)), ds);
        assert_eq!(inject_sampling_bias(&ds, 0.0, &mut rng(2)), ds);
        for scope in [Scope::WholeMinority, Scope::PositiveMinority, Scope::NegativeMinority] {
            assert_eq!(inject_feature_missingness(&ds, 0.0, 1, scope, &mut rng(2)), ds);
        }
    }

    #[test]
    fn full_underrepresentation_removes_positive_minority() {
        let ds = data(3_000, 0.4, 1);
        let out = inject_underrepresentation(&ds, 1.0, &mut rng(2));
        assert_eq!(out.cell_count(Group::B, true), 0);
        assert_eq!(out.cell_count(Group::B, false), ds.cell_count(Group::B, false));
        assert_eq!(out.group_count(Group::A), ds.group_count(Group::A));
    }

    #[test]
    fn underrepresentation_retention_rate() {
        let ds = data(30_000, 0.4, 4);
        let before = ds.cell_count(Group::B, true) as f64;
        let out = inject_underrepresentation(&ds, 0.4, &mut rng(5));
        let kept = out.cell_count(Group::B, true) as f64;
        let sd = (before * 0.4 * 0.6).sqrt();
        assert!((kept - 0.6 * before).abs() < 4.0 * sd, "{kept} of {before}");
        // Unconditionally the kept count is Binomial(n, r · 0.5 · 0.6).
        let p: f64 = 0.2 * 0.5 * 0.6;
        let sd = (30_000.0_f64 * p * (1.0 - p)).sqrt();
        assert!((kept - 30_000.0 * p).abs() < 4.0 * sd);
    }

    #[test]
    fn retained_rows_are_untouched_and_ordered() {
        let ds = data(2_000, 0.4, 6);
        let out = inject_sampling_bias(&ds, 0.5, &mut rng(7));
        let mut j = 0;
        for i in 0..ds.len() {
            if j < out.len() && out.features[j] == ds.features[i] {
                assert_eq!(out.label[j], ds.label[i]);
                assert_eq!(out.group[j], ds.group[i]);
                j += 1;
            }
        }
        assert_eq!(j, out.len());
    }

    #[test]
    fn sampling_keeps_majority_and_thins_minority() {
        let ds = data(30_000, 0.4, 8);
        let out = inject_sampling_bias(&ds, 0.5, &mut rng(9));
        assert_eq!(out.group_count(Group::A), ds.group_count(Group::A));
        let out = inject_sampling_bias(&ds, 0.99, &mut rng(9));
        let nb = ds.group_count(Group::B) as f64;
        let kept = out.group_count(Group::B) as f64;
        let sd = (nb * 0.99 * 0.01).sqrt();
        assert!((kept - 0.01 * nb).abs() < 4.0 * sd, "{kept}");
        assert!((kept - 60.0).abs() < 4.0 * 60f64.sqrt());
    }

    #[test]
    fn label_bias_zero_noise_restores_clean_minority() {
        let ds = data(5_000, 0.4, 10);
        let out = inject_label_bias(&ds, 0.0, Scope::WholeMinority, &mut rng(11));
        for i in 0..out.len() {
            match out.group[i] {
                Group::B => assert_eq!(out.label[i], out.bayes_label[i]),
                Group::A => assert_eq!(out.label[i], ds.label[i]),
            }
        }
    }

    #[test]
    fn label_bias_is_identity_on_clean_data_at_zero() {
        let ds = data(2_000, 0.0, 12);
        for scope in [Scope::WholeMinority, Scope::PositiveMinority, Scope::NegativeMinority] {
            assert_eq!(inject_label_bias(&ds, 0.0, scope, &mut rng(13)), ds);
        }
    }

    #[test]
    fn label_bias_flip_rate() {
        let ds = data(60_000, 0.4, 14);
        let out = inject_label_bias(&ds, 0.45, Scope::WholeMinority, &mut rng(15));
        let (flips, nb) = (0..out.len())
            .filter(|&i| out.group[i] == Group::B)
            .fold((0usize, 0usize), |(f, t), i| {
                (f + (out.label[i] != out.bayes_label[i]) as usize, t + 1)
            });
        let rate = flips as f64 / nb as f64;
        let sd = (0.45 * 0.55 / nb as f64).sqrt();
        assert!((rate - 0.45).abs() < 4.0 * sd, "{rate}");
    }

    #[test]
    fn label_bias_scope_uses_noiseless_label() {
        let ds = data(5_000, 0.4, 16);
        let out = inject_label_bias(&ds, 0.0, Scope::PositiveMinority, &mut rng(17));
        for i in 0..out.len() {
            if out.group[i] == Group::B && !out.bayes_label[i] {
                assert_eq!(out.label[i], ds.label[i]);
            }
            if out.group[i] == Group::B && out.bayes_label[i] {
                assert!(out.label[i]);
            }
        }
    }

    #[test]
    fn feature_missingness_full_and_partial() {
        let ds = data(20_000, 0.4, 18);
        let out = inject_feature_missingness(&ds, 1.0, 0, Scope::WholeMinority, &mut rng(19));
        for i in 0..out.len() {
            match out.group[i] {
                Group::B => assert_eq!(out.features[i][0], 0.0),
                Group::A => assert_eq!(out.features[i], ds.features[i]),
            }
            assert_eq!(out.label[i], ds.label[i]);
        }

        let out = inject_feature_missingness(&ds, 0.7, 0, Scope::PositiveMinority, &mut rng(20));
        let mut zeroed = 0usize;
        let mut scoped = 0usize;
        for i in 0..out.len() {
            if out.group[i] == Group::B && out.label[i] {
                scoped += 1;
                zeroed += (out.features[i][0] == 0.0) as usize;
                assert_eq!(out.features[i][1..], ds.features[i][1..]);
            } else {
                assert_eq!(out.features[i], ds.features[i]);
            }
        }
        let rate = zeroed as f64 / scoped as f64;
        let sd = (0.21 / scoped as f64).sqrt();
        assert!((rate - 0.7).abs() < 4.0 * sd, "{rate}");
    }

    #[test]
    fn spec_validation() {
        assert!(BiasSpec::new(BiasKind::LabelNoise, 0.6).validate().is_err());
        assert!(BiasSpec::new(BiasKind::LabelNoise, 0.45).validate().is_ok());
        assert!(BiasSpec::new(BiasKind::Sampling, 1.2).validate().is_err());
        let mut s = BiasSpec::new(BiasKind::Sampling, 0.2);
        s.feature_index = Some(1);
        assert!(s.validate().is_err());
        let mut s = BiasSpec::new(BiasKind::FeatureMissing, 0.2);
        s.feature_index = Some(3);
        assert!(s.validate().is_err());
        s.feature_index = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn same_seed_same_output() {
        let ds = data(4_000, 0.4, 21);
        for kind in BiasKind::ALL {
            let spec = BiasSpec::new(kind, 0.3);
            let a = spec.apply(&ds, &mut rng(22)).unwrap();
            let b = spec.apply(&ds, &mut rng(22)).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    fn summary(ds: &Dataset) -> (f64, f64, f64) {
        let nb1 = ds.cell_count(Group::B, true) as f64;
        let nb0 = ds.cell_count(Group::B, false) as f64;
        let zero_b = (0..ds.len())
            .filter(|&i| ds.group[i] == Group::B && ds.features[i][2] == 0.0)
            .count() as f64;
        (nb1, nb0, zero_b)
    }

    #[test]
    fn disjoint_scopes_commute_in_distribution() {
        // Under-representation on (B, 1) and feature missingness on (B, 0).
        let reps = 40;
        let mut ab = (0.0, 0.0, 0.0);
        let mut ba = (0.0, 0.0, 0.0);
        for s in 0..reps {
            let ds = data(5_000, 0.4, 100 + s);
            let mut r1 = rng(1_000 + s);
            let x = inject_underrepresentation(&ds, 0.5, &mut r1);
            let x = inject_feature_missingness(&x, 0.5, 2, Scope::NegativeMinority, &mut r1);
            let mut r2 = rng(2_000 + s);
            let y = inject_feature_missingness(&ds, 0.5, 2, Scope::NegativeMinority, &mut r2);
            let y = inject_underrepresentation(&y, 0.5, &mut r2);
            let (a1, a2, a3) = summary(&x);
            let (b1, b2, b3) = summary(&y);
            ab = (ab.0 + a1, ab.1 + a2, ab.2 + a3);
            ba = (ba.0 + b1, ba.1 + b2, ba.2 + b3);
        }
        let r = reps as f64;
        // Per-run sd of a Binomial(~500, 0.5) count is ~11, so the mean over 40 runs has sd ~1.8.
        assert!((ab.0 / r - ba.0 / r).abs() < 10.0);
        assert_eq!(ab.1, ba.1);
        assert!((ab.2 / r - ba.2 / r).abs() < 10.0);
    }
}
