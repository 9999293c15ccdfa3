//! Ground-truth data generation.
//!
//! Rows are drawn from a two-group mixture: the minority group `B` with
//! probability `r`, the majority group `A` otherwise. Features are three
//! i.i.d. unit-variance Gaussians (mean `d` for `A`, mean 0 for `B`). The
//! noiseless label comes from a group-specific linear threshold labeler and
//! the observed label is that value flipped with the group's noise rate.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SandboxError};

/// Majority-group labeler used throughout the case study.
pub const DEFAULT_COEFFS_A: [f64; 3] = [-0.7, 0.5, 1.5];
/// Minority-group labeler used throughout the case study.
pub const DEFAULT_COEFFS_B: [f64; 3] = [0.5, -0.2, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::A, Group::B];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::A => "A",
            Group::B => "B",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The pair of group-specific linear labelers plus per-group label noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesParams {
    pub coeffs_a: [f64; 3],
    pub coeffs_b: [f64; 3],
    pub noise_majority: f64,
    pub noise_minority: f64,
}

impl BayesParams {
    /// Default labelers with the same noise rate in both groups.
    pub fn with_noise(eta: f64) -> Self {
        BayesParams {
            coeffs_a: DEFAULT_COEFFS_A,
            coeffs_b: DEFAULT_COEFFS_B,
            noise_majority: eta,
            noise_minority: eta,
        }
    }

    pub fn coeffs(&self, group: Group) -> &[f64; 3] {
        match group {
            Group::A => &self.coeffs_a,
            Group::B => &self.coeffs_b,
        }
    }

    pub fn noise(&self, group: Group) -> f64 {
        match group {
            Group::A => self.noise_majority,
            Group::B => self.noise_minority,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("coeffs_a", &self.coeffs_a), ("coeffs_b", &self.coeffs_b)] {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(SandboxError::invalid(name, "coefficients must be finite"));
            }
            if c.iter().all(|&v| v == 0.0) {
                return Err(SandboxError::invalid(name, "coefficients must not be all zero"));
            }
        }
        for (name, eta) in [
            ("noise_majority", self.noise_majority),
            ("noise_minority", self.noise_minority),
        ] {
            if !(0.0..0.5).contains(&eta) {
                return Err(SandboxError::invalid(
                    name,
                    format!("noise must be in [0, 0.5), got {eta}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    /// Number of rows to draw.
    pub n: usize,
    pub minority_fraction: f64,
    /// Mean of every majority-group feature coordinate.
    pub feature_shift: f64,
    pub bayes: BayesParams,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(SandboxError::invalid("n", "sample count must be at least 1"));
        }
        let r = self.minority_fraction;
        if !(r > 0.0 && r <= 0.5) {
            return Err(SandboxError::invalid(
                "minority_fraction",
                format!("must be in (0, 0.5], got {r}"),
            ));
        }
        if !self.feature_shift.is_finite() {
            return Err(SandboxError::invalid("feature_shift", "must be finite"));
        }
        self.bayes.validate()
    }
}

/// Column-oriented data set. `bayes_label` is the noiseless labeler output
/// on the features as originally drawn; injectors never rewrite it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub features: Vec<[f64; 3]>,
    pub group: Vec<Group>,
    pub label: Vec<bool>,
    pub bayes_label: Vec<bool>,
}

impl Dataset {
    pub fn with_capacity(n: usize) -> Self {
        Dataset {
            features: Vec::with_capacity(n),
            group: Vec::with_capacity(n),
            label: Vec::with_capacity(n),
            bayes_label: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, x: [f64; 3], group: Group, label: bool, bayes_label: bool) {
        self.features.push(x);
        self.group.push(group);
        self.label.push(label);
        self.bayes_label.push(bayes_label);
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Keeps the rows whose mask entry is true, preserving order.
    pub fn retain_mask(&self, keep: &[bool]) -> Dataset {
        debug_assert_eq!(keep.len(), self.len());
        let kept = keep.iter().filter(|&&k| k).count();
        let mut out = Dataset::with_capacity(kept);
        for (i, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            out.push(
                self.features[i],
                self.group[i],
                self.label[i],
                self.bayes_label[i],
            );
        }
        out
    }

    /// Row count of the (group, observed label) cell.
    pub fn cell_count(&self, group: Group, label: bool) -> usize {
        self.group
            .iter()
            .zip(&self.label)
            .filter(|&(&g, &y)| g == group && y == label)
            .count()
    }

    pub fn group_count(&self, group: Group) -> usize {
        self.group.iter().filter(|&&g| g == group).count()
    }

    /// Fraction of rows whose noiseless label is positive, within one group.
    pub fn bayes_positive_rate(&self, group: Group) -> f64 {
        let (pos, tot) = self
            .group
            .iter()
            .zip(&self.bayes_label)
            .filter(|(&g, _)| g == group)
            .fold((0usize, 0usize), |(p, t), (_, &b)| (p + b as usize, t + 1));
        pos as f64 / tot as f64
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Noiseless label: 1 iff the group's linear score is nonnegative.
pub fn bayes_label(x: &[f64; 3], group: Group, params: &BayesParams) -> bool {
    dot3(params.coeffs(group), x) >= 0.0
}

/// Draws `cfg.n` rows of ground truth.
pub fn sample_ground_truth<R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> Dataset {
    let mut ds = Dataset::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let group = if rng.random::<f64>() < cfg.minority_fraction {
            Group::B
        } else {
            Group::A
        };
        let mean = match group {
            Group::A => cfg.feature_shift,
            Group::B => 0.0,
        };
        let mut x = [0.0; 3];
        for xi in x.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *xi = mean + z;
        }
        let clean = bayes_label(&x, group, &cfg.bayes);
        let flip = rng.random::<f64>() < cfg.bayes.noise(group);
        ds.push(x, group, clean ^ flip, clean);
    }
    ds
}

/// Majority feature mean `d` that makes `P(b·x >= 0) = target_rate` when
/// every coordinate of `x` is `Normal(d, 1)`.
pub fn calibrate_feature_shift(target_rate: f64, coeffs: &[f64; 3]) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(SandboxError::invalid(
            "target_rate",
            format!("must be strictly inside (0, 1), got {target_rate}"),
        ));
    }
    let sum: f64 = coeffs.iter().sum();
    if sum == 0.0 {
        return Err(SandboxError::invalid(
            "coeffs",
            "coefficients sum to zero, so a common feature shift cannot move the positive rate",
        ));
    }
    let norm = dot3(coeffs, coeffs).sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(norm * std_normal.inverse_cdf(target_rate) / sum)
}

/// TPR of the noiseless labeler against noisy labels, given noise rate and base rate.
pub fn bayes_tpr(noise: f64, base_rate: f64) -> f64 {
    let hit = (1.0 - noise) * base_rate;
    hit / (hit + (1.0 - base_rate) * noise)
}

/// Precondition under which the noiseless labeler is among the lowest-error
/// Equalized-Odds classifiers on under-represented data.
pub fn theorem_condition(r: f64, eta: f64, beta: f64) -> bool {
    (1.0 - r) * (1.0 - 2.0 * eta) + r * (1.0 - eta) * beta > 0.0
}
