//! Equalized-Odds post-processing with randomized group-specific thresholds.
//!
//! Each group's achievable (FPR, TPR) region is the convex hull of its
//! empirical ROC curve together with the diagonal of constant classifiers.
//! The common operating point minimizing the pooled error is found on the
//! pointwise minimum of the two upper hulls.

use rand::Rng;

use crate::error::{Result, SandboxError};
use crate::glm::ModelCoeffs;
use crate::synthgen::Group;

/// One group's randomized decision rule. With probability `p_constant` the
/// prediction is a coin flip with bias `constant_rate`; otherwise the score is
/// thresholded at `t_hi` with probability `q` and at `t_lo` with `1 − q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRule {
    pub t_lo: f64,
    pub t_hi: f64,
    pub q: f64,
    pub p_constant: f64,
    pub constant_rate: f64,
}

impl GroupRule {
    pub fn threshold(t: f64) -> Self {
        GroupRule {
            t_lo: t,
            t_hi: t,
            q: 1.0,
            p_constant: 0.0,
            constant_rate: 0.0,
        }
    }

    /// Probability of predicting 1 for `score`.
    pub fn prob_positive(&self, score: f64) -> f64 {
        let hi = (score >= self.t_hi) as u8 as f64;
        let lo = (score >= self.t_lo) as u8 as f64;
        let thr = self.q * hi + (1.0 - self.q) * lo;
        (1.0 - self.p_constant) * thr + self.p_constant * self.constant_rate
    }

    pub fn draw<R: Rng + ?Sized>(&self, score: f64, rng: &mut R) -> bool {
        if rng.random::<f64>() < self.p_constant {
            return rng.random::<f64>() < self.constant_rate;
        }
        let t = if rng.random::<f64>() < self.q { self.t_hi } else { self.t_lo };
        score >= t
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.t_lo) && unit(self.t_hi) && self.t_lo <= self.t_hi) {
            return Err(SandboxError::invalid("thresholds", "need 0 <= t_lo <= t_hi <= 1"));
        }
        if !(unit(self.q) && unit(self.p_constant) && unit(self.constant_rate)) {
            return Err(SandboxError::invalid("mixing", "probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizedGroupThresholds {
    /// Indexed by group: A then B.
    pub rules: [GroupRule; 2],
    pub base_model: ModelCoeffs,
}

impl RandomizedGroupThresholds {
    pub fn rule(&self, g: Group) -> &GroupRule {
        &self.rules[g as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Predict 1 iff `score >= threshold`; 1.0 predicts nothing.
    pub threshold: f64,
}

/// Empirical ROC curve from threshold 1 down to the smallest score.
/// Needs at least one positive and one negative label.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Vec<RocPoint> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let n_pos = labels.iter().filter(|&&y| y).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let mut pts = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: 1.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        pts.push(RocPoint {
            fpr: fp as f64 / n_neg,
            tpr: tp as f64 / n_pos,
            threshold: s,
        });
    }
    pts
}

fn cross(o: &RocPoint, a: &RocPoint, b: &RocPoint) -> f64 {
    (a.fpr - o.fpr) * (b.tpr - o.tpr) - (a.tpr - o.tpr) * (b.fpr - o.fpr)
}

/// Upper convex hull of ROC points, strictly increasing in FPR.
pub fn upper_hull(points: &[RocPoint]) -> Vec<RocPoint> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
    let mut hull: Vec<RocPoint> = Vec::with_capacity(pts.len());
    for p in pts {
        // A vertical step keeps only its top.
        if hull.last().is_some_and(|l| l.fpr == p.fpr) {
            hull.pop();
        }
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Segment `i` such that `hull[i].fpr <= x <= hull[i + 1].fpr`.
fn segment(hull: &[RocPoint], x: f64) -> usize {
    let i = hull.partition_point(|p| p.fpr <= x);
    i.saturating_sub(1).min(hull.len() - 2)
}

fn hull_value(hull: &[RocPoint], x: f64) -> f64 {
    let i = segment(hull, x);
    let (l, r) = (&hull[i], &hull[i + 1]);
    if x <= l.fpr {
        return l.tpr;
    }
    if x >= r.fpr {
        return r.tpr;
    }
    l.tpr + (r.tpr - l.tpr) * (x - l.fpr) / (r.fpr - l.fpr)
}

/// Realizes `(x, y)` for a group with upper hull `hull`, assuming
/// `x <= y <= hull_value(hull, x)`.
fn realize(hull: &[RocPoint], x: f64, y: f64) -> GroupRule {
    let i = segment(hull, x);
    let (l, r) = (&hull[i], &hull[i + 1]);
    let mut rule = if x <= l.fpr {
        GroupRule::threshold(l.threshold)
    } else if x >= r.fpr {
        GroupRule::threshold(r.threshold)
    } else {
        GroupRule {
            t_lo: r.threshold,
            t_hi: l.threshold,
            q: (r.fpr - x) / (r.fpr - l.fpr),
            p_constant: 0.0,
            constant_rate: 0.0,
        }
    };
    let h = hull_value(hull, x);
    if h - y > 1e-12 && h - x > 1e-12 {
        rule.p_constant = ((h - y) / (h - x)).clamp(0.0, 1.0);
        rule.constant_rate = x;
    }
    rule
}

/// The chosen common operating point and its pooled training error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub error: f64,
}

fn check_inputs(scores: &[f64], groups: &[Group], labels: &[bool]) -> Result<()> {
    if scores.len() != groups.len() || scores.len() != labels.len() {
        return Err(SandboxError::LengthMismatch {
            left: scores.len(),
            right: groups.len().min(labels.len()),
        });
    }
    if let Some(s) = scores.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(SandboxError::invalid("scores", format!("must lie in (0, 1), got {s}")));
    }
    for g in Group::ALL {
        let mut cells = [0usize; 2];
        let mut pred = [0usize; 2];
        for ((&s, &gg), &y) in scores.iter().zip(groups).zip(labels) {
            if gg == g {
                cells[y as usize] += 1;
                pred[(s >= 0.5) as usize] += 1;
            }
        }
        if let Some(y) = cells.iter().position(|&c| c == 0) {
            return Err(SandboxError::NotApplicable(format!(
                "group {g} has no rows with label {y}"
            )));
        }
        if let Some(c) = pred.iter().position(|&c| c == 0) {
            return Err(SandboxError::NotApplicable(format!(
                "base model never predicts class {c} in group {g}"
            )));
        }
    }
    Ok(())
}

/// Fits randomized group thresholds equalizing TPR and FPR across groups on
/// the given calibration data, and reports the selected operating point.
pub fn threshold_postprocess_detailed(
    scores: &[f64],
    groups: &[Group],
    labels: &[bool],
    base_model: ModelCoeffs,
) -> Result<(RandomizedGroupThresholds, OperatingPoint)> {
    check_inputs(scores, groups, labels)?;
    let hulls: Vec<Vec<RocPoint>> = Group::ALL
        .iter()
        .map(|&g| {
            let (s, y): (Vec<f64>, Vec<bool>) = scores
                .iter()
                .zip(groups)
                .zip(labels)
                .filter(|((_, &gg), _)| gg == g)
                .map(|((&s, _), &y)| (s, y))
                .unzip();
            upper_hull(&roc_points(&s, &y))
        })
        .collect();

    let n = labels.len() as f64;
    let p1 = labels.iter().filter(|&&y| y).count() as f64 / n;
    let p0 = 1.0 - p1;
    let joint = |x: f64| hull_value(&hulls[0], x).min(hull_value(&hulls[1], x));
    let error = |x: f64| p0 * x + p1 * (1.0 - joint(x));

    let mut xs: Vec<f64> = hulls.iter().flatten().map(|p| p.fpr).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut candidates = xs.clone();
    let diff = |x: f64| hull_value(&hulls[0], x) - hull_value(&hulls[1], x);
    for w in xs.windows(2) {
        let (d0, d1) = (diff(w[0]), diff(w[1]));
        if d0 * d1 < 0.0 {
            candidates.push(w[0] + (w[1] - w[0]) * d0 / (d0 - d1));
        }
    }
    let x = candidates
        .into_iter()
        .min_by(|a, b| error(*a).total_cmp(&error(*b)).then(a.total_cmp(b)))
        .expect("hulls always contain the endpoints");
    let y = joint(x);

    let rules = [realize(&hulls[0], x, y), realize(&hulls[1], x, y)];
    Ok((
        RandomizedGroupThresholds { rules, base_model },
        OperatingPoint { fpr: x, tpr: y, error: error(x) },
    ))
}

pub fn threshold_postprocess(
    scores: &[f64],
    groups: &[Group],
    labels: &[bool],
    base_model: ModelCoeffs,
) -> Result<RandomizedGroupThresholds> {
    Ok(threshold_postprocess_detailed(scores, groups, labels, base_model)?.0)
}
