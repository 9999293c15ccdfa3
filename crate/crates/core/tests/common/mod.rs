//! Independent reference implementations shared by the integration suites.
//! Nothing here calls into the code under test except for data types.

#![allow(dead_code)]

use fairsandbox::harness::{AggregateRecord, GroupKey, Metric, ModelVariant, Split};
use fairsandbox::synthgen::{Dataset, Group};
use rand::Rng;
use rand_distr::StandardNormal;

/// Mean of `f` over the rows selected by `keep`; `None` when none are.
fn cond_mean(preds: &[bool], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut hit, mut tot) = (0usize, 0usize);
    for (i, &p) in preds.iter().enumerate() {
        if keep(i) {
            tot += 1;
            hit += p as usize;
        }
    }
    (tot > 0).then(|| hit as f64 / tot as f64)
}

/// Equalized-odds disparity straight from its definition.
pub fn eo_disparity(preds: &[bool], groups: &[Group], labels: &[bool], ys: &[bool]) -> Option<f64> {
    let mut worst = 0.0f64;
    for &y in ys {
        let marginal = cond_mean(preds, |i| labels[i] == y)?;
        for g in [Group::A, Group::B] {
            let cell = cond_mean(preds, |i| labels[i] == y && groups[i] == g)?;
            worst = worst.max((cell - marginal).abs());
        }
    }
    Some(worst)
}

pub fn agreement(a: &[bool], b: &[bool]) -> Option<f64> {
    (!a.is_empty()).then(|| a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

/// `err(h) + Σ_y λ_y (P[h=1|B,y] − P[h=1|A,y])` for a hypothesis given by its
/// predictions on the rows of `ds`.
pub fn lagrangian(ds: &Dataset, h: &[bool], lambda: [f64; 2]) -> f64 {
    let n = ds.len() as f64;
    let err = ds.label.iter().zip(h).filter(|(y, p)| y != p).count() as f64 / n;
    let mut l = err;
    for (yi, lam) in lambda.iter().enumerate() {
        let y = yi == 1;
        let rate = |g: Group| cond_mean(h, |i| ds.group[i] == g && ds.label[i] == y).unwrap();
        l += lam * (rate(Group::B) - rate(Group::A));
    }
    l
}

/// Fraction of `n` draws with every coordinate `N(d, 1)` landing on the
/// nonnegative side of `coeffs`.
pub fn mc_positive_rate<R: Rng>(d: f64, coeffs: &[f64; 3], n: usize, rng: &mut R) -> f64 {
    let mut hits = 0usize;
    for _ in 0..n {
        let mut s = 0.0;
        for c in coeffs {
            let z: f64 = rng.sample(StandardNormal);
            s += c * (d + z);
        }
        hits += (s >= 0.0) as usize;
    }
    hits as f64 / n as f64
}

/// Expected (FPR, TPR) of the rule "threshold at `t_hi` w.p. `q`, else at
/// `t_lo`; with probability `p` replace by a coin of bias `c`".
fn rule_rates(scores: &[f64], labels: &[bool], t_lo: f64, t_hi: f64, q: f64, p: f64, c: f64) -> (f64, f64) {
    let mut pos = [0.0; 2];
    let mut cnt = [0.0; 2];
    for (&s, &y) in scores.iter().zip(labels) {
        let thr = q * ((s >= t_hi) as u8 as f64) + (1.0 - q) * ((s >= t_lo) as u8 as f64);
        pos[y as usize] += (1.0 - p) * thr + p * c;
        cnt[y as usize] += 1.0;
    }
    (pos[0] / cnt[0], pos[1] / cnt[1])
}

/// Smallest pooled error `P(y=0)·FPR + P(y=1)·(1 − TPR)` over operating
/// points reachable by both groups' discretized randomized rules, matching
/// rates within one bucket of width `bucket`.
pub fn postprocess_oracle(scores: &[f64], groups: &[Group], labels: &[bool], bucket: f64) -> f64 {
    use std::collections::HashSet;
    let cells: Vec<HashSet<(i64, i64)>> = [Group::A, Group::B]
        .iter()
        .map(|&g| {
            let (s, y): (Vec<f64>, Vec<bool>) = scores
                .iter()
                .zip(groups)
                .zip(labels)
                .filter(|((_, gg), _)| **gg == g)
                .map(|((s, _), y)| (*s, *y))
                .unzip();
            let mut ts: Vec<f64> = s.clone();
            ts.push(0.0);
            ts.push(1.0 + 1e-9);
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            let mut out = HashSet::new();
            for (i, &lo) in ts.iter().enumerate() {
                for &hi in &ts[i..] {
                    for qi in 0..=100 {
                        for pi in 0..=10 {
                            for ci in 0..=10 {
                                let (fpr, tpr) = rule_rates(
                                    &s,
                                    &y,
                                    lo,
                                    hi,
                                    qi as f64 / 100.0,
                                    pi as f64 / 10.0,
                                    ci as f64 / 10.0,
                                );
                                out.insert(((fpr / bucket).round() as i64, (tpr / bucket).round() as i64));
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let p1 = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    cells[0]
        .intersection(&cells[1])
        .map(|&(fx, ty)| (1.0 - p1) * fx as f64 * bucket + p1 * (1.0 - ty as f64 * bucket))
        .fold(f64::INFINITY, f64::min)
}

/// Mean of one aggregate row on the test split; panics when absent.
pub fn mean_at(aggs: &[AggregateRecord], x: f64, v: ModelVariant, g: GroupKey, m: Metric) -> f64 {
    find(aggs, x, v, g, m).mean
}

pub fn find(aggs: &[AggregateRecord], x: f64, v: ModelVariant, g: GroupKey, m: Metric) -> &AggregateRecord {
    aggs.iter()
        .find(|a| {
            (a.bias_level - x).abs() < 1e-12
                && a.model_variant == v
                && a.split == Split::Test
                && a.group == g
                && a.metric == m
        })
        .unwrap_or_else(|| panic!("no aggregate for x={x} {v} {g} {m}"))
}

/// Sweep values present in `aggs`, ascending.
pub fn levels(aggs: &[AggregateRecord]) -> Vec<f64> {
    let mut xs: Vec<f64> = aggs.iter().map(|a| a.bias_level).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}
