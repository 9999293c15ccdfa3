//! Accuracy, Equalized-Odds disparity and fidelity, overall and per group.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SandboxError};
use crate::synthgen::Group;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EoMode {
    /// Both label values (equalized odds).
    #[default]
    Odds,
    /// Positive label only (equality of opportunity).
    Opportunity,
}

impl EoMode {
    fn labels(self) -> &'static [bool] {
        match self {
            EoMode::Odds => &[false, true],
            EoMode::Opportunity => &[true],
        }
    }
}

impl FromStr for EoMode {
    type Err = SandboxError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odds" => Ok(EoMode::Odds),
            "opportunity" => Ok(EoMode::Opportunity),
            other => Err(SandboxError::invalid(
                "eo_mode",
                format!("unknown mode `{other}`, expected odds or opportunity"),
            )),
        }
    }
}

impl fmt::Display for EoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EoMode::Odds => "odds",
            EoMode::Opportunity => "opportunity",
        })
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(SandboxError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(SandboxError::EmptyInput);
    }
    Ok(())
}

/// Fraction of positions where the two vectors agree.
pub fn fidelity(preds1: &[bool], preds2: &[bool]) -> Result<f64> {
    check_len(preds1.len(), preds2.len())?;
    let agree = preds1.iter().zip(preds2).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / preds1.len() as f64)
}

pub fn accuracy(preds: &[bool], labels: &[bool]) -> Result<f64> {
    fidelity(preds, labels)
}

/// Counts of predicted positives and rows per (group, label) cell.
#[derive(Debug, Clone, Copy, Default)]
struct CellCounts {
    pos: [[usize; 2]; 2],
    total: [[usize; 2]; 2],
}

impl CellCounts {
    fn new(preds: &[bool], groups: &[Group], labels: &[bool]) -> Self {
        let mut c = CellCounts::default();
        for ((&p, &g), &y) in preds.iter().zip(groups).zip(labels) {
            let gi = g as usize;
            let yi = y as usize;
            c.total[gi][yi] += 1;
            c.pos[gi][yi] += p as usize;
        }
        c
    }

    fn rate(&self, g: Group, y: bool) -> Result<f64> {
        let (gi, yi) = (g as usize, y as usize);
        match self.total[gi][yi] {
            0 => Err(SandboxError::EmptyCell { group: g, label: y as u8 }),
            n => Ok(self.pos[gi][yi] as f64 / n as f64),
        }
    }

    fn marginal(&self, y: bool) -> f64 {
        let yi = y as usize;
        let pos = self.pos[0][yi] + self.pos[1][yi];
        let tot = self.total[0][yi] + self.total[1][yi];
        pos as f64 / tot as f64
    }

    /// `max_y |E[f|g,y] − E[f|y]|` over the labels used by `mode`.
    fn group_gap(&self, g: Group, mode: EoMode) -> Result<f64> {
        let mut gap = 0.0f64;
        for &y in mode.labels() {
            gap = gap.max((self.rate(g, y)? - self.marginal(y)).abs());
        }
        Ok(gap)
    }
}

fn check_three(preds: &[bool], groups: &[Group], labels: &[bool]) -> Result<()> {
    check_len(preds.len(), groups.len())?;
    check_len(preds.len(), labels.len())
}

/// `max_{g,y} |E[f|G=g,Y=y] − E[f|Y=y]|` with sample means.
pub fn eo_disparity(preds: &[bool], groups: &[Group], labels: &[bool], mode: EoMode) -> Result<f64> {
    check_three(preds, groups, labels)?;
    let c = CellCounts::new(preds, groups, labels);
    // Report the first empty cell in (A,0),(A,1),(B,0),(B,1) order.
    for g in Group::ALL {
        for &y in mode.labels() {
            c.rate(g, y)?;
        }
    }
    let mut worst = 0.0f64;
    for g in Group::ALL {
        worst = worst.max(c.group_gap(g, mode)?);
    }
    Ok(worst)
}

/// One group's contribution to [`eo_disparity`]: `max_y |E[f|g,y] − E[f|y]|`.
pub fn eo_group_gap(
    preds: &[bool],
    groups: &[Group],
    labels: &[bool],
    group: Group,
    mode: EoMode,
) -> Result<f64> {
    check_three(preds, groups, labels)?;
    CellCounts::new(preds, groups, labels).group_gap(group, mode)
}

/// Training/evaluation summary. Missing values mean the metric was not
/// computable (an empty group or cell).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupedValue {
    pub all: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl GroupedValue {
    pub fn get(&self, g: Option<Group>) -> Option<f64> {
        match g {
            None => self.all,
            Some(Group::A) => self.a,
            Some(Group::B) => self.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub accuracy: GroupedValue,
    pub eo_disparity: GroupedValue,
    pub fidelity_to_bayes: GroupedValue,
}

fn by_group<F>(f: F) -> GroupedValue
where
    F: Fn(Option<Group>) -> Option<f64>,
{
    GroupedValue {
        all: f(None),
        a: f(Some(Group::A)),
        b: f(Some(Group::B)),
    }
}

fn select(v: &[bool], groups: &[Group], g: Option<Group>) -> Vec<bool> {
    v.iter()
        .zip(groups)
        .filter(|(_, &gg)| g.is_none_or(|want| want == gg))
        .map(|(&x, _)| x)
        .collect()
}

/// Evaluates all metrics for `preds` against observed `labels` and the
/// reference labeler's outputs `reference`.
pub fn evaluate(
    preds: &[bool],
    groups: &[Group],
    labels: &[bool],
    reference: &[bool],
    mode: EoMode,
) -> Result<MetricReport> {
    check_three(preds, groups, labels)?;
    check_len(preds.len(), reference.len())?;
    let accuracy = by_group(|g| {
        accuracy(&select(preds, groups, g), &select(labels, groups, g)).ok()
    });
    let fidelity_to_bayes = by_group(|g| {
        fidelity(&select(preds, groups, g), &select(reference, groups, g)).ok()
    });
    let eo_disparity = by_group(|g| match g {
        None => eo_disparity(preds, groups, labels, mode).ok(),
        Some(g) => eo_group_gap(preds, groups, labels, g, mode).ok(),
    });
    Ok(MetricReport {
        accuracy,
        eo_disparity,
        fidelity_to_bayes,
    })
}
