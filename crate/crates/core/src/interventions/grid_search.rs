//! Equalized-Odds in-processing: a grid search over Lagrange multipliers of
//! the reductions approach, one cost-sensitive logistic fit per grid point.

use rayon::prelude::*;

use super::Predictor;
use crate::error::{Result, SandboxError};
use crate::glm::{self, FitSettings, ModelCoeffs, WeightedSample};
use crate::metrics::{self, EoMode};
use crate::synthgen::{Dataset, Group};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Multipliers range over `[-lambda_limit, lambda_limit]` in each dimension.
    pub lambda_limit: f64,
    /// Points per dimension.
    pub grid_size: usize,
    /// Weight on training error; the rest goes to training disparity.
    pub tradeoff_weight: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lambda_limit: 2.0,
            grid_size: 10,
            tradeoff_weight: 0.5,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_limit.is_finite() && self.lambda_limit > 0.0) {
            return Err(SandboxError::invalid("lambda_limit", "must be a positive finite number"));
        }
        if self.grid_size == 0 {
            return Err(SandboxError::invalid("grid_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.tradeoff_weight) {
            return Err(SandboxError::invalid("tradeoff_weight", "must lie in [0, 1]"));
        }
        Ok(())
    }

    fn axis(&self) -> Vec<f64> {
        let k = self.grid_size;
        if k == 1 {
            return vec![0.0];
        }
        let step = 2.0 * self.lambda_limit / (k - 1) as f64;
        (0..k)
            .map(|i| {
                if i == k - 1 {
                    self.lambda_limit
                } else {
                    -self.lambda_limit + step * i as f64
                }
            })
            .collect()
    }

    /// `(λ₀, λ₁)` pairs in row-major order, with the origin appended when the
    /// uniform grid misses it (even `grid_size`).
    pub fn points(&self) -> Vec<(f64, f64)> {
        let axis = self.axis();
        let mut pts: Vec<(f64, f64)> = axis
            .iter()
            .flat_map(|&l0| axis.iter().map(move |&l1| (l0, l1)))
            .collect();
        if !pts.contains(&(0.0, 0.0)) {
            pts.push((0.0, 0.0));
        }
        pts
    }
}

fn cell_counts(ds: &Dataset) -> Result<[[f64; 2]; 2]> {
    let mut n = [[0.0; 2]; 2];
    for g in Group::ALL {
        for y in [false, true] {
            let c = ds.cell_count(g, y);
            if c == 0 {
                return Err(SandboxError::EmptyCell { group: g, label: y as u8 });
            }
            n[g as usize][y as usize] = c as f64;
        }
    }
    Ok(n)
}

/// Signed cost of predicting 1 on each row.
pub fn lagrangian_costs(ds: &Dataset, lambda0: f64, lambda1: f64) -> Result<Vec<f64>> {
    let cells = cell_counts(ds)?;
    let n = ds.len() as f64;
    Ok(ds
        .group
        .iter()
        .zip(&ds.label)
        .map(|(&g, &y)| {
            let (lam, yi) = if y { (lambda1, 1) } else { (lambda0, 0) };
            let base = if y { -1.0 / n } else { 1.0 / n };
            let adj = match g {
                Group::A => -1.0 / cells[0][yi],
                Group::B => 1.0 / cells[1][yi],
            };
            base + lam * adj
        })
        .collect())
}

/// Cost-sensitive reformulation of the Lagrangian as a weighted
/// classification problem: target `1{c < 0}`, weight `|c|`.
pub fn lagrangian_weights(ds: &Dataset, lambda0: f64, lambda1: f64) -> Result<Vec<WeightedSample>> {
    let costs = lagrangian_costs(ds, lambda0, lambda1)?;
    Ok(ds
        .features
        .iter()
        .zip(&ds.group)
        .zip(costs)
        .map(|((x, &g), c)| WeightedSample::new(x, g, c < 0.0, c.abs()))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCandidate {
    pub lambda: (f64, f64),
    pub coeffs: ModelCoeffs,
    pub converged: bool,
    pub train_error: f64,
    pub train_disparity: f64,
    pub objective: f64,
}

impl GridCandidate {
    fn lambda_norm(&self) -> f64 {
        self.lambda.0.hypot(self.lambda.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub candidates: Vec<GridCandidate>,
    pub selected: usize,
}

impl GridSearchOutcome {
    pub fn best(&self) -> &GridCandidate {
        &self.candidates[self.selected]
    }
}

fn evaluate_candidate(
    train: &Dataset,
    grid: &GridSpec,
    lambda: (f64, f64),
    fit: glm::FitReport,
) -> Result<GridCandidate> {
    let preds: Vec<bool> = train
        .features
        .iter()
        .zip(&train.group)
        .map(|(x, &g)| glm::predict_binary(&fit.coeffs, x, g))
        .collect();
    let train_error = 1.0 - metrics::accuracy(&preds, &train.label)?;
    let train_disparity = metrics::eo_disparity(&preds, &train.group, &train.label, EoMode::Odds)?;
    let w = grid.tradeoff_weight;
    Ok(GridCandidate {
        lambda,
        coeffs: fit.coeffs,
        converged: fit.converged,
        train_error,
        train_disparity,
        objective: w * train_error + (1.0 - w) * train_disparity,
    })
}

/// Fits every grid point and keeps all candidates. Non-origin fits are warm
/// started from the unconstrained solution.
pub fn grid_search_eo_detailed(
    train: &Dataset,
    grid: &GridSpec,
    settings: &FitSettings,
) -> Result<GridSearchOutcome> {
    grid.validate()?;
    cell_counts(train)?;
    let points = grid.points();

    let origin_fit = glm::fit_weighted_logreg(&lagrangian_weights(train, 0.0, 0.0)?, settings)?;
    let warm = origin_fit.coeffs;
    let mut origin_fit = Some(origin_fit);
    let fits: Vec<Option<glm::FitReport>> = points
        .iter()
        .map(|&p| if p == (0.0, 0.0) { origin_fit.take() } else { None })
        .collect();

    let candidates = points
        .par_iter()
        .zip(fits)
        .map(|(&(l0, l1), pre)| {
            let fit = match pre {
                Some(f) => f,
                None => glm::fit_from(&lagrangian_weights(train, l0, l1)?, settings, warm)?,
            };
            evaluate_candidate(train, grid, (l0, l1), fit)
        })
        .collect::<Result<Vec<_>>>()?;

    let selected = (0..candidates.len())
        .min_by(|&i, &j| {
            let (a, b) = (&candidates[i], &candidates[j]);
            a.objective
                .total_cmp(&b.objective)
                .then(a.train_disparity.total_cmp(&b.train_disparity))
                .then(a.lambda_norm().total_cmp(&b.lambda_norm()))
                .then(i.cmp(&j))
        })
        .expect("grid is never empty");
    Ok(GridSearchOutcome { candidates, selected })
}

pub fn grid_search_eo(train: &Dataset, grid: &GridSpec, settings: &FitSettings) -> Result<Predictor> {
    Ok(Predictor::Linear(grid_search_eo_detailed(train, grid, settings)?.best().coeffs))
}
