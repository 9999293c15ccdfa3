//! Fairness interventions: in-processing grid search, threshold
//! post-processing and correlation-removal pre-processing.

mod correlation;
mod grid_search;
mod postprocess;

use rand::Rng;

pub use correlation::{correlation_remover, CorrelationRemover};
pub use grid_search::{
    grid_search_eo, grid_search_eo_detailed, lagrangian_costs, lagrangian_weights, GridCandidate,
    GridSearchOutcome, GridSpec,
};
pub use postprocess::{
    roc_points, threshold_postprocess, threshold_postprocess_detailed, upper_hull, GroupRule,
    OperatingPoint, RandomizedGroupThresholds, RocPoint,
};

use crate::glm::{self, ModelCoeffs};
use crate::synthgen::{Dataset, Group};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    Linear(ModelCoeffs),
    Thresholds(RandomizedGroupThresholds),
    /// A linear model over features passed through a fitted remover.
    Residualized {
        remover: CorrelationRemover,
        model: ModelCoeffs,
    },
}

impl Predictor {
    pub fn is_randomized(&self) -> bool {
        matches!(self, Predictor::Thresholds(_))
    }
}

pub fn apply_predictor<R: Rng + ?Sized>(p: &Predictor, x: &[f64; 3], group: Group, rng: &mut R) -> bool {
    match p {
        Predictor::Linear(m) => glm::predict_binary(m, x, group),
        Predictor::Thresholds(t) => {
            let score = glm::predict_score(&t.base_model, x, group);
            t.rule(group).draw(score, rng)
        }
        Predictor::Residualized { remover, model } => {
            glm::predict_binary(model, &remover.transform_row(x, group), group)
        }
    }
}

/// Predictions for every row, consuming `rng` in row order.
pub fn predict_dataset<R: Rng + ?Sized>(p: &Predictor, ds: &Dataset, rng: &mut R) -> Vec<bool> {
    ds.features
        .iter()
        .zip(&ds.group)
        .map(|(x, &g)| apply_predictor(p, x, g, rng))
        .collect()
}
