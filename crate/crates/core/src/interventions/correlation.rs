//! Pre-processing that removes linear correlation between the features and
//! group membership.

use crate::error::{Result, SandboxError};
use crate::synthgen::{Dataset, Group};

/// Fitted projection: `x_j − alpha · beta_j · (1{B} − mean_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationRemover {
    pub alpha: f64,
    /// Sample mean of the minority indicator.
    pub mean_b: f64,
    /// Per-feature least-squares slope on the centered indicator.
    pub beta: [f64; 3],
}

impl CorrelationRemover {
    pub fn fit(ds: &Dataset, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(SandboxError::invalid("alpha", "must lie in [0, 1]"));
        }
        let n_b = ds.group_count(Group::B);
        if n_b == 0 || n_b == ds.len() {
            return Err(SandboxError::SingleGroup);
        }
        let mean_b = n_b as f64 / ds.len() as f64;
        let mut sxz = [0.0; 3];
        let mut szz = 0.0;
        for (x, &g) in ds.features.iter().zip(&ds.group) {
            let z = indicator(g) - mean_b;
            szz += z * z;
            for j in 0..3 {
                sxz[j] += z * x[j];
            }
        }
        Ok(CorrelationRemover {
            alpha,
            mean_b,
            beta: sxz.map(|v| v / szz),
        })
    }

    pub fn transform_row(&self, x: &[f64; 3], g: Group) -> [f64; 3] {
        let z = indicator(g) - self.mean_b;
        std::array::from_fn(|j| x[j] - self.alpha * self.beta[j] * z)
    }

    pub fn transform(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        for (x, &g) in out.features.iter_mut().zip(&ds.group) {
            *x = self.transform_row(x, g);
        }
        out
    }
}

fn indicator(g: Group) -> f64 {
    match g {
        Group::A => 0.0,
        Group::B => 1.0,
    }
}

pub fn correlation_remover(ds: &Dataset, alpha: f64) -> Result<Dataset> {
    Ok(CorrelationRemover::fit(ds, alpha)?.transform(ds))
}
