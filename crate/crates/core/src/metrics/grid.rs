use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of points in a grid spanning the observed score range.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Strictly increasing list of finite score thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdGrid {
    values: Vec<f64>,
    /// `(first, inverse step)` used to guess ranks on near-uniform grids.
    #[serde(skip)]
    lookup: Option<(f64, f64)>,
}

impl ThresholdGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Invalid(format!(
                "threshold grid needs at least 2 points, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite threshold {v}")));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(format!(
                "thresholds must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let first = values[0];
        let step = (values[values.len() - 1] - first) / (values.len() - 1) as f64;
        let uniform = values
            .iter()
            .enumerate()
            .all(|(i, &v)| ((v - first) / step - i as f64).abs() < 0.25);
        let lookup = (uniform && step > 0.0 && step.is_finite()).then(|| (first, 1.0 / step));
        Ok(ThresholdGrid { values, lookup })
    }

    /// `points` evenly spaced thresholds from `min` to `max` inclusive.
    pub fn uniform(min: f64, max: f64, points: usize) -> Result<Self> {
        if points < 2 || !(min < max) {
            return Err(Error::Invalid(format!(
                "uniform grid needs min < max and points >= 2, got {min}:{max}:{points}"
            )));
        }
        let step = (max - min) / (points - 1) as f64;
        let mut values: Vec<f64> = (0..points).map(|i| min + step * i as f64).collect();
        values[points - 1] = max;
        ThresholdGrid::new(values)
    }

    /// Uniform grid over an observed `[min, max]` score range. A degenerate
    /// range is widened upwards so the grid stays strictly increasing.
    pub fn spanning(min: f64, max: f64, points: usize) -> Result<Self> {
        let max = if max > min {
            max
        } else {
            min + (min.abs() * 1e-9).max(1e-9)
        };
        ThresholdGrid::uniform(min, max, points)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of thresholds `t` with `t <= score`.
    #[inline]
    pub fn rank(&self, score: f64) -> usize {
        let n = self.values.len();
        let Some((first, inv_step)) = self.lookup else {
            return self.values.partition_point(|&t| t <= score);
        };
        let guess = (score - first) * inv_step + 1.0;
        let mut k = if guess <= 0.0 {
            0
        } else if guess >= n as f64 {
            n
        } else {
            guess as usize
        };
        // the guess is within a step or so; settle it on the stored values
        while k > 0 && self.values[k - 1] > score {
            k -= 1;
        }
        while k < n && self.values[k] <= score {
            k += 1;
        }
        k
    }

    /// Apply `alpha * t + beta` to every threshold.
    pub fn rescaled(&self, alpha: f64, beta: f64) -> Result<Self> {
        ThresholdGrid::new(self.values.iter().map(|t| alpha * t + beta).collect())
    }
}

impl TryFrom<Vec<f64>> for ThresholdGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ThresholdGrid::new(values)
    }
}

impl From<ThresholdGrid> for Vec<f64> {
    fn from(grid: ThresholdGrid) -> Self {
        grid.values
    }
}
