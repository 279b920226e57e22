use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations with nonnegative sampling weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSample {
    /// Empty samples are allowed (prior-only fits); a nonempty sample
    /// needs at least one positive weight.
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::Precondition(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::DegenerateWeights(format!("invalid weight {w}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite observation".into()));
        }
        if !values.is_empty() && !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::DegenerateWeights("all weights are zero".into()));
        }
        Ok(WeightedSample { values, weights })
    }

    pub fn unweighted(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Kish effective sample size, (sum w)^2 / sum w^2.
    pub fn kish_size(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        if s2 > 0.0 {
            s * s / s2
        } else {
            0.0
        }
    }

    /// Weights rescaled to sum to the number of observations.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total = self.total_weight();
        let n = self.values.len() as f64;
        self.weights.iter().map(|w| w * n / total).collect()
    }

    /// Keep only observations satisfying `keep`.
    pub fn filter(&self, keep: impl Fn(f64) -> bool) -> WeightedSample {
        let (values, weights) = self
            .values
            .iter()
            .zip(&self.weights)
            .filter(|(v, _)| keep(**v))
            .map(|(v, w)| (*v, *w))
            .unzip();
        WeightedSample { values, weights }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> WeightedSample {
        WeightedSample {
            values: self.values.iter().map(|v| f(*v)).collect(),
            weights: self.weights.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_and_kish() {
        assert!(WeightedSample::new(vec![1.0], vec![0.0]).is_err());
        assert!(WeightedSample::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(WeightedSample::new(vec![1.0], vec![-1.0]).is_err());
        assert!(WeightedSample::new(vec![], vec![]).is_ok());
        let s = WeightedSample::new(vec![1.0, 2.0], vec![1.0, 3.0]).unwrap();
        assert!((s.kish_size() - 16.0 / 10.0).abs() < 1e-15);
        assert_eq!(s.normalized_weights(), vec![0.5, 1.5]);
    }
}
