//! Brute-force 1-nearest-neighbour classifier.
//!
//! Serves as both the weak classifier (source only) and the strong classifier
//! (source plus high-confidence target samples).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::FeatureMatrix;

#[derive(Clone, Debug)]
pub struct NnModel {
    train_features: FeatureMatrix,
    train_labels: Vec<usize>,
}

impl NnModel {
    pub fn fit(features: FeatureMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if labels.len() != features.n_samples() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: features.n_samples(),
            });
        }
        Ok(Self {
            train_features: features,
            train_labels: labels,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_labels.len()
    }

    pub fn dim(&self) -> usize {
        self.train_features.dim()
    }

    /// Index of the nearest training sample under squared Euclidean distance;
    /// the first one wins on ties.
    pub fn nearest(&self, query: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.n_train() {
            let d: f64 = self
                .train_features
                .column(i)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn predict(&self, queries: &FeatureMatrix) -> Result<Vec<usize>> {
        if queries.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: queries.dim(),
            });
        }
        Ok((0..queries.n_samples())
            .into_par_iter()
            .map(|q| self.train_labels[self.nearest(queries.column(q))])
            .collect())
    }
}
