//! Flat parameter vectors: global models, client deltas and perturbations.

use serde::{Deserialize, Serialize};
use std::ops::Index;

use crate::error::{Error, Result};

/// A flat real vector of model parameters (or a delta between two models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(self)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + factor * b).collect()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, -1.0)
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl AsRef<ParameterVector> for ParameterVector {
    fn as_ref(&self) -> &ParameterVector {
        self
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Euclidean norm.
pub fn l2_norm(v: &ParameterVector) -> f64 {
    v.0.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Applies an aggregated update to the global model with server learning rate 1.
pub fn apply_update(global: &ParameterVector, aggregate: &ParameterVector) -> Result<ParameterVector> {
    let next = global.add_scaled(aggregate, 1.0)?;
    if !next.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(next)
}

/// Unweighted coordinate-wise mean. Summation runs in list order.
pub fn mean_of<V: AsRef<ParameterVector>>(vectors: &[V]) -> Result<ParameterVector> {
    let first = vectors.first().ok_or(Error::EmptyUpdates)?.as_ref();
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        let v = v.as_ref();
        check_dim(dim, v.dim())?;
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(ParameterVector(acc))
}
