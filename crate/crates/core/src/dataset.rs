use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A collection of multivariate series, each stored as a `T_i × p` matrix
/// (rows are time points, columns are channels).
#[derive(Debug, Clone, PartialEq)]
pub struct MtsDataset {
    series: Vec<DMatrix<f64>>,
    labels: Option<Vec<usize>>,
    outliers: Option<Vec<usize>>,
}

impl MtsDataset {
    /// Validates that every series is non-empty, finite and shares the channel count.
    pub fn new(series: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = series.first().ok_or(Error::InvalidShape("dataset has no series"))?;
        let p = first.ncols();
        if p == 0 {
            return Err(Error::InvalidShape("series has no channels"));
        }
        for x in &series {
            if x.ncols() != p {
                return Err(Error::DimensionMismatch { expected: p, found: x.ncols() });
            }
            if x.nrows() == 0 {
                return Err(Error::InvalidShape("series has no time points"));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        Ok(Self { series, labels: None, outliers: None })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.series.len() {
            return Err(Error::DimensionMismatch { expected: self.series.len(), found: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Attaches ground-truth outlier indices (0-based, sorted on insertion).
    pub fn with_outliers(mut self, mut outliers: Vec<usize>) -> Result<Self> {
        outliers.sort_unstable();
        outliers.dedup();
        if outliers.last().is_some_and(|&i| i >= self.series.len()) {
            return Err(Error::InvalidShape("outlier index out of range"));
        }
        self.outliers = Some(outliers);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.series[0].ncols()
    }

    pub fn series(&self) -> &[DMatrix<f64>] {
        &self.series
    }

    pub fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.series[i]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn outliers(&self) -> Option<&[usize]> {
        self.outliers.as_deref()
    }

    pub fn min_len(&self) -> usize {
        self.series.iter().map(|x| x.nrows()).min().unwrap_or(0)
    }

    pub fn into_series(self) -> Vec<DMatrix<f64>> {
        self.series
    }

    /// Multiplies every series by `c`; labels and outliers are kept.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            series: self.series.iter().map(|x| x * c).collect(),
            labels: self.labels.clone(),
            outliers: self.outliers.clone(),
        }
    }

    /// Keeps the series at `indices` in the given order. Labels follow; outliers are dropped.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            series: indices.iter().map(|&i| self.series[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            outliers: None,
        }
    }
}
