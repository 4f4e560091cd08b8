//! Multivariate time-series container shared by the generator, trainer and
//! detector.

use crate::error::{Error, Result};

/// A `T x D` observation matrix with optional per-timestep binary anomaly
/// labels. Rows are timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<Vec<f64>>,
    labels: Option<Vec<bool>>,
}

impl TimeSeries {
    /// Builds a series from row-per-timestep values and optional labels.
    pub fn new(values: Vec<Vec<f64>>, labels: Option<Vec<bool>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("series must contain at least one timestep"));
        }
        let dims = values[0].len();
        if dims == 0 {
            return Err(Error::invalid("series must have at least one dimension"));
        }
        if let Some(bad) = values.iter().position(|row| row.len() != dims) {
            return Err(Error::invalid(format!(
                "row {bad} has {} columns, expected {dims}",
                values[bad].len()
            )));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("series contains non-finite values"));
        }
        if let Some(ref l) = labels {
            if l.len() != values.len() {
                return Err(Error::invalid(format!(
                    "label length {} does not match series length {}",
                    l.len(),
                    values.len()
                )));
            }
        }
        Ok(Self { values, labels })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.values[0].len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub(crate) fn values_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.values
    }

    pub(crate) fn set_labels(&mut self, labels: Vec<bool>) {
        debug_assert_eq!(labels.len(), self.values.len());
        self.labels = Some(labels);
    }
}
