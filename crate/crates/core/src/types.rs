//! Observation types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A class label; small non-negative category index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u32);

impl Label {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for Label {
    fn from(v: u32) -> Self {
        Label(v)
    }
}

/// Fixed-length feature vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Object(Vec<f64>);

impl Object {
    /// Fails if any entry is NaN or infinite.
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite feature {bad}")));
        }
        Ok(Object(features))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.0
    }
}

/// One stream element `z = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub object: Object,
    pub label: Label,
}

impl Observation {
    pub fn new(object: Object, label: Label) -> Self {
        Observation { object, label }
    }

    /// Convenience constructor for tests and generators; panics on non-finite input.
    pub fn from_parts(features: Vec<f64>, label: u32) -> Self {
        Observation {
            object: Object::new(features).expect("finite features"),
            label: Label(label),
        }
    }
}

/// Checks every observation has the same object dimension and returns it.
pub fn common_dim(stream: &[Observation]) -> Result<usize> {
    let first = stream.first().ok_or(Error::EmptyStream)?;
    let dim = first.object.dim();
    for obs in stream {
        if obs.object.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: obs.object.dim(),
            });
        }
    }
    Ok(dim)
}
