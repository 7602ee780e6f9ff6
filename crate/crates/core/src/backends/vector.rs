use serde::{Deserialize, Serialize};

use super::BackendError;

/// Dense embedding. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, BackendError> {
        if values.is_empty() {
            return Err(BackendError::InvalidVector("zero-length vector".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(BackendError::InvalidVector(format!("non-finite entry at {pos}")));
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Scales to unit Euclidean norm; the zero vector is rejected.
    pub fn normalize(&self) -> Result<Self, BackendError> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(BackendError::InvalidVector("cannot normalize a zero vector".into()));
        }
        Ok(Self {
            values: self.values.iter().map(|&v| (f64::from(v) / norm) as f32).collect(),
        })
    }

    pub fn is_unit(&self, tolerance: f64) -> bool {
        (self.norm() - 1.0).abs() <= tolerance
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = BackendError;

    fn try_from(values: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_finite_and_zero() {
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![1.0, f32::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).unwrap().normalize().is_err());
    }

    proptest! {
        #[test]
        fn normalize_gives_unit_norm(values in prop::collection::vec(-1e3f32..1e3, 1..64)) {
            let v = EmbeddingVector::new(values).unwrap();
            prop_assume!(v.norm() > 1e-3);
            prop_assert!(v.normalize().unwrap().is_unit(1e-6));
        }
    }
}
