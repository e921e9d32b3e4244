//! Weight vectors and the cosine similarity metric everything else is keyed on.
//!
//! Value functions, SOM node weights and environment feature vectors all share
//! one representation so they can be compared directly.

use std::ops::Deref;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Norm below which a vector is treated as directionless.
pub const DEFAULT_NORM_FLOOR: f64 = 1e-12;

/// A non-empty vector of finite f64 weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates that `values` is non-empty and all entries are finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidVector("empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidVector("non-finite entry"));
        }
        Ok(WeightVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "weight vector length must be positive");
        WeightVector(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Mutable access for in-place updates. Callers keep entries finite.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        WeightVector::new(values).map_err(D::Error::custom)
    }
}

/// Cosine similarity together with a degeneracy marker.
///
/// `degenerate` is set when either operand's norm fell below the floor; the
/// value is then 0 by convention rather than undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    pub degenerate: bool,
}

/// Cosine similarity with the default norm floor.
pub fn cosine_similarity(a: &WeightVector, b: &WeightVector) -> Result<Similarity> {
    cosine_similarity_with_floor(a, b, DEFAULT_NORM_FLOOR)
}

/// Cosine similarity with an explicit norm floor.
pub fn cosine_similarity_with_floor(
    a: &WeightVector,
    b: &WeightVector,
    floor: f64,
) -> Result<Similarity> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (value, degenerate) = cosine_raw(a, b, floor);
    Ok(Similarity { value, degenerate })
}

/// Core computation on raw slices; lengths must already match.
pub(crate) fn cosine_raw(a: &[f64], b: &[f64], floor: f64) -> (f64, bool) {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let na = na.sqrt();
    let nb = nb.sqrt();
    if na < floor || nb < floor {
        return (0.0, true);
    }
    // Rounding can push the quotient a hair outside [-1, 1]; keep it inside so
    // error increments 1 - c stay non-negative.
    ((dot / (na * nb)).clamp(-1.0, 1.0), false)
}

/// Index of the candidate most similar to `query`; ties take the lowest index.
pub fn argmax_similarity(query: &WeightVector, candidates: &[WeightVector]) -> Result<usize> {
    argmax_similarity_with_floor(query, candidates, DEFAULT_NORM_FLOOR)
}

pub fn argmax_similarity_with_floor(
    query: &WeightVector,
    candidates: &[WeightVector],
    floor: f64,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates("no vectors to compare against"));
    }
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, cand) in candidates.iter().enumerate() {
        if cand.len() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: query.len(),
                found: cand.len(),
            });
        }
        let (value, _) = cosine_raw(query, cand, floor);
        if value > best_value {
            best_value = value;
            best = i;
        }
    }
    Ok(best)
}
