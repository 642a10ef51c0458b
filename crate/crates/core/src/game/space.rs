use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{GameError, Result};

/// Sum tolerance for a probability vector to count as being on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// An ordered, non-empty set of distinct action labels.
///
/// The label order is canonical: every vector indexed by actions of this space
/// (distributions, payoff rows, tie-breaks) uses it.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ActionSpace {
    labels: Arc<[String]>,
}

impl ActionSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(GameError::invalid("action space must be non-empty"));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(GameError::invalid(format!("duplicate action label `{l}`")));
            }
        }
        Ok(Self {
            labels: labels.into(),
        })
    }

    /// Space with labels `a0, a1, ...`; handy for tests and synthetic games.
    pub fn indexed(prefix: &str, n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("{prefix}{i}")))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

impl fmt::Debug for ActionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.labels.iter()).finish()
    }
}

/// A point on the probability simplex over an [`ActionSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    space: ActionSpace,
    probs: Vec<f64>,
}

impl Distribution {
    /// Builds a distribution, renormalising sums within [`SIMPLEX_TOL`] of one.
    pub fn new(space: ActionSpace, probs: Vec<f64>) -> Result<Self> {
        Self::named("distribution", space, probs)
    }

    /// Like [`Distribution::new`] but simplex errors carry `field` as the name.
    pub fn named(field: &str, space: ActionSpace, mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(GameError::invalid(format!(
                "{field}: {} probabilities for {} actions",
                probs.len(),
                space.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(GameError::Simplex {
                field: field.to_string(),
                sum: probs.iter().sum(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(GameError::Simplex {
                field: field.to_string(),
                sum,
            });
        }
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { space, probs })
    }

    /// Normalises arbitrary non-negative weights with a positive total.
    pub fn from_weights(space: ActionSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(GameError::invalid("weight vector length mismatch"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(GameError::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(GameError::invalid("weights sum to zero"));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { space, probs })
    }

    pub fn uniform(space: ActionSpace) -> Self {
        let n = space.len();
        Self {
            probs: vec![1.0 / n as f64; n],
            space,
        }
    }

    pub fn point(space: ActionSpace, index: usize) -> Self {
        assert!(index < space.len(), "point mass index out of range");
        let mut probs = vec![0.0; space.len()];
        probs[index] = 1.0;
        Self { space, probs }
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn l1_distance(&self, other: &Distribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn sup_distance(&self, other: &Distribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Samples an index given a uniform draw `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }
}
