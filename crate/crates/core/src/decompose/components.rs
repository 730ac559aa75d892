use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recovered (or ground-truth) unit vectors in `R^d`.
///
/// Components are only identifiable up to sign, so every comparison here
/// uses squared correlation `⟨u, v⟩²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
    /// `⟨v^{⊗4}, T⟩` against whichever tensor accepted the vector; NaN when
    /// no tensor has scored it.
    scores: Vec<f64>,
}

// scores compare bitwise so that unscored (NaN) sets equal their clones
impl PartialEq for ComponentSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.vectors == other.vectors
            && self.scores.len() == other.scores.len()
            && self
                .scores
                .iter()
                .zip(&other.scores)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ComponentSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
            scores: Vec::new(),
        }
    }

    /// Builds a set from vectors, normalizing each to unit length.
    pub fn from_vectors(dim: usize, vectors: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut set = Self::new(dim);
        for v in vectors {
            set.push(v, f64::NAN)?;
        }
        Ok(set)
    }

    /// Columns of `m` as components.
    pub fn from_columns(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_vectors(
            m.nrows(),
            m.column_iter().map(|c| c.iter().copied().collect()),
        )
    }

    pub fn push(&mut self, v: Vec<f64>, score: f64) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: v.len(),
            });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain("component must be a finite non-zero vector".into()));
        }
        self.vectors.push(v.into_iter().map(|x| x / norm).collect());
        self.scores.push(score);
        Ok(())
    }

    pub fn extend(&mut self, other: ComponentSet) {
        assert_eq!(self.dim, other.dim);
        self.vectors.extend(other.vectors);
        self.scores.extend(other.scores);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn set_scores(&mut self, scores: Vec<f64>) {
        assert_eq!(scores.len(), self.vectors.len());
        self.scores = scores;
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.iter().map(Vec::as_slice)
    }

    /// The `d × k` matrix with the components as columns.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.len(), |r, c| self.vectors[c][r])
    }

    /// Sign-flipped copy; handy for checking sign invariance.
    pub fn negated(&self) -> Self {
        Self {
            dim: self.dim,
            vectors: self
                .vectors
                .iter()
                .map(|v| v.iter().map(|x| -x).collect())
                .collect(),
            scores: self.scores.clone(),
        }
    }

    /// Largest `⟨v, k⟩²` over members `k`, or 0 for an empty set.
    pub fn max_corr2(&self, v: &[f64]) -> f64 {
        self.vectors
            .iter()
            .map(|k| corr2(k, v))
            .fold(0.0, f64::max)
    }

    /// Largest `|⟨v_i, v_j⟩|` over distinct pairs.
    pub fn max_overlap(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                worst = worst.max(dot(&self.vectors[i], &self.vectors[j]).abs());
            }
        }
        worst
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        self.max_overlap() <= tol
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared correlation of two vectors, normalized by their lengths.
pub fn corr2(a: &[f64], b: &[f64]) -> f64 {
    let ab = dot(a, b);
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab * ab / (aa * bb)).min(1.0)
}
