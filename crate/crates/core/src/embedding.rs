//! Embedding tensors and the vector geometry shared by every other module.
//!
//! All geometry treats an embedding as its flattened data, so a per-token
//! `[77, 768]` encoder output and a pooled `[768]` vector are handled the same
//! way (Frobenius norm over the flattened tensor). Values are held as `f64`
//! regardless of the on-disk precision.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("shape must be non-empty with positive dimensions, got {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} holds {expected} values but data has {actual}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("sub-prompt set is empty")]
    EmptySet,
    #[error("finest sub-prompt (index {0}) has zero norm")]
    ZeroNormFinest(usize),
}

/// A real-valued tensor: row-major data plus shape metadata and an optional
/// label (usually the sub-prompt text it was encoded from).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    shape: Vec<usize>,
    data: Vec<f64>,
    label: Option<String>,
}

impl Embedding {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, EmbeddingError> {
        let expected = element_count(&shape)?;
        if expected != data.len() {
            return Err(EmbeddingError::LengthMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        Ok(Self {
            shape,
            data,
            label: None,
        })
    }

    /// Rank-1 embedding over `data`.
    pub fn from_vec(data: Vec<f64>) -> Result<Self, EmbeddingError> {
        Self::new(vec![data.len()], data)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn set_label(&mut self, label: Option<String>) {
        self.label = label;
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Euclidean (Frobenius) norm of the flattened data.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Embedding) -> Result<f64, EmbeddingError> {
        self.check_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// The embedding scaled to unit norm. The label is kept.
    pub fn unit(&self) -> Result<Embedding, EmbeddingError> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroNorm);
        }
        Ok(Embedding {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v / norm).collect(),
            label: self.label.clone(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
            label: self.label.clone(),
        }
    }

    pub fn check_shape(&self, other: &Embedding) -> Result<(), EmbeddingError> {
        if self.shape != other.shape {
            return Err(EmbeddingError::ShapeMismatch(
                self.shape.clone(),
                other.shape.clone(),
            ));
        }
        Ok(())
    }
}

/// Number of elements described by `shape`, rejecting empty shapes, zero
/// dimensions and overflow.
pub fn element_count(shape: &[usize]) -> Result<usize, EmbeddingError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(EmbeddingError::InvalidShape(shape.to_vec()));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| EmbeddingError::InvalidShape(shape.to_vec()))
}

pub fn norm(e: &Embedding) -> f64 {
    e.norm()
}

pub fn distance(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    a.distance(b)
}

pub fn unit(e: &Embedding) -> Result<Embedding, EmbeddingError> {
    e.unit()
}

/// Ordered sub-prompt embeddings p₁…pₙ, coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SubPromptSet {
    items: Vec<Embedding>,
}

impl SubPromptSet {
    pub fn new(items: Vec<Embedding>) -> Result<Self, EmbeddingError> {
        let first = items.first().ok_or(EmbeddingError::EmptySet)?;
        for item in &items[1..] {
            first.check_shape(item)?;
        }
        let last = items.len() - 1;
        if items[last].norm() == 0.0 {
            return Err(EmbeddingError::ZeroNormFinest(last));
        }
        Ok(Self { items })
    }

    /// Convenience constructor for rank-1 sub-prompts.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self, EmbeddingError> {
        let items = vectors
            .into_iter()
            .map(Embedding::from_vec)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Always false; a set holds at least one sub-prompt.
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Embedding] {
        &self.items
    }

    pub fn get(&self, index: usize) -> Option<&Embedding> {
        self.items.get(index)
    }

    pub fn finest(&self) -> &Embedding {
        &self.items[self.items.len() - 1]
    }

    pub fn shape(&self) -> &[usize] {
        self.items[0].shape()
    }

    pub fn labels(&self) -> Vec<Option<String>> {
        self.items.iter().map(|e| e.label.clone()).collect()
    }

    /// Distances between consecutive sub-prompts, d₂…dₙ.
    pub fn consecutive_distances(&self) -> Vec<f64> {
        self.items
            .windows(2)
            .map(|w| w[1].distance(&w[0]).expect("set shares one shape"))
            .collect()
    }

    pub fn into_items(self) -> Vec<Embedding> {
        self.items
    }
}
