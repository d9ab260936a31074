use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

pub const DEFAULT_EMBEDDING_DIM: usize = 512;

/// Text-to-vector provider; implementations return unit-norm vectors.
pub trait EmbeddingProvider<T: Real> {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<T>>;
}

/// FNV-1a; stable across platforms and toolchains.
fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic pseudo-embedding: a normalized Gaussian vector seeded by a
/// hash of the text.
pub fn mock_embed<T: Real>(text: &str, dim: usize) -> Result<Vec<T>> {
    if text.is_empty() {
        return Err(Error::invalid("cannot embed empty text"));
    }
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(text));
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(v.into_iter().map(|x| T::lit(x / n)).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dim: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBEDDING_DIM }
    }
}

impl<T: Real> EmbeddingProvider<T> for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<T>> {
        mock_embed(text, self.dim)
    }
}

pub fn cosine<T: Real>(a: &[T], b: &[T]) -> T {
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Label-to-vector table, typically produced by an external text encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVocabulary<T: Real> {
    pub dim: usize,
    pub entries: BTreeMap<String, Vec<T>>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl<T: Real> EmbeddingVocabulary<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: BTreeMap::new() }
    }

    /// Vocabulary of mock embeddings for the given labels.
    pub fn mock<'a>(labels: impl IntoIterator<Item = &'a str>, dim: usize) -> Result<Self> {
        let mut v = Self::new(dim);
        for l in labels {
            v.insert(l, mock_embed(l, dim)?)?;
        }
        Ok(v)
    }

    /// Inserts a vector after normalizing it.
    pub fn insert(&mut self, label: &str, vector: Vec<T>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "entry `{label}` has {} components, vocabulary dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("entry `{label}` has non-finite values")));
        }
        let n = norm(&vector);
        if n == T::zero() {
            return Err(Error::invalid(format!("entry `{label}` is the zero vector")));
        }
        self.entries.insert(label.to_string(), vector.into_iter().map(|x| x / n).collect());
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<&[T]> {
        self.entries.get(label).map(Vec::as_slice)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = VocabularyFile {
            dim: self.dim,
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v.iter().map(|x| x.as_f64()).collect())).collect(),
        };
        std::fs::write(path, serde_json::to_string(&file)?).map_err(|e| Error::io(path, e))
    }
}

impl<T: Real> EmbeddingProvider<T> for EmbeddingVocabulary<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<T>> {
        self.get(text)
            .map(<[T]>::to_vec)
            .ok_or_else(|| Error::invalid(format!("label `{text}` not in vocabulary")))
    }
}

/// Reads `{ "dim": D, "entries": { label: [f0, ...] } }` and re-normalizes
/// every vector.
pub fn load_vocabulary<T: Real>(path: &Path) -> Result<EmbeddingVocabulary<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vocabulary(&text)
}

pub fn parse_vocabulary<T: Real>(text: &str) -> Result<EmbeddingVocabulary<T>> {
    // serde_json rejects NaN/Infinity literals, so non-finite input fails here
    let file: VocabularyFile = serde_json::from_str(text)?;
    if file.dim == 0 {
        return Err(Error::invalid("vocabulary dim must be positive"));
    }
    let mut vocab = EmbeddingVocabulary::new(file.dim);
    for (label, v) in file.entries {
        vocab.insert(&label, v.into_iter().map(T::lit).collect())?;
    }
    Ok(vocab)
}

/// Falls back to mock embeddings for labels missing from an optional vocabulary.
pub struct LayeredProvider<'a, T: Real> {
    pub vocabulary: Option<&'a EmbeddingVocabulary<T>>,
    pub fallback: Option<MockEmbedder>,
}

impl<T: Real> EmbeddingProvider<T> for LayeredProvider<'_, T> {
    fn dim(&self) -> usize {
        self.vocabulary.map(|v| v.dim).or(self.fallback.map(|f| f.dim)).unwrap_or(DEFAULT_EMBEDDING_DIM)
    }

    fn embed(&self, text: &str) -> Result<Vec<T>> {
        if let Some(v) = self.vocabulary.and_then(|v| v.get(text)) {
            return Ok(v.to_vec());
        }
        match self.fallback {
            Some(m) => m.embed(text),
            None => Err(Error::invalid(format!("label `{text}` not in vocabulary"))),
        }
    }
}
