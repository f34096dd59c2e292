//! Internal duplication and semantic similarity of a generated dataset.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiversityError {
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("at least two vectors are required, got {0}")]
    TooFewVectors(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

/// Lowercases (full Unicode mapping) and trims surrounding whitespace.
pub fn normalize_text(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    /// Items whose normalized form occurs at least twice, counting every member.
    pub duplicate_count: usize,
    pub duplicate_pct: f64,
    pub corpus_size: usize,
}

pub fn exact_match_stats<S: AsRef<str>>(items: &[S]) -> Result<MatchStats, DiversityError> {
    if items.is_empty() {
        return Err(DiversityError::EmptyCorpus);
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    for item in items {
        *freq.entry(normalize_text(item.as_ref())).or_default() += 1;
    }
    let duplicate_count: usize = freq.values().filter(|n| **n >= 2).sum();
    Ok(MatchStats {
        duplicate_count,
        duplicate_pct: 100.0 * duplicate_count as f64 / items.len() as f64,
        corpus_size: items.len(),
    })
}

/// A dense, finite, non-empty embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, DiversityError> {
        if values.is_empty() {
            return Err(DiversityError::DegenerateEmbedding("zero-dimensional vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DiversityError::DegenerateEmbedding("non-finite component".into()));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = DiversityError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// `x·y / (‖x‖₂ ‖y‖₂)`.
pub fn cosine_similarity(x: &EmbeddingVector, y: &EmbeddingVector) -> Result<f64, DiversityError> {
    if x.dim() != y.dim() {
        return Err(DiversityError::DimensionMismatch(x.dim(), y.dim()));
    }
    let (nx, ny) = (x.norm(), y.norm());
    if nx == 0.0 || ny == 0.0 {
        return Err(DiversityError::DegenerateEmbedding("zero vector".into()));
    }
    let dot: f64 = x.0.iter().zip(&y.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub mean_max_sim: f64,
    /// Population standard deviation of the per-item maxima.
    pub std_max_sim: f64,
    pub count: usize,
}

/// Per-item maximum similarity to any other item.
pub fn max_similarities(vectors: &[EmbeddingVector]) -> Result<Vec<f64>, DiversityError> {
    if vectors.len() < 2 {
        return Err(DiversityError::TooFewVectors(vectors.len()));
    }
    let dim = vectors[0].dim();
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(DiversityError::DimensionMismatch(dim, v.dim()));
    }
    let mut maxima = vec![f64::NEG_INFINITY; vectors.len()];
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let s = cosine_similarity(&vectors[i], &vectors[j])?;
            maxima[i] = maxima[i].max(s);
            maxima[j] = maxima[j].max(s);
        }
    }
    Ok(maxima)
}

pub fn avg_max_similarity(vectors: &[EmbeddingVector]) -> Result<SimilaritySummary, DiversityError> {
    let maxima = max_similarities(vectors)?;
    let n = maxima.len() as f64;
    let mean = maxima.iter().sum::<f64>() / n;
    let var = maxima.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
    Ok(SimilaritySummary { mean_max_sim: mean, std_max_sim: var.sqrt(), count: maxima.len() })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded FNV-1a followed by a splitmix finalizer; stable across platforms and releases.
fn seeded_token_hash(token: &str, seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ splitmix64(seed);
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(h)
}

pub const MIN_FALLBACK_DIM: usize = 8;

/// Deterministic offline embedding: lowercase whitespace tokens hashed into
/// `dim` buckets, then L2-normalized.
pub fn fallback_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector, DiversityError> {
    if dim < MIN_FALLBACK_DIM {
        return Err(DiversityError::DegenerateEmbedding(format!("dimension {dim} is below {MIN_FALLBACK_DIM}")));
    }
    let lowered = text.to_lowercase();
    let mut buckets = vec![0.0f64; dim];
    let mut any = false;
    for token in lowered.split_whitespace() {
        buckets[(seeded_token_hash(token, seed) % dim as u64) as usize] += 1.0;
        any = true;
    }
    if !any {
        return Err(DiversityError::DegenerateEmbedding("text has no tokens".into()));
    }
    let norm = buckets.iter().map(|v| v * v).sum::<f64>().sqrt();
    buckets.iter_mut().for_each(|v| *v /= norm);
    EmbeddingVector::new(buckets)
}

/// Source of embeddings for a batch of texts.
pub trait Embedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, DiversityError>;
}

#[derive(Debug, Clone, Copy)]
pub struct FallbackEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for FallbackEmbedder {
    fn default() -> Self {
        FallbackEmbedder { dim: 256, seed: 0 }
    }
}

impl Embedder for FallbackEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, DiversityError> {
        texts.iter().map(|t| fallback_embed(t, self.dim, self.seed)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("Show Tickets"), "show tickets");
        assert_eq!(normalize_text("  SELECT 1 "), "select 1");
        assert_eq!(normalize_text("ÉCART"), "écart");
        assert_eq!(normalize_text("A  B"), "a  b");
    }

    #[test]
    fn exact_matches() {
        let s = exact_match_stats(&["A", "a", "b"]).unwrap();
        assert_eq!(s.duplicate_count, 2);
        assert!((s.duplicate_pct - 66.666_666_666_666_67).abs() < 1e-9);
        assert_eq!(exact_match_stats(&["x", "y"]).unwrap().duplicate_count, 0);
        let same = exact_match_stats(&["q"; 5]).unwrap();
        assert_eq!((same.duplicate_count, same.duplicate_pct), (5, 100.0));
        let empty: [&str; 0] = [];
        assert_eq!(exact_match_stats(&empty), Err(DiversityError::EmptyCorpus));
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&v(&[0.3, -2.0]), &v(&[0.3, -2.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(DiversityError::DegenerateEmbedding(_))
        ));
        assert_eq!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])), Err(DiversityError::DimensionMismatch(1, 2)));
    }

    #[test]
    fn max_similarity_examples() {
        let s = avg_max_similarity(&[v(&[1.0, 2.0]), v(&[1.0, 2.0])]).unwrap();
        assert!((s.mean_max_sim - 1.0).abs() < 1e-12 && s.std_max_sim.abs() < 1e-12);
        let s = avg_max_similarity(&[v(&[1.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0])]).unwrap();
        assert_eq!((s.mean_max_sim, s.std_max_sim), (0.0, 0.0));
        let s = avg_max_similarity(&[v(&[1.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        assert!((s.mean_max_sim - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.std_max_sim - 2f64.sqrt() / 3.0).abs() < 1e-12);
        assert_eq!(avg_max_similarity(&[v(&[1.0])]), Err(DiversityError::TooFewVectors(1)));
    }

    #[test]
    fn fallback_embedding() {
        let a = fallback_embed("How many open tickets", 64, 7).unwrap();
        assert_eq!(a, fallback_embed("How many open tickets", 64, 7).unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(fallback_embed("a b", 32, 1).unwrap(), fallback_embed("B   a", 32, 1).unwrap());
        assert!(fallback_embed("   ", 32, 1).is_err());
        assert!(fallback_embed("x", 4, 1).is_err());
    }

    #[test]
    fn embedding_vector_rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
        assert!(serde_json::from_str::<EmbeddingVector>("[]").is_err());
    }
}
