use std::collections::BTreeMap;

use async_trait::async_trait;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{check_text, BackendError, EmbeddingBackend, EmbeddingVector};

pub const DEFAULT_HASH_DIMENSION: usize = 256;

/// Signed slots written per token.
const SLOTS_PER_TOKEN: usize = 4;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "by", "for", "from", "has", "have", "in",
    "into", "is", "it", "its", "of", "on", "or", "such", "that", "the", "their", "this", "to",
    "was", "were", "which", "with",
];

/// Seeded feature-hashing embedding.
///
/// Text is lower-cased and split on non-alphanumerics; stopwords are dropped
/// unless nothing else remains. Every distinct token is hashed with a seeded
/// xxh3 and adds `±(1 + ln tf)` to four hash-selected coordinates. The result
/// is normalized to unit length, so the embedding is a pure function of
/// `(seed, dimension, text)`.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    dimension: usize,
    model_id: String,
}

impl HashEmbedder {
    pub fn new(seed: u64, dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            seed,
            dimension,
            model_id: format!("hash-embed/d{dimension}/s{seed}"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        check_text(text)?;
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokens(text) {
            *counts.entry(token).or_default() += 1;
        }
        if counts.is_empty() {
            counts.insert(text.trim().to_lowercase(), 1);
        }

        let mut values = vec![0f64; self.dimension];
        for (token, tf) in &counts {
            let weight = 1.0 + f64::from(*tf).ln();
            let mut state = xxh3_64_with_seed(token.as_bytes(), self.seed);
            for _ in 0..SLOTS_PER_TOKEN {
                let h = splitmix64(&mut state);
                let slot = (h % self.dimension as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                values[slot] += sign * weight;
            }
        }
        let v = EmbeddingVector::new(values.into_iter().map(|v| v as f32).collect())?;
        v.normalize()
    }
}

fn tokens(text: &str) -> Vec<String> {
    let all: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    let content: Vec<String> = all
        .iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .cloned()
        .collect();
    if content.is_empty() {
        all
    } else {
        content
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[async_trait]
impl EmbeddingBackend for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    async fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        self.embed(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed_and_text() {
        let e = HashEmbedder::new(7, 64);
        assert_eq!(e.embed("Human oversight").unwrap(), e.embed("Human oversight").unwrap());
        assert_ne!(
            HashEmbedder::new(1, 64).embed("x").unwrap(),
            HashEmbedder::new(2, 64).embed("x").unwrap()
        );
    }

    #[test]
    fn seed_seven_distinguishes_a_and_b() {
        let e = HashEmbedder::new(7, DEFAULT_HASH_DIMENSION);
        let a = e.embed("a").unwrap();
        let b = e.embed("b").unwrap();
        assert!(a.values().iter().zip(b.values()).any(|(x, y)| x != y));
    }

    #[test]
    fn unit_norm_and_dimension() {
        let e = HashEmbedder::new(0, 32);
        let v = e.embed("risk management system for high-risk AI").unwrap();
        assert_eq!(v.dimension(), 32);
        assert!(v.is_unit(1e-6));
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let e = HashEmbedder::new(3, 64);
        assert_eq!(e.embed("Human, Oversight!").unwrap(), e.embed("human oversight").unwrap());
    }

    #[test]
    fn punctuation_only_text_still_embeds() {
        assert!(HashEmbedder::new(0, 16).embed("...").unwrap().is_unit(1e-6));
        assert!(HashEmbedder::new(0, 16).embed("   ").is_err());
    }
}
