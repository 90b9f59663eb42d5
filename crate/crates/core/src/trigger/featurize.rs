//! Hashed character n-gram features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BOUNDARY_START: char = '\u{2}';
const BOUNDARY_END: char = '\u{3}';

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub ngram_sizes: Vec<usize>,
    /// Number of hash buckets; a power of two.
    pub hash_dim: usize,
    pub hash_seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            ngram_sizes: vec![3, 4, 5],
            hash_dim: 1 << 12,
            hash_seed: 0x6475_6666_696e_0001,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.hash_dim.is_power_of_two() {
            return Err(Error::validation(
                "featurizer.hash_dim",
                format!("{} is not a power of two", self.hash_dim),
            ));
        }
        if self.ngram_sizes.is_empty() || self.ngram_sizes.contains(&0) {
            return Err(Error::validation(
                "featurizer.ngram_sizes",
                "need at least one positive n-gram size",
            ));
        }
        Ok(())
    }
}

/// Sparse L2-normalized feature vector: `(bucket, weight)` pairs sorted by
/// bucket with no duplicates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseFeatures {
    pub entries: Vec<(u32, f64)>,
}

impl SparseFeatures {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }
}

/// Seeded FNV-1a over the UTF-8 bytes, finished with a splitmix64 mix so
/// that the low bits used for bucketing are well distributed.
fn hash_ngram(seed: u64, chars: &[char]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut buf = [0u8; 4];
    for c in chars {
        for b in c.encode_utf8(&mut buf).bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    splitmix64(h)
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counts of hashed character n-grams over the text framed by boundary
/// markers, L2-normalized. Empty text yields an empty vector.
pub fn featurize_sparse(text: &str, config: &FeaturizerConfig) -> SparseFeatures {
    if text.is_empty() {
        return SparseFeatures::default();
    }
    let mut chars = Vec::with_capacity(text.len() + 2);
    chars.push(BOUNDARY_START);
    chars.extend(text.chars());
    chars.push(BOUNDARY_END);

    let mask = (config.hash_dim - 1) as u64;
    let mut buckets: Vec<u32> = Vec::new();
    for &n in &config.ngram_sizes {
        if n == 0 || chars.len() < n {
            continue;
        }
        buckets.extend(
            chars
                .windows(n)
                .map(|w| (hash_ngram(config.hash_seed, w) & mask) as u32),
        );
    }
    buckets.sort_unstable();

    let mut entries: Vec<(u32, f64)> = Vec::new();
    for b in buckets {
        match entries.last_mut() {
            Some((last, count)) if *last == b => *count += 1.0,
            _ => entries.push((b, 1.0)),
        }
    }
    let norm = entries.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, c) in &mut entries {
            *c /= norm;
        }
    }
    SparseFeatures { entries }
}

/// Dense form of [`featurize_sparse`], of length `hash_dim`.
pub fn featurize(text: &str, config: &FeaturizerConfig) -> Vec<f64> {
    featurize_sparse(text, config).to_dense(config.hash_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FeaturizerConfig {
        FeaturizerConfig {
            hash_dim: 256,
            ..FeaturizerConfig::default()
        }
    }

    #[test]
    fn empty_text_is_zero() {
        let v = featurize("", &small());
        assert_eq!(v.len(), 256);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_and_normalized() {
        let cfg = small();
        let a = featurize("Output: Paris. <SEP> Mean Entropy: 0.1234.", &cfg);
        let b = featurize("Output: Paris. <SEP> Mean Entropy: 0.1234.", &cfg);
        assert_eq!(a, b);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_character_still_has_features() {
        assert!(!featurize_sparse("x", &small()).is_empty());
    }

    #[test]
    fn seed_changes_buckets() {
        let a = featurize_sparse("hello world", &small());
        let b = featurize_sparse(
            "hello world",
            &FeaturizerConfig {
                hash_seed: 99,
                ..small()
            },
        );
        assert_ne!(a, b);
    }

    #[test]
    fn sparse_entries_sorted_unique() {
        let f = featurize_sparse("abababababab", &small());
        assert!(f.entries.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn rejects_bad_config() {
        let bad = FeaturizerConfig {
            hash_dim: 100,
            ..FeaturizerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
