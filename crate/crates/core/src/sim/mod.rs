//! Deterministic simulated model families.
//!
//! A family is a base model plus perturbed variants. Variants share the
//! family's knowledge tendencies and response style; the perturbation level
//! `epsilon` controls how often a variant deviates. Every output is a pure
//! function of seeds and prompt text, so whole experiments replay
//! byte-for-byte.

mod experiment;
mod family;
mod paraphrase;
mod sample;
mod text;

pub use experiment::{
    build_trigger_corpus, run_separation_experiment, EpsilonRow, ExperimentReport,
    ExtractorSetup, LevelResult, SeparationExperimentConfig, TriggerCorpusConfig, VariantResult,
};
pub use family::{
    simulate_response, spawn_variant, FamilyWorld, KnowledgeTendency, ModelFamilyProfile,
    SimulatedModel, SimulatedModelSpec,
};
pub use paraphrase::{
    attack_prompt, paraphrase_key, ParaphraseOutcome, SimulatedRewriter, REWRITER_SYSTEM_PROMPT,
};
pub use sample::{sample_pool, sample_triggers};

use crate::trigger::splitmix64;

/// Stable 64-bit hash of a seed and a sequence of labelled parts.
#[derive(Clone, Copy)]
pub(crate) struct SeedHash(u64);

impl SeedHash {
    pub fn new(seed: u64) -> Self {
        SeedHash(splitmix64(seed ^ 0x0123_4567_89ab_cdef))
    }

    pub fn str(self, s: &str) -> Self {
        let mut h = self.0 ^ 0xcbf2_9ce4_8422_2325;
        for b in s.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // length terminator keeps ("ab", "c") and ("a", "bc") apart
        SeedHash(splitmix64(h ^ (s.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
    }

    pub fn num(self, n: u64) -> Self {
        SeedHash(splitmix64(self.0 ^ splitmix64(n.wrapping_add(0x51ed_2701))))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(self) -> f64 {
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(self, n: usize) -> usize {
        (self.0 % n as u64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_separating() {
        let a = SeedHash::new(1).str("ab").str("c").value();
        let b = SeedHash::new(1).str("a").str("bc").value();
        assert_ne!(a, b);
        assert_eq!(a, SeedHash::new(1).str("ab").str("c").value());
        let u = SeedHash::new(9).num(3).unit();
        assert!((0.0..1.0).contains(&u));
    }
}
