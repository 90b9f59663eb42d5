use proptest::collection::vec;
use proptest::prelude::*;

use duffin_core::codec;
use duffin_core::knowledge::{answer_prompt, edit_distance, hamming_distance, jaccard_similarity, parse_choice, split_answer_prompt};
use duffin_core::trigger::{featurize_sparse, format_trajectory, EmbedderParams, FeaturizerConfig};
use duffin_core::verify::{merged_distance, rank, roc_auc, ScoreSet};
use duffin_core::{Answer, Choice, KnowledgeFingerprint, KnowledgeQuestion, TriggerFingerprint};

fn answer() -> impl Strategy<Value = Answer> {
    (0..5usize).prop_map(|i| Answer::ALPHABET[i])
}

fn fingerprint(len: usize) -> impl Strategy<Value = KnowledgeFingerprint> {
    vec(answer(), len).prop_map(move |answers| KnowledgeFingerprint {
        model_id: "m".into(),
        key_version: "k".into(),
        domains: vec!["d".into()],
        questions_per_domain: len,
        answers,
    })
}

fn triple() -> impl Strategy<Value = (KnowledgeFingerprint, KnowledgeFingerprint, KnowledgeFingerprint)> {
    (1..40usize).prop_flat_map(|n| (fingerprint(n), fingerprint(n), fingerprint(n)))
}

fn unit_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..6usize, 1..8usize).prop_flat_map(|(rows, dim)| {
        vec(vec(-1e3f64..1e3, dim), rows).prop_map(|rows| {
            rows.into_iter()
                .map(|mut r| {
                    r[0] += 1.0;
                    let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                    r.iter().map(|v| v / n).collect()
                })
                .collect()
        })
    })
}

fn question() -> impl Strategy<Value = KnowledgeQuestion> {
    ("[A-Za-z0-9 ,?]{1,60}", vec("[a-z0-9 ]{1,20}", 4), 0..4usize).prop_map(|(stem, texts, truth)| {
        KnowledgeQuestion {
            id: "q".into(),
            domain: "d".into(),
            stem: stem.trim().to_string() + "?",
            choices: Choice::ALL.into_iter().zip(texts.into_iter().map(|t| format!("x{t}"))).collect(),
            ground_truth: Choice::ALL[truth],
        }
    })
}

proptest! {
    #[test]
    fn hamming_is_a_metric((a, b, c) in triple()) {
        let d = |x: &KnowledgeFingerprint, y: &KnowledgeFingerprint| hamming_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &b) <= d(&a, &c) + d(&c, &b));
        prop_assert!(d(&a, &b) <= a.answers.len());
        prop_assert_eq!(d(&a, &b) == 0, a.answers == b.answers);
    }

    #[test]
    fn edit_bounded_by_hamming((a, b, _) in triple()) {
        prop_assert!(edit_distance(&a, &b).unwrap() <= hamming_distance(&a, &b).unwrap());
    }

    #[test]
    fn jaccard_in_unit_interval((a, b, _) in triple()) {
        let j = jaccard_similarity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(jaccard_similarity(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn auc_bounds_and_complement(
        pos in vec(-5i32..5, 1..30),
        neg in vec(-5i32..5, 1..30),
    ) {
        let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
        let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
        let auc = roc_auc(&ScoreSet::new(pos.clone(), neg.clone())).unwrap();
        let swapped = roc_auc(&ScoreSet::new(neg, pos)).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        prop_assert!((auc + swapped - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_maps(
        pos in vec(-1.0f64..1.0, 1..20),
        neg in vec(-1.0f64..1.0, 1..20),
    ) {
        let a = roc_auc(&ScoreSet::new(pos.clone(), neg.clone())).unwrap();
        let f = |v: &Vec<f64>| v.iter().map(|x| 3.0 * x + 7.0).collect::<Vec<_>>();
        prop_assert_eq!(a, roc_auc(&ScoreSet::new(f(&pos), f(&neg))).unwrap());
    }

    #[test]
    fn rank_bounds(score in -1.0f64..1.0, others in vec(-1.0f64..1.0, 0..30)) {
        let r = rank(score, &others);
        prop_assert!(r >= 1 && r <= others.len() + 1);
        let top = others.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(r == 1, others.is_empty() || score > top);
    }

    #[test]
    fn merged_distance_is_weighted_sum(
        dt in -1.0f64..=1.0, dk in 0.0f64..=1.0, alpha in 0.0f64..4.0, beta in 0.01f64..4.0,
    ) {
        let m = merged_distance(dt, dk, alpha, beta).unwrap();
        prop_assert!((m - (alpha * dt + beta * dk)).abs() < 1e-12);
    }

    #[test]
    fn knowledge_fingerprint_round_trip(fp in (1..50usize).prop_flat_map(fingerprint)) {
        let bytes = codec::serialize(&fp).unwrap();
        prop_assert_eq!(codec::deserialize::<KnowledgeFingerprint>(&bytes).unwrap(), fp);
    }

    #[test]
    fn trigger_fingerprint_round_trip(vectors in unit_rows(), entropy in any::<bool>()) {
        let fp = TriggerFingerprint {
            model_id: "m".into(),
            key_version: "k".into(),
            embedder_id: "e".into(),
            include_entropy: entropy,
            vectors,
        };
        let bytes = codec::serialize(&fp).unwrap();
        prop_assert_eq!(codec::deserialize::<TriggerFingerprint>(&bytes).unwrap(), fp);
    }

    #[test]
    fn embedder_round_trip_keeps_id(seed in any::<u64>(), dim in 1..6usize) {
        let params = EmbedderParams::random_init(
            FeaturizerConfig { hash_dim: 16, ..FeaturizerConfig::default() }, dim, 0.1, seed,
        ).unwrap();
        let json = serde_json::to_string(&params).unwrap();
        let back: EmbedderParams = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back.embedder_id(), params.embedder_id());
    }

    #[test]
    fn features_are_unit_or_empty(text in "\\PC{0,80}") {
        let f = featurize_sparse(&text, &FeaturizerConfig::default());
        let norm: f64 = f.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        prop_assert!(f.is_empty() || (norm - 1.0).abs() < 1e-12);
        prop_assert!(f.entries.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn trajectory_has_four_decimals(text in "[a-z .]{0,30}", h in 0.0f64..10.0) {
        let s = format_trajectory(&text, Some(h));
        let tail = s.rsplit("Mean Entropy: ").next().unwrap();
        let digits = tail.trim_end_matches('.').split('.').nth(1).unwrap();
        prop_assert_eq!(digits.len(), 4);
    }

    #[test]
    fn parse_choice_total(text in "\\PC{0,40}") {
        let _ = parse_choice(&text);
    }

    #[test]
    fn bare_letters_parse(i in 0..4usize, pad in "[ \\n]{0,3}") {
        let c = Choice::ALL[i];
        prop_assert_eq!(parse_choice(&format!("{pad}{c}{pad}")), Answer::Choice(c));
    }

    #[test]
    fn answer_prompt_splits_back(q in question()) {
        let prompt = answer_prompt(&q);
        let (stem, choices) = split_answer_prompt(&prompt).unwrap();
        prop_assert_eq!(stem, q.stem.as_str());
        let texts: Vec<&str> = choices.iter().map(|(_, t)| *t).collect();
        let expected: Vec<&str> = q.choices.values().map(String::as_str).collect();
        prop_assert_eq!(texts, expected);
    }
}
