use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Similarity scores (higher = more similar) of positive and negative
/// suspects.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoreSet {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Self {
        ScoreSet {
            positives,
            negatives,
        }
    }

    fn check(&self) -> Result<()> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(Error::Input(format!(
                "ROC needs both classes ({} positives, {} negatives)",
                self.positives.len(),
                self.negatives.len()
            )));
        }
        if self
            .positives
            .iter()
            .chain(&self.negatives)
            .any(|s| s.is_nan())
        {
            return Err(Error::Input("scores contain NaN".into()));
        }
        Ok(())
    }
}

/// Area under the ROC curve via the Mann-Whitney U statistic. Ties between
/// a positive and a negative count one half.
pub fn roc_auc(scores: &ScoreSet) -> Result<f64> {
    scores.check()?;
    let mut all: Vec<(f64, bool)> = scores
        .positives
        .iter()
        .map(|&s| (s, true))
        .chain(scores.negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // twice the rank sum of the positives, using mid-ranks for ties
    let mut doubled_rank_sum: u64 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the mid-rank (i + j + 2) / 2
        let doubled_mid = (i + j + 2) as u64;
        let pos_in_group = all[i..=j].iter().filter(|(_, p)| *p).count() as u64;
        doubled_rank_sum += doubled_mid * pos_in_group;
        i = j + 1;
    }
    let n_pos = scores.positives.len() as u64;
    let n_neg = scores.negatives.len() as u64;
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// `(false positive rate, true positive rate)` points from the strictest
/// threshold down to the loosest, starting at `(0, 0)`.
pub fn roc_curve(scores: &ScoreSet) -> Result<Vec<[f64; 2]>> {
    scores.check()?;
    let mut all: Vec<(f64, bool)> = scores
        .positives
        .iter()
        .map(|&s| (s, true))
        .chain(scores.negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (n_pos, n_neg) = (scores.positives.len() as f64, scores.negatives.len() as f64);
    let mut points = vec![[0.0, 0.0]];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push([fp as f64 / n_neg, tp as f64 / n_pos]);
        i = j;
    }
    Ok(points)
}

/// `1 + |{s in others : s >= score}|`; ties count against the suspect.
pub fn rank(score: f64, others: &[f64]) -> usize {
    1 + others.iter().filter(|&&s| s >= score).count()
}
