use crate::error::{Error, Result};
use crate::types::ModelResponse;

/// Mean Shannon entropy (nats) of the per-token candidate distributions.
///
/// Each token's candidates are renormalized to sum to one before the
/// entropy is taken. With top-k truncated candidates this underestimates
/// the entropy of the full vocabulary distribution.
pub fn mean_token_entropy(response: &ModelResponse) -> Result<f64> {
    let tokens = response.token_logprobs.as_ref().ok_or_else(|| {
        Error::Capability(
            "response carries no token log-probabilities; use no-entropy mode".into(),
        )
    })?;
    if tokens.is_empty() {
        return Err(Error::Data("response has no tokens".into()));
    }
    let mut total = 0.0;
    for (i, cands) in tokens.iter().enumerate() {
        if cands.is_empty() {
            return Err(Error::Data(format!("token {i} has an empty candidate list")));
        }
        let max = cands.iter().map(|c| c.logprob).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Data(format!("token {i} has no finite log-probability")));
        }
        let z: f64 = cands.iter().map(|c| (c.logprob - max).exp()).sum();
        let log_z = max + z.ln();
        let h: f64 = cands
            .iter()
            .map(|c| {
                let lp = c.logprob - log_z;
                if lp == f64::NEG_INFINITY {
                    0.0
                } else {
                    -lp.exp() * lp
                }
            })
            .sum();
        total += h.max(0.0);
    }
    Ok(total / tokens.len() as f64)
}

/// `Output: {text} <SEP> Mean Entropy: {entropy}.` with the entropy in
/// fixed-point, four decimals, ties to even; or `Output: {text}` without
/// entropy.
pub fn render_trajectory(response: &ModelResponse, include_entropy: bool) -> Result<String> {
    if include_entropy {
        let entropy = mean_token_entropy(response)?;
        Ok(format_trajectory(&response.text, Some(entropy)))
    } else {
        Ok(format_trajectory(&response.text, None))
    }
}

pub fn format_trajectory(text: &str, entropy: Option<f64>) -> String {
    match entropy {
        // `{:.4}` rounds the exact binary value, so decimal ties go to even.
        Some(h) => format!("Output: {text} <SEP> Mean Entropy: {h:.4}."),
        None => format!("Output: {text}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TokenCandidate;

    fn response(tokens: Vec<Vec<f64>>) -> ModelResponse {
        ModelResponse {
            text: "x".into(),
            token_logprobs: Some(
                tokens
                    .into_iter()
                    .map(|lps| {
                        lps.into_iter()
                            .enumerate()
                            .map(|(i, logprob)| TokenCandidate {
                                token: format!("t{i}"),
                                logprob,
                            })
                            .collect()
                    })
                    .collect(),
            ),
            truncated: false,
            warnings: vec![],
        }
    }

    #[test]
    fn uniform_four() {
        let h = mean_token_entropy(&response(vec![vec![0.25f64.ln(); 4]])).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-12);
        assert!((h - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn one_hot_is_zero() {
        let h = mean_token_entropy(&response(vec![vec![0.0], vec![0.0]])).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn mean_over_tokens() {
        let h = mean_token_entropy(&response(vec![vec![0.0], vec![0.5f64.ln(); 2]])).unwrap();
        assert!((h - 2f64.ln() / 2.0).abs() < 1e-12);
        assert!((h - 0.346574).abs() < 1e-6);
    }

    #[test]
    fn renormalizes_truncated_candidates() {
        // two candidates with equal but small mass renormalize to a fair coin
        let h = mean_token_entropy(&response(vec![vec![-3.0, -3.0]])).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn missing_logprobs_is_capability_error() {
        let r = ModelResponse::text_only("Paris.");
        assert!(matches!(mean_token_entropy(&r), Err(Error::Capability(_))));
        assert!(matches!(render_trajectory(&r, true), Err(Error::Capability(_))));
    }

    #[test]
    fn empty_candidate_list_is_data_error() {
        assert!(matches!(
            mean_token_entropy(&response(vec![vec![]])),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            mean_token_entropy(&response(vec![])),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn golden_templates() {
        assert_eq!(
            format_trajectory("Paris.", Some(0.1234)),
            "Output: Paris. <SEP> Mean Entropy: 0.1234."
        );
        assert_eq!(
            render_trajectory(&ModelResponse::text_only("Paris."), false).unwrap(),
            "Output: Paris."
        );
        assert_eq!(
            format_trajectory("a", Some(1.3862944)),
            "Output: a <SEP> Mean Entropy: 1.3863."
        );
    }

    #[test]
    fn ties_round_to_even() {
        // 0.03125 and 0.09375 are exact binary fractions, so these are true ties
        assert_eq!(format_trajectory("", Some(0.03125)), "Output:  <SEP> Mean Entropy: 0.0312.");
        assert_eq!(format_trajectory("", Some(0.09375)), "Output:  <SEP> Mean Entropy: 0.0938.");
    }
}
