use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScores {
    /// Nats.
    pub entropy: f64,
    pub variation_ratio: f64,
    /// Nats.
    pub bald: f64,
    pub mean_prob: f64,
}

/// Binary entropy in nats, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

/// Disagreement statistics of an ensemble's presence probabilities.
pub fn ensemble_uncertainty(probs: &[f64]) -> Result<UncertaintyScores> {
    if probs.len() < 2 {
        return Err(Error::invalid(format!(
            "ensemble needs at least 2 members, got {}",
            probs.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!(
            "member probability {p} not in [0, 1]"
        )));
    }
    let n = probs.len();
    let mean_prob = probs.iter().sum::<f64>() / n as f64;
    let entropy = binary_entropy(mean_prob);
    let bald = if probs.iter().all(|&p| p == probs[0]) {
        0.0
    } else {
        let mean_member = probs.iter().map(|&p| binary_entropy(p)).sum::<f64>() / n as f64;
        (entropy - mean_member).max(0.0)
    };
    let ones = probs.iter().filter(|&&p| p >= 0.5).count();
    let modal = ones.max(n - ones);
    Ok(UncertaintyScores {
        entropy,
        variation_ratio: (n - modal) as f64 / n as f64,
        bald,
        mean_prob,
    })
}
