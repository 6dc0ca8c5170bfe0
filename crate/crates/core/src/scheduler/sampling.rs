use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Sampling distribution over actions with its greedy arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub probabilities: Vec<f64>,
    pub argmax_action: usize,
}

impl ActionDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let dist = WeightedIndex::new(&self.probabilities)
            .expect("action distribution has positive total mass");
        dist.sample(rng)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.probabilities
            .iter()
            .all(|p| (0.0..=1.0 + tol).contains(p))
            && (self.probabilities.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Inverse-gap weighting: every non-greedy arm gets
/// `1 / (A + ρ·(S_max − S_a))` and the greedy arm takes the rest.
pub fn sampling_distribution(scores: &[f64], rho: f64) -> ActionDistribution {
    let a = scores.len();
    assert!(a >= 2, "inverse-gap weighting needs at least two actions");
    assert!(
        scores.iter().all(|s| s.is_finite()),
        "scores must be finite"
    );
    let best = argmax(scores);
    let s_max = scores[best];
    let mut probabilities: Vec<f64> = scores
        .iter()
        .map(|s| 1.0 / (a as f64 + rho * (s_max - s)))
        .collect();
    let others: f64 = probabilities
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, p)| p)
        .sum();
    assert!(others <= 1.0, "non-greedy mass {others} exceeds one");
    probabilities[best] = 1.0 - others;
    ActionDistribution {
        probabilities,
        argmax_action: best,
    }
}
