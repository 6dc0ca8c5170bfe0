//! Discrete reward levels for open-ended and closed-form answers.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("ROUGE-L score {0} is outside [0, 1]")]
pub struct RougeOutOfRange(pub f64);

/// ROUGE-L to a level in `1..=5`. The point 0.4 belongs to level 4.
pub fn rouge_to_reward(rouge_l: f64) -> Result<u8, RougeOutOfRange> {
    if !(0.0..=1.0).contains(&rouge_l) {
        return Err(RougeOutOfRange(rouge_l));
    }
    Ok(match rouge_l {
        0.0 => 1,
        r if r < 0.15 => 2,
        r if r < 0.3 => 3,
        r if r <= 0.4 => 4,
        _ => 5,
    })
}

pub fn exact_match_reward(correct: bool) -> u8 {
    if correct {
        5
    } else {
        1
    }
}
