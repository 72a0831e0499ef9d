//! Agreement between a policy and strong branching on sampled states.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One branchable state with SB scores and the evaluated policy's output,
/// all aligned with the candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSample {
    pub sb_scores: Vec<f64>,
    /// Position of SB's choice in the candidate list.
    pub sb_choice: usize,
    pub policy: Vec<f64>,
    pub policy_choice: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// `mean[-log p(a_SB)] / mean[log |mask|]`.
    pub cross_entropy: f64,
    /// `mean[score(a_policy) / score(a_SB)]`.
    pub score_ratio: f64,
    pub frequency: f64,
    pub samples: usize,
}

/// Probabilities below this are floored before the log.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn sb_alignment(samples: &[AlignmentSample]) -> Result<AlignmentReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let n = samples.len() as f64;
    let mut ce = 0.0;
    let mut uniform = 0.0;
    let mut ratio = 0.0;
    let mut freq = 0.0;
    for s in samples {
        ce += -s.policy[s.sb_choice].max(PROB_FLOOR).ln();
        uniform += (s.policy.len() as f64).ln();
        let best = s.sb_scores[s.sb_choice];
        // zero-gain states: every candidate is as good as SB's pick
        ratio += if best > 0.0 { s.sb_scores[s.policy_choice] / best } else { 1.0 };
        freq += f64::from(u8::from(s.policy_choice == s.sb_choice));
    }
    Ok(AlignmentReport {
        // single-candidate states contribute 0 to both sums
        cross_entropy: if uniform > 0.0 { ce / uniform } else { 0.0 },
        score_ratio: ratio / n,
        frequency: freq / n,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(policy: Vec<f64>, choice: usize) -> AlignmentSample {
        AlignmentSample {
            sb_scores: vec![2.0, 3.0, 1.0, 0.5],
            sb_choice: 1,
            policy,
            policy_choice: choice,
        }
    }

    #[test]
    fn sb_against_itself() {
        let r = sb_alignment(&[sample(vec![0.0, 1.0, 0.0, 0.0], 1)]).unwrap();
        assert_eq!((r.cross_entropy, r.score_ratio, r.frequency), (0.0, 1.0, 1.0));
    }

    #[test]
    fn uniform_is_one() {
        let r = sb_alignment(&[sample(vec![0.25; 4], 0), sample(vec![0.25; 4], 3)]).unwrap();
        assert!((r.cross_entropy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_target_one_hot() {
        let r = sb_alignment(&[sample(vec![1.0, 0.0, 0.0, 0.0], 0)]).unwrap();
        assert!((r.score_ratio - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.frequency, 0.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(sb_alignment(&[]).is_err());
    }
}
