//! Fuzzy reordering score.
//!
//! `C` is the number of maximal chunks of the predicted order whose words are
//! contiguous and in order in the reference; the score is
//! `1 - (C - 1) / (n - 1)` (1 for single-word sentences).

use crate::error::{Error, Result};
use crate::transition::preorder::validate_permutation;

/// Number of maximal reference-contiguous chunks in `predicted`.
pub fn chunk_count(predicted: &[usize], reference: &[usize]) -> Result<usize> {
    if predicted.len() != reference.len() {
        return Err(Error::data(format!("permutation lengths differ: {} vs {}", predicted.len(), reference.len())));
    }
    validate_permutation(predicted)?;
    validate_permutation(reference)?;
    if predicted.is_empty() {
        return Ok(0);
    }
    let mut pos = vec![0usize; reference.len()];
    for (k, &w) in reference.iter().enumerate() {
        pos[w] = k;
    }
    let breaks = predicted.windows(2).filter(|w| pos[w[1]] != pos[w[0]] + 1).count();
    Ok(breaks + 1)
}

pub fn fuzzy_reordering_score(predicted: &[usize], reference: &[usize]) -> Result<f64> {
    let c = chunk_count(predicted, reference)?;
    let n = predicted.len();
    if n <= 1 {
        return Ok(1.0);
    }
    Ok(1.0 - (c - 1) as f64 / (n - 1) as f64)
}

/// Corpus-level score, micro-averaged with weight `n - 1` per sentence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CorpusFrs {
    chunk_breaks: usize,
    gaps: usize,
    sentences: usize,
}

impl CorpusFrs {
    pub fn add(&mut self, predicted: &[usize], reference: &[usize]) -> Result<f64> {
        let c = chunk_count(predicted, reference)?;
        self.chunk_breaks += c.saturating_sub(1);
        self.gaps += predicted.len().saturating_sub(1);
        self.sentences += 1;
        fuzzy_reordering_score(predicted, reference)
    }

    pub fn sentences(&self) -> usize {
        self.sentences
    }

    pub fn score(&self) -> f64 {
        if self.gaps == 0 {
            1.0
        } else {
            1.0 - self.chunk_breaks as f64 / self.gaps as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(fuzzy_reordering_score(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(fuzzy_reordering_score(&[3, 2, 1, 0], &[0, 1, 2, 3]).unwrap(), 0.0);
        let s = fuzzy_reordering_score(&[1, 0, 2, 3], &[0, 1, 2, 3]).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(fuzzy_reordering_score(&[0], &[0]).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(fuzzy_reordering_score(&[0, 1], &[0]), Err(Error::Data { .. })));
    }

    #[test]
    fn corpus_weighting() {
        let mut c = CorpusFrs::default();
        c.add(&[0], &[0]).unwrap();
        assert_eq!(c.score(), 1.0);
        c.add(&[1, 0], &[0, 1]).unwrap(); // 1 break over 1 gap
        c.add(&[0, 1, 2, 3], &[0, 1, 2, 3]).unwrap(); // 0 over 3
        assert!((c.score() - 0.75).abs() < 1e-12);
        assert_eq!(c.sentences(), 3);
    }
}
