//! Task metrics.

use crate::error::{Error, Result};
use crate::transition::CorpusFrs;

fn aligned<T>(gold: &[T], pred: &[T], what: &str) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::data(format!("{what}: {} gold items but {} predictions", gold.len(), pred.len())));
    }
    Ok(())
}

/// Fraction of positions where `pred` equals `gold`.
pub fn accuracy<T: PartialEq>(gold: &[T], pred: &[T]) -> Result<f64> {
    aligned(gold, pred, "accuracy")?;
    if gold.is_empty() {
        return Ok(1.0);
    }
    Ok(gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64 / gold.len() as f64)
}

/// Micro-averaged F1 over single-label documents. Every document yields one
/// prediction, so micro precision, recall and F1 all equal accuracy.
pub fn micro_f1(gold: &[String], pred: &[String]) -> Result<f64> {
    accuracy(gold, pred)
}

/// Token accuracy over tagged sentences.
pub fn pos_accuracy(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<f64> {
    aligned(gold, pred, "tagging")?;
    let (mut ok, mut total) = (0usize, 0usize);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::data(format!("sentence {}: {} gold tags but {} predicted", i + 1, g.len(), p.len())));
        }
        ok += g.iter().zip(p).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    Ok(if total == 0 { 1.0 } else { ok as f64 / total as f64 })
}

fn spans(words: &[String]) -> Vec<(usize, usize)> {
    let mut start = 0;
    words
        .iter()
        .map(|w| {
            let len = w.chars().count();
            let s = (start, start + len);
            start += len;
            s
        })
        .collect()
}

/// Precision, recall and F1 of predicted words, matched as exact character
/// spans.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SegScore {
    pub correct: usize,
    pub gold: usize,
    pub predicted: usize,
}

impl SegScore {
    pub fn add(&mut self, gold: &[String], pred: &[String]) -> Result<()> {
        let (gs, ps) = (spans(gold), spans(pred));
        if gs.last().map(|s| s.1) != ps.last().map(|s| s.1) || gold.concat() != pred.concat() {
            return Err(Error::data("predicted words do not cover the gold characters"));
        }
        let mut j = 0;
        for s in &gs {
            while j < ps.len() && ps[j].0 < s.0 {
                j += 1;
            }
            if j < ps.len() && ps[j] == *s {
                self.correct += 1;
            }
        }
        self.gold += gs.len();
        self.predicted += ps.len();
        Ok(())
    }

    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.correct as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            1.0
        } else {
            self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

pub fn segmentation_f1(gold: &[Vec<String>], pred: &[Vec<String>]) -> Result<f64> {
    aligned(gold, pred, "segmentation")?;
    let mut s = SegScore::default();
    for (g, p) in gold.iter().zip(pred) {
        s.add(g, p)?;
    }
    Ok(s.f1())
}

/// Corpus fuzzy reordering score.
pub fn corpus_frs(gold: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<f64> {
    aligned(gold, pred, "preordering")?;
    let mut c = CorpusFrs::default();
    for (g, p) in gold.iter().zip(pred) {
        c.add(p, g)?;
    }
    Ok(c.score())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn accuracy_examples() {
        let gold: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
        let mut pred = gold.clone();
        assert_eq!(micro_f1(&gold, &pred).unwrap(), 1.0);
        pred[3] = "x".into();
        assert!((pos_accuracy(std::slice::from_ref(&gold), &[pred]).unwrap() - 0.9).abs() < 1e-12);
        assert!(accuracy(&gold, &gold[..3]).is_err());
    }

    #[test]
    fn segmentation_span_matching() {
        assert_eq!(segmentation_f1(&[ws("AB C")], &[ws("A BC")]).unwrap(), 0.0);
        assert_eq!(segmentation_f1(&[ws("AB C")], &[ws("AB C")]).unwrap(), 1.0);
        let f = segmentation_f1(&[ws("AB C D")], &[ws("AB CD")]).unwrap();
        // P = 1/2, R = 1/3
        assert!((f - 0.4).abs() < 1e-12);
        assert!(segmentation_f1(&[ws("AB")], &[ws("AC")]).is_err());
    }

    #[test]
    fn frs_corpus() {
        let gold = vec![vec![0, 1, 2, 3], vec![0]];
        assert_eq!(corpus_frs(&gold, &gold).unwrap(), 1.0);
        let rev = vec![vec![3, 2, 1, 0], vec![0]];
        assert_eq!(corpus_frs(&gold, &rev).unwrap(), 0.0);
    }
}
