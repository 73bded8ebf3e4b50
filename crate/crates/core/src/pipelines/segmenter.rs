//! Word segmentation with the SPLIT/MERGE transition system.

use crate::config::{Task, TaskConfig};
use crate::error::{Error, Result};
use crate::features::{Context, Resources};
use crate::metrics::segmentation_f1;
use crate::transition::{greedy_decode, seg_oracle, Action, SegAction, SegState, TransitionState};

use super::{action_labels, build_lexicons, fit, sync_lexicon_sizes, ModelView, Trained};

/// Segment `text` (every character, including spaces, is kept). The output
/// words concatenate back to `text`.
pub fn segment(view: ModelView<'_>, text: &str) -> Result<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    let (state, _) = decode(view, &chars)?;
    Ok(state.words(&chars))
}

pub fn decode(view: ModelView<'_>, chars: &[char]) -> Result<(SegState, Vec<SegAction>)> {
    greedy_decode(SegState::new(chars.len()), view.network, |state| {
        view.features(&Context::Segmentation { chars, state })
    })
}

/// Characters of a gold sentence with whitespace removed.
pub fn sentence_chars(words: &[String]) -> Vec<char> {
    words.iter().flat_map(|w| w.chars()).collect()
}

pub fn evaluate(view: ModelView<'_>, data: &[Vec<String>]) -> Result<f64> {
    let pred = data
        .iter()
        .map(|words| {
            let chars = sentence_chars(words);
            decode(view, &chars).map(|(s, _)| s.words(&chars))
        })
        .collect::<Result<Vec<_>>>()?;
    segmentation_f1(data, &pred)
}

pub fn train_segmenter(config: &TaskConfig, train: &[Vec<String>], dev: &[Vec<String>], seed: u64) -> Result<Trained> {
    if config.task != Task::Segment {
        return Err(Error::config(format!("config is for task {}, not segment", config.task)));
    }
    if train.is_empty() || dev.is_empty() {
        return Err(Error::data("segmentation needs non-empty training and dev sets"));
    }
    // Unroll oracle derivations into (chars, state, gold action) triples.
    let mut unrolled: Vec<(usize, SegState, SegAction)> = Vec::new();
    let sentences: Vec<Vec<char>> = train.iter().map(|w| sentence_chars(w)).collect();
    for (i, words) in train.iter().enumerate() {
        let lengths: Vec<usize> = words.iter().map(|w| w.chars().count()).collect();
        let mut state = SegState::new(sentences[i].len());
        for a in seg_oracle(&lengths)? {
            unrolled.push((i, state.clone(), a));
            state.apply(a)?;
        }
    }
    let templates = &config.templates;
    let contexts = unrolled.iter().map(|(i, s, _)| Context::Segmentation { chars: &sentences[*i], state: s });
    let lexicons = build_lexicons(templates, config.lexicon_cutoff, contexts)?;
    let mut templates = templates.clone();
    sync_lexicon_sizes(&mut templates, &lexicons)?;
    let resources = Resources { lexicons, clusters: None };
    let labels = action_labels::<SegAction>();
    let mut data = Vec::with_capacity(unrolled.len());
    for (i, state, a) in &unrolled {
        let fv = templates.apply(&Context::Segmentation { chars: &sentences[*i], state }, &resources)?;
        let gold = labels.iter().position(|l| l == a.name()).ok_or_else(|| Error::internal("action table"))?;
        data.push((fv, gold));
    }
    drop(unrolled);
    fit(config, templates, resources, labels, &data, seed, |view| evaluate(view, dev))
}
