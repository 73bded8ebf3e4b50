//! Preordering with the APPEND/SHIFT/SWAP span transition system, optionally
//! fed by predicted POS tags from a separate tagger.

use std::collections::BTreeMap;

use crate::config::{PreorderMode, Task, TaskConfig};
use crate::error::{Error, Result};
use crate::features::{Context, Extractor, Lexicon, Resources};
use crate::io::PreorderExample;
use crate::metrics::corpus_frs;
use crate::model_file::SavedModel;
use crate::transition::{greedy_decode, pre_oracle, Action, PreAction, SpanState, TransitionState};

use super::{action_labels, build_lexicons, fit, sync_lexicon_sizes, tag_sentence, ModelView, Trained};

/// Run the tagger when the preorderer reads tags.
fn predicted_tags(
    model: ModelView<'_>,
    tagger: Option<ModelView<'_>>,
    words: &[String],
) -> Result<Option<Vec<String>>> {
    if !model.templates.uses_extractor(|e| *e == Extractor::Tag) {
        return Ok(None);
    }
    let tagger = tagger.ok_or_else(|| Error::config("this preorderer reads POS tags; load a tagger (--tagger)"))?;
    Ok(Some(tag_sentence(tagger, words)?))
}

/// Predicted reading order (0-based word indices) and the derivation.
pub fn preorder(
    view: ModelView<'_>,
    tagger: Option<ModelView<'_>>,
    words: &[String],
) -> Result<(Vec<usize>, Vec<PreAction>)> {
    let tags = predicted_tags(view, tagger, words)?;
    let (state, actions) = greedy_decode(SpanState::new(words.len()), view.network, |state| {
        view.features(&Context::Spans { words, tags: tags.as_deref(), state })
    })?;
    Ok((state.reading_order(), actions))
}

pub fn evaluate(view: ModelView<'_>, tagger: Option<ModelView<'_>>, data: &[PreorderExample]) -> Result<f64> {
    let gold: Vec<Vec<usize>> = data.iter().map(|e| e.target.clone()).collect();
    let pred = data.iter().map(|e| preorder(view, tagger, &e.words).map(|r| r.0)).collect::<Result<Vec<_>>>()?;
    corpus_frs(&gold, &pred)
}

/// The tag vocabulary a with-POS preorderer uses: the tagger's label table.
fn tag_lexicons(config: &TaskConfig, tagger: &SavedModel) -> BTreeMap<String, Lexicon> {
    config
        .templates
        .templates()
        .iter()
        .filter(|t| t.extractor == Extractor::Tag)
        .map(|t| {
            let name = config.templates.groups()[t.group].name.clone();
            (name, Lexicon::from_entries(tagger.network.labels().to_vec()))
        })
        .collect()
}

pub fn train_preorderer(
    config: &TaskConfig,
    train: &[PreorderExample],
    dev: &[PreorderExample],
    tagger: Option<&SavedModel>,
    seed: u64,
) -> Result<Trained> {
    if config.task != Task::Preorder {
        return Err(Error::config(format!("config is for task {}, not preorder", config.task)));
    }
    if train.is_empty() || dev.is_empty() {
        return Err(Error::data("preordering needs non-empty training and dev sets"));
    }
    let tagger = match (config.mode, tagger) {
        (PreorderMode::WithPos, Some(t)) => {
            t.expect_task(Task::Pos)?;
            Some(t)
        }
        (PreorderMode::WithPos, None) => return Err(Error::config("with-pos mode needs a trained tagger (--tagger)")),
        _ => None,
    };
    let tagger_view = tagger.map(SavedModel::view);
    let tags: Vec<Option<Vec<String>>> =
        train.iter().map(|e| tagger_view.map(|t| tag_sentence(t, &e.words)).transpose()).collect::<Result<_>>()?;

    let mut unrolled: Vec<(usize, SpanState, PreAction)> = Vec::new();
    for (i, ex) in train.iter().enumerate() {
        let mut state = SpanState::new(ex.words.len());
        for a in pre_oracle(&ex.target, config.oracle)? {
            unrolled.push((i, state.clone(), a));
            state.apply(a)?;
        }
    }
    let templates = &config.templates;
    let contexts = unrolled.iter().map(|(i, s, _)| Context::Spans { words: &train[*i].words, tags: None, state: s });
    let mut lexicons = build_lexicons(templates, config.lexicon_cutoff, contexts)?;
    if let Some(t) = tagger {
        lexicons.extend(tag_lexicons(config, t));
    }
    let mut templates = templates.clone();
    sync_lexicon_sizes(&mut templates, &lexicons)?;
    let resources = Resources { lexicons, clusters: None };
    let labels = action_labels::<PreAction>();
    let mut data = Vec::with_capacity(unrolled.len());
    for (i, state, a) in &unrolled {
        let c = Context::Spans { words: &train[*i].words, tags: tags[*i].as_deref(), state };
        let fv = templates.apply(&c, &resources)?;
        let gold = labels.iter().position(|l| l == a.name()).ok_or_else(|| Error::internal("action table"))?;
        data.push((fv, gold));
    }
    fit(config, templates, resources, labels, &data, seed, |view| evaluate(view, tagger_view, dev))
}
