//! Per-token POS tagging over a fixed window of word features.

use std::collections::BTreeSet;

use crate::bloom::BloomMap;
use crate::config::{Task, TaskConfig};
use crate::error::{Error, Result};
use crate::features::{Context, Resources};
use crate::io::TaggedSentence;
use crate::metrics::pos_accuracy;

use super::{build_lexicons, fit, sync_lexicon_sizes, ModelView, Trained};

/// One predicted tag per token; each token is classified independently.
pub fn tag_sentence(view: ModelView<'_>, words: &[String]) -> Result<Vec<String>> {
    (0..words.len())
        .map(|focus| {
            let fv = view.features(&Context::Token { words, tags: None, focus })?;
            let (k, _) = view.network.predict(&fv)?;
            Ok(view.network.labels()[k].clone())
        })
        .collect()
}

pub fn evaluate(view: ModelView<'_>, data: &[TaggedSentence]) -> Result<f64> {
    let gold: Vec<Vec<String>> = data.iter().map(|s| s.tags.clone()).collect();
    let pred = data.iter().map(|s| tag_sentence(view, &s.words)).collect::<Result<Vec<_>>>()?;
    pos_accuracy(&gold, &pred)
}

pub fn train_tagger(
    config: &TaskConfig,
    train: &[TaggedSentence],
    dev: &[TaggedSentence],
    clusters: Option<BloomMap>,
    seed: u64,
) -> Result<Trained> {
    if config.task != Task::Pos {
        return Err(Error::config(format!("config is for task {}, not pos", config.task)));
    }
    if train.is_empty() || dev.is_empty() {
        return Err(Error::data("tagging needs non-empty training and dev sets"));
    }
    if config.uses_clusters() && clusters.is_none() {
        return Err(Error::config("this config uses cluster features; pass a cluster file (--clusters)"));
    }
    let labels: Vec<String> =
        train.iter().flat_map(|s| s.tags.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let templates = &config.templates;
    let contexts = train
        .iter()
        .flat_map(|s| (0..s.words.len()).map(move |focus| Context::Token { words: &s.words, tags: None, focus }));
    let lexicons = build_lexicons(templates, config.lexicon_cutoff, contexts)?;
    let mut templates = templates.clone();
    sync_lexicon_sizes(&mut templates, &lexicons)?;
    let resources = Resources { lexicons, clusters: if config.uses_clusters() { clusters } else { None } };
    let mut data = Vec::new();
    for s in train {
        for (focus, tag) in s.tags.iter().enumerate() {
            let fv = templates.apply(&Context::Token { words: &s.words, tags: None, focus }, &resources)?;
            let gold = labels.binary_search(tag).map_err(|_| Error::internal("tag table out of sync"))?;
            data.push((fv, gold));
        }
    }
    fit(config, templates, resources, labels, &data, seed, |view| evaluate(view, dev))
}
