//! Language identification over averaged character n-gram embeddings.

use std::collections::BTreeSet;

use crate::config::{Task, TaskConfig};
use crate::error::{Error, Result};
use crate::features::{Context, FeatureVector, Resources};
use crate::metrics::micro_f1;

use super::{fit, ModelView, Trained};

fn strip_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        match rest[open..].find('>') {
            Some(close) => {
                out.push_str(&rest[..open]);
                rest = &rest[open + close + 1..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

fn letters(text: &str) -> String {
    text.chars().filter(|c| c.is_alphabetic()).collect()
}

/// Drop `<...>` markup, then every non-alphabetic character. Falls back to
/// keeping markup, then to the untouched input, if a pass leaves nothing.
pub fn langid_preprocess(text: &str) -> String {
    let cleaned = letters(&strip_markup(text));
    if !cleaned.is_empty() {
        return cleaned;
    }
    let cleaned = letters(text);
    if !cleaned.is_empty() {
        return cleaned;
    }
    text.to_string()
}

pub fn document_features(view: ModelView<'_>, doc: &str) -> Result<FeatureVector> {
    let text = langid_preprocess(doc);
    view.features(&Context::Document(&text))
}

/// Most probable language and its probability.
pub fn classify(view: ModelView<'_>, doc: &str) -> Result<(String, f64)> {
    let (k, p) = view.network.predict(&document_features(view, doc)?)?;
    Ok((view.network.labels()[k].clone(), p))
}

pub fn evaluate(view: ModelView<'_>, data: &[(String, String)]) -> Result<f64> {
    let gold: Vec<String> = data.iter().map(|(l, _)| l.clone()).collect();
    let pred = data.iter().map(|(_, d)| classify(view, d).map(|r| r.0)).collect::<Result<Vec<_>>>()?;
    micro_f1(&gold, &pred)
}

/// Train on `(label, document)` pairs. Labels are sorted to fix the label table.
pub fn train_langid(
    config: &TaskConfig,
    train: &[(String, String)],
    dev: &[(String, String)],
    seed: u64,
) -> Result<Trained> {
    if config.task != Task::LangId {
        return Err(Error::config(format!("config is for task {}, not langid", config.task)));
    }
    if train.is_empty() || dev.is_empty() {
        return Err(Error::data("language identification needs non-empty training and dev sets"));
    }
    let labels: Vec<String> = train.iter().map(|(l, _)| l.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let resources = Resources::default();
    let templates = &config.templates;
    let mut data = Vec::with_capacity(train.len());
    for (label, doc) in train {
        let text = langid_preprocess(doc);
        let fv = templates.apply(&Context::Document(&text), &resources)?;
        let gold = labels.binary_search(label).map_err(|_| Error::internal("label table out of sync"))?;
        data.push((fv, gold));
    }
    fit(config, templates.clone(), resources, labels, &data, seed, |view| evaluate(view, dev))
}
