//! Discrete feature extraction: groups, templates, hashing and lexicons.

pub mod lexicon;
pub mod template;
pub mod text;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::bloom::BloomMap;
use crate::error::{Error, Result};
use crate::hashing::hash_feature;
use crate::transition::preorder::{Span, SpanState};
use crate::transition::segmentation::SegState;

pub use lexicon::Lexicon;
pub use template::{Address, ByteEnd, Extractor, FeatureTemplate, GroupLayout, SpanSide, SpanWord, TemplateSet};
pub use text::{extract_char_ngrams, word_ngram_set};

/// Padding id for addresses that fall outside the context.
pub const OUT_OF_BOUNDS_ID: u32 = 0;
/// Unknown / missing value (unseen lexicon entry, absent cluster, missing byte).
pub const UNKNOWN_ID: u32 = 1;
/// Number of reserved ids at the bottom of every vocabulary.
pub const RESERVED_IDS: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pooling {
    Concat,
    Average,
    Sum,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Concat => "concat",
            Pooling::Average => "average",
            Pooling::Sum => "sum",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(Pooling::Concat),
            "average" => Ok(Pooling::Average),
            "sum" => Ok(Pooling::Sum),
            _ => Err(Error::config(format!("unknown pooling `{s}`"))),
        }
    }
}

/// Where a group's ids come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VocabSource {
    /// `2 + H(x) mod (V - 2)`.
    Hashed,
    /// Closed lexicon built from training data with a frequency cutoff.
    Lexicon,
    /// Small closed value set computed directly (bytes, lengths, flags, clusters).
    Closed,
}

/// A set of features sharing one embedding matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureGroup {
    pub name: String,
    pub vocab_size: u32,
    pub embedding_dim: usize,
    pub pooling: Pooling,
    pub source: VocabSource,
}

impl FeatureGroup {
    pub fn hashed(&self) -> bool {
        self.source == VocabSource::Hashed
    }
}

/// Feature ids of one group. Concat groups hold one entry per slot; an entry
/// is a non-empty bag whose embeddings are averaged (a single id for
/// single-valued extractors). Average and sum groups hold a flat bag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupHits {
    Slots(Vec<Vec<u32>>),
    Bag(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureVector {
    pub groups: Vec<GroupHits>,
}

impl FeatureVector {
    /// Flat `(group, slot, id)` view; bag groups report slot 0.
    pub fn hits(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.groups.iter().enumerate().flat_map(|(g, hits)| {
            let items: Vec<(usize, usize, u32)> = match hits {
                GroupHits::Slots(slots) => {
                    slots.iter().enumerate().flat_map(|(s, ids)| ids.iter().map(move |&id| (g, s, id))).collect()
                }
                GroupHits::Bag(ids) => ids.iter().map(|&id| (g, 0, id)).collect(),
            };
            items
        })
    }
}

/// Everything templates can read from.
#[derive(Clone, Copy, Debug)]
pub enum Context<'a> {
    Document(&'a str),
    Token { words: &'a [String], tags: Option<&'a [String]>, focus: usize },
    Segmentation { chars: &'a [char], state: &'a SegState },
    Spans { words: &'a [String], tags: Option<&'a [String]>, state: &'a SpanState },
}

/// Lexicons (keyed by group name) and the optional cluster map.
#[derive(Clone, Debug, Default)]
pub struct Resources {
    pub lexicons: BTreeMap<String, Lexicon>,
    pub clusters: Option<BloomMap>,
}

enum Target<'a> {
    OutOfBounds,
    Text(&'a str),
    Word(usize),
    Char(usize),
    Span(&'a Span),
    Gap(usize),
}

fn offset(base: usize, off: i32, len: usize) -> Option<usize> {
    let i = base as i64 + off as i64;
    (0..len as i64).contains(&i).then_some(i as usize)
}

fn resolve<'a>(addr: &Address, ctx: &Context<'a>) -> Result<Target<'a>> {
    let mismatch = || Error::config(format!("position `{addr}` is not available in this context"));
    let target = match (addr, ctx) {
        (Address::Document, Context::Document(text)) => Target::Text(text),
        (Address::Token(o), Context::Token { words, focus, .. }) => {
            offset(*focus, *o, words.len()).map_or(Target::OutOfBounds, Target::Word)
        }
        (Address::StackChar(o), Context::Segmentation { chars, state }) => {
            state.stack_top().and_then(|t| offset(t, *o, chars.len())).map_or(Target::OutOfBounds, Target::Char)
        }
        (Address::BufferChar(o), Context::Segmentation { chars, state }) => {
            state.buffer_front().and_then(|f| offset(f, *o, chars.len())).map_or(Target::OutOfBounds, Target::Char)
        }
        (Address::Gap, Context::Segmentation { state, .. }) => match (state.stack_top(), state.buffer_front()) {
            (Some(t), Some(f)) => Target::Gap(f - t),
            _ => Target::OutOfBounds,
        },
        (Address::Span { side, index }, Context::Spans { state, .. }) => {
            span_at(state, *side, *index).map_or(Target::OutOfBounds, Target::Span)
        }
        (Address::SpanWord { side, index, word, window }, Context::Spans { words, state, .. }) => {
            span_at(state, *side, *index)
                .and_then(|span| {
                    let w = span.words();
                    match *word {
                        SpanWord::First(k) => w.get(k).copied(),
                        SpanWord::Last(k) => w.len().checked_sub(k + 1).map(|i| w[i]),
                    }
                })
                .and_then(|i| offset(i, *window, words.len()))
                .map_or(Target::OutOfBounds, Target::Word)
        }
        _ => return Err(mismatch()),
    };
    Ok(target)
}

fn span_at(state: &SpanState, side: SpanSide, index: usize) -> Option<&Span> {
    match side {
        SpanSide::Stack => state.stack_span(index),
        SpanSide::Buffer => state.buffer_span(index),
    }
}

fn context_words<'a>(ctx: &Context<'a>) -> Option<&'a [String]> {
    match *ctx {
        Context::Token { words, .. } | Context::Spans { words, .. } => Some(words),
        _ => None,
    }
}

fn context_tags<'a>(ctx: &Context<'a>) -> Option<&'a [String]> {
    match *ctx {
        Context::Token { tags, .. } | Context::Spans { tags, .. } => tags,
        _ => None,
    }
}

fn char_ngram(chars: &[char], start: usize, n: usize) -> Option<String> {
    (start + n <= chars.len()).then(|| chars[start..start + n].iter().collect())
}

impl TemplateSet {
    /// Apply every template to `ctx`, producing one feature vector with a
    /// complete slot list for every concat group.
    pub fn apply(&self, ctx: &Context<'_>, resources: &Resources) -> Result<FeatureVector> {
        let mut groups: Vec<GroupHits> = self
            .groups()
            .iter()
            .enumerate()
            .map(|(i, g)| match g.pooling {
                Pooling::Concat => GroupHits::Slots(Vec::with_capacity(self.slots(i))),
                _ => GroupHits::Bag(Vec::new()),
            })
            .collect();
        let mut forms: Vec<String> = Vec::new();
        for t in self.templates() {
            let group = &self.groups()[t.group];
            let lexicon = match group.source {
                VocabSource::Lexicon => Some(
                    resources
                        .lexicons
                        .get(&group.name)
                        .ok_or_else(|| Error::config(format!("no lexicon loaded for group `{}`", group.name)))?,
                ),
                _ => None,
            };
            for addr in &t.positions {
                let target = resolve(addr, ctx)?;
                let mut ids: Vec<u32> = Vec::new();
                let out_of_bounds = matches!(target, Target::OutOfBounds);
                if !out_of_bounds {
                    forms.clear();
                    self.raw_values(t.extractor, &target, ctx, resources, group, &mut forms, &mut ids)?;
                    for f in &forms {
                        ids.push(match group.source {
                            VocabSource::Hashed => {
                                RESERVED_IDS + hash_feature(f.as_bytes(), group.vocab_size - RESERVED_IDS)
                            }
                            VocabSource::Lexicon => lexicon.map_or(UNKNOWN_ID, |l| l.lookup(f)),
                            VocabSource::Closed => {
                                return Err(Error::internal("string-valued feature in a closed group"))
                            }
                        });
                    }
                }
                match &mut groups[t.group] {
                    GroupHits::Slots(slots) => {
                        if out_of_bounds {
                            ids.push(OUT_OF_BOUNDS_ID);
                        } else if ids.is_empty() {
                            ids.push(UNKNOWN_ID);
                        }
                        slots.push(ids);
                    }
                    GroupHits::Bag(bag) => bag.extend(ids),
                }
            }
        }
        for (hits, g) in groups.iter().zip(self.groups()) {
            let check = |id: u32| {
                if id >= g.vocab_size {
                    Err(Error::config(format!("id {id} exceeds vocab {} of group `{}`", g.vocab_size, g.name)))
                } else {
                    Ok(())
                }
            };
            match hits {
                GroupHits::Slots(s) => s.iter().flatten().try_for_each(|&id| check(id))?,
                GroupHits::Bag(b) => b.iter().try_for_each(|&id| check(id))?,
            }
        }
        Ok(FeatureVector { groups })
    }

    /// String-valued features go to `forms`; directly computed ids to `ids`.
    #[allow(clippy::too_many_arguments)]
    fn raw_values(
        &self,
        extractor: Extractor,
        target: &Target<'_>,
        ctx: &Context<'_>,
        resources: &Resources,
        group: &FeatureGroup,
        forms: &mut Vec<String>,
        ids: &mut Vec<u32>,
    ) -> Result<()> {
        let incompatible = || {
            Error::config(format!(
                "extractor `{extractor}` does not apply to the addressed item in group `{}`",
                group.name
            ))
        };
        let word = |i: usize| -> Result<&str> { context_words(ctx).map(|w| w[i].as_str()).ok_or_else(incompatible) };
        match (extractor, target) {
            (Extractor::CharNgram(n), Target::Text(text)) => {
                forms.extend(extract_char_ngrams(text, n).into_iter().map(str::to_string))
            }
            (Extractor::CharNgram(n), Target::Word(i)) => {
                forms.extend(word_ngram_set(word(*i)?, n).into_iter().map(str::to_string))
            }
            (Extractor::CharNgram(n), Target::Char(k)) => {
                let Context::Segmentation { chars, .. } = ctx else { return Err(incompatible()) };
                match char_ngram(chars, *k, n) {
                    Some(g) => forms.push(g),
                    None => ids.push(OUT_OF_BOUNDS_ID),
                }
            }
            (Extractor::Byte { index, from }, Target::Word(i)) => {
                let bytes = word(*i)?.as_bytes();
                let b = match from {
                    ByteEnd::Start => bytes.get(index).copied(),
                    ByteEnd::End => bytes.len().checked_sub(index + 1).map(|j| bytes[j]),
                };
                ids.push(b.map_or(UNKNOWN_ID, |b| RESERVED_IDS + u32::from(b)));
            }
            (Extractor::Cluster, Target::Word(i)) => {
                let map = resources
                    .clusters
                    .as_ref()
                    .ok_or_else(|| Error::config("cluster features need a cluster map (--clusters)"))?;
                ids.push(map.lookup(word(*i)?).map_or(UNKNOWN_ID, |v| RESERVED_IDS + v));
            }
            (Extractor::Length { clip }, Target::Gap(g)) => ids.push((*g as u32).min(clip)),
            (Extractor::HasSwapped, Target::Span(span)) => ids.push(RESERVED_IDS + u32::from(span.has_swapped())),
            (Extractor::Tag, Target::Word(i)) => {
                let tags = context_tags(ctx)
                    .ok_or_else(|| Error::config("tag features need predicted tags (load a tagger)"))?;
                forms.push(tags[*i].clone());
            }
            _ => return Err(incompatible()),
        }
        Ok(())
    }

    /// Count the surface forms lexicon groups would see in `ctx`.
    pub fn count_lexicon_forms(
        &self,
        ctx: &Context<'_>,
        counts: &mut HashMap<String, BTreeMap<String, usize>>,
    ) -> Result<()> {
        let resources = Resources::default();
        let mut forms = Vec::new();
        let mut ids = Vec::new();
        for t in self.templates() {
            let group = &self.groups()[t.group];
            if group.source != VocabSource::Lexicon || t.extractor == Extractor::Tag {
                continue;
            }
            for addr in &t.positions {
                let target = resolve(addr, ctx)?;
                if matches!(target, Target::OutOfBounds) {
                    continue;
                }
                forms.clear();
                self.raw_values(t.extractor, &target, ctx, &resources, group, &mut forms, &mut ids)?;
                let bucket = counts.entry(group.name.clone()).or_default();
                for f in forms.drain(..) {
                    *bucket.entry(f).or_insert(0) += 1;
                }
            }
        }
        Ok(())
    }
}

/// Convenience wrapper matching the operation name used across the crate.
pub fn apply_templates(templates: &TemplateSet, ctx: &Context<'_>, resources: &Resources) -> Result<FeatureVector> {
    templates.apply(ctx, resources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::segmentation::{SegAction, SegState};
    use crate::transition::TransitionState;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    const POS_LIKE: &str = "\
group ngram2 vocab=500 dim=4 pooling=concat hashed
group bytes vocab=258 dim=2 pooling=concat
feature ngram2 ngram(2) w-3 w-2 w-1 w0 w+1 w+2 w+3
feature bytes byte(0,start) w-1 w0 w+1
feature bytes byte(0,end) w-1 w0 w+1
";

    #[test]
    fn single_token_context_is_out_of_bounds() {
        let set = TemplateSet::parse(POS_LIKE).unwrap();
        let ws = words(&["hello"]);
        let fv = set.apply(&Context::Token { words: &ws, tags: None, focus: 0 }, &Resources::default()).unwrap();
        let GroupHits::Slots(ng) = &fv.groups[0] else { panic!() };
        assert_eq!(ng.len(), 7);
        for (i, slot) in ng.iter().enumerate() {
            if i == 3 {
                assert_eq!(slot.len(), 4); // he el ll lo
                assert!(slot.iter().all(|&id| (2..500).contains(&id)));
            } else {
                assert_eq!(slot, &vec![OUT_OF_BOUNDS_ID]);
            }
        }
        let GroupHits::Slots(b) = &fv.groups[1] else { panic!() };
        assert_eq!(b, &vec![vec![0], vec![2 + b'h' as u32], vec![0], vec![0], vec![2 + b'o' as u32], vec![0]]);
    }

    #[test]
    fn short_word_gets_unknown_ngram_slot() {
        let set = TemplateSet::parse(POS_LIKE).unwrap();
        let ws = words(&["a"]);
        let fv = set.apply(&Context::Token { words: &ws, tags: None, focus: 0 }, &Resources::default()).unwrap();
        let GroupHits::Slots(ng) = &fv.groups[0] else { panic!() };
        assert_eq!(ng[3], vec![UNKNOWN_ID]);
    }

    #[test]
    fn segmentation_initial_state_has_empty_stack() {
        let mut set = TemplateSet::parse(
            "group chars vocab=auto dim=4\ngroup len vocab=101 dim=2\n\
             feature chars ngram(1) s-1 s0 s+1 b-2 b-1 b0 b+1 b+2\nfeature len length(100) gap\n",
        )
        .unwrap();
        let chars: Vec<char> = "abc".chars().collect();
        let state = SegState::new(chars.len());
        let mut res = Resources::default();
        res.lexicons.insert("chars".into(), Lexicon::from_entries(words(&["a", "b"])));
        set.groups_mut()[0].vocab_size = res.lexicons["chars"].vocab_size();
        let fv = set.apply(&Context::Segmentation { chars: &chars, state: &state }, &res).unwrap();
        let GroupHits::Slots(c) = &fv.groups[0] else { panic!() };
        assert_eq!(c[..3], [vec![0], vec![0], vec![0]]);
        // b-2, b-1 out of range; b0 = 'a', b+1 = 'b', b+2 = 'c' (unknown)
        assert_eq!(c[3..], [vec![0], vec![0], vec![2], vec![3], vec![UNKNOWN_ID]]);
        let GroupHits::Slots(l) = &fv.groups[1] else { panic!() };
        assert_eq!(l, &vec![vec![OUT_OF_BOUNDS_ID]]);
    }

    #[test]
    fn length_feature_is_clipped() {
        let set = TemplateSet::parse("group len vocab=101 dim=2\nfeature len length(100) gap\n").unwrap();
        let chars: Vec<char> = vec!['x'; 300];
        let mut state = SegState::new(chars.len());
        state.apply(SegAction::Split).unwrap();
        for _ in 0..249 {
            state.apply(SegAction::Merge).unwrap();
        }
        assert_eq!(state.buffer_front(), Some(250));
        let fv = set.apply(&Context::Segmentation { chars: &chars, state: &state }, &Resources::default()).unwrap();
        assert_eq!(fv.groups[0], GroupHits::Slots(vec![vec![100]]));
    }

    #[test]
    fn document_average_group_is_a_multiset() {
        let set =
            TemplateSet::parse("group u vocab=100 dim=3 pooling=average hashed\nfeature u ngram(1) doc\n").unwrap();
        let fv = set.apply(&Context::Document("abca"), &Resources::default()).unwrap();
        let GroupHits::Bag(bag) = &fv.groups[0] else { panic!() };
        assert_eq!(bag.len(), 4);
        assert_eq!(bag[0], bag[3]);
    }

    #[test]
    fn wrong_context_is_config_error() {
        let set = TemplateSet::parse(POS_LIKE).unwrap();
        assert!(matches!(set.apply(&Context::Document("x"), &Resources::default()), Err(Error::Config(_))));
    }

    #[test]
    fn missing_cluster_map_is_config_error() {
        let set = TemplateSet::parse("group c vocab=258 dim=2\nfeature c cluster w0\n").unwrap();
        let ws = words(&["x"]);
        let r = set.apply(&Context::Token { words: &ws, tags: None, focus: 0 }, &Resources::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
