//! Feature templates and their plain-text declaration format.
//!
//! A template file mixes two kinds of lines (blank lines and `#` comments
//! are ignored):
//!
//! ```text
//! group ngram2 vocab=500 dim=16 pooling=concat hashed
//! feature ngram2 ngram(2) w-3 w-2 w-1 w0 w+1 w+2 w+3
//! ```
//!
//! `group` declares a feature group (`vocab=auto` means a lexicon built at
//! training time). `feature` declares one template: target group, extractor,
//! then the list of positions it reads.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{FeatureGroup, Pooling, VocabSource, RESERVED_IDS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ByteEnd {
    Start,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extractor {
    /// Character n-grams: the set of a word's n-grams, the n-gram starting at
    /// a character address, or the n-gram multiset of a whole document.
    CharNgram(usize),
    /// The `index`-th UTF-8 byte of a word, counted from its start or end.
    Byte { index: usize, from: ByteEnd },
    /// Word cluster id from the Bloom map.
    Cluster,
    /// Character distance between stack top and buffer front, clipped.
    Length { clip: u32 },
    /// Whether a span has ever taken part in a SWAP.
    HasSwapped,
    /// Predicted POS tag of a word.
    Tag,
}

impl Extractor {
    /// Smallest vocabulary a closed-valued extractor needs.
    pub fn closed_vocab(&self, cluster_values: u32) -> Option<u32> {
        match *self {
            Extractor::Byte { .. } => Some(RESERVED_IDS + 256),
            Extractor::Cluster => Some(RESERVED_IDS + cluster_values),
            Extractor::Length { clip } => Some(clip + 1),
            Extractor::HasSwapped => Some(RESERVED_IDS + 2),
            Extractor::CharNgram(_) | Extractor::Tag => None,
        }
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Extractor::CharNgram(n) => write!(f, "ngram({n})"),
            Extractor::Byte { index, from: ByteEnd::Start } => write!(f, "byte({index},start)"),
            Extractor::Byte { index, from: ByteEnd::End } => write!(f, "byte({index},end)"),
            Extractor::Cluster => f.write_str("cluster"),
            Extractor::Length { clip } => write!(f, "length({clip})"),
            Extractor::HasSwapped => f.write_str("has-swapped"),
            Extractor::Tag => f.write_str("tag"),
        }
    }
}

fn call_args<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')
}

impl FromStr for Extractor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("unknown extractor `{s}`"));
        let ex = if let Some(arg) = call_args(s, "ngram") {
            let n: usize = arg.trim().parse().map_err(|_| bad())?;
            if !(1..=4).contains(&n) {
                return Err(Error::config(format!("n-gram order {n} outside [1, 4]")));
            }
            Extractor::CharNgram(n)
        } else if let Some(arg) = call_args(s, "byte") {
            let (j, end) = arg.split_once(',').ok_or_else(bad)?;
            let index: usize = j.trim().parse().map_err(|_| bad())?;
            if index > 3 {
                return Err(Error::config(format!("byte index {index} outside [0, 3]")));
            }
            let from = match end.trim() {
                "start" => ByteEnd::Start,
                "end" => ByteEnd::End,
                _ => return Err(bad()),
            };
            Extractor::Byte { index, from }
        } else if let Some(arg) = call_args(s, "length") {
            let clip: u32 = arg.trim().parse().map_err(|_| bad())?;
            if clip == 0 {
                return Err(Error::config("length clip must be positive"));
            }
            Extractor::Length { clip }
        } else {
            match s {
                "cluster" => Extractor::Cluster,
                "has-swapped" => Extractor::HasSwapped,
                "tag" => Extractor::Tag,
                _ => return Err(bad()),
            }
        };
        Ok(ex)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpanSide {
    Stack,
    Buffer,
}

/// Which word of a span: `First(0)` is the leftmost, `Last(0)` the rightmost,
/// `First(1)` the second, `Last(1)` the second to last.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpanWord {
    First(usize),
    Last(usize),
}

/// Where a template reads from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Address {
    /// The whole document (`doc`).
    Document,
    /// Token at an offset from the focus token (`w-1`, `w0`, `w+2`).
    Token(i32),
    /// Character at an offset from the stack-top character (`s-1`, `s0`).
    StackChar(i32),
    /// Character at an offset from the buffer-front character (`b0`, `b+2`).
    BufferChar(i32),
    /// Distance between stack top and buffer front (`gap`).
    Gap,
    /// A whole span (`S0`, `B1`).
    Span { side: SpanSide, index: usize },
    /// A word inside a span, optionally shifted by `window` positions in the
    /// original sentence (`S0.f1`, `B0.l2`, `S1.f1@-2`).
    SpanWord { side: SpanSide, index: usize, word: SpanWord, window: i32 },
}

fn signed(n: i32) -> String {
    if n > 0 {
        format!("+{n}")
    } else {
        n.to_string()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |s: SpanSide| if s == SpanSide::Stack { 'S' } else { 'B' };
        match *self {
            Address::Document => f.write_str("doc"),
            Address::Token(o) => write!(f, "w{}", signed(o)),
            Address::StackChar(o) => write!(f, "s{}", signed(o)),
            Address::BufferChar(o) => write!(f, "b{}", signed(o)),
            Address::Gap => f.write_str("gap"),
            Address::Span { side: s, index } => write!(f, "{}{index}", side(s)),
            Address::SpanWord { side: s, index, word, window } => {
                let w = match word {
                    SpanWord::First(k) => format!("f{}", k + 1),
                    SpanWord::Last(k) => format!("l{}", k + 1),
                };
                write!(f, "{}{index}.{w}", side(s))?;
                if window != 0 {
                    write!(f, "@{}", signed(window))?;
                }
                Ok(())
            }
        }
    }
}

fn parse_offset(s: &str) -> Option<i32> {
    let s = s.strip_prefix('+').unwrap_or(s);
    s.parse().ok()
}

impl FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("bad position `{s}`"));
        match s {
            "doc" => return Ok(Address::Document),
            "gap" => return Ok(Address::Gap),
            _ => {}
        }
        let mut chars = s.chars();
        let head = chars.next().ok_or_else(bad)?;
        let rest = chars.as_str();
        let addr = match head {
            'w' => Address::Token(parse_offset(rest).ok_or_else(bad)?),
            's' => Address::StackChar(parse_offset(rest).ok_or_else(bad)?),
            'b' => Address::BufferChar(parse_offset(rest).ok_or_else(bad)?),
            'S' | 'B' => {
                let side = if head == 'S' { SpanSide::Stack } else { SpanSide::Buffer };
                let (span_part, window) = match rest.split_once('@') {
                    Some((a, w)) => (a, parse_offset(w).ok_or_else(bad)?),
                    None => (rest, 0),
                };
                match span_part.split_once('.') {
                    None => {
                        if window != 0 {
                            return Err(bad());
                        }
                        Address::Span { side, index: span_part.parse().map_err(|_| bad())? }
                    }
                    Some((idx, w)) => {
                        let index = idx.parse().map_err(|_| bad())?;
                        let k: usize = w.get(1..).and_then(|k| k.parse().ok()).ok_or_else(bad)?;
                        if k == 0 {
                            return Err(bad());
                        }
                        let word = match w.as_bytes()[0] {
                            b'f' => SpanWord::First(k - 1),
                            b'l' => SpanWord::Last(k - 1),
                            _ => return Err(bad()),
                        };
                        Address::SpanWord { side, index, word, window }
                    }
                }
            }
            _ => return Err(bad()),
        };
        Ok(addr)
    }
}

/// One template: an extractor applied at a list of positions, writing into
/// exactly one group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureTemplate {
    pub group: usize,
    pub extractor: Extractor,
    pub positions: Vec<Address>,
}

/// A group together with the number of concat slots its templates fill.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupLayout {
    pub group: FeatureGroup,
    pub slots: usize,
}

impl GroupLayout {
    /// Width this group contributes to the embedding layer output.
    pub fn width(&self) -> usize {
        match self.group.pooling {
            Pooling::Concat => self.slots * self.group.embedding_dim,
            Pooling::Average | Pooling::Sum => self.group.embedding_dim,
        }
    }
}

/// Declared groups and the templates writing into them.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    groups: Vec<FeatureGroup>,
    templates: Vec<FeatureTemplate>,
}

impl TemplateSet {
    pub fn new(groups: Vec<FeatureGroup>, templates: Vec<FeatureTemplate>) -> Result<Self> {
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.name == g.name) {
                return Err(Error::config(format!("duplicate group `{}`", g.name)));
            }
        }
        for t in &templates {
            if t.group >= groups.len() {
                return Err(Error::config(format!("template references unregistered group #{}", t.group)));
            }
        }
        let set = TemplateSet { groups, templates };
        set.check_vocabularies()?;
        Ok(set)
    }

    fn check_vocabularies(&self) -> Result<()> {
        for t in &self.templates {
            let g = &self.groups[t.group];
            match (t.extractor, g.source) {
                (Extractor::CharNgram(_), VocabSource::Hashed) => {
                    if g.vocab_size <= RESERVED_IDS {
                        return Err(Error::config(format!("hashed group `{}` needs vocab > {RESERVED_IDS}", g.name)));
                    }
                }
                (Extractor::CharNgram(_) | Extractor::Tag, VocabSource::Lexicon) => {}
                (Extractor::Tag, _) => {
                    return Err(Error::config(format!("tag group `{}` must use vocab=auto", g.name)))
                }
                (ex, VocabSource::Closed) => {
                    // Cluster ids are validated against the loaded map later.
                    let need = ex.closed_vocab(0).unwrap_or(0);
                    if g.vocab_size < need {
                        return Err(Error::config(format!(
                            "group `{}` has vocab {} but `{ex}` needs at least {need}",
                            g.name, g.vocab_size
                        )));
                    }
                }
                (ex, src) => {
                    return Err(Error::config(format!("extractor `{ex}` cannot feed a {src:?} group (`{}`)", g.name)))
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut groups = Vec::new();
        let mut pending: Vec<(usize, String, Extractor, Vec<Address>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = lineno + 1;
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("group") => groups.push(parse_group(fields).map_err(|e| at_line(e, lineno))?),
                Some("feature") => {
                    let group = fields.next().ok_or_else(|| at_line(Error::config("missing group"), lineno))?;
                    let extractor: Extractor = fields
                        .next()
                        .ok_or_else(|| at_line(Error::config("missing extractor"), lineno))?
                        .parse()
                        .map_err(|e| at_line(e, lineno))?;
                    let positions =
                        fields.map(str::parse).collect::<Result<Vec<Address>>>().map_err(|e| at_line(e, lineno))?;
                    if positions.is_empty() {
                        return Err(at_line(Error::config("template has no positions"), lineno));
                    }
                    pending.push((lineno, group.to_string(), extractor, positions));
                }
                Some(other) => return Err(at_line(Error::config(format!("unknown declaration `{other}`")), lineno)),
                None => {}
            }
        }
        let mut templates = Vec::with_capacity(pending.len());
        for (lineno, name, extractor, positions) in pending {
            let group = groups.iter().position(|g: &FeatureGroup| g.name == name).ok_or_else(|| {
                at_line(Error::config(format!("template references unregistered group `{name}`")), lineno)
            })?;
            templates.push(FeatureTemplate { group, extractor, positions });
        }
        TemplateSet::new(groups, templates)
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [FeatureGroup] {
        &mut self.groups
    }

    pub fn templates(&self) -> &[FeatureTemplate] {
        &self.templates
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    /// Number of concat slots each group receives.
    pub fn slots(&self, group: usize) -> usize {
        self.templates.iter().filter(|t| t.group == group).map(|t| t.positions.len()).sum()
    }

    pub fn layout(&self) -> Vec<GroupLayout> {
        self.groups.iter().enumerate().map(|(i, g)| GroupLayout { group: g.clone(), slots: self.slots(i) }).collect()
    }

    pub fn uses_extractor(&self, pred: impl Fn(&Extractor) -> bool) -> bool {
        self.templates.iter().any(|t| pred(&t.extractor))
    }
}

fn at_line(e: Error, line: usize) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("line {line}: {m}")),
        other => other,
    }
}

fn parse_group<'a>(mut fields: impl Iterator<Item = &'a str>) -> Result<FeatureGroup> {
    let name = fields.next().ok_or_else(|| Error::config("group without a name"))?;
    let mut vocab: Option<Option<u32>> = None;
    let mut dim: Option<usize> = None;
    let mut pooling = Pooling::Concat;
    let mut hashed = false;
    for f in fields {
        match f.split_once('=') {
            Some(("vocab", "auto")) => vocab = Some(None),
            Some(("vocab", v)) => vocab = Some(Some(v.parse().map_err(|_| Error::config(format!("bad vocab `{v}`")))?)),
            Some(("dim", v)) => dim = Some(v.parse().map_err(|_| Error::config(format!("bad dim `{v}`")))?),
            Some(("pooling", v)) => pooling = v.parse()?,
            None if f == "hashed" => hashed = true,
            _ => return Err(Error::config(format!("unknown group attribute `{f}`"))),
        }
    }
    let dim = dim.ok_or_else(|| Error::config(format!("group `{name}` lacks dim=")))?;
    if dim == 0 {
        return Err(Error::config(format!("group `{name}` has dim 0")));
    }
    let vocab = vocab.ok_or_else(|| Error::config(format!("group `{name}` lacks vocab=")))?;
    let (source, vocab_size) = match (vocab, hashed) {
        (None, true) => return Err(Error::config(format!("group `{name}`: hashed groups need a fixed vocab"))),
        (None, false) => (VocabSource::Lexicon, RESERVED_IDS),
        (Some(v), true) => (VocabSource::Hashed, v),
        (Some(v), false) => (VocabSource::Closed, v),
    };
    if vocab_size == 0 {
        return Err(Error::config(format!("group `{name}` has vocab 0")));
    }
    Ok(FeatureGroup { name: name.to_string(), vocab_size, embedding_dim: dim, pooling, source })
}

impl fmt::Display for TemplateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            let vocab = match g.source {
                VocabSource::Lexicon => "auto".to_string(),
                _ => g.vocab_size.to_string(),
            };
            write!(f, "group {} vocab={vocab} dim={} pooling={}", g.name, g.embedding_dim, g.pooling)?;
            if g.source == VocabSource::Hashed {
                f.write_str(" hashed")?;
            }
            writeln!(f)?;
        }
        for t in &self.templates {
            write!(f, "feature {} {}", self.groups[t.group].name, t.extractor)?;
            for p in &t.positions {
                write!(f, " {p}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_syntax_round_trips() {
        for s in ["doc", "gap", "w-3", "w0", "w+2", "s-1", "b+2", "S0", "B3", "S1.f1", "B0.l2", "S0.f1@-3", "S2.l1@+1"]
        {
            let a: Address = s.parse().unwrap();
            assert_eq!(a.to_string(), s);
        }
        assert!("S0.f0".parse::<Address>().is_err());
        assert!("x1".parse::<Address>().is_err());
    }

    #[test]
    fn extractor_ranges() {
        assert!("ngram(5)".parse::<Extractor>().is_err());
        assert!("byte(4,start)".parse::<Extractor>().is_err());
        assert!("length(0)".parse::<Extractor>().is_err());
        assert_eq!("byte(3,end)".parse::<Extractor>().unwrap(), Extractor::Byte { index: 3, from: ByteEnd::End });
    }

    #[test]
    fn unregistered_group_is_a_config_error() {
        let err = TemplateSet::parse("group a vocab=10 dim=2 hashed\nfeature b ngram(2) w0\n").unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("unregistered")));
    }

    #[test]
    fn parse_and_print_round_trip() {
        let text = "group ng vocab=500 dim=16 pooling=concat hashed\n\
                    group bytes vocab=258 dim=4 pooling=concat\n\
                    group chars vocab=auto dim=8 pooling=concat\n\
                    feature ng ngram(2) w-1 w0 w+1\n\
                    feature bytes byte(0,start) w0\n\
                    feature bytes byte(0,end) w0\n\
                    feature chars ngram(1) s0 b0\n";
        let set = TemplateSet::parse(text).unwrap();
        assert_eq!(set.slots(0), 3);
        assert_eq!(set.slots(1), 2);
        let again = TemplateSet::parse(&set.to_string()).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn closed_vocab_too_small() {
        assert!(TemplateSet::parse("group b vocab=100 dim=2\nfeature b byte(0,start) w0\n").is_err());
    }
}
