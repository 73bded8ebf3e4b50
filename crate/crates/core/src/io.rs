//! Text ingestion. Input is decoded as UTF-8 with invalid sequences replaced
//! by U+FFFD; the number of replacements is reported back to the caller.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::transition::preorder::validate_permutation;

/// Decoded text plus the count of replaced invalid sequences.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Decoded {
    pub text: String,
    pub replaced: usize,
}

pub fn decode_lossy(bytes: &[u8]) -> Decoded {
    let mut text = String::with_capacity(bytes.len());
    let mut replaced = 0;
    for chunk in bytes.utf8_chunks() {
        text.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            text.push(char::REPLACEMENT_CHARACTER);
            replaced += 1;
        }
    }
    Decoded { text, replaced }
}

pub fn read_file_lossy(path: &Path) -> Result<Decoded> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::data(format!("cannot read `{}`: {e}", path.display())))?;
    Ok(decode_lossy(&bytes))
}

/// Streaming line reader with lossy decoding.
pub struct LossyLines<R> {
    reader: R,
    buf: Vec<u8>,
    line: usize,
    pub replaced: usize,
}

impl<R: BufRead> LossyLines<R> {
    pub fn new(reader: R) -> Self {
        LossyLines { reader, buf: Vec::new(), line: 0, replaced: 0 }
    }
}

impl LossyLines<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::data(format!("cannot read `{}`: {e}", path.display())))?;
        Ok(LossyLines::new(BufReader::new(f)))
    }
}

impl<R: BufRead> Iterator for LossyLines<R> {
    /// `(1-based line number, line without its terminator)`.
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => {
                self.line += 1;
                while matches!(self.buf.last(), Some(b'\n' | b'\r')) {
                    self.buf.pop();
                }
                let d = decode_lossy(&self.buf);
                self.replaced += d.replaced;
                Some(Ok((self.line, d.text)))
            }
            Err(e) => Some(Err(e.into())),
        }
    }
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

/// `label<TAB>text` lines; blank lines are skipped.
pub fn parse_langid_tsv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in numbered_lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let (label, doc) = line.split_once('\t').ok_or_else(|| Error::data_at(n, "expected `label<TAB>text`"))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::data_at(n, "empty label"));
        }
        out.push((label.to_string(), doc.to_string()));
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub tags: Vec<String>,
}

/// CoNLL-U subset: column 1 index, column 2 form, column 4 UPOS. Comment
/// lines, multiword-token ranges (`1-2`) and empty nodes (`1.1`) are skipped.
pub fn parse_conllu(text: &str) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    let mut cur = TaggedSentence::default();
    for (n, line) in numbered_lines(text) {
        let line = line.trim_end();
        if line.is_empty() {
            if !cur.words.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(Error::data_at(n, format!("expected at least 4 tab-separated columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        if cols[0].parse::<usize>().is_err() {
            return Err(Error::data_at(n, format!("bad token index `{}`", cols[0])));
        }
        if cols[1].is_empty() || cols[3].is_empty() {
            return Err(Error::data_at(n, "empty form or tag"));
        }
        cur.words.push(cols[1].to_string());
        cur.tags.push(cols[3].to_string());
    }
    if !cur.words.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

/// One sentence per line, gold words separated by whitespace.
pub fn parse_segmentation(text: &str) -> Result<Vec<Vec<String>>> {
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|w| !w.is_empty())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreorderExample {
    pub words: Vec<String>,
    /// Target reading order as 0-based word indices.
    pub target: Vec<usize>,
}

/// `tokens<TAB>1-based target indices` lines.
pub fn parse_preorder(text: &str) -> Result<Vec<PreorderExample>> {
    let mut out = Vec::new();
    for (n, line) in numbered_lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let (toks, idx) = line.split_once('\t').ok_or_else(|| Error::data_at(n, "expected `tokens<TAB>indices`"))?;
        let words: Vec<String> = toks.split_whitespace().map(str::to_string).collect();
        let target = parse_indices(idx).map_err(|m| Error::data_at(n, m))?;
        if target.len() != words.len() {
            return Err(Error::data_at(n, format!("{} tokens but {} indices", words.len(), target.len())));
        }
        validate_permutation(&target).map_err(|_| Error::data_at(n, "indices are not a permutation of 1..n"))?;
        out.push(PreorderExample { words, target });
    }
    Ok(out)
}

/// Space-separated 1-based indices to 0-based.
pub fn parse_indices(text: &str) -> std::result::Result<Vec<usize>, String> {
    text.split_whitespace()
        .map(|t| match t.parse::<usize>() {
            Ok(i) if i >= 1 => Ok(i - 1),
            _ => Err(format!("bad index `{t}`")),
        })
        .collect()
}

pub fn format_indices(perm: &[usize]) -> String {
    perm.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ")
}
