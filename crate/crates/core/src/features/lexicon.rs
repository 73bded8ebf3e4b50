use std::collections::{BTreeMap, HashMap};

use super::{RESERVED_IDS, UNKNOWN_ID};

/// A closed vocabulary built from training counts.
///
/// Ids 0 and 1 are reserved (out-of-bounds and unknown); entries start at 2
/// in lexicographic order of their surface form so builds are deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<String>,
    index: HashMap<String, u32>,
}

impl Lexicon {
    /// Keep every form seen at least `cutoff` times.
    pub fn from_counts(counts: &BTreeMap<String, usize>, cutoff: usize) -> Self {
        Self::from_entries(counts.iter().filter(|(_, &c)| c >= cutoff).map(|(k, _)| k.clone()).collect())
    }

    /// Lexicon over an explicit list of forms, in the given order.
    pub fn from_entries(entries: Vec<String>) -> Self {
        let index = entries.iter().enumerate().map(|(i, e)| (e.clone(), i as u32 + RESERVED_IDS)).collect();
        Lexicon { entries, index }
    }

    pub fn lookup(&self, form: &str) -> u32 {
        self.index.get(form).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn get(&self, form: &str) -> Option<u32> {
        self.index.get(form).copied()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Vocabulary size including the reserved ids.
    pub fn vocab_size(&self) -> u32 {
        self.entries.len() as u32 + RESERVED_IDS
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_maps_rare_forms_to_unknown() {
        let mut counts = BTreeMap::new();
        counts.insert("a".to_string(), 3);
        counts.insert("b".to_string(), 1);
        counts.insert("c".to_string(), 2);
        let lex = Lexicon::from_counts(&counts, 2);
        assert_eq!(lex.lookup("a"), 2);
        assert_eq!(lex.lookup("c"), 3);
        assert_eq!(lex.lookup("b"), UNKNOWN_ID);
        assert_eq!(lex.lookup("never-seen"), UNKNOWN_ID);
        assert_eq!(lex.vocab_size(), 4);
    }
}
