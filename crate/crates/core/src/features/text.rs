//! Character n-grams over Unicode scalar values.

/// All contiguous `n`-character substrings of `text`, in order, duplicates kept.
///
/// Returns an empty collection when `text` has fewer than `n` characters or
/// when `n == 0`.
pub fn extract_char_ngrams(text: &str, n: usize) -> Vec<&str> {
    if n == 0 {
        return Vec::new();
    }
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len())).collect();
    let chars = bounds.len() - 1;
    if chars < n {
        return Vec::new();
    }
    (0..=chars - n).map(|i| &text[bounds[i]..bounds[i + n]]).collect()
}

/// The n-gram set of a single word, in first-occurrence order.
pub fn word_ngram_set(word: &str, n: usize) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for g in extract_char_ngrams(word, n) {
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}
