//! SPLIT/MERGE word segmentation.
//!
//! All characters start on the buffer and the stack is empty. SPLIT pushes
//! the buffer-front index onto the stack (it starts a new word); MERGE drops
//! it (it continues the current word). In the terminal state the stack holds
//! the start index of every word.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use super::{Action, TransitionState};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegAction {
    Split,
    Merge,
}

impl Action for SegAction {
    const ALL: &'static [Self] = &[SegAction::Split, SegAction::Merge];

    fn name(self) -> &'static str {
        match self {
            SegAction::Split => "SPLIT",
            SegAction::Merge => "MERGE",
        }
    }
}

impl fmt::Display for SegAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SegAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        super::parse_action_name(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SegState {
    stack: Vec<usize>,
    front: usize,
    n: usize,
}

impl SegState {
    pub fn new(n: usize) -> Self {
        SegState { stack: Vec::new(), front: 0, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    pub fn buffer(&self) -> Range<usize> {
        self.front..self.n
    }

    pub fn stack_top(&self) -> Option<usize> {
        self.stack.last().copied()
    }

    pub fn buffer_front(&self) -> Option<usize> {
        (self.front < self.n).then_some(self.front)
    }

    /// Word lengths implied by the stack; only meaningful once terminal.
    pub fn word_lengths(&self) -> Vec<usize> {
        let mut ends: Vec<usize> = self.stack.iter().skip(1).copied().collect();
        ends.push(self.front);
        self.stack.iter().zip(ends).map(|(s, e)| e - s).collect()
    }

    /// Split `chars` into words at the stack indices.
    pub fn words(&self, chars: &[char]) -> Vec<String> {
        self.stack
            .iter()
            .zip(self.word_lengths())
            .map(|(&begin, len)| chars[begin..begin + len].iter().collect())
            .collect()
    }
}

impl TransitionState for SegState {
    type Action = SegAction;

    fn is_terminal(&self) -> bool {
        self.front >= self.n
    }

    fn is_legal(&self, action: SegAction) -> bool {
        match action {
            SegAction::Split => self.front < self.n,
            SegAction::Merge => self.front < self.n && !self.stack.is_empty(),
        }
    }

    fn apply(&mut self, action: SegAction) -> Result<()> {
        if self.is_terminal() {
            return Err(Error::IllegalTransition(format!("{action} on a terminal segmentation state")));
        }
        if !self.is_legal(action) {
            return Err(Error::IllegalTransition(format!("{action} before any word has started")));
        }
        if action == SegAction::Split {
            self.stack.push(self.front);
        }
        self.front += 1;
        Ok(())
    }

    fn step_limit(&self) -> usize {
        self.n
    }
}

/// Value-semantic application: returns the successor state.
pub fn seg_apply(state: &SegState, action: SegAction) -> Result<SegState> {
    let mut next = state.clone();
    next.apply(action)?;
    Ok(next)
}

/// Static oracle: SPLIT on every word-initial character, MERGE elsewhere.
pub fn seg_oracle(lengths: &[usize]) -> Result<Vec<SegAction>> {
    let mut actions = Vec::with_capacity(lengths.iter().sum());
    for (i, &len) in lengths.iter().enumerate() {
        if len == 0 {
            return Err(Error::data(format!("word {} has length zero", i + 1)));
        }
        actions.push(SegAction::Split);
        actions.extend(std::iter::repeat_n(SegAction::Merge, len - 1));
    }
    Ok(actions)
}

/// Word-start indices implied by gold word lengths.
pub fn word_starts(lengths: &[usize]) -> Vec<usize> {
    lengths
        .iter()
        .scan(0, |pos, &l| {
            let s = *pos;
            *pos += l;
            Some(s)
        })
        .collect()
}
