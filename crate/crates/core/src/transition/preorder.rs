//! APPEND/SHIFT/SWAP preordering over spans of words.
//!
//! Every word starts as a singleton span on the buffer. SHIFT moves the buffer
//! front onto the stack, APPEND concatenates the top two stack spans, and SWAP
//! sends the lower of the top two spans back to the buffer front. SWAP is
//! legal only while the lower span's origin precedes the upper span's origin,
//! which bounds the number of swaps and guarantees termination.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use super::{Action, TransitionState};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PreAction {
    Append,
    Shift,
    Swap,
}

impl Action for PreAction {
    const ALL: &'static [Self] = &[PreAction::Append, PreAction::Shift, PreAction::Swap];

    fn name(self) -> &'static str {
        match self {
            PreAction::Append => "APPEND",
            PreAction::Shift => "SHIFT",
            PreAction::Swap => "SWAP",
        }
    }
}

impl fmt::Display for PreAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PreAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        super::parse_action_name(s)
    }
}

/// A contiguous piece of the output: word indices in reading order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Span {
    words: Vec<usize>,
    origin: usize,
    has_swapped: bool,
}

impl Span {
    fn singleton(word: usize) -> Self {
        Span { words: vec![word], origin: word, has_swapped: false }
    }

    pub fn words(&self) -> &[usize] {
        &self.words
    }

    /// Original position of the span's leftmost word when it was created.
    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn has_swapped(&self) -> bool {
        self.has_swapped
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpanState {
    stack: Vec<Span>,
    buffer: VecDeque<Span>,
    n: usize,
}

impl SpanState {
    pub fn new(n: usize) -> Self {
        SpanState { stack: Vec::new(), buffer: (0..n).map(Span::singleton).collect(), n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Stack spans, bottom first.
    pub fn stack(&self) -> &[Span] {
        &self.stack
    }

    pub fn buffer(&self) -> &VecDeque<Span> {
        &self.buffer
    }

    /// The `i`-th span from the top of the stack.
    pub fn stack_span(&self, i: usize) -> Option<&Span> {
        self.stack.len().checked_sub(i + 1).map(|k| &self.stack[k])
    }

    /// The `j`-th span from the front of the buffer.
    pub fn buffer_span(&self, j: usize) -> Option<&Span> {
        self.buffer.get(j)
    }

    /// Words in current reading order: stack bottom to top, then buffer.
    pub fn reading_order(&self) -> Vec<usize> {
        self.stack.iter().chain(self.buffer.iter()).flat_map(|s| s.words.iter().copied()).collect()
    }

    /// The output permutation of a terminal state (0-based word indices).
    pub fn permutation(&self) -> Option<Vec<usize>> {
        self.is_terminal().then(|| self.reading_order())
    }
}

impl TransitionState for SpanState {
    type Action = PreAction;

    fn is_terminal(&self) -> bool {
        self.buffer.is_empty() && (self.stack.len() == 1 || self.n == 0)
    }

    fn is_legal(&self, action: PreAction) -> bool {
        match action {
            PreAction::Shift => !self.buffer.is_empty(),
            PreAction::Append => self.stack.len() >= 2,
            PreAction::Swap => {
                let k = self.stack.len();
                k >= 2 && self.stack[k - 2].origin < self.stack[k - 1].origin
            }
        }
    }

    fn apply(&mut self, action: PreAction) -> Result<()> {
        if !self.is_legal(action) {
            return Err(Error::IllegalTransition(format!(
                "{action} with {} stack span(s) and {} buffer span(s)",
                self.stack.len(),
                self.buffer.len()
            )));
        }
        match action {
            PreAction::Shift => {
                let s = self.buffer.pop_front().expect("checked non-empty");
                self.stack.push(s);
            }
            PreAction::Append => {
                let j = self.stack.pop().expect("checked");
                let i = self.stack.last_mut().expect("checked");
                i.words.extend(j.words);
                i.has_swapped |= j.has_swapped;
            }
            PreAction::Swap => {
                let mut j = self.stack.pop().expect("checked");
                let mut i = self.stack.pop().expect("checked");
                i.has_swapped = true;
                j.has_swapped = true;
                self.stack.push(j);
                self.buffer.push_front(i);
            }
        }
        Ok(())
    }

    fn step_limit(&self) -> usize {
        (4 * self.n * self.n).max(1)
    }
}

/// Value-semantic application: returns the successor state.
pub fn pre_apply(state: &SpanState, action: PreAction) -> Result<SpanState> {
    let mut next = state.clone();
    next.apply(action)?;
    Ok(next)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OracleStrategy {
    /// APPEND as soon as the top two spans are adjacent in the target.
    #[default]
    EagerAppend,
    /// Sort everything with SHIFT/SWAP first, then APPEND n-1 times.
    BubbleSort,
}

/// Check that `perm` is a permutation of `0..perm.len()`.
pub fn validate_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::data(format!(
                "not a permutation of 1..{}: {:?}",
                perm.len(),
                perm.iter().map(|p| p + 1).collect::<Vec<_>>()
            )));
        }
    }
    Ok(())
}

/// Static oracle for a target reading order (`target[k]` is the word placed
/// at output position `k`, 0-based).
///
/// Incoming words sink into place by SWAP (insertion sort on target rank);
/// swaps are always legal because a sinking word was shifted fresh from the
/// buffer and so has a larger origin than anything already on the stack.
pub fn pre_oracle(target: &[usize], strategy: OracleStrategy) -> Result<Vec<PreAction>> {
    validate_permutation(target)?;
    let n = target.len();
    let mut rank = vec![0usize; n];
    for (r, &w) in target.iter().enumerate() {
        rank[w] = r;
    }
    let mut state = SpanState::new(n);
    let mut actions = Vec::new();
    while !state.is_terminal() {
        let action = next_oracle_action(&state, &rank, strategy);
        state.apply(action)?;
        actions.push(action);
        if actions.len() > state.step_limit() {
            return Err(Error::internal("preordering oracle exceeded its step limit"));
        }
    }
    Ok(actions)
}

fn next_oracle_action(state: &SpanState, rank: &[usize], strategy: OracleStrategy) -> PreAction {
    if let (Some(j), Some(i)) = (state.stack_span(0), state.stack_span(1)) {
        let last_i = rank[*i.words.last().expect("spans are non-empty")];
        let first_i = rank[i.words[0]];
        let first_j = rank[j.words[0]];
        if strategy == OracleStrategy::EagerAppend && last_i + 1 == first_j {
            return PreAction::Append;
        }
        if first_i > first_j {
            return PreAction::Swap;
        }
    }
    if state.buffer.is_empty() {
        PreAction::Append
    } else {
        PreAction::Shift
    }
}

/// Replay `actions` from the initial state over `n` words.
pub fn replay_preorder(n: usize, actions: &[PreAction]) -> Result<SpanState> {
    let mut state = SpanState::new(n);
    for &a in actions {
        state.apply(a)?;
    }
    Ok(state)
}
