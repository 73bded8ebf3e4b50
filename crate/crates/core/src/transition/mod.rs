//! Transition systems for structured prediction, their static oracles and
//! greedy decoding with a feed-forward scorer.

pub mod frs;
pub mod preorder;
pub mod segmentation;

use std::fmt::{Debug, Display};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::network::NetworkModel;

pub use frs::{chunk_count, fuzzy_reordering_score, CorpusFrs};
pub use preorder::{
    pre_apply, pre_oracle, replay_preorder, validate_permutation, OracleStrategy, PreAction, Span, SpanState,
};
pub use segmentation::{seg_apply, seg_oracle, SegAction, SegState};

pub trait Action: Copy + Eq + Debug + Display + 'static {
    const ALL: &'static [Self];

    fn name(self) -> &'static str;
}

pub trait TransitionState: Clone {
    type Action: Action;

    fn is_terminal(&self) -> bool;
    fn is_legal(&self, action: Self::Action) -> bool;
    fn apply(&mut self, action: Self::Action) -> Result<()>;
    /// Upper bound on derivation length from the initial state.
    fn step_limit(&self) -> usize;

    fn legal_actions(&self) -> Vec<Self::Action> {
        Self::Action::ALL.iter().copied().filter(|&a| self.is_legal(a)).collect()
    }
}

pub(crate) fn parse_action_name<A: Action>(s: &str) -> Result<A> {
    A::ALL
        .iter()
        .copied()
        .find(|a| a.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::data(format!("unknown action `{s}`")))
}

/// Whitespace-separated action names, e.g. `SHIFT SHIFT SWAP`.
pub fn format_derivation<A: Action>(actions: &[A]) -> String {
    actions.iter().map(|a| a.name()).collect::<Vec<_>>().join(" ")
}

pub fn parse_derivation<A: Action>(text: &str) -> Result<Vec<A>> {
    text.split_whitespace().map(parse_action_name).collect()
}

/// Position of each action in the model's label table.
pub fn action_label_map<A: Action>(model: &NetworkModel) -> Result<Vec<usize>> {
    let labels = model.labels();
    if labels.len() != A::ALL.len() {
        return Err(Error::config(format!(
            "model has {} labels but the transition system has {} actions",
            labels.len(),
            A::ALL.len()
        )));
    }
    A::ALL
        .iter()
        .map(|a| {
            labels
                .iter()
                .position(|l| l == a.name())
                .ok_or_else(|| Error::config(format!("model label table lacks action {a}")))
        })
        .collect()
}

/// Repeatedly score actions and apply the best legal one until terminal.
///
/// Illegal actions are masked before the argmax; ties go to the action that
/// comes first in the model's label order.
pub fn greedy_decode<S, F>(initial: S, model: &NetworkModel, mut features: F) -> Result<(S, Vec<S::Action>)>
where
    S: TransitionState,
    F: FnMut(&S) -> Result<FeatureVector>,
{
    let label_of = action_label_map::<S::Action>(model)?;
    let mut state = initial;
    let limit = state.step_limit();
    let mut actions = Vec::new();
    while !state.is_terminal() {
        if actions.len() >= limit {
            return Err(Error::internal(format!("decoding exceeded the step limit of {limit}")));
        }
        let scores = model.scores(&features(&state)?)?;
        let mut best: Option<(usize, S::Action)> = None;
        for (k, &a) in S::Action::ALL.iter().enumerate() {
            if !state.is_legal(a) {
                continue;
            }
            let l = label_of[k];
            best = match best {
                Some((bl, _)) if scores[bl] > scores[l] || (scores[bl] == scores[l] && bl < l) => best,
                _ => Some((l, a)),
            };
        }
        let (_, action) = best.ok_or_else(|| Error::internal("no legal action in a non-terminal state"))?;
        state.apply(action)?;
        actions.push(action);
    }
    Ok((state, actions))
}
