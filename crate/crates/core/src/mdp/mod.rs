//! Token-generation MDP: vocabularies, states, deterministic concatenation
//! transitions, toy base policies, terminal rewards and seeded rollouts.
//!
//! A state is the prompt plus the tokens generated so far. Emitting a token
//! appends it; an episode ends when the end-of-sequence token is emitted or
//! `max_new_tokens` tokens have been generated. Rewards are collected only at
//! terminal states.

mod policy;
mod reward;
mod rollout;

pub use policy::{
    sample_index, temperature_transform, train_bigram, BigramPolicy, PointMassPolicy, Policy,
    PolicySpec, RandomPolicy, UniformPolicy, GREEDY_TEMPERATURE,
};
pub use reward::{reward_eval, Reward, RewardFn, RewardSpec};
pub(crate) use rollout::rollout_with_rng;
pub use rollout::{rollout, Trajectory, TrajectoryRecord};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Result, VasError};

/// Largest vocabulary accepted by [`Vocab::new`].
pub const DEFAULT_VOCAB_CAP: usize = 64;

/// Index into a [`Vocab`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub usize);

impl TokenId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct VocabRepr {
    labels: Vec<String>,
    eos_id: Option<usize>,
}

/// Ordered set of token labels, optionally with an end-of-sequence token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    labels: Vec<String>,
    eos: Option<TokenId>,
}

impl TryFrom<VocabRepr> for Vocab {
    type Error = VasError;

    fn try_from(r: VocabRepr) -> Result<Self> {
        Vocab::new(r.labels, r.eos_id)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            labels: v.labels,
            eos_id: v.eos.map(TokenId::index),
        }
    }
}

impl Vocab {
    pub fn new(labels: Vec<String>, eos_id: Option<usize>) -> Result<Self> {
        Self::with_cap(labels, eos_id, DEFAULT_VOCAB_CAP)
    }

    pub fn with_cap(labels: Vec<String>, eos_id: Option<usize>, cap: usize) -> Result<Self> {
        if labels.len() < 2 || labels.len() > cap {
            return Err(VasError::InvalidVocab(format!(
                "size {} outside [2, {cap}]",
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(VasError::InvalidVocab(format!("duplicate label {l:?}")));
            }
        }
        if let Some(e) = eos_id {
            if e >= labels.len() {
                return Err(VasError::InvalidVocab(format!("eos_id {e} out of range")));
            }
        }
        Ok(Vocab {
            labels,
            eos: eos_id.map(TokenId),
        })
    }

    /// Convenience constructor from string slices.
    pub fn from_labels(labels: &[&str], eos_id: Option<usize>) -> Result<Self> {
        Self::new(labels.iter().map(|s| s.to_string()).collect(), eos_id)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, token: TokenId) -> &str {
        &self.labels[token.0]
    }

    pub fn token(&self, label: &str) -> Option<TokenId> {
        self.labels.iter().position(|l| l == label).map(TokenId)
    }

    pub fn check(&self, token: TokenId) -> Result<TokenId> {
        if token.0 < self.labels.len() {
            Ok(token)
        } else {
            Err(VasError::InvalidToken {
                token: token.0,
                size: self.labels.len(),
            })
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenId> {
        (0..self.labels.len()).map(TokenId)
    }

    /// Parses text into tokens: whitespace separates pieces, and each piece
    /// is split by greedy longest-label matching (so `"ab<eos>"` works).
    pub fn parse(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut out = Vec::new();
        for piece in text.split_whitespace() {
            let mut rest = piece;
            while !rest.is_empty() {
                let best = self
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| !l.is_empty() && rest.starts_with(l.as_str()))
                    .max_by_key(|(i, l)| (l.len(), std::cmp::Reverse(*i)))
                    .ok_or_else(|| VasError::InvalidVocab(format!("cannot parse {rest:?}")))?;
                out.push(TokenId(best.0));
                rest = &rest[best.1.len()..];
            }
        }
        Ok(out)
    }

    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|t| self.labels[t.0].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Episode horizon plus the vocabulary it runs over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_new_tokens: usize,
    pub vocab: Vocab,
}

impl EpisodeConfig {
    pub fn new(vocab: Vocab, max_new_tokens: usize) -> Result<Self> {
        if max_new_tokens == 0 {
            return Err(VasError::InvalidParam("max_new_tokens must be >= 1".into()));
        }
        Ok(EpisodeConfig {
            max_new_tokens,
            vocab,
        })
    }

    pub fn is_terminal(&self, state: &State) -> bool {
        is_terminal(state, self)
    }

    pub fn transition(&self, state: &State, token: TokenId) -> Result<State> {
        transition(state, token, self)
    }
}

/// Prompt tokens plus generated tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct State {
    pub prompt: Vec<TokenId>,
    pub generated: Vec<TokenId>,
}

impl State {
    pub fn new(prompt: Vec<TokenId>) -> Self {
        State {
            prompt,
            generated: Vec::new(),
        }
    }

    pub fn with_generated(prompt: Vec<TokenId>, generated: Vec<TokenId>) -> Self {
        State { prompt, generated }
    }

    /// Appends `token` without any terminal or range checks.
    pub fn child(&self, token: TokenId) -> State {
        let mut generated = Vec::with_capacity(self.generated.len() + 1);
        generated.extend_from_slice(&self.generated);
        generated.push(token);
        State {
            prompt: self.prompt.clone(),
            generated,
        }
    }

    /// Last token of prompt ⊕ generated.
    pub fn last_token(&self) -> Option<TokenId> {
        self.generated.last().or(self.prompt.last()).copied()
    }

    pub fn ends_with(&self, token: Option<TokenId>) -> bool {
        matches!((self.generated.last(), token), (Some(a), Some(b)) if *a == b)
    }

    /// Generated tokens with a trailing eos stripped.
    pub fn content(&self, eos: Option<TokenId>) -> &[TokenId] {
        if self.ends_with(eos) {
            &self.generated[..self.generated.len() - 1]
        } else {
            &self.generated
        }
    }

    /// Comma-separated generated token ids; the empty string for the root.
    pub fn key(&self) -> String {
        self.generated
            .iter()
            .map(|t| t.0.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_key(prompt: &[TokenId], key: &str) -> Result<State> {
        let generated = if key.is_empty() {
            Vec::new()
        } else {
            key.split(',')
                .map(|p| {
                    p.parse::<usize>()
                        .map(TokenId)
                        .map_err(|_| VasError::UnknownState(key.to_string()))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(State::with_generated(prompt.to_vec(), generated))
    }
}

pub fn is_terminal(state: &State, config: &EpisodeConfig) -> bool {
    state.ends_with(config.vocab.eos()) || state.generated.len() >= config.max_new_tokens
}

/// Deterministic concatenation step.
pub fn transition(state: &State, token: TokenId, config: &EpisodeConfig) -> Result<State> {
    if is_terminal(state, config) {
        return Err(VasError::TerminalState);
    }
    config.vocab.check(token)?;
    Ok(state.child(token))
}
