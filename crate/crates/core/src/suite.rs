//! Bundled small instances whose full state space can be enumerated.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{EpisodeConfig, Policy, PolicySpec, Reward, RewardSpec, TokenId, Vocab};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteInstance {
    pub name: String,
    pub vocab: Vocab,
    pub max_new_tokens: usize,
    pub policy: PolicySpec,
    pub reward: RewardSpec,
    pub prompt: Vec<TokenId>,
}

impl SuiteInstance {
    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig::new(self.vocab.clone(), self.max_new_tokens)
            .expect("bundled instance is valid")
    }

    pub fn build(&self) -> Result<(Box<dyn Policy>, Reward)> {
        Ok((
            self.policy.build(&self.vocab)?,
            self.reward.compile(&self.vocab)?,
        ))
    }

    pub fn with_reward(&self, name: &str, reward: RewardSpec) -> Self {
        SuiteInstance {
            name: name.to_string(),
            reward,
            ..self.clone()
        }
    }
}

fn vocab(labels: &[&str]) -> Vocab {
    Vocab::from_labels(labels, Some(labels.len() - 1)).expect("bundled vocab")
}

fn ids(v: &Vocab, text: &str) -> Vec<TokenId> {
    v.parse(text).expect("bundled pattern")
}

/// Uniform policy over `{a, b, <eos>}`, two new tokens, reward 1 iff the
/// content contains "ab".
pub fn tiny_ab() -> SuiteInstance {
    let v = vocab(&["a", "b", "<eos>"]);
    SuiteInstance {
        name: "tiny_ab".into(),
        reward: RewardSpec::pattern(ids(&v, "ab")),
        vocab: v,
        max_new_tokens: 2,
        policy: PolicySpec::Uniform,
        prompt: vec![],
    }
}

/// Smoothed bigram over `{a, b, c, <eos>}` trained to rarely produce "ca".
pub fn bigram_pattern() -> SuiteInstance {
    let v = vocab(&["a", "b", "c", "<eos>"]);
    SuiteInstance {
        name: "bigram_pattern".into(),
        reward: RewardSpec::pattern(ids(&v, "ca")),
        vocab: v,
        max_new_tokens: 4,
        policy: PolicySpec::Bigram {
            corpus: vec![
                "abcb<eos>".into(),
                "bacb".into(),
                "cbab<eos>".into(),
                "aabc<eos>".into(),
            ],
            alpha: 0.5,
        },
        prompt: vec![],
    }
}

/// Hash-derived policy over `{a, b, c, <eos>}` that tends to run long;
/// reward is minus the content length.
pub fn verbose_neglen() -> SuiteInstance {
    let v = vocab(&["a", "b", "c", "<eos>"]);
    SuiteInstance {
        name: "verbose_neglen".into(),
        reward: RewardSpec::neg_length(1.0),
        vocab: v,
        max_new_tokens: 5,
        policy: PolicySpec::Random {
            seed: 7,
            sharpness: 1.0,
        },
        prompt: vec![],
    }
}

/// Five-token vocabulary; reward is the fraction of "formal" tokens c, d.
pub fn formality() -> SuiteInstance {
    let v = vocab(&["a", "b", "c", "d", "<eos>"]);
    SuiteInstance {
        name: "formality".into(),
        reward: RewardSpec::token_class(ids(&v, "c d")),
        vocab: v,
        max_new_tokens: 4,
        policy: PolicySpec::Random {
            seed: 11,
            sharpness: 1.5,
        },
        prompt: vec![],
    }
}

/// Six-step bigram with a mixed objective: find "ab" while staying short.
pub fn mixed_objective() -> SuiteInstance {
    let v = vocab(&["a", "b", "<eos>"]);
    SuiteInstance {
        name: "mixed_objective".into(),
        reward: RewardSpec::linear(
            vec![1.0, 0.5],
            vec![
                RewardSpec::pattern(ids(&v, "ab")),
                RewardSpec::neg_length(0.25),
            ],
        ),
        vocab: v,
        max_new_tokens: 6,
        policy: PolicySpec::Bigram {
            corpus: vec!["bbab<eos>".into(), "aaab".into(), "bba<eos>".into()],
            alpha: 1.0,
        },
        prompt: vec![],
    }
}

/// Every bundled instance.
pub fn all() -> Vec<SuiteInstance> {
    vec![
        tiny_ab(),
        bigram_pattern(),
        verbose_neglen(),
        formality(),
        mixed_objective(),
    ]
}

pub fn by_name(name: &str) -> Option<SuiteInstance> {
    all().into_iter().find(|s| s.name == name)
}
