use serde::{Deserialize, Serialize};

use super::{EpisodeConfig, State, TokenId, Vocab};
use crate::error::{Result, VasError};

/// Terminal reward. Callers guarantee `state` is terminal.
pub trait RewardFn: Send + Sync {
    fn score(&self, state: &State) -> f64;
}

impl<R: RewardFn + ?Sized> RewardFn for &R {
    fn score(&self, state: &State) -> f64 {
        (**self).score(state)
    }
}

impl<R: RewardFn + ?Sized> RewardFn for Box<R> {
    fn score(&self, state: &State) -> f64 {
        (**self).score(state)
    }
}

impl<R: RewardFn + ?Sized> RewardFn for std::sync::Arc<R> {
    fn score(&self, state: &State) -> f64 {
        (**self).score(state)
    }
}

/// Toy reward functions. All of them look only at the generated tokens with
/// a trailing eos removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSpec {
    /// 1 if the content contains `pattern` as a contiguous run, else 0.
    Pattern { pattern: Vec<TokenId> },
    /// `-scale * len(content)`.
    NegLength { scale: f64 },
    /// Fraction of content tokens inside `subset`; 0 for empty content.
    TokenClass { subset: Vec<TokenId> },
    Linear {
        weights: Vec<f64>,
        specs: Vec<RewardSpec>,
    },
}

impl RewardSpec {
    pub fn pattern(pattern: Vec<TokenId>) -> Self {
        RewardSpec::Pattern { pattern }
    }

    pub fn neg_length(scale: f64) -> Self {
        RewardSpec::NegLength { scale }
    }

    pub fn token_class(subset: Vec<TokenId>) -> Self {
        RewardSpec::TokenClass { subset }
    }

    pub fn linear(weights: Vec<f64>, specs: Vec<RewardSpec>) -> Self {
        RewardSpec::Linear { weights, specs }
    }

    /// Checks the spec against a vocabulary and binds its eos token.
    pub fn compile(&self, vocab: &Vocab) -> Result<Reward> {
        self.validate(vocab)?;
        Ok(Reward {
            spec: self.clone(),
            eos: vocab.eos(),
        })
    }

    fn validate(&self, vocab: &Vocab) -> Result<()> {
        match self {
            RewardSpec::Pattern { pattern } => {
                pattern.iter().try_for_each(|t| vocab.check(*t).map(drop))
            }
            RewardSpec::NegLength { scale } if !scale.is_finite() => Err(VasError::InvalidParam(
                "neg_length scale must be finite".into(),
            )),
            RewardSpec::NegLength { .. } => Ok(()),
            RewardSpec::TokenClass { subset } => {
                subset.iter().try_for_each(|t| vocab.check(*t).map(drop))
            }
            RewardSpec::Linear { weights, specs } => {
                if specs.is_empty() {
                    return Err(VasError::InvalidParam(
                        "linear reward needs >= 1 spec".into(),
                    ));
                }
                if weights.len() != specs.len() {
                    return Err(VasError::LengthMismatch {
                        left: weights.len(),
                        right: specs.len(),
                    });
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(VasError::InvalidParam(
                        "linear weights must be finite".into(),
                    ));
                }
                specs.iter().try_for_each(|s| s.validate(vocab))
            }
        }
    }

    fn eval_content(&self, content: &[TokenId]) -> f64 {
        match self {
            RewardSpec::Pattern { pattern } => {
                let hit = pattern.is_empty()
                    || content
                        .windows(pattern.len())
                        .any(|w| w == pattern.as_slice());
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            RewardSpec::NegLength { scale } => -scale * content.len() as f64,
            RewardSpec::TokenClass { subset } => {
                if content.is_empty() {
                    0.0
                } else {
                    let n = content.iter().filter(|t| subset.contains(t)).count();
                    n as f64 / content.len() as f64
                }
            }
            RewardSpec::Linear { weights, specs } => weights
                .iter()
                .zip(specs)
                .map(|(w, s)| w * s.eval_content(content))
                .sum(),
        }
    }
}

/// A [`RewardSpec`] bound to a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Reward {
    spec: RewardSpec,
    eos: Option<TokenId>,
}

impl Reward {
    pub fn spec(&self) -> &RewardSpec {
        &self.spec
    }
}

impl RewardFn for Reward {
    fn score(&self, state: &State) -> f64 {
        self.spec.eval_content(state.content(self.eos))
    }
}

/// Scores a terminal state, rejecting non-terminal ones.
pub fn reward_eval(reward: &dyn RewardFn, state: &State, config: &EpisodeConfig) -> Result<f64> {
    if !config.is_terminal(state) {
        return Err(VasError::NonTerminal);
    }
    Ok(reward.score(state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (EpisodeConfig, Vocab) {
        let v = Vocab::from_labels(&["a", "b", "<eos>"], Some(2)).unwrap();
        (EpisodeConfig::new(v.clone(), 3).unwrap(), v)
    }

    fn st(v: &Vocab, s: &str) -> State {
        State::with_generated(vec![], v.parse(s).unwrap())
    }

    #[test]
    fn pattern_and_length() {
        let (cfg, v) = setup();
        let pat = RewardSpec::pattern(v.parse("ab").unwrap())
            .compile(&v)
            .unwrap();
        assert_eq!(reward_eval(&pat, &st(&v, "aab"), &cfg).unwrap(), 1.0);
        assert_eq!(reward_eval(&pat, &st(&v, "bba"), &cfg).unwrap(), 0.0);
        assert_eq!(reward_eval(&pat, &st(&v, "a b <eos>"), &cfg).unwrap(), 1.0);
        let len = RewardSpec::neg_length(1.0).compile(&v).unwrap();
        assert_eq!(reward_eval(&len, &st(&v, "a b <eos>"), &cfg).unwrap(), -2.0);
        assert_eq!(reward_eval(&len, &st(&v, "<eos>"), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn linear_combination() {
        let (cfg, v) = setup();
        let r = RewardSpec::linear(
            vec![0.5, 0.5],
            vec![
                RewardSpec::pattern(v.parse("ab").unwrap()),
                RewardSpec::neg_length(1.0),
            ],
        )
        .compile(&v)
        .unwrap();
        assert_eq!(reward_eval(&r, &st(&v, "a b <eos>"), &cfg).unwrap(), -0.5);
    }

    #[test]
    fn token_class_fraction() {
        let (cfg, v) = setup();
        let r = RewardSpec::token_class(vec![TokenId(1)])
            .compile(&v)
            .unwrap();
        assert!((reward_eval(&r, &st(&v, "abb"), &cfg).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(reward_eval(&r, &st(&v, "<eos>"), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn rejects_non_terminal_and_bad_specs() {
        let (cfg, v) = setup();
        let r = RewardSpec::neg_length(1.0).compile(&v).unwrap();
        assert_eq!(
            reward_eval(&r, &st(&v, "ab"), &cfg),
            Err(VasError::NonTerminal)
        );
        assert!(RewardSpec::linear(vec![], vec![]).compile(&v).is_err());
        assert!(
            RewardSpec::linear(vec![f64::NAN], vec![RewardSpec::neg_length(1.0)])
                .compile(&v)
                .is_err()
        );
        assert!(RewardSpec::pattern(vec![TokenId(9)]).compile(&v).is_err());
    }

    #[test]
    fn spec_json() {
        let s: RewardSpec = serde_json::from_str(
            r#"{"kind":"linear","weights":[1.0],"specs":[{"kind":"pattern","pattern":[0,1]}]}"#,
        )
        .unwrap();
        assert_eq!(
            s,
            RewardSpec::linear(
                vec![1.0],
                vec![RewardSpec::pattern(vec![TokenId(0), TokenId(1)])]
            )
        );
    }
}
