use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    policy::sample_index, temperature_transform, EpisodeConfig, Policy, RewardFn, State, TokenId,
};
use crate::error::{Result, VasError};
use crate::seed::rng_from_seed;

/// One episode: the chosen tokens, every visited state (root through
/// terminal) and the terminal reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub prompt: Vec<TokenId>,
    pub tokens: Vec<TokenId>,
    pub states: Vec<State>,
    pub reward: f64,
    pub seed: u64,
}

impl Trajectory {
    /// Rebuilds a trajectory from its token stream, recomputing every state.
    pub fn from_tokens(
        prompt: Vec<TokenId>,
        tokens: Vec<TokenId>,
        reward: f64,
        seed: u64,
        config: &EpisodeConfig,
    ) -> Result<Self> {
        let mut states = vec![State::new(prompt.clone())];
        for &t in &tokens {
            let next = config.transition(states.last().unwrap(), t)?;
            states.push(next);
        }
        if !config.is_terminal(states.last().unwrap()) {
            return Err(VasError::NonTerminal);
        }
        if !reward.is_finite() {
            return Err(VasError::NonFinite("trajectory reward".into()));
        }
        Ok(Trajectory {
            prompt,
            tokens,
            states,
            reward,
            seed,
        })
    }

    pub fn terminal(&self) -> &State {
        self.states.last().expect("trajectory has a root state")
    }

    pub fn to_record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            prompt: self.prompt.iter().map(|t| t.0).collect(),
            tokens: self.tokens.iter().map(|t| t.0).collect(),
            reward: self.reward,
            seed: self.seed,
        }
    }
}

/// JSONL line for a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub prompt: Vec<usize>,
    pub tokens: Vec<usize>,
    pub reward: f64,
    pub seed: u64,
}

impl TrajectoryRecord {
    pub fn into_trajectory(self, config: &EpisodeConfig) -> Result<Trajectory> {
        Trajectory::from_tokens(
            self.prompt.into_iter().map(TokenId).collect(),
            self.tokens.into_iter().map(TokenId).collect(),
            self.reward,
            self.seed,
            config,
        )
    }
}

pub(crate) fn rollout_with_rng<P, R, G>(
    policy: &P,
    reward: &R,
    prompt: &[TokenId],
    config: &EpisodeConfig,
    rng: &mut G,
    temperature: f64,
    seed: u64,
) -> Result<Trajectory>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
    G: Rng + ?Sized,
{
    if !(temperature > 0.0) {
        return Err(VasError::InvalidParam(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let mut state = State::new(prompt.to_vec());
    let mut states = vec![state.clone()];
    let mut tokens = Vec::new();
    while !config.is_terminal(&state) {
        let dist = temperature_transform(&policy.next_dist(&state)?, temperature)?;
        let token = TokenId(sample_index(&dist, rng));
        state = config.transition(&state, token)?;
        tokens.push(token);
        states.push(state.clone());
    }
    let r = reward.score(&state);
    if !r.is_finite() {
        return Err(VasError::NonFinite("reward".into()));
    }
    Ok(Trajectory {
        prompt: prompt.to_vec(),
        tokens,
        states,
        reward: r,
        seed,
    })
}

/// Samples one episode from `policy` at `temperature`, using a generator
/// seeded with `seed`.
pub fn rollout<P, R>(
    policy: &P,
    reward: &R,
    prompt: &[TokenId],
    config: &EpisodeConfig,
    seed: u64,
    temperature: f64,
) -> Result<Trajectory>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let mut rng = rng_from_seed(seed);
    rollout_with_rng(policy, reward, prompt, config, &mut rng, temperature, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{PointMassPolicy, RewardSpec, UniformPolicy, Vocab};

    #[test]
    fn point_mass_without_eos() {
        let v = Vocab::from_labels(&["a", "b"], None).unwrap();
        let cfg = EpisodeConfig::new(v.clone(), 2).unwrap();
        let p = PointMassPolicy {
            size: 2,
            token: TokenId(0),
        };
        let r = RewardSpec::neg_length(1.0).compile(&v).unwrap();
        for seed in 0..20 {
            let t = rollout(&p, &r, &[], &cfg, seed, 1.0).unwrap();
            assert_eq!(t.tokens, vec![TokenId(0), TokenId(0)]);
            assert_eq!(t.reward, -2.0);
        }
    }

    #[test]
    fn replay_and_determinism() {
        let v = Vocab::from_labels(&["a", "b", "c", "<eos>"], Some(3)).unwrap();
        let cfg = EpisodeConfig::new(v.clone(), 5).unwrap();
        let p = UniformPolicy { size: 4 };
        let r = RewardSpec::neg_length(1.0).compile(&v).unwrap();
        for seed in 0..50 {
            let t = rollout(&p, &r, &[TokenId(1)], &cfg, seed, 0.7).unwrap();
            let again = rollout(&p, &r, &[TokenId(1)], &cfg, seed, 0.7).unwrap();
            assert_eq!(t, again);
            let replay =
                Trajectory::from_tokens(t.prompt.clone(), t.tokens.clone(), t.reward, seed, &cfg)
                    .unwrap();
            assert_eq!(replay.states, t.states);
            let rec = t.to_record();
            let line = serde_json::to_string(&rec).unwrap();
            let back: TrajectoryRecord = serde_json::from_str(&line).unwrap();
            assert_eq!(back.into_trajectory(&cfg).unwrap(), t);
        }
    }

    #[test]
    fn greedy_limit_breaks_ties_low() {
        let v = Vocab::from_labels(&["a", "b", "<eos>"], Some(2)).unwrap();
        let cfg = EpisodeConfig::new(v.clone(), 2).unwrap();
        let r = RewardSpec::neg_length(1.0).compile(&v).unwrap();
        let t = rollout(&UniformPolicy { size: 3 }, &r, &[], &cfg, 9, 1e-9).unwrap();
        assert_eq!(t.tokens, vec![TokenId(0), TokenId(0)]);
    }

    #[test]
    fn rejects_bad_temperature() {
        let v = Vocab::from_labels(&["a", "b"], None).unwrap();
        let cfg = EpisodeConfig::new(v.clone(), 2).unwrap();
        let r = RewardSpec::neg_length(1.0).compile(&v).unwrap();
        assert!(rollout(&UniformPolicy { size: 2 }, &r, &[], &cfg, 0, 0.0).is_err());
    }
}
