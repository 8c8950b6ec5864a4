use crate::error::{Result, VasError};
use crate::mdp::{
    rollout, sample_index, temperature_transform, EpisodeConfig, Policy, RewardFn, State, TokenId,
    Trajectory,
};
use crate::seed::{derive_seed, rng_from_seed};
use crate::value::ValueEstimator;

use super::DecodeParams;

/// Samples `n` rollouts (seeds `derive_seed(seed, "bon", i)`) and keeps the
/// highest reward, ties to the earliest.
pub fn best_of_n<P, R>(
    policy: &P,
    reward: &R,
    prompt: &[TokenId],
    config: &EpisodeConfig,
    n: usize,
    seed: u64,
    temperature: f64,
) -> Result<Trajectory>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if n == 0 {
        return Err(VasError::InvalidParam("N must be >= 1".into()));
    }
    let mut best: Option<Trajectory> = None;
    for i in 0..n {
        let t = rollout(
            policy,
            reward,
            prompt,
            config,
            derive_seed(seed, "bon", i as u64),
            temperature,
        )?;
        if best.as_ref().is_none_or(|b| t.reward > b.reward) {
            best = Some(t);
        }
    }
    Ok(best.expect("n >= 1"))
}

/// One FUDGE step: base probabilities times the classifier probability of
/// each child, renormalized. Falls back to the base distribution when every
/// weight is zero.
pub fn fudge_step<P, C>(
    policy: &P,
    classifier: &C,
    state: &State,
    temperature: f64,
) -> Result<Vec<f64>>
where
    P: Policy + ?Sized,
    C: ValueEstimator + ?Sized,
{
    let base = temperature_transform(&policy.next_dist(state)?, temperature)?;
    let c: Vec<f64> = (0..base.len())
        .map(|t| classifier.predict(&state.child(TokenId(t))))
        .collect();
    if let Some(&x) = c.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(VasError::ClassifierRange(x));
    }
    if c.windows(2).all(|w| w[0] == w[1]) && c[0] > 0.0 {
        return Ok(base);
    }
    let w: Vec<f64> = base.iter().zip(&c).map(|(p, c)| p * c).collect();
    let z: f64 = w.iter().sum();
    if z <= 0.0 {
        log::warn!(
            "classifier gives zero mass at state [{}]; using the base distribution",
            state.key()
        );
        return Ok(base);
    }
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// FUDGE decoding with a partial-sequence classifier in `[0, 1]`; only
/// `params.temperature` and `params.seed` are used.
pub fn fudge_decode<P, C, R>(
    policy: &P,
    classifier: &C,
    reward: &R,
    prompt: &[TokenId],
    config: &EpisodeConfig,
    params: &DecodeParams,
) -> Result<Trajectory>
where
    P: Policy + ?Sized,
    C: ValueEstimator + ?Sized,
    R: RewardFn + ?Sized,
{
    let mut rng = rng_from_seed(params.seed);
    let mut state = State::new(prompt.to_vec());
    let mut tokens = Vec::new();
    while !config.is_terminal(&state) {
        let d = fudge_step(policy, classifier, &state, params.temperature)?;
        let t = TokenId(sample_index(&d, &mut rng));
        state = config.transition(&state, t)?;
        tokens.push(t);
    }
    let r = reward.score(&state);
    Trajectory::from_tokens(prompt.to_vec(), tokens, r, params.seed, config)
}
