//! Value-augmented decoding: the base next-token distribution is tilted by
//! `exp(β·V(s ⊕ x))`, over the whole vocabulary or over the top-k tokens
//! with a mean-value fallback for the rest. Also a greedy rerank over a
//! top-k log-probability view, a linear composition of estimators, and the
//! Best-of-N and FUDGE baselines.

mod baselines;
mod blackbox;
mod compose;

pub use baselines::{best_of_n, fudge_decode, fudge_step};
pub use blackbox::{rerank_blackbox, LocalTopK, RestrictedPolicyView, DEFAULT_PROVIDER_CAP};
pub use compose::{compose, CompositeValue};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VasError};
use crate::mdp::{
    sample_index, temperature_transform, EpisodeConfig, Policy, RewardFn, State, TokenId,
    Trajectory,
};
use crate::seed::rng_from_seed;
use crate::value::{QEstimator, ValueEstimator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Tokens outside the top-k share the mean of the k evaluated values.
    MeanValue,
    /// Tokens outside the top-k keep their base weight.
    BaseOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Full,
    Topk,
    BlackboxRerank,
}

impl std::str::FromStr for DecodeMode {
    type Err = VasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(DecodeMode::Full),
            "topk" => Ok(DecodeMode::Topk),
            "blackbox_rerank" => Ok(DecodeMode::BlackboxRerank),
            other => Err(VasError::InvalidParam(format!(
                "unknown decode mode {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::Full => "full",
            DecodeMode::Topk => "topk",
            DecodeMode::BlackboxRerank => "blackbox_rerank",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeParams {
    pub beta: f64,
    pub top_k: usize,
    pub fallback: Fallback,
    pub temperature: f64,
    pub mode: DecodeMode,
    pub seed: u64,
    /// Blackbox mode only: sample from the softmax of the candidate scores
    /// instead of taking the argmax.
    pub blackbox_sampling: bool,
    /// Top-k cap of the log-probability provider in blackbox mode.
    pub provider_cap: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            beta: 1.0,
            top_k: 1,
            fallback: Fallback::MeanValue,
            temperature: 1.0,
            mode: DecodeMode::Full,
            seed: 0,
            blackbox_sampling: false,
            provider_cap: DEFAULT_PROVIDER_CAP,
        }
    }
}

impl DecodeParams {
    pub fn full(beta: f64) -> Self {
        DecodeParams {
            beta,
            ..Default::default()
        }
    }

    pub fn topk(beta: f64, k: usize, fallback: Fallback) -> Self {
        DecodeParams {
            beta,
            top_k: k,
            fallback,
            mode: DecodeMode::Topk,
            ..Default::default()
        }
    }

    pub fn blackbox(beta: f64, k: usize) -> Self {
        DecodeParams {
            beta,
            top_k: k,
            mode: DecodeMode::BlackboxRerank,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(VasError::InvalidParam(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(VasError::InvalidParam(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.top_k == 0 {
            return Err(VasError::InvalidParam("top_k must be >= 1".into()));
        }
        match self.mode {
            DecodeMode::Topk if self.top_k > vocab_size => Err(VasError::InvalidParam(format!(
                "top_k {} exceeds vocab size {vocab_size}",
                self.top_k
            ))),
            DecodeMode::BlackboxRerank if self.top_k > self.provider_cap => {
                Err(VasError::InvalidParam(format!(
                    "top_k {} exceeds provider cap {}",
                    self.top_k, self.provider_cap
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Per-token value of moving from `state` to `state ⊕ x`.
pub trait TokenValues: Send + Sync {
    fn token_values(&self, state: &State, tokens: &[TokenId]) -> Vec<f64>;
}

impl<E: ValueEstimator + ?Sized> TokenValues for E {
    fn token_values(&self, state: &State, tokens: &[TokenId]) -> Vec<f64> {
        tokens
            .iter()
            .map(|&t| self.predict(&state.child(t)))
            .collect()
    }
}

/// Uses a Q estimator's row directly as the per-token values.
pub struct QValues<'a, Q: QEstimator + ?Sized>(pub &'a Q);

impl<Q: QEstimator + ?Sized> TokenValues for QValues<'_, Q> {
    fn token_values(&self, state: &State, tokens: &[TokenId]) -> Vec<f64> {
        let row = self.0.predict_all(state);
        tokens.iter().map(|t| row[t.0]).collect()
    }
}

fn check_inputs(base: &[f64], values: &[f64]) -> Result<()> {
    if base.len() != values.len() {
        return Err(VasError::DimensionMismatch {
            expected: base.len(),
            got: values.len(),
        });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(VasError::NonFinite(format!("value estimate {v}")));
    }
    Ok(())
}

fn all_equal(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// `weights_i = base_i · exp(β·(v_i − max))`, normalized. Returns the
/// distribution and the normalizer. When `β = 0` or every value is equal
/// the base distribution is returned unchanged.
fn tilt(base: &[f64], values: &[f64], beta: f64) -> Result<(Vec<f64>, f64)> {
    if beta == 0.0 || all_equal(values) {
        return Ok((base.to_vec(), 1.0));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = base
        .iter()
        .zip(values)
        .map(|(&p, &v)| {
            if p > 0.0 {
                p * (beta * (v - max)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = w.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(VasError::ZeroMass);
    }
    Ok((w.into_iter().map(|x| x / z).collect(), z))
}

/// Full-vocabulary tilt: output ∝ `base_i · exp(β·values_i)`.
pub fn augment_full(base: &[f64], values: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_inputs(base, values)?;
    Ok(tilt(base, values, beta)?.0)
}

/// Token indices of the `k` largest entries, ties to the lowest index.
pub fn top_k_indices(p: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopkOutcome {
    pub candidates: Vec<TokenId>,
    pub values: Vec<f64>,
    pub mean_value: Option<f64>,
    pub normalizer: f64,
    pub dist: Vec<f64>,
}

/// Top-k tilt. `value_fn` is called once with the k candidate tokens.
pub fn augment_topk<F>(
    base: &[f64],
    value_fn: F,
    beta: f64,
    k: usize,
    fallback: Fallback,
) -> Result<TopkOutcome>
where
    F: FnOnce(&[TokenId]) -> Vec<f64>,
{
    if k == 0 || k > base.len() {
        return Err(VasError::InvalidParam(format!(
            "k must be in [1, {}], got {k}",
            base.len()
        )));
    }
    let candidates: Vec<TokenId> = top_k_indices(base, k).into_iter().map(TokenId).collect();
    let values = value_fn(&candidates);
    check_inputs(&vec![0.0; k], &values)?;
    // equal values average to themselves; summing could drift by an ulp
    let mean = if all_equal(&values) {
        values[0]
    } else {
        values.iter().sum::<f64>() / k as f64
    };
    let (dist, normalizer) = match fallback {
        Fallback::MeanValue => {
            let mut effective = vec![mean; base.len()];
            for (t, v) in candidates.iter().zip(&values) {
                effective[t.0] = *v;
            }
            tilt(base, &effective, beta)?
        }
        Fallback::BaseOnly => {
            if beta == 0.0 {
                (base.to_vec(), 1.0)
            } else {
                let max = values.iter().cloned().fold(0.0, f64::max);
                let mut w: Vec<f64> = base.iter().map(|&p| p * (-beta * max).exp()).collect();
                for (t, v) in candidates.iter().zip(&values) {
                    w[t.0] = base[t.0] * (beta * (v - max)).exp();
                }
                let z: f64 = w.iter().sum();
                if !(z > 0.0) || !z.is_finite() {
                    return Err(VasError::ZeroMass);
                }
                (w.into_iter().map(|x| x / z).collect(), z)
            }
        }
    };
    Ok(TopkOutcome {
        candidates,
        values,
        mean_value: (fallback == Fallback::MeanValue).then_some(mean),
        normalizer,
        dist,
    })
}

/// One decoding step, as written to the decode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedStep {
    pub state: String,
    pub candidates: Vec<TokenId>,
    pub base_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub mean_value: Option<f64>,
    pub normalizer: f64,
    pub dist: Vec<f64>,
    pub token: Option<TokenId>,
}

/// The decoded next-token distribution at `state`, without sampling.
pub fn step_distribution<P, S>(
    policy: &P,
    values: &S,
    state: &State,
    params: &DecodeParams,
) -> Result<AugmentedStep>
where
    P: Policy + ?Sized,
    S: TokenValues + ?Sized,
{
    let base = temperature_transform(&policy.next_dist(state)?, params.temperature)?;
    let n = base.len();
    let mut step = match params.mode {
        DecodeMode::Full => {
            let candidates: Vec<TokenId> = (0..n).map(TokenId).collect();
            let v = values.token_values(state, &candidates);
            check_inputs(&base, &v)?;
            let (dist, normalizer) = tilt(&base, &v, params.beta)?;
            AugmentedStep {
                state: state.key(),
                candidates,
                base_probs: vec![],
                values: v,
                mean_value: None,
                normalizer,
                dist,
                token: None,
            }
        }
        DecodeMode::Topk => {
            let o = augment_topk(
                &base,
                |c| values.token_values(state, c),
                params.beta,
                params.top_k,
                params.fallback,
            )?;
            AugmentedStep {
                state: state.key(),
                candidates: o.candidates,
                base_probs: vec![],
                values: o.values,
                mean_value: o.mean_value,
                normalizer: o.normalizer,
                dist: o.dist,
                token: None,
            }
        }
        DecodeMode::BlackboxRerank => {
            let view = LocalTopK::new(policy, params.provider_cap);
            blackbox::blackbox_step(&view, values, state, params, n)?
        }
    };
    step.base_probs = base;
    Ok(step)
}

/// Decodes one sequence. The generator is seeded from `params.seed` and
/// draws exactly one number per sampled step, like [`crate::mdp::rollout`].
pub fn decode_sequence<P, S, R>(
    policy: &P,
    values: &S,
    reward: &R,
    prompt: &[TokenId],
    config: &EpisodeConfig,
    params: &DecodeParams,
) -> Result<(Trajectory, Vec<AugmentedStep>)>
where
    P: Policy + ?Sized,
    S: TokenValues + ?Sized,
    R: RewardFn + ?Sized,
{
    params.validate(policy.vocab_size())?;
    let mut rng = rng_from_seed(params.seed);
    let mut state = State::new(prompt.to_vec());
    let mut tokens = Vec::new();
    let mut steps = Vec::new();
    while !config.is_terminal(&state) {
        let mut step = step_distribution(policy, values, &state, params)?;
        let greedy = params.mode == DecodeMode::BlackboxRerank && !params.blackbox_sampling;
        let token = if greedy {
            step.token.expect("greedy step chooses a token")
        } else {
            TokenId(sample_index(&step.dist, &mut rng))
        };
        step.token = Some(token);
        state = config.transition(&state, token)?;
        tokens.push(token);
        steps.push(step);
    }
    let r = reward.score(&state);
    if !r.is_finite() {
        return Err(VasError::NonFinite("reward".into()));
    }
    let traj = Trajectory::from_tokens(prompt.to_vec(), tokens, r, params.seed, config)?;
    Ok((traj, steps))
}

/// The decoded policy as a [`Policy`], for exact evaluation by the oracle.
pub struct VasPolicy<'a, P: Policy + ?Sized, S: TokenValues + ?Sized> {
    pub base: &'a P,
    pub values: &'a S,
    pub params: DecodeParams,
}

impl<'a, P: Policy + ?Sized, S: TokenValues + ?Sized> VasPolicy<'a, P, S> {
    pub fn new(base: &'a P, values: &'a S, params: DecodeParams) -> Self {
        VasPolicy {
            base,
            values,
            params,
        }
    }
}

impl<P: Policy + ?Sized, S: TokenValues + ?Sized> Policy for VasPolicy<'_, P, S> {
    fn vocab_size(&self) -> usize {
        self.base.vocab_size()
    }

    fn next_dist(&self, state: &State) -> Result<Vec<f64>> {
        Ok(step_distribution(self.base, self.values, state, &self.params)?.dist)
    }
}

/// Decoded trajectory as a JSONL record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub prompt: Vec<usize>,
    pub tokens: Vec<usize>,
    pub reward: f64,
    pub seed: u64,
    pub beta: f64,
    pub k: usize,
    pub mode: DecodeMode,
    pub estimator_checksum: String,
}

impl DecodeRecord {
    pub fn new(traj: &Trajectory, params: &DecodeParams, estimator_checksum: &str) -> Self {
        let r = traj.to_record();
        DecodeRecord {
            prompt: r.prompt,
            tokens: r.tokens,
            reward: r.reward,
            seed: r.seed,
            beta: params.beta,
            k: params.top_k,
            mode: params.mode,
            estimator_checksum: estimator_checksum.to_string(),
        }
    }
}
