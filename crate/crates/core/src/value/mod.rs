//! Value estimation for a frozen base policy: sampling a reward-labelled
//! dataset, TD(λ) regression targets, tabular/linear/MLP estimators, the
//! held-out validation protocol, finite-difference gradient checks, and
//! tabular Q estimators with exact or sampled bootstrapping.

mod checkpoint;
mod features;
mod linear;
mod mlp;
mod q;
mod tabular;
mod td;

pub use checkpoint::{AnyEstimator, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use features::Featurizer;
pub use linear::LinearValue;
pub use mlp::MlpValue;
pub use q::{fit_q, BaseAccess, BootstrapMode, QEstimator, QParameterization, TabularQ};
pub use tabular::TabularValue;
pub use td::{lambda_returns, td_lambda_targets, TdConfig};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VasError};
use crate::mdp::rollout_with_rng;
use crate::mdp::{EpisodeConfig, Policy, RewardFn, State, TokenId, Trajectory};
use crate::oracle::ValueTable;
use crate::seed::{derive_seed, rng_from_seed, substream};

/// Running mse above this aborts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Predicts the expected terminal reward of a state under the base policy.
pub trait ValueEstimator: Send + Sync {
    fn predict(&self, state: &State) -> f64;
}

impl<E: ValueEstimator + ?Sized> ValueEstimator for &E {
    fn predict(&self, state: &State) -> f64 {
        (**self).predict(state)
    }
}

impl<E: ValueEstimator + ?Sized> ValueEstimator for Box<E> {
    fn predict(&self, state: &State) -> f64 {
        (**self).predict(state)
    }
}

impl<E: ValueEstimator + ?Sized> ValueEstimator for std::sync::Arc<E> {
    fn predict(&self, state: &State) -> f64 {
        (**self).predict(state)
    }
}

/// Exact values; NaN for states outside the table.
impl ValueEstimator for ValueTable {
    fn predict(&self, state: &State) -> f64 {
        self.get(state).copied().unwrap_or(f64::NAN)
    }
}

/// Estimators that can be regressed onto targets.
pub trait TrainableValue: ValueEstimator {
    /// Called once before the first epoch.
    fn prepare(&mut self, _dataset: &TrajectoryDataset) {}

    fn begin_epoch(&mut self) {}

    /// One mini-batch step on squared error.
    fn update(&mut self, states: &[&State], targets: &[f64], lr: f64);
}

/// Estimators with analytic gradients of the batch loss
/// `L = mean_i (f(s_i) − y_i)²` with respect to a flat parameter vector.
pub trait Differentiable: ValueEstimator {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    fn loss_and_grad(&self, states: &[&State], targets: &[f64]) -> (f64, Vec<f64>);
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub policy: serde_json::Value,
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryDataset {
    pub trajectories: Vec<Trajectory>,
    pub meta: DatasetMeta,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Mean terminal reward; 0 for an empty dataset.
    pub fn label_mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.trajectories.iter().map(|t| t.reward).sum::<f64>() / self.len() as f64
    }

    /// First `n` trajectories, same metadata.
    pub fn truncated(&self, n: usize) -> Self {
        TrajectoryDataset {
            trajectories: self.trajectories.iter().take(n).cloned().collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Samples `n_per_prompt` trajectories per prompt at `temperature`.
/// Trajectory `i` (counting across prompts) uses the seed
/// `derive_seed(seed, "collect", i)`.
pub fn collect_dataset<P, R>(
    policy: &P,
    reward: &R,
    prompts: &[Vec<TokenId>],
    n_per_prompt: usize,
    temperature: f64,
    seed: u64,
    config: &EpisodeConfig,
) -> Result<TrajectoryDataset>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let mut trajectories = Vec::with_capacity(prompts.len() * n_per_prompt);
    let mut i = 0u64;
    for prompt in prompts {
        for _ in 0..n_per_prompt {
            let s = derive_seed(seed, "collect", i);
            let mut rng = rng_from_seed(s);
            trajectories.push(rollout_with_rng(
                policy,
                reward,
                prompt,
                config,
                &mut rng,
                temperature,
                s,
            )?);
            i += 1;
        }
    }
    Ok(TrajectoryDataset {
        trajectories,
        meta: DatasetMeta {
            policy: serde_json::Value::Null,
            temperature,
            seed,
        },
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epoch_mse: Vec<f64>,
}

/// Mini-batch regression onto TD(λ) targets, recomputed from the current
/// estimator at the start of every epoch. Every visited state is a training
/// example: non-terminal states take their λ-return, terminal states take
/// their reward.
pub fn fit_value<E: TrainableValue + ?Sized>(
    estimator: &mut E,
    dataset: &TrajectoryDataset,
    config: &TdConfig,
    episode: &EpisodeConfig,
) -> Result<TrainingLog> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(VasError::EmptyDataset);
    }
    estimator.prepare(dataset);
    let mut rng = rng_from_seed(config.seed);
    let mut log = TrainingLog::default();
    for _ in 0..config.epochs {
        let mut items: Vec<(&State, f64)> = Vec::new();
        for traj in &dataset.trajectories {
            let targets = td_lambda_targets(traj, &*estimator, config, episode)?;
            items.extend(traj.states.iter().zip(targets));
            items.push((traj.terminal(), traj.reward));
        }
        items.shuffle(&mut rng);
        estimator.begin_epoch();
        for batch in items.chunks(config.batch_size) {
            let states: Vec<&State> = batch.iter().map(|(s, _)| *s).collect();
            let targets: Vec<f64> = batch.iter().map(|(_, y)| *y).collect();
            let running: f64 = states
                .iter()
                .zip(&targets)
                .map(|(s, y)| (estimator.predict(s) - y).powi(2))
                .sum::<f64>()
                / batch.len() as f64;
            if !running.is_finite() || running > DIVERGENCE_LIMIT {
                return Err(VasError::Divergence(running));
            }
            estimator.update(&states, &targets, config.learning_rate);
        }
        let mse = items
            .iter()
            .map(|(s, y)| (estimator.predict(s) - y).powi(2))
            .sum::<f64>()
            / items.len() as f64;
        if !mse.is_finite() || mse > DIVERGENCE_LIMIT {
            return Err(VasError::Divergence(mse));
        }
        log.epoch_mse.push(mse);
    }
    Ok(log)
}

/// Prefix states labelled with the mean reward of `m` fresh completions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationSet {
    pub states: Vec<State>,
    pub labels: Vec<f64>,
    pub completions: usize,
}

impl ValidationSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Mean reward of `m` base-policy completions of `state`; the reward itself
/// for terminal states.
pub fn completion_label<P, R>(
    policy: &P,
    reward: &R,
    state: &State,
    m: usize,
    temperature: f64,
    config: &EpisodeConfig,
    rng: &mut crate::seed::Rng,
) -> Result<f64>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if m == 0 {
        return Err(VasError::InvalidParam("m must be >= 1".into()));
    }
    if config.is_terminal(state) {
        return Ok(reward.score(state));
    }
    let mut total = 0.0;
    for _ in 0..m {
        let mut s = state.clone();
        while !config.is_terminal(&s) {
            let d = crate::mdp::temperature_transform(&policy.next_dist(&s)?, temperature)?;
            s = config.transition(&s, TokenId(crate::mdp::sample_index(&d, rng)))?;
        }
        total += reward.score(&s);
    }
    Ok(total / m as f64)
}

/// For each prompt, `n_per_prompt` prefixes of `prefix_len` sampled tokens
/// (shorter if eos comes first), each labelled by [`completion_label`].
#[allow(clippy::too_many_arguments)]
pub fn make_validation_set<P, R>(
    policy: &P,
    reward: &R,
    prompts: &[Vec<TokenId>],
    n_per_prompt: usize,
    prefix_len: usize,
    m: usize,
    temperature: f64,
    seed: u64,
    config: &EpisodeConfig,
) -> Result<ValidationSet>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if prefix_len >= config.max_new_tokens {
        return Err(VasError::InvalidParam(
            "prefix_len must be < max_new_tokens".into(),
        ));
    }
    if m == 0 {
        return Err(VasError::InvalidParam("m must be >= 1".into()));
    }
    let mut set = ValidationSet {
        completions: m,
        ..Default::default()
    };
    let mut i = 0;
    for prompt in prompts {
        for _ in 0..n_per_prompt {
            let mut rng = substream(seed, "validation", i);
            i += 1;
            let mut s = State::new(prompt.clone());
            while s.generated.len() < prefix_len && !config.is_terminal(&s) {
                let d = crate::mdp::temperature_transform(&policy.next_dist(&s)?, temperature)?;
                s = config.transition(&s, TokenId(crate::mdp::sample_index(&d, &mut rng)))?;
            }
            let label = completion_label(policy, reward, &s, m, temperature, config, &mut rng)?;
            set.states.push(s);
            set.labels.push(label);
        }
    }
    Ok(set)
}

pub fn validation_mse<E: ValueEstimator + ?Sized>(
    estimator: &E,
    set: &ValidationSet,
) -> Result<f64> {
    if set.is_empty() {
        return Err(VasError::EmptyDataset);
    }
    Ok(set
        .states
        .iter()
        .zip(&set.labels)
        .map(|(s, y)| (estimator.predict(s) - y).powi(2))
        .sum::<f64>()
        / set.len() as f64)
}

/// Max relative error between the analytic gradient and central finite
/// differences, `|g_a − g_fd| / max(|g_a|, |g_fd|, 1e-12)`, over all
/// parameters.
pub fn grad_check<E: Differentiable + Clone>(
    estimator: &E,
    states: &[&State],
    targets: &[f64],
    eps: f64,
) -> Result<f64> {
    let params = estimator.params();
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(VasError::NonFiniteGradient(i));
    }
    let (_, analytic) = estimator.loss_and_grad(states, targets);
    let mut probe = estimator.clone();
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        p[i] = params[i] + eps;
        probe.set_params(&p);
        let (up, _) = probe.loss_and_grad(states, targets);
        p[i] = params[i] - eps;
        probe.set_params(&p);
        let (down, _) = probe.loss_and_grad(states, targets);
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        if !a.is_finite() || !numeric.is_finite() {
            return Err(VasError::NonFiniteGradient(i));
        }
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}
