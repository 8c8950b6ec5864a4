use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Result, VasError};
use crate::mdp::{EpisodeConfig, Policy, State, TokenId};
use crate::seed::rng_from_seed;

use super::{lambda_returns, TdConfig, TrainingLog, TrajectoryDataset, DIVERGENCE_LIMIT};

/// Per-token value estimates Q(s, x) for every token of the vocabulary.
pub trait QEstimator: Send + Sync {
    fn predict_all(&self, state: &State) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QParameterization {
    Flat,
    /// `q(s, x) = v(s) + a(s, x)`, advantages start at zero. With `center`
    /// the mean advantage over the vocabulary is subtracted (not part of the
    /// original dueling description; off by default).
    Dueling {
        center: bool,
    },
}

/// How bootstrap values `V(s)` are read off the Q estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// `V(s) = Σ_x π0(x|s)·Q(s, x)` using the base policy's full distribution.
    Exact,
    /// `V(s_i) = Q(s_i, x_{i+1})` using the token actually taken in the data.
    Sampled,
}

/// What the trainer can see of the base policy.
pub enum BaseAccess<'a> {
    Full(&'a dyn Policy),
    TopKOnly,
}

type Key = (Vec<TokenId>, Vec<TokenId>);

fn key(s: &State) -> Key {
    (s.prompt.clone(), s.generated.clone())
}

/// Tabular Q estimator. Flat tables fit each `(s, x)` cell to the running
/// mean of its targets per epoch; dueling tables take plain SGD steps of
/// size `learning_rate` on both heads.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularQ {
    vocab_size: usize,
    param: QParameterization,
    default: f64,
    /// Flat: the Q row. Dueling: the advantage row.
    rows: BTreeMap<Key, Vec<f64>>,
    /// Dueling state values.
    values: BTreeMap<Key, f64>,
    visits: BTreeMap<(Key, usize), u64>,
}

impl TabularQ {
    pub fn new(vocab_size: usize, param: QParameterization) -> Self {
        TabularQ {
            vocab_size,
            param,
            default: 0.0,
            rows: BTreeMap::new(),
            values: BTreeMap::new(),
            visits: BTreeMap::new(),
        }
    }

    pub fn parameterization(&self) -> QParameterization {
        self.param
    }

    /// Dueling value head v(s).
    pub fn state_value(&self, state: &State) -> f64 {
        self.values
            .get(&key(state))
            .copied()
            .unwrap_or(self.default)
    }

    /// Advantage row (zeros for flat tables or unseen states).
    pub fn advantages(&self, state: &State) -> Vec<f64> {
        match self.param {
            QParameterization::Flat => vec![0.0; self.vocab_size],
            QParameterization::Dueling { .. } => self
                .rows
                .get(&key(state))
                .cloned()
                .unwrap_or_else(|| vec![0.0; self.vocab_size]),
        }
    }

    pub fn predict(&self, state: &State, token: TokenId) -> f64 {
        self.predict_all(state)[token.0]
    }

    fn update(&mut self, state: &State, token: TokenId, target: f64, lr: f64) {
        let k = key(state);
        match self.param {
            QParameterization::Flat => {
                let default = self.default;
                let vs = self.vocab_size;
                let row = self
                    .rows
                    .entry(k.clone())
                    .or_insert_with(|| vec![default; vs]);
                let n = self.visits.entry((k, token.0)).or_insert(0);
                *n += 1;
                row[token.0] += (target - row[token.0]) / *n as f64;
            }
            QParameterization::Dueling { center } => {
                let q = self.predict(state, token);
                let err = target - q;
                let vs = self.vocab_size;
                *self.values.entry(k.clone()).or_insert(self.default) += lr * err;
                let row = self.rows.entry(k).or_insert_with(|| vec![0.0; vs]);
                if center {
                    // d q_x / d a_y = [x = y] − 1/|V|
                    let inv = 1.0 / vs as f64;
                    for (y, a) in row.iter_mut().enumerate() {
                        let d = if y == token.0 { 1.0 - inv } else { -inv };
                        *a += lr * err * d;
                    }
                } else {
                    row[token.0] += lr * err;
                }
            }
        }
    }
}

impl QEstimator for TabularQ {
    fn predict_all(&self, state: &State) -> Vec<f64> {
        match self.param {
            QParameterization::Flat => self
                .rows
                .get(&key(state))
                .cloned()
                .unwrap_or_else(|| vec![self.default; self.vocab_size]),
            QParameterization::Dueling { center } => {
                let v = self.state_value(state);
                let a = self.advantages(state);
                let shift = if center {
                    a.iter().sum::<f64>() / a.len() as f64
                } else {
                    0.0
                };
                a.into_iter().map(|a| v + a - shift).collect()
            }
        }
    }
}

/// TD(λ) regression of Q(s_t, x_{t+1}) onto the λ-return of s_{t+1}, with
/// bootstrap values derived from the current table per `mode`.
pub fn fit_q(
    q: &mut TabularQ,
    dataset: &TrajectoryDataset,
    config: &TdConfig,
    episode: &EpisodeConfig,
    mode: BootstrapMode,
    base: BaseAccess<'_>,
) -> Result<TrainingLog> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(VasError::EmptyDataset);
    }
    let policy = match (mode, base) {
        (BootstrapMode::Exact, BaseAccess::TopKOnly) => return Err(VasError::ModeUnavailable),
        (BootstrapMode::Exact, BaseAccess::Full(p)) => Some(p),
        (BootstrapMode::Sampled, _) => None,
    };
    q.default = dataset.label_mean();
    let mut rng = rng_from_seed(config.seed);
    let mut log = TrainingLog::default();
    for _ in 0..config.epochs {
        let mut items: Vec<(usize, usize, f64)> = Vec::new();
        for (ti, traj) in dataset.trajectories.iter().enumerate() {
            if !episode.is_terminal(traj.terminal()) {
                return Err(VasError::NonTerminal);
            }
            let n = traj.tokens.len();
            // bootstrap values of s_1 … s_{n-1}
            let mut values = Vec::with_capacity(n.saturating_sub(1));
            for i in 1..n {
                let s = &traj.states[i];
                let row = q.predict_all(s);
                let v = match policy {
                    Some(p) => {
                        let d = p.next_dist(s)?;
                        d.iter().zip(&row).map(|(p, q)| p * q).sum()
                    }
                    None => row[traj.tokens[i].0],
                };
                values.push(v);
            }
            let returns = lambda_returns(&values, traj.reward, config.lambda, config.gamma);
            let targets = returns.iter().copied().chain(std::iter::once(traj.reward));
            items.extend(
                targets
                    .enumerate()
                    .take(n)
                    .map(|(t, target)| (ti, t, target)),
            );
        }
        items.shuffle(&mut rng);
        q.visits.clear();
        for (ti, t, target) in &items {
            let traj = &dataset.trajectories[*ti];
            q.update(
                &traj.states[*t],
                traj.tokens[*t],
                *target,
                config.learning_rate,
            );
        }
        let mse = items
            .iter()
            .map(|(ti, t, y)| {
                let traj = &dataset.trajectories[*ti];
                let e = q.predict(&traj.states[*t], traj.tokens[*t]) - y;
                e * e
            })
            .sum::<f64>()
            / items.len().max(1) as f64;
        if !mse.is_finite() || mse > DIVERGENCE_LIMIT {
            return Err(VasError::Divergence(mse));
        }
        log.epoch_mse.push(mse);
    }
    Ok(log)
}
