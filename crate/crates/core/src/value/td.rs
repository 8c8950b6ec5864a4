use serde::{Deserialize, Serialize};

use crate::error::{Result, VasError};
use crate::mdp::{EpisodeConfig, Trajectory};

use super::ValueEstimator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_lambda() -> f64 {
    0.95
}
fn default_gamma() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    0.05
}
fn default_epochs() -> usize {
    6
}
fn default_batch() -> usize {
    32
}

impl Default for TdConfig {
    fn default() -> Self {
        TdConfig {
            lambda: default_lambda(),
            gamma: default_gamma(),
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed: 0,
        }
    }
}

impl TdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VasError::InvalidParam(m.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }
}

/// Forward-view λ-returns for states `s_0 … s_{n-1}` of an episode whose
/// terminal reward `r` arrives on leaving `s_{n-1}`:
///
/// ```text
/// G_t = V(s_t) + Σ_{i=t}^{n-1} (γλ)^{i-t} δ_i
/// δ_i = γ·V(s_{i+1}) − V(s_i)   (i < n−1)
/// δ_{n−1} = r − V(s_{n−1})
/// ```
pub fn lambda_returns(values: &[f64], reward: f64, lambda: f64, gamma: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = if t + 1 == n {
            reward - values[t]
        } else {
            gamma * values[t + 1] - values[t]
        };
        acc = delta + gamma * lambda * acc;
        out[t] = values[t] + acc;
    }
    out
}

/// λ-return targets for every non-terminal state of `trajectory`,
/// bootstrapping from `estimator`.
pub fn td_lambda_targets<E: ValueEstimator + ?Sized>(
    trajectory: &Trajectory,
    estimator: &E,
    config: &TdConfig,
    episode: &EpisodeConfig,
) -> Result<Vec<f64>> {
    if !episode.is_terminal(trajectory.terminal()) {
        return Err(VasError::NonTerminal);
    }
    let n = trajectory.states.len() - 1;
    let values: Vec<f64> = trajectory.states[..n]
        .iter()
        .map(|s| estimator.predict(s))
        .collect();
    Ok(lambda_returns(
        &values,
        trajectory.reward,
        config.lambda,
        config.gamma,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_step_example() {
        let g = lambda_returns(&[0.3, 0.5], 1.0, 0.95, 1.0);
        assert!((g[0] - 0.975).abs() < 1e-15);
        assert_eq!(g[1], 1.0);
    }

    #[test]
    fn td0_is_one_step_bootstrap() {
        let g = lambda_returns(&[0.1, 0.2, 0.4], 7.0, 0.0, 0.9);
        assert!((g[0] - 0.9 * 0.2).abs() < 1e-15);
        assert!((g[1] - 0.9 * 0.4).abs() < 1e-15);
        assert_eq!(g[2], 7.0);
    }

    #[test]
    fn config_validation() {
        assert!(TdConfig::default().validate().is_ok());
        for bad in [
            TdConfig {
                lambda: 1.5,
                ..Default::default()
            },
            TdConfig {
                gamma: -0.1,
                ..Default::default()
            },
            TdConfig {
                epochs: 0,
                ..Default::default()
            },
            TdConfig {
                batch_size: 0,
                ..Default::default()
            },
            TdConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    /// Recursive definition G_t = γ((1−λ)V(s_{t+1}) + λG_{t+1}), G_{n−1} = r.
    fn recursive_oracle(values: &[f64], r: f64, lambda: f64, gamma: f64) -> Vec<f64> {
        let n = values.len();
        let mut g = vec![0.0; n];
        g[n - 1] = r;
        for t in (0..n - 1).rev() {
            g[t] = gamma * ((1.0 - lambda) * values[t + 1] + lambda * g[t + 1]);
        }
        g
    }

    proptest! {
        #[test]
        fn monte_carlo_at_lambda_one(
            values in prop::collection::vec(-5.0f64..5.0, 1..12),
            r in -3.0f64..3.0,
        ) {
            for g in lambda_returns(&values, r, 1.0, 1.0) {
                prop_assert!((g - r).abs() < 1e-12);
            }
        }

        #[test]
        fn matches_recursive_form(
            values in prop::collection::vec(-5.0f64..5.0, 1..12),
            r in -3.0f64..3.0,
            lambda in 0.0f64..=1.0,
            gamma in 0.0f64..=1.0,
        ) {
            let a = lambda_returns(&values, r, lambda, gamma);
            let b = recursive_oracle(&values, r, lambda, gamma);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
