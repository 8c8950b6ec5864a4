use serde::{Deserialize, Serialize};

use crate::decode::{
    step_distribution, DecodeMode, DecodeParams, Fallback, TokenValues, VasPolicy,
};
use crate::error::{Result, VasError};
use crate::mdp::{EpisodeConfig, Policy, RewardFn, State, TokenId};
use crate::oracle::{dist_tv, exact_tilted_policy, exact_value, expected_terminal, OracleConfig};
use crate::value::{
    collect_dataset, fit_value, validation_mse, TdConfig, TrainableValue, TrajectoryDataset,
    ValidationSet,
};

use super::{frontier_at, frontier_csv, frontier_exact, spearman, FrontierPoint, ValueSource};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub points: Vec<FrontierPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub factor: String,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    /// Fraction of the last arm's points weakly dominated by the first arm.
    pub dominance: Option<f64>,
}

impl AblationReport {
    /// JSON with one embedded frontier CSV block per arm.
    pub fn to_json(&self, checksum: &str) -> serde_json::Value {
        serde_json::json!({
            "config_checksum": checksum,
            "factor": self.factor,
            "seeds": self.seeds,
            "dominance": self.dominance,
            "arms": self.arms.iter().map(|a| serde_json::json!({
                "name": a.name,
                "csv": frontier_csv(&a.points, checksum),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Fraction of `weak` points whose reward is matched or beaten by the
/// `strong` curve at the same or lower KL (see [`frontier_at`]).
pub fn dominance_fraction(strong: &[FrontierPoint], weak: &[FrontierPoint]) -> f64 {
    if weak.is_empty() {
        return 1.0;
    }
    let hits = weak
        .iter()
        .filter(|p| frontier_at(strong, p.kl).is_some_and(|r| r >= p.expected_reward - 1e-12))
        .count();
    hits as f64 / weak.len() as f64
}

/// Top-k decoding with the mean-value fallback against the base-only arm.
#[allow(clippy::too_many_arguments)]
pub fn ablate_fallback<P, R>(
    policy: &P,
    reward: &R,
    source: ValueSource<'_>,
    betas: &[f64],
    k: usize,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<AblationReport>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let table;
    let values: &dyn TokenValues = match source {
        ValueSource::Exact => {
            table = exact_value(policy, reward, config, oc)?;
            &table
        }
        ValueSource::Estimator(e) => e,
    };
    let mut arms = Vec::new();
    for (name, fallback) in [
        ("mean_value", Fallback::MeanValue),
        ("base_only", Fallback::BaseOnly),
    ] {
        let points = frontier_exact(
            policy,
            reward,
            ValueSource::Estimator(values),
            betas,
            &DecodeParams::topk(0.0, k, fallback),
            config,
            oc,
        )?;
        arms.push(Arm {
            name: name.into(),
            points,
        });
    }
    Ok(AblationReport {
        factor: "fallback".into(),
        dominance: Some(dominance_fraction(&arms[0].points, &arms[1].points)),
        arms,
        seeds: vec![],
    })
}

/// Trains a copy of `proto` per λ in `lambdas` on the same dataset and
/// compares exact frontiers. Dominance compares the first arm over the last.
#[allow(clippy::too_many_arguments)]
pub fn ablate_lambda<P, R, E>(
    policy: &P,
    reward: &R,
    proto: &E,
    dataset: &TrajectoryDataset,
    td: &TdConfig,
    lambdas: &[f64],
    betas: &[f64],
    params: &DecodeParams,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<AblationReport>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
    E: TrainableValue + Clone,
{
    if lambdas.is_empty() {
        return Err(VasError::InvalidParam("no lambda arms".into()));
    }
    let mut arms = Vec::new();
    for &lambda in lambdas {
        let mut est = proto.clone();
        fit_value(
            &mut est,
            dataset,
            &TdConfig {
                lambda,
                ..td.clone()
            },
            config,
        )?;
        let points = frontier_exact(
            policy,
            reward,
            ValueSource::Estimator(&est),
            betas,
            params,
            config,
            oc,
        )?;
        arms.push(Arm {
            name: format!("lambda_{lambda}"),
            points,
        });
    }
    let dominance =
        (arms.len() > 1).then(|| dominance_fraction(&arms[0].points, &arms[arms.len() - 1].points));
    Ok(AblationReport {
        factor: "lambda".into(),
        arms,
        seeds: vec![td.seed],
        dominance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaryingKRow {
    pub k: usize,
    pub mean_tv: f64,
    pub point: FrontierPoint,
}

/// For each k, the mean total variation between the top-k and the
/// full-vocabulary decoded distributions over `states`, plus the exact
/// frontier point of top-k decoding at `beta`.
#[allow(clippy::too_many_arguments)]
pub fn varying_k_report<P, R>(
    policy: &P,
    reward: &R,
    values: &dyn TokenValues,
    beta: f64,
    k_grid: &[usize],
    fallback: Fallback,
    states: &[State],
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<Vec<VaryingKRow>>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if states.is_empty() {
        return Err(VasError::EmptyDataset);
    }
    let full = DecodeParams::full(beta);
    let full_dists = states
        .iter()
        .map(|s| Ok(step_distribution(policy, values, s, &full)?.dist))
        .collect::<Result<Vec<_>>>()?;
    k_grid
        .iter()
        .map(|&k| {
            let p = DecodeParams::topk(beta, k, fallback);
            p.validate(policy.vocab_size())?;
            let mut tv = 0.0;
            for (s, f) in states.iter().zip(&full_dists) {
                tv += dist_tv(&step_distribution(policy, values, s, &p)?.dist, f)?;
            }
            let point = frontier_exact(
                policy,
                reward,
                ValueSource::Estimator(values),
                &[beta],
                &p,
                config,
                oc,
            )?
            .remove(0);
            Ok(VaryingKRow {
                k,
                mean_tv: tv / states.len() as f64,
                point,
            })
        })
        .collect()
}

pub enum SweepArm<'a> {
    TiltedOracle,
    Vas {
        source: ValueSource<'a>,
        params: DecodeParams,
    },
}

/// Exact expectation of `metric` at the terminal state for each β.
pub fn beta_sweep_metric<P, R, M>(
    policy: &P,
    reward: &R,
    arm: SweepArm<'_>,
    metric: M,
    betas: &[f64],
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<Vec<(f64, f64)>>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
    M: Fn(&State) -> f64,
{
    match arm {
        SweepArm::TiltedOracle => betas
            .iter()
            .map(|&b| {
                let t = exact_tilted_policy(policy, reward, b, config, oc)?;
                Ok((b, expected_terminal(&t, &metric, config, oc)?))
            })
            .collect(),
        SweepArm::Vas { source, params } => {
            let table;
            let values: &dyn TokenValues = match source {
                ValueSource::Exact => {
                    table = exact_value(policy, reward, config, oc)?;
                    &table
                }
                ValueSource::Estimator(e) => e,
            };
            betas
                .iter()
                .map(|&beta| {
                    let vas = VasPolicy::new(
                        policy,
                        values,
                        DecodeParams {
                            beta,
                            ..params.clone()
                        },
                    );
                    Ok((beta, expected_terminal(&vas, &metric, config, oc)?))
                })
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub size: usize,
    pub seed: u64,
    pub validation_mse: f64,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub beta: f64,
    pub rows: Vec<AccuracyRow>,
    /// Spearman correlation of validation MSE against achieved reward,
    /// pooled over all rows.
    pub spearman: f64,
}

/// Trains one estimator per (seed, dataset size) and reports validation MSE
/// against the exact expected reward of full-vocabulary decoding at `beta`.
/// Each seed draws one dataset of the largest size; smaller sizes are its
/// prefixes.
#[allow(clippy::too_many_arguments)]
pub fn accuracy_vs_performance<P, R, E>(
    policy: &P,
    reward: &R,
    proto: &E,
    prompt: &[TokenId],
    sizes: &[usize],
    valset: &ValidationSet,
    beta: f64,
    seeds: &[u64],
    td: &TdConfig,
    temperature: f64,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<AccuracyTable>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
    E: TrainableValue + Clone,
{
    if sizes.len() < 3 {
        return Err(VasError::InvalidParam(
            "need at least three dataset sizes".into(),
        ));
    }
    let max = *sizes.iter().max().expect("nonempty");
    let mut rows = Vec::new();
    for &seed in seeds {
        let full = collect_dataset(
            policy,
            reward,
            &[prompt.to_vec()],
            max,
            temperature,
            seed,
            config,
        )?;
        for &size in sizes {
            let mut est = proto.clone();
            fit_value(
                &mut est,
                &full.truncated(size),
                &TdConfig { seed, ..td.clone() },
                config,
            )?;
            let vas = VasPolicy::new(
                policy,
                &est,
                DecodeParams {
                    beta,
                    mode: DecodeMode::Full,
                    ..Default::default()
                },
            );
            rows.push(AccuracyRow {
                size,
                seed,
                validation_mse: validation_mse(&est, valset)?,
                reward: crate::oracle::policy_expected_reward(&vas, reward, config, oc)?,
            });
        }
    }
    let mse: Vec<f64> = rows.iter().map(|r| r.validation_mse).collect();
    let rew: Vec<f64> = rows.iter().map(|r| r.reward).collect();
    Ok(AccuracyTable {
        beta,
        spearman: spearman(&mse, &rew)?,
        rows,
    })
}
