//! Measurement: KL-reward frontiers (exact and Monte Carlo), the compute
//! cost model, behavioural β sweeps, ablations and a reward-model judge.

mod ablation;
mod cost;
mod stats;

pub use ablation::{
    ablate_fallback, ablate_lambda, accuracy_vs_performance, beta_sweep_metric, dominance_fraction,
    varying_k_report, AblationReport, AccuracyRow, AccuracyTable, Arm, SweepArm, VaryingKRow,
};
pub use cost::{cost_flops, matched_bon_n, CostMethod, CostModel};
pub use stats::{exact_win_rate, judge_compare, mean_and_se, spearman};

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decode::{decode_sequence, fudge_step, DecodeParams, TokenValues, VasPolicy};
use crate::error::{Result, VasError};
use crate::mdp::{EpisodeConfig, Policy, RewardFn, State, TokenId};
use crate::oracle::{
    exact_tilted_policy, exact_value, policy_expected_reward, policy_kl, sequence_distribution,
    OracleConfig,
};
use crate::seed::derive_seed;
use crate::value::ValueEstimator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    VasExact,
    VasLearned,
    TiltedOracle,
    Bon,
    Fudge,
    Base,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("enum serializes");
        f.pad(s.as_str().expect("unit variant"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimation {
    Exact,
    MonteCarlo {
        n_samples: usize,
        se_reward: f64,
        se_kl: f64,
    },
}

/// One point of a KL-reward curve. For Best-of-N rows `beta` holds N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub method: Method,
    pub beta: f64,
    pub expected_reward: f64,
    pub kl: f64,
    pub estimation: Estimation,
    pub seed: Option<u64>,
}

impl FrontierPoint {
    fn exact(method: Method, beta: f64, expected_reward: f64, kl: f64) -> Self {
        FrontierPoint {
            method,
            beta,
            expected_reward,
            // DP round-off can leave -1e-17 for identical policies
            kl: kl.max(0.0),
            estimation: Estimation::Exact,
            seed: None,
        }
    }
}

/// Where the decoder's values come from.
#[derive(Clone, Copy)]
pub enum ValueSource<'a> {
    /// The oracle's exact values of the base policy.
    Exact,
    Estimator(&'a dyn TokenValues),
}

fn check_betas(betas: &[f64]) -> Result<()> {
    match betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
        Some(b) => Err(VasError::InvalidParam(format!(
            "beta must be finite and >= 0, got {b}"
        ))),
        None => Ok(()),
    }
}

/// Exact (reward, KL) of the decoded policy for every β in `betas`;
/// `params` supplies everything but β.
pub fn frontier_exact<P, R>(
    policy: &P,
    reward: &R,
    source: ValueSource<'_>,
    betas: &[f64],
    params: &DecodeParams,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<Vec<FrontierPoint>>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    check_betas(betas)?;
    let table;
    let (values, method): (&dyn TokenValues, Method) = match source {
        ValueSource::Exact => {
            table = exact_value(policy, reward, config, oc)?;
            (&table, Method::VasExact)
        }
        ValueSource::Estimator(e) => (e, Method::VasLearned),
    };
    betas
        .iter()
        .map(|&beta| {
            let p = DecodeParams {
                beta,
                ..params.clone()
            };
            p.validate(policy.vocab_size())?;
            let vas = VasPolicy::new(policy, values, p);
            let er = policy_expected_reward(&vas, reward, config, oc)?;
            let kl = policy_kl(&vas, policy, config, oc)?;
            Ok(FrontierPoint::exact(method, beta, er, kl))
        })
        .collect()
}

/// The exact sequence-level KL-constrained optimum for each β.
pub fn frontier_tilted<P, R>(
    policy: &P,
    reward: &R,
    betas: &[f64],
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<Vec<FrontierPoint>>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    check_betas(betas)?;
    betas
        .iter()
        .map(|&beta| {
            let t = exact_tilted_policy(policy, reward, beta, config, oc)?;
            let er = policy_expected_reward(&t, reward, config, oc)?;
            let kl = policy_kl(&t, policy, config, oc)?;
            Ok(FrontierPoint::exact(Method::TiltedOracle, beta, er, kl))
        })
        .collect()
}

pub fn frontier_base<P, R>(
    policy: &P,
    reward: &R,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<FrontierPoint>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    Ok(FrontierPoint::exact(
        Method::Base,
        0.0,
        policy_expected_reward(policy, reward, config, oc)?,
        0.0,
    ))
}

/// Exact distribution of the sequence returned by Best-of-N, ties to the
/// earliest sample: `P(seq) = p(seq)/q · ((F + q)^N − F^N)` where `q` is the
/// base mass of sequences with the same reward and `F` the mass with
/// strictly lower reward.
pub fn bon_distribution<P, R>(
    policy: &P,
    reward: &R,
    n: usize,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<Vec<(State, f64)>>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if n == 0 {
        return Err(VasError::InvalidParam("N must be >= 1".into()));
    }
    let seqs = sequence_distribution(policy, config, oc)?;
    let scored: Vec<(f64, f64)> = seqs.iter().map(|(s, p)| (reward.score(s), *p)).collect();
    let mut levels: Vec<f64> = scored.iter().map(|(r, _)| *r).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mass_at = |lvl: f64| {
        scored
            .iter()
            .filter(|(r, _)| *r == lvl)
            .map(|(_, p)| p)
            .sum::<f64>()
    };
    let mut below = 0.0;
    let mut factor = Vec::with_capacity(levels.len());
    for &lvl in &levels {
        let q = mass_at(lvl);
        let f = if q > 0.0 {
            ((below + q).powi(n as i32) - f64::powi(below, n as i32)) / q
        } else {
            0.0
        };
        factor.push((lvl, f));
        below += q;
    }
    Ok(seqs
        .into_iter()
        .zip(&scored)
        .map(|((s, p), (r, _))| {
            let f = factor
                .iter()
                .find(|(l, _)| l == r)
                .map(|(_, f)| *f)
                .unwrap_or(0.0);
            (s, p * f)
        })
        .collect())
}

/// Exact reward of the KL-constrained optimum at sequence-level KL `kl`,
/// found by bisection on β over the tilted family (KL grows with β). Returns
/// the β=`beta_max` reward when `kl` exceeds its KL.
pub fn optimal_reward_at_kl<P, R>(
    policy: &P,
    reward: &R,
    kl: f64,
    beta_max: f64,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<f64>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let at = |b: f64| -> Result<(f64, f64)> {
        // below the soft-value guard the tilt is the base policy to working precision
        let b = if b < crate::oracle::MIN_SOFT_BETA {
            0.0
        } else {
            b
        };
        let t = exact_tilted_policy(policy, reward, b, config, oc)?;
        Ok((
            policy_kl(&t, policy, config, oc)?,
            policy_expected_reward(&t, reward, config, oc)?,
        ))
    };
    let (kl_hi, r_hi) = at(beta_max)?;
    if kl >= kl_hi {
        return Ok(r_hi);
    }
    let (mut lo, mut hi) = (0.0, beta_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if at(mid)?.0 <= kl {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(lo)?.1)
}

/// Exact (reward, KL) of Best-of-N for each N; `beta` holds N.
pub fn frontier_bon_exact<P, R>(
    policy: &P,
    reward: &R,
    ns: &[usize],
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<Vec<FrontierPoint>>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let base: Vec<f64> = sequence_distribution(policy, config, oc)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    ns.iter()
        .map(|&n| {
            let d = bon_distribution(policy, reward, n, config, oc)?;
            let mut er = 0.0;
            let mut kl = 0.0;
            for ((s, p), q) in d.iter().zip(&base) {
                if *p > 0.0 {
                    er += p * reward.score(s);
                    kl += p * (p / q).ln();
                }
            }
            Ok(FrontierPoint::exact(Method::Bon, n as f64, er, kl))
        })
        .collect()
}

struct FudgePolicy<'a, P: ?Sized, C: ?Sized> {
    base: &'a P,
    classifier: &'a C,
    temperature: f64,
}

impl<P: Policy + ?Sized, C: ValueEstimator + ?Sized> Policy for FudgePolicy<'_, P, C> {
    fn vocab_size(&self) -> usize {
        self.base.vocab_size()
    }

    fn next_dist(&self, state: &State) -> Result<Vec<f64>> {
        fudge_step(self.base, self.classifier, state, self.temperature)
    }
}

/// Exact point of FUDGE decoding with the given classifier.
pub fn frontier_fudge_exact<P, C, R>(
    policy: &P,
    classifier: &C,
    reward: &R,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<FrontierPoint>
where
    P: Policy + ?Sized,
    C: ValueEstimator + ?Sized,
    R: RewardFn + ?Sized,
{
    let f = FudgePolicy {
        base: policy,
        classifier,
        temperature: 1.0,
    };
    let er = policy_expected_reward(&f, reward, config, oc)?;
    let kl = policy_kl(&f, policy, config, oc)?;
    Ok(FrontierPoint::exact(Method::Fudge, 0.0, er, kl))
}

/// Monte Carlo frontier. Trajectory `i` at every β uses the seed
/// `derive_seed(seed, "frontier_mc", i)`. KL is the sample mean of
/// `Σ_t ln π(x_t|s_t) − ln π0(x_t|s_t)` with `π` the decoder's emitted step
/// distribution.
#[allow(clippy::too_many_arguments)]
pub fn frontier_mc<P, S, R>(
    policy: &P,
    values: &S,
    reward: &R,
    betas: &[f64],
    n_samples: usize,
    seed: u64,
    params: &DecodeParams,
    prompt: &[TokenId],
    config: &EpisodeConfig,
) -> Result<Vec<FrontierPoint>>
where
    P: Policy + ?Sized,
    S: TokenValues + ?Sized,
    R: RewardFn + ?Sized,
{
    check_betas(betas)?;
    if n_samples == 0 {
        return Err(VasError::InvalidParam("n_samples must be >= 1".into()));
    }
    betas
        .iter()
        .map(|&beta| {
            let mut rewards = Vec::with_capacity(n_samples);
            let mut kls = Vec::with_capacity(n_samples);
            for i in 0..n_samples {
                let p = DecodeParams {
                    beta,
                    seed: derive_seed(seed, "frontier_mc", i as u64),
                    ..params.clone()
                };
                let (traj, steps) = decode_sequence(policy, values, reward, prompt, config, &p)?;
                let mut lr = 0.0;
                for (state, step) in traj.states.iter().zip(&steps) {
                    let x = step.token.expect("sampled").0;
                    let base = policy.next_dist(state)?;
                    lr += step.dist[x].ln() - base[x].ln();
                }
                rewards.push(traj.reward);
                kls.push(lr);
            }
            let (er, se_r) = mean_and_se(&rewards);
            let (kl, se_kl) = mean_and_se(&kls);
            Ok(FrontierPoint {
                method: Method::VasLearned,
                beta,
                expected_reward: er,
                kl,
                estimation: Estimation::MonteCarlo {
                    n_samples,
                    se_reward: se_r,
                    se_kl,
                },
                seed: Some(seed),
            })
        })
        .collect()
}

/// Best reward reachable at KL ≤ `kl` on the piecewise-linear curve through
/// `points` (sorted by KL, running maximum). `None` below the smallest KL.
pub fn frontier_at(points: &[FrontierPoint], kl: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.kl, p.expected_reward)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut best: Option<f64> = None;
    for (i, &(k, r)) in pts.iter().enumerate() {
        if k > kl {
            if i > 0 {
                let (k0, r0) = pts[i - 1];
                let interp = r0 + (r - r0) * (kl - k0) / (k - k0);
                best = Some(best.map_or(interp, |b| b.max(interp)));
            }
            break;
        }
        best = Some(best.map_or(r, |b| b.max(r)));
    }
    best
}

/// SHA-256 of the given bytes, hex encoded.
pub fn config_checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub const FRONTIER_CSV_HEADER: &str =
    "method,beta,kl,reward,estimation,n_samples,se_reward,se_kl,seed";

pub fn frontier_csv(points: &[FrontierPoint], checksum: &str) -> String {
    let mut out = format!("# config_checksum: {checksum}\n{FRONTIER_CSV_HEADER}\n");
    for p in points {
        let (est, n, se_r, se_kl) = match &p.estimation {
            Estimation::Exact => ("exact", String::new(), String::new(), String::new()),
            Estimation::MonteCarlo {
                n_samples,
                se_reward,
                se_kl,
            } => (
                "monte_carlo",
                n_samples.to_string(),
                se_reward.to_string(),
                se_kl.to_string(),
            ),
        };
        let seed = p.seed.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{est},{n},{se_r},{se_kl},{seed}\n",
            p.method, p.beta, p.kl, p.expected_reward
        ));
    }
    out
}
