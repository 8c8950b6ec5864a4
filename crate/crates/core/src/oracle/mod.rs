//! Exact ground truth by enumerating the state tree: hard values, Q-values,
//! soft (log-partition) values, the value-tilted and soft-tilted policies,
//! and the expected-reward and KL functionals evaluated on them.
//!
//! Everything here is computed by backward induction (values) or forward
//! propagation of reach probabilities (expectations) over a [`StateTree`],
//! and every exponentiated sum goes through log-sum-exp.

mod tree;

pub use tree::StateTree;

use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{Result, VasError};
use crate::mdp::{EpisodeConfig, Policy, RewardFn, State, TokenId};

/// Below this β the soft value is replaced by the hard value.
pub const MIN_SOFT_BETA: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub node_cap: usize,
    /// Fixed prompt at the root of the enumeration.
    pub prompt: Vec<TokenId>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            node_cap: 10_000_000,
            prompt: Vec::new(),
        }
    }
}

impl OracleConfig {
    pub fn with_prompt(prompt: Vec<TokenId>) -> Self {
        OracleConfig {
            prompt,
            ..Default::default()
        }
    }
}

/// Exact per-state quantity keyed by the generated tokens (the prompt is
/// fixed per table).
#[derive(Clone, Debug, PartialEq)]
pub struct ExactTable<T> {
    prompt: Vec<TokenId>,
    entries: BTreeMap<Vec<TokenId>, T>,
}

pub type ValueTable = ExactTable<f64>;
pub type PolicyTable = ExactTable<Vec<f64>>;

impl<T> ExactTable<T> {
    fn from_tree(tree: &StateTree, values: Vec<Option<T>>) -> Self {
        let entries = values
            .into_iter()
            .enumerate()
            .filter_map(|(n, v)| v.map(|v| (tree.state(n).generated.clone(), v)))
            .collect();
        ExactTable {
            prompt: tree.state(0).prompt.clone(),
            entries,
        }
    }

    pub fn prompt(&self) -> &[TokenId] {
        &self.prompt
    }

    pub fn get(&self, state: &State) -> Option<&T> {
        if state.prompt != self.prompt {
            return None;
        }
        self.entries.get(&state.generated)
    }

    pub fn get_generated(&self, generated: &[TokenId]) -> Option<&T> {
        self.entries.get(generated)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<TokenId>, &T)> {
        self.entries.iter()
    }

    /// JSON dump for golden files: `{"metadata": …, "entries": {key: value}}`
    /// with keys as produced by [`State::key`].
    pub fn dump(&self, metadata: serde_json::Value) -> serde_json::Value
    where
        T: Serialize,
    {
        let entries: serde_json::Map<String, serde_json::Value> = self
            .entries
            .iter()
            .map(|(g, v)| {
                let key = State::with_generated(Vec::new(), g.clone()).key();
                (
                    key,
                    serde_json::to_value(v).expect("table values serialize"),
                )
            })
            .collect();
        serde_json::json!({ "metadata": metadata, "entries": entries })
    }
}

impl ValueTable {
    /// Q(x|s) = V(s ⊕ x).
    pub fn q(&self, state: &State, token: TokenId) -> Option<f64> {
        self.get(&state.child(token)).copied()
    }
}

impl Policy for PolicyTable {
    fn vocab_size(&self) -> usize {
        self.entries.values().next().map_or(0, Vec::len)
    }

    fn next_dist(&self, state: &State) -> Result<Vec<f64>> {
        self.get(state)
            .cloned()
            .ok_or_else(|| VasError::UnknownState(state.key()))
    }
}

struct Enumerated {
    tree: StateTree,
    dists: Vec<Option<Vec<f64>>>,
    rewards: Vec<f64>,
}

fn enumerate<P, R>(
    policy: &P,
    reward: Option<&R>,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<Enumerated>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let tree = StateTree::build(config, &oc.prompt, oc.node_cap)?;
    let dists = tree.policy_dists(policy)?;
    let rewards = match reward {
        Some(r) => tree.rewards(r)?,
        None => vec![f64::NAN; tree.len()],
    };
    Ok(Enumerated {
        tree,
        dists,
        rewards,
    })
}

fn hard_values(e: &Enumerated) -> Vec<f64> {
    let mut v = vec![0.0; e.tree.len()];
    for n in (0..e.tree.len()).rev() {
        v[n] = match (e.tree.children(n), &e.dists[n]) {
            (Some(ch), Some(d)) => ch.iter().zip(d).map(|(&c, p)| p * v[c]).sum(),
            _ => e.rewards[n],
        };
    }
    v
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn soft_values(e: &Enumerated, beta: f64) -> Vec<f64> {
    let mut v = vec![0.0; e.tree.len()];
    for n in (0..e.tree.len()).rev() {
        v[n] = match (e.tree.children(n), &e.dists[n]) {
            (Some(ch), Some(d)) => {
                let terms = ch
                    .iter()
                    .zip(d)
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(&c, &p)| p.ln() + beta * v[c]);
                log_sum_exp(terms) / beta
            }
            _ => e.rewards[n],
        };
    }
    v
}

/// `p_x · exp(β·v_x)` normalized through log-sum-exp; `p` itself when β = 0.
fn tilt(p: &[f64], child_values: &[f64], beta: f64) -> Vec<f64> {
    if beta == 0.0 {
        return p.to_vec();
    }
    let logits: Vec<f64> = p
        .iter()
        .zip(child_values)
        .map(|(&p, &v)| {
            if p > 0.0 {
                p.ln() + beta * v
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let lse = log_sum_exp(logits.iter().copied());
    logits.iter().map(|&l| (l - lse).exp()).collect()
}

fn tilted_table(e: &Enumerated, values: &[f64], beta: f64) -> PolicyTable {
    let dists = (0..e.tree.len())
        .map(|n| {
            let ch = e.tree.children(n)?;
            let d = e.dists[n].as_ref()?;
            let cv: Vec<f64> = ch.iter().map(|&c| values[c]).collect();
            Some(tilt(d, &cv, beta))
        })
        .collect();
    ExactTable::from_tree(&e.tree, dists)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(VasError::InvalidParam(format!(
            "beta must be finite and >= 0, got {beta}"
        )))
    }
}

/// V^π(s) for every reachable state, terminal states mapping to their reward.
pub fn exact_value<P, R>(
    policy: &P,
    reward: &R,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<ValueTable>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let e = enumerate(policy, Some(reward), config, oc)?;
    let v = hard_values(&e);
    Ok(ExactTable::from_tree(
        &e.tree,
        v.into_iter().map(Some).collect(),
    ))
}

/// Q^π(x|s) = V^π(s ⊕ x) for a non-terminal `state`.
pub fn exact_q<P, R>(
    policy: &P,
    reward: &R,
    config: &EpisodeConfig,
    oc: &OracleConfig,
    state: &State,
    token: TokenId,
) -> Result<f64>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let next = config.transition(state, token)?;
    let table = exact_value(policy, reward, config, oc)?;
    table
        .get(&next)
        .copied()
        .ok_or_else(|| VasError::UnknownState(next.key()))
}

/// π(x|s) ∝ π0(x|s)·exp(β·Q^π0(x|s)) at every non-terminal state.
pub fn exact_vas_policy<P, R>(
    policy: &P,
    reward: &R,
    beta: f64,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<PolicyTable>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    check_beta(beta)?;
    let e = enumerate(policy, Some(reward), config, oc)?;
    let v = hard_values(&e);
    Ok(tilted_table(&e, &v, beta))
}

/// V_soft(s) = (1/β)·ln Σ_x π0(x|s)·exp(β·V_soft(s ⊕ x)), V_soft = r at
/// terminal states.
pub fn exact_soft_value<P, R>(
    policy: &P,
    reward: &R,
    beta: f64,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<ValueTable>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    check_beta(beta)?;
    if beta < MIN_SOFT_BETA {
        return Err(VasError::BetaUnderflow(beta));
    }
    let e = enumerate(policy, Some(reward), config, oc)?;
    let v = soft_values(&e, beta);
    Ok(ExactTable::from_tree(
        &e.tree,
        v.into_iter().map(Some).collect(),
    ))
}

/// The sequence-level KL-regularized optimum realized token by token:
/// π(x|s) ∝ π0(x|s)·exp(β·V_soft(s ⊕ x)). β = 0 returns π0.
pub fn exact_tilted_policy<P, R>(
    policy: &P,
    reward: &R,
    beta: f64,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<PolicyTable>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    check_beta(beta)?;
    let e = enumerate(policy, Some(reward), config, oc)?;
    if beta == 0.0 {
        return Ok(tilted_table(&e, &vec![0.0; e.tree.len()], 0.0));
    }
    if beta < MIN_SOFT_BETA {
        return Err(VasError::BetaUnderflow(beta));
    }
    let v = soft_values(&e, beta);
    Ok(tilted_table(&e, &v, beta))
}

/// ln Z(β) = ln Σ_seq π0(seq)·exp(β·r(seq)).
pub fn log_partition<P, R>(
    policy: &P,
    reward: &R,
    beta: f64,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<f64>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if beta == 0.0 {
        return Ok(0.0);
    }
    let table = exact_soft_value(policy, reward, beta, config, oc)?;
    Ok(beta * table.get_generated(&[]).copied().unwrap_or(f64::NAN))
}

/// Terminal states with their probability under `policy`.
pub fn sequence_distribution<P>(
    policy: &P,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<Vec<(State, f64)>>
where
    P: Policy + ?Sized,
{
    let e = enumerate::<P, dyn RewardFn>(policy, None, config, oc)?;
    let reach = e.tree.reach(&e.dists);
    Ok(e.tree
        .terminal()
        .map(|n| (e.tree.state(n).clone(), reach[n]))
        .collect())
}

/// E_π[f(s_T)] for any terminal-state functional.
pub fn expected_terminal<P, F>(
    policy: &P,
    f: F,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<f64>
where
    P: Policy + ?Sized,
    F: Fn(&State) -> f64,
{
    Ok(sequence_distribution(policy, config, oc)?
        .iter()
        .map(|(s, p)| if *p > 0.0 { p * f(s) } else { 0.0 })
        .sum())
}

/// Exact E_π[r(s_T)].
pub fn policy_expected_reward<P, R>(
    policy: &P,
    reward: &R,
    config: &EpisodeConfig,
    oc: &OracleConfig,
) -> Result<f64>
where
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    expected_terminal(policy, |s| reward.score(s), config, oc)
}

/// Sequence-level KL(p‖q) = E_p[Σ_t KL(p(·|s_t)‖q(·|s_t))].
pub fn policy_kl<P, Q>(p: &P, q: &Q, config: &EpisodeConfig, oc: &OracleConfig) -> Result<f64>
where
    P: Policy + ?Sized,
    Q: Policy + ?Sized,
{
    let tree = StateTree::build(config, &oc.prompt, oc.node_cap)?;
    let pd = tree.policy_dists(p)?;
    let reach = tree.reach(&pd);
    let mut kl = 0.0;
    for n in tree.non_terminal() {
        if reach[n] == 0.0 {
            continue;
        }
        let pn = pd[n].as_ref().expect("non-terminal has a distribution");
        let qn = q.next_dist(tree.state(n))?;
        if qn.len() != pn.len() {
            return Err(VasError::DimensionMismatch {
                expected: pn.len(),
                got: qn.len(),
            });
        }
        let mut step = 0.0;
        for (&a, &b) in pn.iter().zip(&qn) {
            if a > 0.0 {
                if b <= 0.0 {
                    return Err(VasError::SupportViolation {
                        state: tree.state(n).key(),
                    });
                }
                step += a * (a / b).ln();
            }
        }
        kl += reach[n] * step;
    }
    Ok(kl.max(0.0))
}

/// Total variation distance ½·Σ|p_i − q_i|.
pub fn dist_tv(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(VasError::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
