use crate::error::{Result, VasError};
use crate::mdp::{Policy, State, TokenId};

use super::{top_k_indices, AugmentedStep, DecodeParams, TokenValues};

pub const DEFAULT_PROVIDER_CAP: usize = 5;

/// A provider that only reveals the top-k next-token log-probabilities.
pub trait RestrictedPolicyView {
    fn cap(&self) -> usize;

    /// Up to `k` `(token, log-probability)` pairs, most probable first.
    fn top_logprobs(&self, state: &State, k: usize) -> Result<Vec<(TokenId, f64)>>;
}

/// Restricted view over a local policy. Zero-probability tokens are never
/// listed.
pub struct LocalTopK<'a, P: Policy + ?Sized> {
    policy: &'a P,
    cap: usize,
}

impl<'a, P: Policy + ?Sized> LocalTopK<'a, P> {
    pub fn new(policy: &'a P, cap: usize) -> Self {
        LocalTopK { policy, cap }
    }
}

impl<P: Policy + ?Sized> RestrictedPolicyView for LocalTopK<'_, P> {
    fn cap(&self) -> usize {
        self.cap
    }

    fn top_logprobs(&self, state: &State, k: usize) -> Result<Vec<(TokenId, f64)>> {
        if k > self.cap {
            return Err(VasError::InvalidParam(format!(
                "k {k} exceeds provider cap {}",
                self.cap
            )));
        }
        let p = self.policy.next_dist(state)?;
        Ok(top_k_indices(&p, k)
            .into_iter()
            .filter(|&i| p[i] > 0.0)
            .map(|i| (TokenId(i), p[i].ln()))
            .collect())
    }
}

struct Scored {
    candidates: Vec<TokenId>,
    values: Vec<f64>,
    scores: Vec<f64>,
    best: usize,
}

fn score<V, S>(
    view: &V,
    values: &S,
    beta: f64,
    temperature: f64,
    state: &State,
    k: usize,
) -> Result<Scored>
where
    V: RestrictedPolicyView + ?Sized,
    S: TokenValues + ?Sized,
{
    let mut visible = view.top_logprobs(state, k)?;
    if visible.is_empty() {
        return Err(VasError::EmptyCandidate);
    }
    visible.sort_by_key(|(t, _)| *t);
    let candidates: Vec<TokenId> = visible.iter().map(|(t, _)| *t).collect();
    let values = if beta == 0.0 {
        vec![0.0; candidates.len()]
    } else {
        values.token_values(state, &candidates)
    };
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(VasError::NonFinite(format!("value estimate {v}")));
    }
    let scores: Vec<f64> = visible
        .iter()
        .zip(&values)
        .map(|((_, lp), v)| lp / temperature + beta * v)
        .collect();
    // strict > keeps the lowest token index on ties
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(Scored {
        candidates,
        values,
        scores,
        best,
    })
}

/// Greedy choice among the visible candidates of
/// `log π0(x|s) + β·V(s ⊕ x)`, ties to the lowest token index.
pub fn rerank_blackbox<V, S>(
    view: &V,
    values: &S,
    beta: f64,
    state: &State,
    k: usize,
) -> Result<TokenId>
where
    V: RestrictedPolicyView + ?Sized,
    S: TokenValues + ?Sized,
{
    let s = score(view, values, beta, 1.0, state, k)?;
    Ok(s.candidates[s.best])
}

pub(super) fn blackbox_step<V, S>(
    view: &V,
    values: &S,
    state: &State,
    params: &DecodeParams,
    vocab_size: usize,
) -> Result<AugmentedStep>
where
    V: RestrictedPolicyView + ?Sized,
    S: TokenValues + ?Sized,
{
    let s = score(
        view,
        values,
        params.beta,
        params.temperature,
        state,
        params.top_k,
    )?;
    let mut dist = vec![0.0; vocab_size];
    let (normalizer, token) = if params.blackbox_sampling {
        let max = s.scores[s.best];
        let w: Vec<f64> = s.scores.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = w.iter().sum();
        for (t, w) in s.candidates.iter().zip(&w) {
            dist[t.0] = w / z;
        }
        (z, None)
    } else {
        dist[s.candidates[s.best].0] = 1.0;
        (1.0, Some(s.candidates[s.best]))
    };
    Ok(AugmentedStep {
        state: state.key(),
        candidates: s.candidates,
        base_probs: vec![],
        values: s.values,
        mean_value: None,
        normalizer,
        dist,
        token,
    })
}
