use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{State, TokenId, Vocab};
use crate::error::{Result, VasError};
use crate::seed::{fnv1a64, splitmix64};

/// Temperatures at or below this are treated as greedy decoding.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;

/// Anything that yields a next-token distribution for a state.
pub trait Policy: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Probabilities over the whole vocabulary; nonnegative, summing to 1.
    fn next_dist(&self, state: &State) -> Result<Vec<f64>>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_dist(&self, state: &State) -> Result<Vec<f64>> {
        (**self).next_dist(state)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_dist(&self, state: &State) -> Result<Vec<f64>> {
        (**self).next_dist(state)
    }
}

impl<P: Policy + ?Sized> Policy for std::sync::Arc<P> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_dist(&self, state: &State) -> Result<Vec<f64>> {
        (**self).next_dist(state)
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Power transform `p_i^(1/τ)`, renormalized. τ = 1 returns the input
/// unchanged; τ ≤ [`GREEDY_TEMPERATURE`] returns a point mass on the argmax
/// (lowest index on ties).
pub fn temperature_transform(p: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(VasError::InvalidParam(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if temperature == 1.0 {
        return Ok(p.to_vec());
    }
    if temperature <= GREEDY_TEMPERATURE {
        let mut out = vec![0.0; p.len()];
        out[argmax(p)] = 1.0;
        return Ok(out);
    }
    let max = p.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Err(VasError::ZeroMass);
    }
    let lmax = max.ln();
    let w: Vec<f64> = p
        .iter()
        .map(|&x| {
            if x > 0.0 {
                ((x.ln() - lmax) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Inverse-CDF draw consuming exactly one `f64` from `rng`. Never returns a
/// zero-mass index.
pub fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let total: f64 = dist.iter().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformPolicy {
    pub size: usize,
}

impl Policy for UniformPolicy {
    fn vocab_size(&self) -> usize {
        self.size
    }
    fn next_dist(&self, _state: &State) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.size as f64; self.size])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointMassPolicy {
    pub size: usize,
    pub token: TokenId,
}

impl Policy for PointMassPolicy {
    fn vocab_size(&self) -> usize {
        self.size
    }
    fn next_dist(&self, _state: &State) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.size];
        p[self.token.0] = 1.0;
        Ok(p)
    }
}

/// Deterministic pseudo-random distribution per state: weights `u_i^sharpness`
/// with `u_i ∈ (0, 1]` hashed from `(seed, prompt ⊕ generated, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomPolicy {
    pub size: usize,
    pub seed: u64,
    pub sharpness: f64,
}

impl Policy for RandomPolicy {
    fn vocab_size(&self) -> usize {
        self.size
    }
    fn next_dist(&self, state: &State) -> Result<Vec<f64>> {
        let mut h = splitmix64(self.seed);
        for t in state.prompt.iter().chain(state.generated.iter()) {
            h = splitmix64(h ^ (t.0 as u64 + 1));
        }
        h = splitmix64(h ^ state.generated.len() as u64);
        let w: Vec<f64> = (0..self.size)
            .map(|i| {
                let bits = splitmix64(h ^ fnv1a64(&(i as u64).to_le_bytes()));
                let u = ((bits >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
                u.powf(self.sharpness)
            })
            .collect();
        let z: f64 = w.iter().sum();
        Ok(w.into_iter().map(|x| x / z).collect())
    }
}

/// Add-alpha smoothed bigram model. Context is the last token of
/// prompt ⊕ generated, or a start context when both are empty.
#[derive(Clone, Debug, PartialEq)]
pub struct BigramPolicy {
    size: usize,
    alpha: f64,
    /// `(size + 1) × size` transition counts; the last row is the start context.
    counts: Vec<Vec<f64>>,
}

impl BigramPolicy {
    pub fn counts(&self, context: Option<TokenId>) -> &[f64] {
        &self.counts[context.map_or(self.size, |t| t.0)]
    }
}

impl Policy for BigramPolicy {
    fn vocab_size(&self) -> usize {
        self.size
    }
    fn next_dist(&self, state: &State) -> Result<Vec<f64>> {
        let row = self.counts(state.last_token());
        let z: f64 = row.iter().map(|c| c + self.alpha).sum();
        if z <= 0.0 {
            return Err(VasError::ZeroMass);
        }
        Ok(row.iter().map(|c| (c + self.alpha) / z).collect())
    }
}

pub fn train_bigram(corpus: &[Vec<TokenId>], vocab: &Vocab, alpha: f64) -> Result<BigramPolicy> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(VasError::InvalidParam(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    let size = vocab.len();
    let mut counts = vec![vec![0.0; size]; size + 1];
    for seq in corpus {
        let mut prev = size;
        for &t in seq {
            vocab.check(t)?;
            counts[prev][t.0] += 1.0;
            prev = t.0;
        }
    }
    Ok(BigramPolicy {
        size,
        alpha,
        counts,
    })
}

/// Serializable description of a toy base policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Uniform,
    PointMass {
        token: String,
    },
    /// `corpus` entries are parsed with [`Vocab::parse`].
    Bigram {
        corpus: Vec<String>,
        alpha: f64,
    },
    Random {
        seed: u64,
        sharpness: f64,
    },
}

impl PolicySpec {
    pub fn build(&self, vocab: &Vocab) -> Result<Box<dyn Policy>> {
        let size = vocab.len();
        Ok(match self {
            PolicySpec::Uniform => Box::new(UniformPolicy { size }),
            PolicySpec::PointMass { token } => Box::new(PointMassPolicy {
                size,
                token: vocab
                    .token(token)
                    .ok_or_else(|| VasError::InvalidVocab(format!("unknown label {token:?}")))?,
            }),
            PolicySpec::Bigram { corpus, alpha } => {
                let seqs = corpus
                    .iter()
                    .map(|line| vocab.parse(line))
                    .collect::<Result<Vec<_>>>()?;
                Box::new(train_bigram(&seqs, vocab, *alpha)?)
            }
            PolicySpec::Random { seed, sharpness } => {
                if !(*sharpness > 0.0) {
                    return Err(VasError::InvalidParam("sharpness must be > 0".into()));
                }
                Box::new(RandomPolicy {
                    size,
                    seed: *seed,
                    sharpness: *sharpness,
                })
            }
        })
    }
}
