//! oracle-check: the value identity, β = 0 reproduction, top-k exactness,
//! the tilted sequence marginal and linearity of composition, each against
//! full enumeration.

use vasamp_core::decode::{
    augment_full, augment_topk, compose, decode_sequence, DecodeParams, Fallback, TokenValues,
};
use vasamp_core::mdp::rollout;
use vasamp_core::oracle::{
    exact_tilted_policy, exact_value, exact_vas_policy, log_partition, sequence_distribution,
    StateTree,
};
use vasamp_core::seed::derive_seed;
use vasamp_core::value::ValueEstimator;
use vasamp_core::{Policy, RewardFn, RewardSpec, State, TokenId};

use crate::config::Resolved;
use crate::error::{CliError, CliResult};

const EXACT_TOL: f64 = 1e-12;
const MARGINAL_TOL: f64 = 1e-10;
const ROLLOUT_SEEDS: u64 = 50;

struct Check {
    name: &'static str,
    tol: f64,
    worst: f64,
    first_failure: Option<String>,
}

impl Check {
    fn new(name: &'static str, tol: f64) -> Self {
        Check {
            name,
            tol,
            worst: 0.0,
            first_failure: None,
        }
    }

    fn observe(&mut self, err: f64, at: impl FnOnce() -> String) {
        let err = if err.is_nan() { f64::INFINITY } else { err };
        self.worst = self.worst.max(err);
        if err > self.tol && self.first_failure.is_none() {
            self.first_failure = Some(format!("{} (error {err:.3e})", at()));
        }
    }

    fn finish(self) -> CliResult<()> {
        match self.first_failure {
            None => {
                println!(
                    "ok   {:<22} max error {:.3e} (tol {:.0e})",
                    self.name, self.worst, self.tol
                );
                Ok(())
            }
            Some(at) => {
                println!("FAIL {:<22} first failing state {at}", self.name);
                Err(CliError::Verification(format!(
                    "{} violated at {at}",
                    self.name
                )))
            }
        }
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn show(r: &Resolved, s: &State) -> String {
    format!("[{}]", r.episode.vocab.render(&s.generated))
}

pub fn run(r: &Resolved) -> CliResult<()> {
    let (pi, rew, cfg, oc) = (&r.policy, &r.reward, &r.episode, &r.oracle);
    let tree = StateTree::build(cfg, &r.prompt, oc.node_cap)?;
    let values = exact_value(pi, rew, cfg, oc)?;
    let all: Vec<TokenId> = cfg.vocab.tokens().collect();
    let betas: Vec<f64> = r
        .config
        .grid
        .betas
        .iter()
        .copied()
        .filter(|b| *b > 0.0)
        .collect();
    println!("config_checksum: {}", r.checksum);
    println!("enumerated {} states", tree.len());

    // V(s) = Σ_x π0(x|s) V(s ⊕ x), with V(s ⊕ x) doubling as Q(s, x)
    let mut c = Check::new("value identity", EXACT_TOL);
    for n in tree.non_terminal() {
        let s = tree.state(n);
        let p = pi.next_dist(s)?;
        let q = values.token_values(s, &all);
        let backup: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        let v = values.get(s).copied().unwrap_or(f64::NAN);
        c.observe((backup - v).abs(), || show(r, s));
    }
    c.finish()?;

    let mut c = Check::new("value-form tilt", EXACT_TOL);
    for &beta in &betas {
        let table = exact_vas_policy(pi, rew, beta, cfg, oc)?;
        for n in tree.non_terminal() {
            let s = tree.state(n);
            let aug = augment_full(&pi.next_dist(s)?, &values.token_values(s, &all), beta)?;
            let want = table
                .get(s)
                .map(|d| max_abs(&aug, d))
                .unwrap_or(f64::INFINITY);
            c.observe(want, || format!("{} beta {beta}", show(r, s)));
        }
    }
    c.finish()?;

    let mut c = Check::new("beta=0 reproduction", 0.0);
    let temperature = r.config.decode.temperature;
    for i in 0..ROLLOUT_SEEDS {
        let seed = derive_seed(r.config.seed, "oracle_check", i);
        let base = rollout(pi, rew, &r.prompt, cfg, seed, temperature)?;
        let size = r.vocab_size();
        for params in [
            DecodeParams::full(0.0),
            DecodeParams::topk(0.0, size, Fallback::MeanValue),
            DecodeParams::topk(0.0, 1, Fallback::BaseOnly),
        ] {
            let p = DecodeParams {
                seed,
                temperature,
                ..params
            };
            let (t, _) = decode_sequence(pi, &values, rew, &r.prompt, cfg, &p)?;
            let differ = if t.tokens == base.tokens { 0.0 } else { 1.0 };
            c.observe(differ, || {
                format!("seed {seed} mode {} k {}", p.mode, p.top_k)
            });
        }
    }
    c.finish()?;

    let mut c = Check::new("top-k with k=|V|", EXACT_TOL);
    for &beta in &betas {
        for n in tree.non_terminal() {
            let s = tree.state(n);
            let base = pi.next_dist(s)?;
            let full = augment_full(&base, &values.token_values(s, &all), beta)?;
            let tk = augment_topk(
                &base,
                |t| values.token_values(s, t),
                beta,
                all.len(),
                Fallback::MeanValue,
            )?;
            c.observe(max_abs(&tk.dist, &full), || {
                format!("{} beta {beta}", show(r, s))
            });
        }
    }
    c.finish()?;

    let mut c = Check::new("tilted marginal", MARGINAL_TOL);
    let base_seqs = sequence_distribution(pi, cfg, oc)?;
    for &beta in &betas {
        let tilted = exact_tilted_policy(pi, rew, beta, cfg, oc)?;
        let ln_z = log_partition(pi, rew, beta, cfg, oc)?;
        let seqs = sequence_distribution(&tilted, cfg, oc)?;
        for ((s, p0), (_, p)) in base_seqs.iter().zip(&seqs) {
            let want = p0 * (beta * rew.score(s) - ln_z).exp();
            c.observe((p - want).abs(), || format!("{} beta {beta}", show(r, s)));
        }
    }
    c.finish()?;

    // a non-linear reward is paired with a length penalty to form a combination
    let (weights, specs) = match &r.reward_spec {
        RewardSpec::Linear { weights, specs } => (weights.clone(), specs.clone()),
        other => (
            vec![1.0, 0.5],
            vec![other.clone(), RewardSpec::neg_length(1.0)],
        ),
    };
    let combined = RewardSpec::linear(weights.clone(), specs.clone()).compile(&cfg.vocab)?;
    let combined_values = exact_value(pi, &combined, cfg, oc)?;
    let mut parts: Vec<Box<dyn ValueEstimator>> = Vec::new();
    for spec in &specs {
        parts.push(Box::new(exact_value(
            pi,
            &spec.compile(&cfg.vocab)?,
            cfg,
            oc,
        )?));
    }
    let composite = compose(&weights, parts)?;
    let mut c = Check::new("composition linearity", EXACT_TOL);
    for s in tree.states() {
        let v = combined_values.get(s).copied().unwrap_or(f64::NAN);
        c.observe((composite.predict(s) - v).abs(), || show(r, s));
    }
    c.finish()?;

    println!("all oracle identities hold");
    Ok(())
}
