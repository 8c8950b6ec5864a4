use std::path::Path;

use serde::Serialize;
use vasamp_core::decode::{decode_sequence, AugmentedStep, DecodeMode, DecodeParams, DecodeRecord};
use vasamp_core::seed::derive_seed;

use crate::artifact::{self, LoadedEstimator};
use crate::config::Resolved;
use crate::error::{CliError, CliResult};

pub struct DecodeOverrides {
    pub beta: Option<f64>,
    pub k: Option<usize>,
    pub mode: Option<DecodeMode>,
    pub n: usize,
}

#[derive(Serialize)]
struct StepRow<'a> {
    trajectory: usize,
    step: &'a AugmentedStep,
}

/// Trajectory `i` is decoded with seed `derive_seed(seed, "decode", i)`.
pub fn trajectory_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, "decode", i as u64)
}

pub fn run(r: &Resolved, est: &LoadedEstimator, o: &DecodeOverrides, out: &Path) -> CliResult<()> {
    let mut params = r.config.decode.clone();
    if let Some(b) = o.beta {
        params.beta = b;
    }
    if let Some(k) = o.k {
        params.top_k = k;
    }
    if let Some(m) = o.mode {
        params.mode = m;
    }
    params.validate(r.vocab_size())?;
    if o.n == 0 {
        return Err(CliError::Config("--n must be >= 1".into()));
    }

    let mut records = Vec::with_capacity(o.n);
    let mut steps = Vec::new();
    for i in 0..o.n {
        let p = DecodeParams {
            seed: trajectory_seed(r.config.seed, i),
            ..params.clone()
        };
        let (traj, log) = decode_sequence(
            &r.policy,
            &est.estimator,
            &r.reward,
            &r.prompt,
            &r.episode,
            &p,
        )?;
        if p.mode == DecodeMode::BlackboxRerank {
            check_containment(&log, p.top_k, i)?;
        }
        records.push(DecodeRecord::new(&traj, &p, &est.checksum));
        steps.push(log);
    }

    artifact::write(
        &out.join("decode.jsonl"),
        &artifact::jsonl("decode", &r.checksum, &records),
    )?;
    let rows = steps.iter().enumerate().flat_map(|(i, log)| {
        log.iter().map(move |s| StepRow {
            trajectory: i,
            step: s,
        })
    });
    artifact::write(
        &out.join("steps.jsonl"),
        &artifact::jsonl("steps", &r.checksum, rows),
    )?;

    let mean = records.iter().map(|d| d.reward).sum::<f64>() / records.len() as f64;
    for d in records.iter().take(5) {
        let toks: Vec<_> = d.tokens.iter().map(|&t| vasamp_core::TokenId(t)).collect();
        println!("{:>8.4}  {}", d.reward, r.episode.vocab.render(&toks));
    }
    println!(
        "decoded {} trajectories (mode {}, beta {}, k {}): mean reward {mean:.6}",
        records.len(),
        params.mode,
        params.beta,
        params.top_k
    );
    Ok(())
}

/// Every chosen token must be one of the at most `k` provider candidates.
fn check_containment(log: &[AugmentedStep], k: usize, trajectory: usize) -> CliResult<()> {
    for s in log {
        let token = s.token.expect("decoded steps record their token");
        if s.candidates.len() > k || !s.candidates.contains(&token) {
            return Err(CliError::Verification(format!(
                "trajectory {trajectory}: token {token} at state {:?} is outside the visible set {:?}",
                s.state, s.candidates
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use vasamp_core::TokenId;

    fn step(candidates: &[usize], token: usize) -> AugmentedStep {
        AugmentedStep {
            state: "".into(),
            candidates: candidates.iter().map(|&t| TokenId(t)).collect(),
            base_probs: vec![],
            values: vec![],
            mean_value: None,
            normalizer: 1.0,
            dist: vec![],
            token: Some(TokenId(token)),
        }
    }

    #[test]
    fn containment_validator() {
        assert!(check_containment(&[step(&[0, 2], 2), step(&[1], 1)], 2, 0).is_ok());
        let e = check_containment(&[step(&[0, 2], 1)], 2, 4).unwrap_err();
        assert_eq!(e.exit_code(), 5);
        assert!(e.to_string().contains("trajectory 4"));
        assert!(check_containment(&[step(&[0, 1, 2], 1)], 2, 0).is_err());
    }
}
