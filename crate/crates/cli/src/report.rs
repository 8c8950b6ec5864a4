//! frontier, ablate, compose and bench-cost.

use std::path::Path;

use clap::ValueEnum;
use serde_json::json;
use vasamp_core::decode::{compose, TokenValues};
use vasamp_core::eval::{
    ablate_fallback, ablate_lambda, accuracy_vs_performance, cost_flops, frontier_base,
    frontier_bon_exact, frontier_csv, frontier_exact, frontier_mc, frontier_tilted, matched_bon_n,
    CostMethod, CostModel, FrontierPoint, Method, ValueSource,
};
use vasamp_core::oracle::StateTree;
use vasamp_core::seed::derive_seed;
use vasamp_core::value::{make_validation_set, AnyEstimator, ValueEstimator};
use vasamp_core::State;

use crate::artifact::{self, LoadedEstimator};
use crate::config::Resolved;
use crate::error::{CliError, CliResult};
use crate::train;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Source {
    /// Exact values from the enumeration oracle.
    Exact,
    /// The trained estimator checkpoint.
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Estimation {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Factor {
    /// Mean-value fallback against base-only top-k decoding.
    Fallback,
    /// Estimators trained with each lambda in grid.lambdas.
    Lambda,
    /// Top-k approximation quality for each k in grid.ks.
    K,
    /// Validation MSE against achieved reward over grid.sizes.
    Accuracy,
}

/// Applies `f` to each item on up to `jobs` threads, keeping input order.
fn par_map<T: Sync, U: Send>(
    jobs: usize,
    items: &[T],
    f: impl Fn(&T) -> CliResult<U> + Sync,
) -> CliResult<Vec<U>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    let parts: Vec<CliResult<Vec<U>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<CliResult<Vec<U>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn value_source<'a>(source: Source, est: Option<&'a LoadedEstimator>) -> ValueSource<'a> {
    match (source, est) {
        (Source::Learned, Some(e)) => ValueSource::Estimator(&e.estimator),
        _ => ValueSource::Exact,
    }
}

fn print_points(points: &[FrontierPoint]) {
    println!(
        "{:<14} {:>7} {:>10} {:>10}",
        "method", "beta", "kl", "reward"
    );
    for p in points {
        println!(
            "{:<14} {:>7} {:>10.5} {:>10.5}",
            p.method, p.beta, p.kl, p.expected_reward
        );
    }
}

pub struct FrontierArgs {
    pub source: Source,
    pub estimation: Estimation,
    pub n_samples: usize,
}

pub fn frontier(
    r: &Resolved,
    est: Option<&LoadedEstimator>,
    a: &FrontierArgs,
    jobs: usize,
    out: &Path,
) -> CliResult<()> {
    let c = &r.config;
    let betas = &c.grid.betas;
    let src = value_source(a.source, est);
    let mut points = vec![frontier_base(&r.policy, &r.reward, &r.episode, &r.oracle)?];
    match a.estimation {
        Estimation::Exact => {
            points.extend(
                par_map(jobs, betas, |&b| {
                    Ok(frontier_tilted(
                        &r.policy,
                        &r.reward,
                        &[b],
                        &r.episode,
                        &r.oracle,
                    )?)
                })?
                .into_iter()
                .flatten(),
            );
            points.extend(
                par_map(jobs, betas, |&b| {
                    Ok(frontier_exact(
                        &r.policy,
                        &r.reward,
                        src,
                        &[b],
                        &c.decode,
                        &r.episode,
                        &r.oracle,
                    )?)
                })?
                .into_iter()
                .flatten(),
            );
            if !c.grid.bon_ns.is_empty() {
                points.extend(frontier_bon_exact(
                    &r.policy,
                    &r.reward,
                    &c.grid.bon_ns,
                    &r.episode,
                    &r.oracle,
                )?);
            }
        }
        Estimation::Mc => {
            let exact_table;
            let values: &dyn TokenValues = match src {
                ValueSource::Estimator(e) => e,
                ValueSource::Exact => {
                    exact_table = vasamp_core::oracle::exact_value(
                        &r.policy, &r.reward, &r.episode, &r.oracle,
                    )?;
                    &exact_table
                }
            };
            let seed = derive_seed(c.seed, "frontier", 0);
            let method = match src {
                ValueSource::Exact => Method::VasExact,
                ValueSource::Estimator(_) => Method::VasLearned,
            };
            points.extend(
                par_map(jobs, betas, |&b| {
                    Ok(frontier_mc(
                        &r.policy,
                        values,
                        &r.reward,
                        &[b],
                        a.n_samples,
                        seed,
                        &c.decode,
                        &r.prompt,
                        &r.episode,
                    )?)
                })?
                .into_iter()
                .flatten()
                .map(|p| FrontierPoint { method, ..p }),
            );
        }
    }
    artifact::write(
        &out.join("frontier.csv"),
        &frontier_csv(&points, &r.checksum),
    )?;
    print_points(&points);
    Ok(())
}

pub struct AblateArgs {
    pub factor: Factor,
    pub source: Source,
    pub k: Option<usize>,
}

fn non_terminal_states(r: &Resolved) -> CliResult<Vec<State>> {
    let tree = StateTree::build(&r.episode, &r.prompt, r.oracle.node_cap)?;
    Ok(tree.non_terminal().map(|n| tree.state(n).clone()).collect())
}

pub fn ablate(
    r: &Resolved,
    est: Option<&LoadedEstimator>,
    a: &AblateArgs,
    out: &Path,
) -> CliResult<()> {
    let c = &r.config;
    let betas = &c.grid.betas;
    let src = value_source(a.source, est);
    let report = match a.factor {
        Factor::Fallback => {
            let k = a.k.unwrap_or(c.decode.top_k);
            let rep = ablate_fallback(&r.policy, &r.reward, src, betas, k, &r.episode, &r.oracle)?;
            for arm in &rep.arms {
                println!("arm {}", arm.name);
                print_points(&arm.points);
            }
            println!(
                "mean_value weakly dominates base_only on {:.1}% of grid points (k = {k})",
                100.0 * rep.dominance.unwrap_or(f64::NAN)
            );
            rep.to_json(&r.checksum)
        }
        Factor::Lambda => {
            let ds = train::collect(r)?;
            let proto = train::fresh(r);
            let rep = match &proto {
                AnyEstimator::Tabular(e) => ablate_lambda(
                    &r.policy,
                    &r.reward,
                    e,
                    &ds,
                    &c.td,
                    &c.grid.lambdas,
                    betas,
                    &c.decode,
                    &r.episode,
                    &r.oracle,
                )?,
                AnyEstimator::Linear(e) => ablate_lambda(
                    &r.policy,
                    &r.reward,
                    e,
                    &ds,
                    &c.td,
                    &c.grid.lambdas,
                    betas,
                    &c.decode,
                    &r.episode,
                    &r.oracle,
                )?,
                AnyEstimator::Mlp(e) => ablate_lambda(
                    &r.policy,
                    &r.reward,
                    e,
                    &ds,
                    &c.td,
                    &c.grid.lambdas,
                    betas,
                    &c.decode,
                    &r.episode,
                    &r.oracle,
                )?,
            };
            for arm in &rep.arms {
                println!("arm {}", arm.name);
                print_points(&arm.points);
            }
            if let Some(d) = rep.dominance {
                println!(
                    "{} weakly dominates {} on {:.1}% of grid points",
                    rep.arms[0].name,
                    rep.arms[rep.arms.len() - 1].name,
                    100.0 * d
                );
            }
            rep.to_json(&r.checksum)
        }
        Factor::K => {
            let table;
            let values: &dyn TokenValues = match src {
                ValueSource::Estimator(e) => e,
                ValueSource::Exact => {
                    table = vasamp_core::oracle::exact_value(
                        &r.policy, &r.reward, &r.episode, &r.oracle,
                    )?;
                    &table
                }
            };
            let rows = vasamp_core::eval::varying_k_report(
                &r.policy,
                &r.reward,
                values,
                c.decode.beta,
                &c.grid.ks,
                c.decode.fallback,
                &non_terminal_states(r)?,
                &r.episode,
                &r.oracle,
            )?;
            println!("{:>3} {:>10} {:>10} {:>10}", "k", "mean_tv", "kl", "reward");
            for row in &rows {
                println!(
                    "{:>3} {:>10.6} {:>10.5} {:>10.5}",
                    row.k, row.mean_tv, row.point.kl, row.point.expected_reward
                );
            }
            json!({ "config_checksum": r.checksum, "factor": "k", "beta": c.decode.beta, "rows": rows })
        }
        Factor::Accuracy => {
            let v = &c.validation;
            let valset = make_validation_set(
                &r.policy,
                &r.reward,
                std::slice::from_ref(&r.prompt),
                v.n_prefixes,
                v.prefix_len,
                v.completions,
                v.temperature,
                derive_seed(c.seed, "validation", 0),
                &r.episode,
            )?;
            let proto = train::fresh(r);
            let args = (
                &c.grid.sizes,
                &valset,
                c.decode.beta,
                &c.grid.seeds,
                &c.td,
                c.collect.temperature,
            );
            let table = match &proto {
                AnyEstimator::Tabular(e) => accuracy_vs_performance(
                    &r.policy, &r.reward, e, &r.prompt, args.0, args.1, args.2, args.3, args.4,
                    args.5, &r.episode, &r.oracle,
                )?,
                AnyEstimator::Linear(e) => accuracy_vs_performance(
                    &r.policy, &r.reward, e, &r.prompt, args.0, args.1, args.2, args.3, args.4,
                    args.5, &r.episode, &r.oracle,
                )?,
                AnyEstimator::Mlp(e) => accuracy_vs_performance(
                    &r.policy, &r.reward, e, &r.prompt, args.0, args.1, args.2, args.3, args.4,
                    args.5, &r.episode, &r.oracle,
                )?,
            };
            println!(
                "{:>8} {:>5} {:>12} {:>10}",
                "size", "seed", "val_mse", "reward"
            );
            for row in &table.rows {
                println!(
                    "{:>8} {:>5} {:>12.6} {:>10.5}",
                    row.size, row.seed, row.validation_mse, row.reward
                );
            }
            println!("spearman(validation mse, reward) = {:.4}", table.spearman);
            json!({ "config_checksum": r.checksum, "factor": "accuracy", "table": table })
        }
    };
    let name = format!(
        "ablation_{}.json",
        a.factor.to_possible_value().expect("named").get_name()
    );
    artifact::write(
        &out.join(name),
        &format!("{}\n", serde_json::to_string_pretty(&report).expect("json")),
    )
}

pub fn compose_cmd(
    r: &Resolved,
    parts: Vec<LoadedEstimator>,
    weights: &[f64],
    jobs: usize,
    out: &Path,
) -> CliResult<()> {
    let names: Vec<String> = parts.iter().map(|p| p.path.display().to_string()).collect();
    let boxed: Vec<Box<dyn ValueEstimator>> = parts
        .into_iter()
        .map(|p| Box::new(p.estimator) as Box<dyn ValueEstimator>)
        .collect();
    let composite = compose(weights, boxed)?;
    let c = &r.config;
    let points: Vec<FrontierPoint> = par_map(jobs, &c.grid.betas, |&b| {
        Ok(frontier_exact(
            &r.policy,
            &r.reward,
            ValueSource::Estimator(&composite),
            &[b],
            &c.decode,
            &r.episode,
            &r.oracle,
        )?)
    })?
    .into_iter()
    .flatten()
    .collect();
    artifact::write(
        &out.join("compose_frontier.csv"),
        &frontier_csv(&points, &r.checksum),
    )?;
    for (w, n) in weights.iter().zip(&names) {
        println!("{w:>8} x {n}");
    }
    print_points(&points);
    Ok(())
}

pub fn bench_cost(model: &CostModel, checksum: Option<&str>, out: Option<&Path>) -> CliResult<()> {
    let mut model = model.clone();
    if model.t.is_none() {
        // t only scales every cost by t², the ratios do not depend on it
        model.t = Some(1.0);
    }
    let policy_only = cost_flops(&model, CostMethod::PolicyOnly)?;
    let bon = cost_flops(&model, CostMethod::Bon).ok();
    let vas = cost_flops(&model, CostMethod::Vas).ok();
    let show = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v}"));
    println!("policy_only {policy_only}");
    println!("bon         {}", show(bon));
    println!("vas         {}", show(vas));
    let ratio = bon.zip(vas).map(|(b, v)| b / v);
    if let Some(x) = ratio {
        println!("bon/vas ratio: {x:.2}");
    }
    let matched = match (model.m, model.n, model.k) {
        (Some(m), Some(n), Some(k)) => Some(matched_bon_n(m, n, k)),
        _ => None,
    };
    if let Some(n) = matched {
        println!("N with bon cost >= vas cost: {n}");
    }
    if bon.is_none() && vas.is_none() {
        return Err(CliError::Config(
            "cost model needs n with k or big_n".into(),
        ));
    }
    if let Some(dir) = out {
        let report = json!({
            "config_checksum": checksum,
            "model": model,
            "policy_only": policy_only,
            "bon": bon,
            "vas": vas,
            "bon_over_vas": ratio,
            "matched_bon_n": matched,
        });
        artifact::write(
            &dir.join("cost.json"),
            &format!("{}\n", serde_json::to_string_pretty(&report).expect("json")),
        )?;
    }
    Ok(())
}
