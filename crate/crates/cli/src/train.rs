use std::path::Path;

use vasamp_core::seed::derive_seed;
use vasamp_core::value::{
    collect_dataset, fit_value, AnyEstimator, Featurizer, LinearValue, MlpValue, TabularValue,
    TdConfig, TrainingLog, TrajectoryDataset,
};

use crate::artifact;
use crate::config::{EstimatorKind, Resolved};
use crate::error::CliResult;

pub fn featurizer(r: &Resolved) -> Featurizer {
    Featurizer::new(
        r.vocab_size(),
        r.episode.max_new_tokens,
        r.config.estimator.order,
    )
}

/// Untrained estimator of the configured kind.
pub fn fresh(r: &Resolved) -> AnyEstimator {
    match r.config.estimator.kind {
        EstimatorKind::Tabular => AnyEstimator::Tabular(TabularValue::new()),
        EstimatorKind::Linear => AnyEstimator::Linear(LinearValue::new(featurizer(r))),
        EstimatorKind::Mlp => AnyEstimator::Mlp(MlpValue::new(
            featurizer(r),
            &r.config.estimator.hidden,
            derive_seed(r.config.seed, "init", 0),
        )),
    }
}

pub fn fit(
    est: &mut AnyEstimator,
    ds: &TrajectoryDataset,
    td: &TdConfig,
    r: &Resolved,
) -> CliResult<TrainingLog> {
    Ok(match est {
        AnyEstimator::Tabular(e) => fit_value(e, ds, td, &r.episode)?,
        AnyEstimator::Linear(e) => fit_value(e, ds, td, &r.episode)?,
        AnyEstimator::Mlp(e) => fit_value(e, ds, td, &r.episode)?,
    })
}

pub fn collect(r: &Resolved) -> CliResult<TrajectoryDataset> {
    let c = &r.config;
    Ok(collect_dataset(
        &r.policy,
        &r.reward,
        std::slice::from_ref(&r.prompt),
        c.collect.n_trajectories,
        c.collect.temperature,
        c.seed,
        &r.episode,
    )?)
}

pub fn run(r: &Resolved, out: &Path) -> CliResult<()> {
    let ds = collect(r)?;
    let mut est = fresh(r);
    let log = fit(&mut est, &ds, &r.config.td, r)?;

    artifact::write(
        &out.join("checkpoint.json"),
        &artifact::checkpoint_json(&est, &r.checksum),
    )?;
    artifact::write(
        &out.join("dataset.jsonl"),
        &artifact::jsonl(
            "dataset",
            &r.checksum,
            ds.trajectories.iter().map(|t| t.to_record()),
        ),
    )?;
    let mut csv = format!("# config_checksum: {}\nepoch,mse\n", r.checksum);
    for (i, mse) in log.epoch_mse.iter().enumerate() {
        csv.push_str(&format!("{},{mse}\n", i + 1));
    }
    artifact::write(&out.join("training_log.csv"), &csv)?;

    println!(
        "trained {} estimator on {} trajectories (label mean {:.6}); final epoch mse {:.6}",
        est.kind(),
        ds.len(),
        ds.label_mean(),
        log.epoch_mse.last().copied().unwrap_or(f64::NAN)
    );
    println!("checkpoint: {}", out.join("checkpoint.json").display());
    Ok(())
}
