use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vasamp_bench::fixture;
use vasamp_core::decode::{augment_full, augment_topk, decode_sequence, DecodeParams, Fallback};
use vasamp_core::oracle::{exact_tilted_policy, exact_value, policy_kl};
use vasamp_core::value::{collect_dataset, fit_value, TabularValue, TdConfig};

fn tilt(c: &mut Criterion) {
    let mut g = c.benchmark_group("tilt");
    for size in [5usize, 64, 1024] {
        let base: Vec<f64> = (1..=size).map(|i| 1.0 / (i as f64)).collect();
        let z: f64 = base.iter().sum();
        let base: Vec<f64> = base.into_iter().map(|p| p / z).collect();
        let values: Vec<f64> = (0..size)
            .map(|i| ((i * 7919) % 101) as f64 / 101.0)
            .collect();
        g.bench_with_input(BenchmarkId::new("full", size), &size, |b, _| {
            b.iter(|| augment_full(black_box(&base), black_box(&values), 3.0).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("topk_20", size), &size, |b, _| {
            b.iter(|| {
                augment_topk(
                    black_box(&base),
                    |t| t.iter().map(|x| values[x.0]).collect(),
                    3.0,
                    20.min(size),
                    Fallback::MeanValue,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    for name in ["tiny_ab", "formality", "mixed_objective"] {
        let f = fixture(name);
        g.bench_function(BenchmarkId::new("exact_value", name), |b| {
            b.iter(|| exact_value(&f.policy, &f.reward, &f.episode, &f.oracle).unwrap())
        });
        g.bench_function(BenchmarkId::new("tilted_kl", name), |b| {
            b.iter(|| {
                let t =
                    exact_tilted_policy(&f.policy, &f.reward, 2.0, &f.episode, &f.oracle).unwrap();
                policy_kl(&t, &f.policy, &f.episode, &f.oracle).unwrap()
            })
        });
    }
    g.finish();
}

fn decode(c: &mut Criterion) {
    let f = fixture("formality");
    let mut g = c.benchmark_group("decode");
    for (label, params) in [
        ("full", DecodeParams::full(2.0)),
        ("topk_2", DecodeParams::topk(2.0, 2, Fallback::MeanValue)),
        ("blackbox_3", DecodeParams::blackbox(2.0, 3)),
    ] {
        let mut seed = 0u64;
        g.bench_function(label, |b| {
            b.iter(|| {
                seed += 1;
                let p = DecodeParams {
                    seed,
                    ..params.clone()
                };
                decode_sequence(
                    &f.policy,
                    &f.values,
                    &f.reward,
                    &f.instance.prompt,
                    &f.episode,
                    &p,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let f = fixture("verbose_neglen");
    let ds = collect_dataset(
        &f.policy,
        &f.reward,
        std::slice::from_ref(&f.instance.prompt),
        1000,
        1.0,
        0,
        &f.episode,
    )
    .unwrap();
    c.bench_function("td_lambda_tabular_1k", |b| {
        b.iter(|| {
            let mut est = TabularValue::new();
            fit_value(&mut est, &ds, &TdConfig::default(), &f.episode).unwrap()
        })
    });
}

criterion_group!(benches, tilt, oracle, decode, training);
criterion_main!(benches);
