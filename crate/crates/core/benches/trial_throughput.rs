//! Monte Carlo trial throughput: rayon pool vs the sequential path.
//!
//! The workload is one transition-sweep style trial (generate a spiked
//! matrix, transform it, take both largest eigenvalues), the inner loop
//! every experiment in the harness is made of.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spiked_detect::harness::parallel::{configure_threads, map_trials, map_trials_seq};
use spiked_detect::models::{generate, ModelKind, ModelSpec, PriorKind};
use spiked_detect::noise::bimodal_noise;
use spiked_detect::spectral::{gram, sym_eigenvalues};
use spiked_detect::stream::Stream;
use spiked_detect::transform::{entrywise_transform, TransformSpec};

fn one_trial(spec: &ModelSpec, tspec: &TransformSpec, stream: Stream) -> (f64, f64) {
    let data = generate(spec, stream).expect("generation");
    let raw = sym_eigenvalues(&gram(&data.values)).expect("eigen")[0];
    let transformed = entrywise_transform(&data.values, tspec).expect("transform");
    let tr = sym_eigenvalues(&gram(&transformed.values)).expect("eigen")[0];
    (raw, tr)
}

fn bench_trials(c: &mut Criterion) {
    let threads = configure_threads(None);
    let spec = ModelSpec {
        kind: ModelKind::Additive,
        m: 96,
        n: 192,
        snr: 0.6,
        prior_u: PriorKind::IidRademacher,
        prior_v: PriorKind::IidRademacher,
        noise: bimodal_noise(),
        seed: 0,
    };
    let tspec = TransformSpec::score(bimodal_noise());
    let trials = 16u64;
    let root = Stream::root(2024);

    let mut group = c.benchmark_group("transition_trials");
    group.sample_size(10);
    group.bench_with_input(
        BenchmarkId::new("sequential", trials),
        &trials,
        |b, &n| {
            b.iter(|| map_trials_seq(n, |t| one_trial(&spec, &tspec, root.child(t))));
        },
    );
    group.bench_with_input(
        BenchmarkId::new(format!("parallel_{threads}_threads"), trials),
        &trials,
        |b, &n| {
            b.iter(|| map_trials(n, |t| one_trial(&spec, &tspec, root.child(t))));
        },
    );
    group.finish();
}

criterion_group!(benches, bench_trials);
criterion_main!(benches);
