use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shrinkpart::baseline::BaselineSpec;
use shrinkpart::bell::BellTable;
use shrinkpart::partition::Partition;
use shrinkpart::perm::Permutation;
use shrinkpart::sp::{sp_log_pmf, sp_sample, SpParams};

fn params(n: usize) -> SpParams {
    let anchor = Partition::from_labels(&(0..n).map(|i| 1 + i % 4).collect::<Vec<_>>()).unwrap();
    SpParams::with_common_shrinkage(anchor, 2.0, 0.3, BaselineSpec::ewens(1.0).unwrap()).unwrap()
}

fn bench_pmf(c: &mut Criterion) {
    let mut group = c.benchmark_group("sp_log_pmf");
    for n in [50usize, 200] {
        let params = params(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let perm = Permutation::random(n, &mut rng);
        let target = sp_sample(&params, &perm, &mut rng).unwrap();
        group.bench_function(format!("n{n}"), |b| {
            b.iter(|| sp_log_pmf(&params, &target, &perm).unwrap())
        });
    }
    group.finish();
}

fn bench_sample(c: &mut Criterion) {
    let mut group = c.benchmark_group("sp_sample");
    for n in [50usize, 200] {
        let params = params(n);
        let perm = Permutation::natural(n);
        group.bench_function(format!("n{n}"), |b| {
            b.iter_batched(
                || ChaCha8Rng::seed_from_u64(7),
                |mut rng| sp_sample(&params, &perm, &mut rng).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn bench_bell(c: &mut Criterion) {
    c.bench_function("bell_table_128", |b| {
        b.iter(|| BellTable::with_capacity(128))
    });
}

criterion_group!(benches, bench_pmf, bench_sample, bench_bell);
criterion_main!(benches);
