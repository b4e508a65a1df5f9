use criterion::{criterion_group, criterion_main, Criterion};

use shrinkpart::baseline::BaselineSpec;
use shrinkpart::mcmc::{
    run_chain, DependenceKind, GritSpec, Likelihood, McmcConfig, ShrinkageSpec,
};
use shrinkpart::regression::RegressionPriors;
use shrinkpart::synth::{generate, SynthConfig};

fn bench_temporal_iterations(c: &mut Criterion) {
    let (data, _) = generate(&SynthConfig {
        n_units: 20,
        n_times: 5,
        seed: 11,
        ..SynthConfig::default()
    })
    .unwrap();
    let priors = RegressionPriors::default_for(data.p_x(), data.p_z());
    let kind = DependenceKind::Temporal {
        initial: BaselineSpec::ewens(1.0).unwrap(),
        baseline: BaselineSpec::ewens(1.0).unwrap(),
        shrinkage: ShrinkageSpec::Random,
        grit: GritSpec::Random,
        spacings: None,
    };
    let config = McmcConfig {
        iterations: 50,
        burn_in: 10,
        thin: 1,
        ..McmcConfig::default_dependent()
    };
    c.bench_function("temporal_chain_50_iter_n20_t5", |b| {
        b.iter(|| {
            let likelihood = Likelihood::Gaussian {
                data: &data,
                priors: &priors,
            };
            run_chain(&kind, &likelihood, None, &config, 3, 0).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_temporal_iterations
}
criterion_main!(benches);
