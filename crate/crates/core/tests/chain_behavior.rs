// Statistical behavior of the samplers: stationarity against enumeration
// oracles, joint correctness of the label and permutation moves, posterior
// learning of the shrinkage scale, and agreement between the two label-update
// schemes.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shrinkpart::baseline::BaselineSpec;
use shrinkpart::fit::coclustering;
use shrinkpart::mcmc::{
    run_chain, DependenceKind, GritSpec, LabelUpdate, Likelihood, McmcConfig, PartitionPrior,
    ShrinkageSpec,
};
use shrinkpart::metrics::adjusted_rand_index;
use shrinkpart::partition::{enumerate_partitions, Partition};
use shrinkpart::perm::{enumerate_permutations, factorial, Permutation};
use shrinkpart::regression::RegressionPriors;
use shrinkpart::sp::{sp_log_pmf, sp_marginal_log_pmf, MarginalMode, SpParams};
use shrinkpart::synth::{generate, SynthConfig};

fn p(labels: &[usize]) -> Partition {
    Partition::from_labels(labels).unwrap()
}

fn ewens1() -> BaselineSpec {
    BaselineSpec::ewens(1.0).unwrap()
}

// Coefficient priors wide enough for the synthetic generator's scale (the
// application defaults are tight around that application's estimates).
fn loose_priors(p_x: usize, p_z: usize) -> RegressionPriors {
    let mut priors = RegressionPriors::default_for(p_x, p_z);
    priors.mu_beta.fill(0.0);
    priors.lambda_beta = nalgebra::DMatrix::identity(p_x, p_x) * 0.04;
    priors.lambda_gamma = nalgebra::DMatrix::identity(p_z, p_z) * 0.04;
    priors
}

fn fixed_sp_kind(anchor: Partition, omega: f64, psi: f64) -> DependenceKind {
    DependenceKind::Independent {
        prior: PartitionPrior::Sp {
            anchor,
            shrinkage: ShrinkageSpec::Fixed { value: omega },
            grit: GritSpec::Fixed { value: psi },
            baseline: ewens1(),
        },
    }
}

#[test]
fn label_and_permutation_moves_target_the_marginal_prior() {
    // With a constant likelihood and fixed (omega, psi), the chain's marginal
    // partition distribution must match the exact permutation-marginal pmf.
    let anchor = p(&[1, 1, 2, 2]);
    let kind = fixed_sp_kind(anchor.clone(), 2.0, 0.3);
    let likelihood = Likelihood::Constant {
        n_units: 4,
        n_times: 1,
    };
    let config = McmcConfig {
        iterations: 100_000,
        burn_in: 2_000,
        thin: 1,
        ..McmcConfig::default_independent()
    };
    let archive = run_chain(&kind, &likelihood, None, &config, 7, 0).unwrap();

    let params = SpParams::with_common_shrinkage(anchor, 2.0, 0.3, ewens1()).unwrap();
    let all: Vec<Partition> = enumerate_partitions(4).unwrap().collect();
    let exact: Vec<f64> = all
        .iter()
        .map(|q| {
            sp_marginal_log_pmf(&params, q, MarginalMode::Exact)
                .unwrap()
                .exp()
        })
        .collect();
    let mut counts = vec![0usize; all.len()];
    for draw in &archive.partitions {
        counts[all.iter().position(|q| *q == draw[0]).unwrap()] += 1;
    }
    let draws = archive.n_draws() as f64;
    let tv: f64 = exact
        .iter()
        .zip(&counts)
        .map(|(e, &c)| (e - c as f64 / draws).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.03, "total variation {tv}");
}

#[test]
fn joint_partition_permutation_distribution_matches_enumeration() {
    // The joint stationary law is uniform over the 24 permutations times the
    // fixed-permutation pmf; compare the empirical joint over all 24 x 15
    // states against enumeration.
    let anchor = p(&[1, 1, 2, 2]);
    let kind = fixed_sp_kind(anchor.clone(), 1.5, 0.4);
    let likelihood = Likelihood::Constant {
        n_units: 4,
        n_times: 1,
    };
    let config = McmcConfig {
        iterations: 150_000,
        burn_in: 5_000,
        thin: 1,
        perm_attempts: 4,
        perm_block: 3,
        ..McmcConfig::default_independent()
    };
    let archive = run_chain(&kind, &likelihood, None, &config, 13, 0).unwrap();

    let params = SpParams::with_common_shrinkage(anchor, 1.5, 0.4, ewens1()).unwrap();
    let all_partitions: Vec<Partition> = enumerate_partitions(4).unwrap().collect();
    let all_perms: Vec<Permutation> = enumerate_permutations(4).unwrap().collect();
    let n_perms = factorial(4);
    let mut exact = vec![vec![0.0; all_partitions.len()]; all_perms.len()];
    for (s, perm) in all_perms.iter().enumerate() {
        for (q, partition) in all_partitions.iter().enumerate() {
            exact[s][q] = sp_log_pmf(&params, partition, perm).unwrap().exp() / n_perms;
        }
    }
    let mut counts = vec![vec![0usize; all_partitions.len()]; all_perms.len()];
    for (draw, perms) in archive.partitions.iter().zip(&archive.perms) {
        let s = all_perms.iter().position(|x| *x == perms[0]).unwrap();
        let q = all_partitions.iter().position(|x| *x == draw[0]).unwrap();
        counts[s][q] += 1;
    }
    let draws = archive.n_draws() as f64;
    let mut tv = 0.0;
    for s in 0..all_perms.len() {
        for q in 0..all_partitions.len() {
            tv += (exact[s][q] - counts[s][q] as f64 / draws).abs();
        }
    }
    tv /= 2.0;
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn shrinkage_posterior_rises_when_partitions_sit_on_the_anchor() {
    // Three observed partitions equal to the anchor are strong evidence for
    // large shrinkage: the posterior mean of omega must exceed the prior mean
    // by several Monte Carlo standard errors.
    let anchor = p(&[1, 1, 2, 2]);
    let kind = DependenceKind::Independent {
        prior: PartitionPrior::Sp {
            anchor: anchor.clone(),
            shrinkage: ShrinkageSpec::Random,
            grit: GritSpec::Fixed { value: 0.3 },
            baseline: ewens1(),
        },
    };
    // Run the joint prior chain and condition on the event that every
    // partition draw equals the anchor; the omega draws on that event follow
    // the conditional posterior, which must sit above the prior.
    let likelihood = Likelihood::Constant {
        n_units: 4,
        n_times: 3,
    };
    let config = McmcConfig {
        iterations: 120_000,
        burn_in: 5_000,
        thin: 2,
        ..McmcConfig::default_independent()
    };
    let archive = run_chain(&kind, &likelihood, None, &config, 3, 0).unwrap();
    let mut conditional: Vec<f64> = Vec::new();
    for (i, draw) in archive.partitions.iter().enumerate() {
        if draw.iter().all(|q| *q == anchor) {
            conditional.push(archive.omegas[i]);
        }
    }
    assert!(
        conditional.len() > 200,
        "too few conditional draws: {}",
        conditional.len()
    );
    let prior_mean = 5.0; // gamma(5, 1)
    let mean = conditional.iter().sum::<f64>() / conditional.len() as f64;
    let var = conditional
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (conditional.len() as f64 - 1.0);
    // Conditional draws are thinned but still correlated; inflate the naive
    // standard error by an autocorrelation-safe factor of 5.
    let se = (var / conditional.len() as f64).sqrt() * 5.0;
    assert!(
        mean > prior_mean + 3.0 * se,
        "conditional mean {mean} vs prior mean {prior_mean} (se {se})"
    );
}

#[test]
fn separated_clusters_are_recovered_with_perfect_ari() {
    let config = SynthConfig {
        n_units: 12,
        n_times: 1,
        rows_per_cell: 6,
        initial_clusters: 2,
        drift: 0.0,
        beta_sd: 4.0,
        tau: 25.0,
        seed: 21,
        ..SynthConfig::default()
    };
    let (data, truth) = generate(&config).unwrap();
    let priors = loose_priors(data.p_x(), data.p_z());
    let kind = DependenceKind::Independent {
        prior: PartitionPrior::Baseline { spec: ewens1() },
    };
    let mcmc = McmcConfig {
        iterations: 3_000,
        burn_in: 500,
        thin: 5,
        ..McmcConfig::default_independent()
    };
    let likelihood = Likelihood::Gaussian {
        data: &data,
        priors: &priors,
    };
    let archive = run_chain(&kind, &likelihood, None, &mcmc, 2, 0).unwrap();
    let draws: Vec<&Partition> = archive.partitions.iter().map(|d| &d[0]).collect();
    let estimate = shrinkpart::fit::point_estimate(&draws).unwrap();
    let ari = adjusted_rand_index(&estimate, &truth.partitions[0]).unwrap();
    assert!(ari > 0.999, "ARI {ari}");
}

#[test]
fn collapsed_and_auxiliary_label_updates_agree() {
    // Both label-update schemes must produce the same posterior; compare
    // co-clustering probabilities on a small instance.
    let config = SynthConfig {
        n_units: 6,
        n_times: 1,
        rows_per_cell: 2,
        initial_clusters: 2,
        drift: 0.0,
        beta_sd: 1.0,
        tau: 2.0,
        seed: 5,
        ..SynthConfig::default()
    };
    let (data, _) = generate(&config).unwrap();
    let priors = loose_priors(data.p_x(), data.p_z());
    let kind = fixed_sp_kind(p(&[1, 1, 1, 2, 2, 2]), 1.0, 0.3);
    let run = |label_update: LabelUpdate, seed: u64| {
        let mcmc = McmcConfig {
            iterations: 40_000,
            burn_in: 2_000,
            thin: 4,
            label_update,
            ..McmcConfig::default_independent()
        };
        let likelihood = Likelihood::Gaussian {
            data: &data,
            priors: &priors,
        };
        let archive = run_chain(&kind, &likelihood, None, &mcmc, seed, 0).unwrap();
        let draws: Vec<&Partition> = archive.partitions.iter().map(|d| &d[0]).collect();
        coclustering(&draws)
    };
    let a: DMatrix<f64> = run(LabelUpdate::Collapsed, 101);
    let b: DMatrix<f64> = run(LabelUpdate::Neal8, 202);
    let max_diff = (0..6)
        .flat_map(|i| (0..6).map(move |j| (i, j)))
        .map(|(i, j)| (a[(i, j)] - b[(i, j)]).abs())
        .fold(0.0, f64::max);
    assert!(max_diff < 0.05, "max co-clustering difference {max_diff}");
}

#[test]
fn permutation_stickiness_is_reported() {
    // Anchored chains with informative shrinkage accept permutation moves
    // at a low but nonzero rate; the counter must reflect attempts.
    let kind = fixed_sp_kind(p(&[1, 1, 2, 2, 3, 3]), 5.0, 0.4);
    let likelihood = Likelihood::Constant {
        n_units: 6,
        n_times: 1,
    };
    let config = McmcConfig {
        iterations: 2_000,
        burn_in: 100,
        thin: 1,
        ..McmcConfig::default_independent()
    };
    let archive = run_chain(&kind, &likelihood, None, &config, 17, 0).unwrap();
    let stats = archive.acceptance.permutation;
    assert_eq!(stats.attempted, 2_000 * 10);
    assert!(stats.rate() > 0.0 && stats.rate() < 1.0);
}

#[test]
fn one_unit_posterior_equals_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let _ = Permutation::random(3, &mut rng);
    let kind = fixed_sp_kind(p(&[1]), 2.0, 0.5);
    let likelihood = Likelihood::Constant {
        n_units: 1,
        n_times: 1,
    };
    let config = McmcConfig {
        iterations: 500,
        burn_in: 50,
        thin: 1,
        ..McmcConfig::default_independent()
    };
    let archive = run_chain(&kind, &likelihood, None, &config, 1, 0).unwrap();
    assert!(archive.partitions.iter().all(|d| d[0].labels() == [1]));
}

#[test]
fn temporal_zero_shrinkage_chain_factorizes() {
    // With zero common shrinkage the temporal prior factorizes, so the
    // second partition's marginal must match the plain baseline law.
    let kind = DependenceKind::Temporal {
        initial: ewens1(),
        baseline: ewens1(),
        shrinkage: ShrinkageSpec::Fixed { value: 0.0 },
        grit: GritSpec::Fixed { value: 0.3 },
        spacings: None,
    };
    let likelihood = Likelihood::Constant {
        n_units: 4,
        n_times: 2,
    };
    let config = McmcConfig {
        iterations: 60_000,
        burn_in: 2_000,
        thin: 1,
        ..McmcConfig::default_dependent()
    };
    let archive = run_chain(&kind, &likelihood, None, &config, 29, 0).unwrap();
    let all: Vec<Partition> = enumerate_partitions(4).unwrap().collect();
    let perm = Permutation::natural(4);
    let mut counts = vec![0usize; all.len()];
    for draw in &archive.partitions {
        counts[all.iter().position(|q| *q == draw[1]).unwrap()] += 1;
    }
    let draws = archive.n_draws() as f64;
    let tv: f64 = all
        .iter()
        .zip(&counts)
        .map(|(q, &c)| {
            let exact = shrinkpart::baseline::baseline_log_pmf(&ewens1(), q, &perm)
                .unwrap()
                .exp();
            (exact - c as f64 / draws).abs()
        })
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.03, "total variation {tv}");
}

#[test]
fn anchor_posterior_equals_its_prior_at_zero_shrinkage() {
    // With zero shrinkage the partitions carry no information about the
    // anchor, so its marginal must match the anchor prior.
    let kind = DependenceKind::Hierarchical {
        anchor_prior: ewens1(),
        baseline: ewens1(),
        shrinkage: ShrinkageSpec::Fixed { value: 0.0 },
        grit: GritSpec::Fixed { value: 0.3 },
    };
    let likelihood = Likelihood::Constant {
        n_units: 4,
        n_times: 2,
    };
    let config = McmcConfig {
        iterations: 60_000,
        burn_in: 2_000,
        thin: 1,
        ..McmcConfig::default_dependent()
    };
    let archive = run_chain(&kind, &likelihood, None, &config, 31, 0).unwrap();
    let anchors = archive.anchors.as_ref().unwrap();
    let all: Vec<Partition> = enumerate_partitions(4).unwrap().collect();
    let perm = Permutation::natural(4);
    let mut counts = vec![0usize; all.len()];
    for a in anchors {
        counts[all.iter().position(|q| q == a).unwrap()] += 1;
    }
    let draws = anchors.len() as f64;
    let tv: f64 = all
        .iter()
        .zip(&counts)
        .map(|(q, &c)| {
            let exact = shrinkpart::baseline::baseline_log_pmf(&ewens1(), q, &perm)
                .unwrap()
                .exp();
            (exact - c as f64 / draws).abs()
        })
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.03, "anchor marginal total variation {tv}");
}

#[test]
fn precision_posterior_sits_between_prior_and_data() {
    let config = SynthConfig {
        n_units: 10,
        n_times: 1,
        rows_per_cell: 4,
        initial_clusters: 2,
        drift: 0.0,
        beta_sd: 1.0,
        tau: 4.0,
        seed: 77,
        ..SynthConfig::default()
    };
    let (data, truth) = generate(&config).unwrap();
    let priors = loose_priors(data.p_x(), data.p_z());
    // Prior mean of tau is a/b; the data were generated at tau = 4.
    let prior_mean = priors.a_tau / priors.b_tau;
    let kind = DependenceKind::Independent {
        prior: PartitionPrior::Fixed {
            target: truth.partitions[0].clone(),
        },
    };
    let mcmc = McmcConfig {
        iterations: 8_000,
        burn_in: 1_000,
        thin: 2,
        ..McmcConfig::default_independent()
    };
    let likelihood = Likelihood::Gaussian {
        data: &data,
        priors: &priors,
    };
    let archive = run_chain(&kind, &likelihood, None, &mcmc, 13, 0).unwrap();
    let post_mean: f64 =
        archive.taus.iter().map(|t| t[0]).sum::<f64>() / archive.n_draws() as f64;
    let (lo, hi) = (prior_mean.min(truth.tau), prior_mean.max(truth.tau));
    assert!(
        post_mean > lo * 0.6 && post_mean < hi * 1.4,
        "posterior tau mean {post_mean} outside [{lo}, {hi}] band"
    );
}

#[test]
fn fixed_truth_prior_is_best_or_tied_on_synthetic_data() {
    use shrinkpart::fit::crossval;
    let config = SynthConfig {
        n_units: 10,
        n_times: 2,
        rows_per_cell: 2,
        initial_clusters: 2,
        drift: 0.0,
        beta_sd: 1.5,
        tau: 2.0,
        seed: 41,
        ..SynthConfig::default()
    };
    let (data, truth) = generate(&config).unwrap();
    let priors = loose_priors(data.p_x(), data.p_z());
    let mcmc = McmcConfig {
        iterations: 2_500,
        burn_in: 500,
        thin: 4,
        ..McmcConfig::default_independent()
    };
    // The truth is constant across time here, so one fixed target works for
    // both time points.
    let fixed = DependenceKind::Independent {
        prior: PartitionPrior::Fixed {
            target: truth.partitions[0].clone(),
        },
    };
    let crp = DependenceKind::Independent {
        prior: PartitionPrior::Baseline { spec: ewens1() },
    };
    let fixed_report = crossval(&data, &priors, &fixed, &mcmc, 4, 19).unwrap();
    let crp_report = crossval(&data, &priors, &crp, &mcmc, 4, 19).unwrap();
    assert!(
        fixed_report.total + fixed_report.moe95 + crp_report.moe95 > crp_report.total,
        "a prior fixed at the truth scored {} +/- {} vs the baseline-only fit {} +/- {}",
        fixed_report.total,
        fixed_report.moe95,
        crp_report.total,
        crp_report.moe95
    );
}
