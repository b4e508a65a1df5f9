// Model fitting, cross-validation, and posterior summaries: held-out
// log-likelihood scoring with Monte Carlo margins of error, best-of-samples
// point estimation under Binder loss, co-clustering matrices, and the
// cross-time posterior agreement matrix.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mcmc::{run_chain, DependenceKind, HeldoutObs, Likelihood, McmcConfig, SampleArchive};
use crate::metrics::adjusted_rand_index;
use crate::partition::Partition;
use crate::regression::{ObsGroup, RegressionDataset, RegressionPriors};

/// Address of a single observation row: (time, unit, row-within-cell).
pub type RowId = (usize, usize, usize);

/// Mutually exclusive, exhaustive shards of the observation rows, balanced in
/// size to within one.
pub fn kfold_shards(data: &RegressionDataset, folds: usize, seed: u64) -> Result<Vec<Vec<RowId>>> {
    if folds < 2 {
        return Err(Error::Config("cross-validation needs >= 2 folds".into()));
    }
    let mut rows: Vec<RowId> = Vec::new();
    for t in 0..data.n_times() {
        for unit in 0..data.n_units() {
            for r in 0..data.group(t, unit).n_rows() {
                rows.push((t, unit, r));
            }
        }
    }
    if rows.len() < folds {
        return Err(Error::Config(format!(
            "fold count {folds} exceeds the {} observations",
            rows.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(&mut rows[..], &mut rng);
    let mut shards = vec![Vec::new(); folds];
    for (i, row) in rows.into_iter().enumerate() {
        shards[i % folds].push(row);
    }
    Ok(shards)
}

/// Splits the panel into a training dataset (shard rows removed) and the
/// held-out rows ready for scoring.
pub fn split_fold(
    data: &RegressionDataset,
    shard: &[RowId],
) -> Result<(RegressionDataset, Vec<HeldoutObs>)> {
    let mut held = vec![vec![Vec::new(); data.n_units()]; data.n_times()];
    for &(t, unit, r) in shard {
        held[t][unit].push(r);
    }
    let mut heldout = Vec::with_capacity(shard.len());
    let mut groups: Vec<Vec<ObsGroup>> = Vec::with_capacity(data.n_times());
    for (t, held_units) in held.iter().enumerate() {
        let mut per_unit = Vec::with_capacity(data.n_units());
        for (unit, held_rows) in held_units.iter().enumerate() {
            let g = data.group(t, unit);
            let keep: Vec<usize> = (0..g.n_rows()).filter(|r| !held_rows.contains(r)).collect();
            for &r in held_rows {
                heldout.push(HeldoutObs {
                    t,
                    unit,
                    y: g.y[r],
                    x: g.x.row(r).transpose(),
                    z: g.z.row(r).transpose(),
                });
            }
            let mut y = DVector::zeros(keep.len());
            let mut x = DMatrix::zeros(keep.len(), data.p_x());
            let mut z = DMatrix::zeros(keep.len(), data.p_z());
            for (new_r, &r) in keep.iter().enumerate() {
                y[new_r] = g.y[r];
                x.set_row(new_r, &g.x.row(r));
                z.set_row(new_r, &g.z.row(r));
            }
            per_unit.push(ObsGroup { y, x, z });
        }
        groups.push(per_unit);
    }
    let train = RegressionDataset::new(
        groups,
        data.unit_ids().to_vec(),
        data.time_ids().to_vec(),
        data.p_x(),
        data.p_z(),
    )?;
    Ok((train, heldout))
}

/// Overlapping-batch-means standard error of the mean of a (possibly
/// autocorrelated) series.
pub fn obm_se(series: &[f64]) -> f64 {
    let m = series.len();
    if m < 2 {
        return f64::INFINITY;
    }
    let mean = series.iter().sum::<f64>() / m as f64;
    if m < 8 {
        let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        return (var / m as f64).sqrt();
    }
    let b = (m as f64).sqrt().floor() as usize;
    let n_batches = m - b + 1;
    let mut window: f64 = series[..b].iter().sum();
    let mut ss = (window / b as f64 - mean).powi(2);
    for i in 1..n_batches {
        window += series[i + b - 1] - series[i - 1];
        ss += (window / b as f64 - mean).powi(2);
    }
    let long_run =
        (m as f64 * b as f64) / ((m - b) as f64 * (n_batches as f64)) * ss;
    (long_run / m as f64).sqrt()
}

/// Result of fitting one model, with or without cross-validation.
#[derive(Clone, Debug)]
pub struct FitSummary {
    /// Sum over held-out observations of the Monte Carlo estimate of the
    /// expected log-likelihood, with a 95% margin of error.
    pub out_of_sample: Option<(f64, f64)>,
    pub wall_seconds: f64,
    pub cpu_seconds: f64,
    pub point_estimates: Vec<Partition>,
    pub coclustering: Vec<DMatrix<f64>>,
    pub ari_matrix: DMatrix<f64>,
}

/// Pairwise co-clustering probabilities as exact sample averages.
pub fn coclustering(draws: &[&Partition]) -> DMatrix<f64> {
    let n = draws.first().map(|p| p.n_items()).unwrap_or(0);
    let mut counts = DMatrix::zeros(n, n);
    for p in draws {
        for i in 0..n {
            for j in 0..n {
                if p.same_cluster(i, j) {
                    counts[(i, j)] += 1.0;
                }
            }
        }
    }
    counts / draws.len() as f64
}

/// The sampled partition minimizing posterior expected Binder loss against
/// the co-clustering matrix (best-of-samples search).
pub fn point_estimate(draws: &[&Partition]) -> Result<Partition> {
    if draws.is_empty() {
        return Err(Error::EmptyInput("point_estimate"));
    }
    let probs = coclustering(draws);
    let n = draws[0].n_items();
    let mut best: Option<(f64, &Partition)> = None;
    for p in draws {
        let mut loss = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let pij = probs[(i, j)];
                loss += if p.same_cluster(i, j) {
                    1.0 - pij
                } else {
                    pij
                };
            }
        }
        match best {
            Some((b, _)) if loss >= b => {}
            _ => best = Some((loss, p)),
        }
    }
    Ok(best.unwrap().1.clone())
}

/// Expected Binder loss of one partition against a co-clustering matrix.
pub fn expected_binder_loss(p: &Partition, probs: &DMatrix<f64>) -> f64 {
    let n = p.n_items();
    let mut loss = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let pij = probs[(i, j)];
            loss += if p.same_cluster(i, j) { 1.0 - pij } else { pij };
        }
    }
    loss
}

/// T x T matrix of posterior mean adjusted Rand indices between the sampled
/// partitions at each pair of time points (same-draw pairing).
pub fn posterior_ari_matrix(archive: &SampleArchive) -> Result<DMatrix<f64>> {
    let t_count = archive.n_times;
    let mut acc = DMatrix::zeros(t_count, t_count);
    for draw in &archive.partitions {
        for s in 0..t_count {
            for t in 0..t_count {
                acc[(s, t)] += if s == t {
                    1.0
                } else {
                    adjusted_rand_index(&draw[s], &draw[t])?
                };
            }
        }
    }
    Ok(acc / archive.n_draws() as f64)
}

fn merge_archives(mut archives: Vec<SampleArchive>) -> SampleArchive {
    let mut merged = archives.remove(0);
    for a in archives {
        merged.partitions.extend(a.partitions);
        merged.perms.extend(a.perms);
        merged.omegas.extend(a.omegas);
        merged.psis.extend(a.psis);
        merged.taus.extend(a.taus);
        merged.gammas.extend(a.gammas);
        if let (Some(m), Some(extra)) = (merged.anchors.as_mut(), a.anchors) {
            m.extend(extra);
        }
        merged.heldout_loglik.extend(a.heldout_loglik);
        merged.acceptance.permutation.accepted += a.acceptance.permutation.accepted;
        merged.acceptance.permutation.attempted += a.acceptance.permutation.attempted;
        merged.acceptance.shrinkage.accepted += a.acceptance.shrinkage.accepted;
        merged.acceptance.shrinkage.attempted += a.acceptance.shrinkage.attempted;
        merged.acceptance.grit.accepted += a.acceptance.grit.accepted;
        merged.acceptance.grit.attempted += a.acceptance.grit.attempted;
        merged.acceptance.anchor.accepted += a.acceptance.anchor.accepted;
        merged.acceptance.anchor.attempted += a.acceptance.anchor.attempted;
    }
    merged
}

/// Fits a model on the full data (multi-chain, combined after burn-in) and
/// assembles the posterior summaries.
pub fn fit(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    kind: &DependenceKind,
    config: &McmcConfig,
    seed: u64,
) -> Result<(FitSummary, SampleArchive)> {
    let started = std::time::Instant::now();
    let likelihood = Likelihood::Gaussian { data, priors };
    let chain_results: Vec<Result<(SampleArchive, f64)>> = (0..config.chains)
        .into_par_iter()
        .map(|chain| {
            let chain_start = std::time::Instant::now();
            let archive = run_chain(kind, &likelihood, None, config, seed, chain as u64)?;
            Ok((archive, chain_start.elapsed().as_secs_f64()))
        })
        .collect();
    let mut archives = Vec::with_capacity(config.chains);
    let mut cpu_seconds = 0.0;
    for r in chain_results {
        let (archive, secs) = r?;
        cpu_seconds += secs;
        archives.push(archive);
    }
    let archive = merge_archives(archives);
    let summary = summarize_archive(&archive, None, started.elapsed().as_secs_f64(), cpu_seconds)?;
    Ok((summary, archive))
}

/// Builds the posterior summaries from an archive.
pub fn summarize_archive(
    archive: &SampleArchive,
    out_of_sample: Option<(f64, f64)>,
    wall_seconds: f64,
    cpu_seconds: f64,
) -> Result<FitSummary> {
    let mut point_estimates = Vec::with_capacity(archive.n_times);
    let mut cocluster = Vec::with_capacity(archive.n_times);
    for t in 0..archive.n_times {
        let draws: Vec<&Partition> = archive.partitions.iter().map(|d| &d[t]).collect();
        point_estimates.push(point_estimate(&draws)?);
        cocluster.push(coclustering(&draws));
    }
    Ok(FitSummary {
        out_of_sample,
        wall_seconds,
        cpu_seconds,
        point_estimates,
        coclustering: cocluster,
        ari_matrix: posterior_ari_matrix(archive)?,
    })
}

/// Per-fold result of a cross-validated fit.
#[derive(Clone, Debug)]
pub struct FoldScore {
    pub estimate: f64,
    pub se: f64,
}

#[derive(Clone, Debug)]
pub struct CrossvalReport {
    pub total: f64,
    pub moe95: f64,
    pub folds: Vec<FoldScore>,
    pub wall_seconds: f64,
    pub cpu_seconds: f64,
}

/// K-fold cross-validation: for each fold, fit on the remaining shards and
/// score the held-out rows by the Monte Carlo estimate of the expected
/// log-likelihood per observation, summed over observations and folds. The
/// margin of error is a 95% interval from overlapping batch means, treating
/// folds as independent.
pub fn crossval(
    data: &RegressionDataset,
    priors: &RegressionPriors,
    kind: &DependenceKind,
    config: &McmcConfig,
    folds: usize,
    seed: u64,
) -> Result<CrossvalReport> {
    let started = std::time::Instant::now();
    let shards = kfold_shards(data, folds, seed)?;
    let tasks: Vec<(usize, usize)> = (0..folds)
        .flat_map(|f| (0..config.chains).map(move |c| (f, c)))
        .collect();
    let splits: Vec<(RegressionDataset, Vec<HeldoutObs>)> = shards
        .iter()
        .map(|shard| split_fold(data, shard))
        .collect::<Result<_>>()?;
    let results: Vec<Result<(Vec<f64>, f64)>> = tasks
        .par_iter()
        .map(|&(fold, chain)| {
            let chain_start = std::time::Instant::now();
            let (train, heldout) = &splits[fold];
            let likelihood = Likelihood::Gaussian {
                data: train,
                priors,
            };
            let archive = run_chain(
                kind,
                &likelihood,
                Some(heldout),
                config,
                seed,
                (fold * config.chains + chain) as u64,
            )?;
            Ok((archive.heldout_loglik, chain_start.elapsed().as_secs_f64()))
        })
        .collect();

    let mut per_fold_series: Vec<Vec<Vec<f64>>> = vec![Vec::new(); folds];
    let mut cpu_seconds = 0.0;
    for (i, r) in results.into_iter().enumerate() {
        let (series, secs) = r?;
        cpu_seconds += secs;
        per_fold_series[tasks[i].0].push(series);
    }
    let mut fold_scores = Vec::with_capacity(folds);
    let mut total = 0.0;
    let mut var_total = 0.0;
    for chains in per_fold_series {
        // The fold estimate is the mean over draws (pooled across chains) of
        // the per-draw held-out log-likelihood total. Its variance combines
        // the within-chain batch-means terms with the between-chain spread,
        // which matters when restarts land in different modes.
        let all: Vec<f64> = chains.iter().flatten().copied().collect();
        let estimate = all.iter().sum::<f64>() / all.len() as f64;
        let c = chains.len() as f64;
        let within: f64 = chains.iter().map(|s| obm_se(s).powi(2)).sum::<f64>() / (c * c);
        let between = if chains.len() > 1 {
            let means: Vec<f64> = chains
                .iter()
                .map(|s| s.iter().sum::<f64>() / s.len() as f64)
                .collect();
            let grand = means.iter().sum::<f64>() / c;
            means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (c - 1.0) / c
        } else {
            0.0
        };
        let se_sq = within + between;
        total += estimate;
        var_total += se_sq;
        fold_scores.push(FoldScore {
            estimate,
            se: se_sq.sqrt(),
        });
    }
    Ok(CrossvalReport {
        total,
        moe95: 1.96 * var_total.sqrt(),
        folds: fold_scores,
        wall_seconds: started.elapsed().as_secs_f64(),
        cpu_seconds,
    })
}
