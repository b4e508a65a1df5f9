// Location-scale partition distribution, extended with an allocation-order
// permutation. Each step rewards clusters sharing the current item's anchor
// cluster, with a single shrinkage parameter; at zero shrinkage the process
// is the Jensen-Liu allocation with unit mass.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseline::{allocation_labels, AllocationState};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::perm::{enumerate_permutations, factorial, Permutation};
use crate::sp::MarginalMode;
use crate::util::{log_sum_exp, normalize_log_weights, sample_categorical};

#[derive(Clone, Debug)]
pub struct LspParams {
    anchor: Partition,
    shrinkage: f64,
}

impl LspParams {
    pub fn new(anchor: Partition, shrinkage: f64) -> Result<Self> {
        if !shrinkage.is_finite() || shrinkage < 0.0 {
            return Err(Error::invalid("shrinkage must be finite and >= 0"));
        }
        Ok(Self { anchor, shrinkage })
    }

    pub fn anchor(&self) -> &Partition {
        &self.anchor
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    pub fn n_items(&self) -> usize {
        self.anchor.n_items()
    }
}

/// Normalized allocation probability for the next item. The anchor view is
/// reconstructed from the items recorded in `state`.
pub fn lsp_capf(
    params: &LspParams,
    state: &AllocationState,
    item: usize,
    candidate: usize,
) -> Result<f64> {
    let q = state.num_clusters();
    if candidate == 0 || candidate > q + 1 {
        return Err(Error::InvalidCandidate {
            candidate,
            step: state.step(),
        });
    }
    if state.step() == 1 {
        return Ok(1.0);
    }
    let mut weights = Vec::with_capacity(q + 1);
    for c in 1..=(q + 1) {
        weights.push(unnormalized_weight(params, state, item, c));
    }
    let total: f64 = weights.iter().sum();
    Ok(weights[candidate - 1] / total)
}

fn unnormalized_weight(
    params: &LspParams,
    state: &AllocationState,
    item: usize,
    candidate: usize,
) -> f64 {
    let omega = params.shrinkage;
    let anchor = &params.anchor;
    let q = state.num_clusters();
    // Number of distinct anchor clusters represented among allocated items.
    let mut seen = vec![false; anchor.n_clusters()];
    let mut anchor_clusters_seen = 0usize;
    let mut anchor_mates_seen = 0usize;
    let mut in_candidate = 0usize;
    let mut mates_in_candidate = 0usize;
    for (pos, &j) in state.items().iter().enumerate() {
        let m = anchor.label(j);
        if !seen[m - 1] {
            seen[m - 1] = true;
            anchor_clusters_seen += 1;
        }
        let mate = anchor.same_cluster(j, item);
        if mate {
            anchor_mates_seen += 1;
        }
        if state.labels()[pos] == candidate {
            in_candidate += 1;
            if mate {
                mates_in_candidate += 1;
            }
        }
    }
    if candidate == q + 1 {
        let bonus = if anchor_mates_seen == 0 { omega } else { 0.0 };
        (1.0 + bonus) / (1.0 + anchor_clusters_seen as f64 + omega)
    } else {
        (1.0 + omega * mates_in_candidate as f64)
            / (1.0 + anchor_clusters_seen as f64 + omega * in_candidate as f64)
    }
}

fn engine<R: Rng>(
    params: &LspParams,
    perm: &Permutation,
    target: Option<&[usize]>,
    mut rng: Option<&mut R>,
) -> Result<(Vec<usize>, f64)> {
    let n = perm.n_items();
    if n != params.n_items() {
        return Err(Error::SizeMismatch {
            context: "permutation vs parameters",
            expected: params.n_items(),
            got: n,
        });
    }
    let mut state = AllocationState::new();
    let mut labels = Vec::with_capacity(n);
    let mut log_pmf = 0.0;
    for (k0, item) in perm.iter().enumerate() {
        let label = if k0 == 0 {
            1
        } else {
            let q = state.num_clusters();
            let mut lw: Vec<f64> = (1..=(q + 1))
                .map(|c| unnormalized_weight(params, &state, item, c).ln())
                .collect();
            normalize_log_weights(&mut lw);
            let label = match target {
                Some(t) => t[k0],
                None => {
                    let r = rng.as_mut().expect("sampling requires an rng");
                    sample_categorical(&lw, r) + 1
                }
            };
            let p = lw[label - 1];
            log_pmf += if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
            label
        };
        state.push(item, label)?;
        labels.push(label);
    }
    Ok((labels, log_pmf))
}

pub fn lsp_log_pmf(params: &LspParams, p: &Partition, perm: &Permutation) -> Result<f64> {
    if p.n_items() != params.n_items() {
        return Err(Error::SizeMismatch {
            context: "partition vs parameters",
            expected: params.n_items(),
            got: p.n_items(),
        });
    }
    let alloc = allocation_labels(p, perm);
    engine::<ChaCha8Rng>(params, perm, Some(&alloc), None).map(|(_, lp)| lp)
}

pub fn lsp_marginal_log_pmf(params: &LspParams, p: &Partition, mode: MarginalMode) -> Result<f64> {
    let n = p.n_items();
    match mode {
        MarginalMode::Exact => {
            let lps: Vec<f64> = enumerate_permutations(n)?
                .map(|perm| lsp_log_pmf(params, p, &perm))
                .collect::<Result<_>>()?;
            Ok(log_sum_exp(&lps) - factorial(n).ln())
        }
        MarginalMode::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(Error::invalid("Monte Carlo marginal needs draws >= 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lps: Vec<f64> = (0..draws)
                .map(|_| {
                    let perm = Permutation::random(n, &mut rng);
                    lsp_log_pmf(params, p, &perm)
                })
                .collect::<Result<_>>()?;
            Ok(log_sum_exp(&lps) - (draws as f64).ln())
        }
    }
}

pub fn lsp_sample<R: Rng>(params: &LspParams, perm: &Permutation, rng: &mut R) -> Result<Partition> {
    let (alloc_labels, _) = engine(params, perm, None, Some(rng))?;
    let mut labels = vec![0usize; perm.n_items()];
    for (k0, item) in perm.iter().enumerate() {
        labels[item] = alloc_labels[k0];
    }
    Partition::from_labels(&labels)
}
