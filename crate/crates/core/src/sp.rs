// The shrinkage partition distribution: a baseline allocation process whose
// step-wise probabilities are tilted toward agreement with an anchor
// partition, with item-specific shrinkage and a grit parameter trading the
// agreement reward against a cluster-size penalty.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::baseline::{
    allocation_labels, baseline_capf, check_consistency, AllocationState, BaselineSpec,
};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::perm::{enumerate_permutations, factorial, Permutation};
use crate::util::{log_sum_exp, normalize_log_weights, sample_categorical};

/// Largest `n` for which the permutation-marginal pmf is computed exactly
/// (8! = 40,320 permutations).
pub const EXACT_MARGINAL_CAP: usize = 8;

/// Full parameterization of the shrinkage partition distribution: the anchor
/// partition, per-item nonnegative shrinkages, the grit, and the baseline.
#[derive(Clone, Debug)]
pub struct SpParams {
    anchor: Partition,
    shrinkage: Vec<f64>,
    grit: f64,
    baseline: BaselineSpec,
}

impl SpParams {
    pub fn new(
        anchor: Partition,
        shrinkage: Vec<f64>,
        grit: f64,
        baseline: BaselineSpec,
    ) -> Result<Self> {
        if shrinkage.len() != anchor.n_items() {
            return Err(Error::SizeMismatch {
                context: "shrinkage vs anchor",
                expected: anchor.n_items(),
                got: shrinkage.len(),
            });
        }
        if shrinkage.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("shrinkage entries must be finite and >= 0"));
        }
        if !grit.is_finite() {
            return Err(Error::invalid("grit must be finite"));
        }
        baseline.validate()?;
        if let Some(n) = baseline.n_items() {
            if n != anchor.n_items() {
                return Err(Error::SizeMismatch {
                    context: "baseline spec vs anchor",
                    expected: anchor.n_items(),
                    got: n,
                });
            }
        }
        Ok(Self {
            anchor,
            shrinkage,
            grit,
            baseline,
        })
    }

    pub fn with_common_shrinkage(
        anchor: Partition,
        shrinkage: f64,
        grit: f64,
        baseline: BaselineSpec,
    ) -> Result<Self> {
        let n = anchor.n_items();
        Self::new(anchor, vec![shrinkage; n], grit, baseline)
    }

    pub fn n_items(&self) -> usize {
        self.anchor.n_items()
    }

    pub fn anchor(&self) -> &Partition {
        &self.anchor
    }

    pub fn shrinkage(&self) -> &[f64] {
        &self.shrinkage
    }

    pub fn grit(&self) -> f64 {
        self.grit
    }

    pub fn baseline(&self) -> &BaselineSpec {
        &self.baseline
    }

    pub fn set_common_shrinkage(&mut self, shrinkage: f64) -> Result<()> {
        if !shrinkage.is_finite() || shrinkage < 0.0 {
            return Err(Error::invalid("shrinkage must be finite and >= 0"));
        }
        self.shrinkage.fill(shrinkage);
        Ok(())
    }

    pub fn set_grit(&mut self, grit: f64) -> Result<()> {
        if !grit.is_finite() {
            return Err(Error::invalid("grit must be finite"));
        }
        self.grit = grit;
        Ok(())
    }

    pub fn set_anchor(&mut self, anchor: Partition) -> Result<()> {
        if anchor.n_items() != self.n_items() {
            return Err(Error::SizeMismatch {
                context: "anchor replacement",
                expected: self.n_items(),
                got: anchor.n_items(),
            });
        }
        self.anchor = anchor;
        Ok(())
    }
}

/// Running sums for the anchor tilt: `s(c, m)` accumulates the shrinkage of
/// allocated items in realized cluster `c` whose anchor cluster is `m`, and
/// `t(c)` the total shrinkage in realized cluster `c`.
#[derive(Clone, Debug)]
pub struct AnchorSums {
    s: Vec<Vec<f64>>,
    t: Vec<f64>,
    n_anchor_clusters: usize,
}

impl AnchorSums {
    pub fn new(params: &SpParams) -> Self {
        Self {
            s: Vec::new(),
            t: Vec::new(),
            n_anchor_clusters: params.anchor.n_clusters(),
        }
    }

    /// Sum over allocated items of shrinkage restricted to realized cluster
    /// `c` and anchor cluster `m` (both 1-based). Zero for unseen clusters.
    pub fn s(&self, c: usize, m: usize) -> f64 {
        self.s
            .get(c - 1)
            .and_then(|row| row.get(m - 1))
            .copied()
            .unwrap_or(0.0)
    }

    /// Total shrinkage allocated to realized cluster `c`.
    pub fn t(&self, c: usize) -> f64 {
        self.t.get(c - 1).copied().unwrap_or(0.0)
    }

    pub fn push(&mut self, params: &SpParams, item: usize, label: usize) {
        if label > self.s.len() {
            self.s.push(vec![0.0; self.n_anchor_clusters]);
            self.t.push(0.0);
        }
        let w = params.shrinkage[item];
        self.s[label - 1][params.anchor.label(item) - 1] += w;
        self.t[label - 1] += w;
    }
}

/// Log of the anchor tilt applied to the baseline CAPF at step `k` (1-based)
/// when allocating `item` to `candidate`. For a brand-new cluster both inner
/// sums are empty and the tilt is zero.
pub fn anchor_log_factor(
    params: &SpParams,
    sums: &AnchorSums,
    k: usize,
    item: usize,
    candidate: usize,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid(
            "anchor factor is undefined at the first allocation",
        ));
    }
    let w = params.shrinkage[item];
    let s = sums.s(candidate, params.anchor.label(item));
    let t = sums.t(candidate);
    let scale = ((k - 1) * (k - 1)) as f64;
    Ok(w / scale * (s * s - params.grit * t * t))
}

/// The shrinkage partition CAPF: baseline CAPF times the exponential anchor
/// tilt, normalized over the candidate set in the log domain.
pub fn sp_capf(
    params: &SpParams,
    sums: &AnchorSums,
    state: &AllocationState,
    item: usize,
    candidate: usize,
) -> Result<f64> {
    let k = state.step();
    let q = state.num_clusters();
    if candidate == 0 || candidate > q + 1 {
        return Err(Error::InvalidCandidate { candidate, step: k });
    }
    if k == 1 {
        return Ok(1.0);
    }
    let mut lw = Vec::with_capacity(q + 1);
    for c in 1..=(q + 1) {
        lw.push(candidate_log_weight(params, sums, state, item, c)?);
    }
    normalize_log_weights(&mut lw);
    Ok(lw[candidate - 1])
}

fn candidate_log_weight(
    params: &SpParams,
    sums: &AnchorSums,
    state: &AllocationState,
    item: usize,
    candidate: usize,
) -> Result<f64> {
    let base = baseline_capf(&params.baseline, state, item, candidate)?;
    let tilt = anchor_log_factor(params, sums, state.step(), item, candidate)?;
    Ok(base.ln() + tilt)
}

/// Walks the allocation order once, either scoring a target label sequence or
/// sampling one. Returns the allocation-order labels and the log pmf of the
/// realized sequence.
fn engine<R: Rng>(
    params: &SpParams,
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
    let mut sums = AnchorSums::new(params);
    let mut labels = Vec::with_capacity(n);
    let mut log_pmf = 0.0;
    let mut lw: Vec<f64> = Vec::new();
    for (k0, item) in perm.iter().enumerate() {
        let label = if k0 == 0 {
            1
        } else {
            let q = state.num_clusters();
            lw.clear();
            for c in 1..=(q + 1) {
                lw.push(candidate_log_weight(params, &sums, &state, item, c)?);
            }
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
        sums.push(params, item, label);
        labels.push(label);
    }
    Ok((labels, log_pmf))
}

/// Log pmf of a partition under a fixed allocation order.
pub fn sp_log_pmf(params: &SpParams, p: &Partition, perm: &Permutation) -> Result<f64> {
    check_consistency(&params.baseline, p, perm)?;
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

/// How the permutation parameter is integrated out of the pmf.
#[derive(Clone, Copy, Debug)]
pub enum MarginalMode {
    /// Average over all `n!` permutations; requires `n <= EXACT_MARGINAL_CAP`.
    Exact,
    /// Average over uniformly drawn permutations, reproducible from the seed.
    MonteCarlo { draws: usize, seed: u64 },
}

/// Log of the average of `exp(sp_log_pmf)` over permutations under a uniform
/// permutation prior.
pub fn sp_marginal_log_pmf(params: &SpParams, p: &Partition, mode: MarginalMode) -> Result<f64> {
    let n = p.n_items();
    match mode {
        MarginalMode::Exact => {
            if n > EXACT_MARGINAL_CAP {
                return Err(Error::Capacity {
                    context: "sp_marginal_log_pmf (exact)",
                    limit: EXACT_MARGINAL_CAP,
                    got: n,
                });
            }
            let lps: Vec<f64> = enumerate_permutations(n)?
                .map(|perm| sp_log_pmf(params, p, &perm))
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
                    sp_log_pmf(params, p, &perm)
                })
                .collect::<Result<_>>()?;
            Ok(log_sum_exp(&lps) - (draws as f64).ln())
        }
    }
}

/// Draws a partition by sequential allocation along `perm`.
pub fn sp_sample<R: Rng>(params: &SpParams, perm: &Permutation, rng: &mut R) -> Result<Partition> {
    let (alloc_labels, _) = engine(params, perm, None, Some(rng))?;
    // Map allocation-order labels back to item order; first-appearance
    // canonicalization is restored by the Partition constructor.
    let mut labels = vec![0usize; perm.n_items()];
    for (k0, item) in perm.iter().enumerate() {
        labels[item] = alloc_labels[k0];
    }
    Partition::from_labels(&labels)
}
