// Baseline partition distributions expressed through their conditional
// allocation probability functions (CAPFs).

use serde::{Deserialize, Serialize};

use crate::bell::{extended_bell, log_extended_bell};
use crate::error::{Error, Result};
use crate::partition::{canonicalize_labels, Partition};
use crate::perm::Permutation;

use num_traits::ToPrimitive;

/// Item count beyond which the uniform-partition CAPF switches from exact
/// integer Bell ratios to log-domain differences.
const UP_EXACT_CAP: usize = 25;

/// A baseline partition distribution with an explicit sequential allocation
/// rule. Ewens is Ewens-Pitman with zero discount.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BaselineSpec {
    EwensPitman {
        concentration: f64,
        #[serde(default)]
        discount: f64,
    },
    Uniform {
        n_items: usize,
    },
    JensenLiu {
        mass: f64,
    },
    Fixed {
        target: Partition,
    },
}

impl BaselineSpec {
    pub fn ewens(concentration: f64) -> Result<Self> {
        Self::ewens_pitman(concentration, 0.0)
    }

    pub fn ewens_pitman(concentration: f64, discount: f64) -> Result<Self> {
        let spec = BaselineSpec::EwensPitman {
            concentration,
            discount,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(n_items: usize) -> Result<Self> {
        let spec = BaselineSpec::Uniform { n_items };
        spec.validate()?;
        Ok(spec)
    }

    pub fn jensen_liu(mass: f64) -> Result<Self> {
        let spec = BaselineSpec::JensenLiu { mass };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fixed(target: Partition) -> Self {
        BaselineSpec::Fixed { target }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaselineSpec::EwensPitman {
                concentration,
                discount,
            } => {
                if !discount.is_finite() || !(0.0..1.0).contains(discount) {
                    return Err(Error::invalid(format!(
                        "discount must lie in [0, 1), got {discount}"
                    )));
                }
                if !concentration.is_finite() || *concentration <= -*discount {
                    return Err(Error::invalid(format!(
                        "concentration must exceed -discount, got {concentration}"
                    )));
                }
                if *concentration == 0.0 && *discount == 0.0 {
                    return Err(Error::invalid(
                        "degenerate Ewens-Pitman with zero concentration and zero discount",
                    ));
                }
                Ok(())
            }
            BaselineSpec::Uniform { n_items } => {
                if *n_items == 0 {
                    return Err(Error::invalid("uniform baseline needs at least one item"));
                }
                Ok(())
            }
            BaselineSpec::JensenLiu { mass } => {
                if !mass.is_finite() || *mass <= 0.0 {
                    return Err(Error::invalid(format!("mass must be positive, got {mass}")));
                }
                Ok(())
            }
            BaselineSpec::Fixed { .. } => Ok(()),
        }
    }

    /// Whether the induced partition distribution is invariant to the
    /// allocation order.
    pub fn is_exchangeable(&self) -> bool {
        matches!(
            self,
            BaselineSpec::EwensPitman { .. } | BaselineSpec::Uniform { .. }
        )
    }

    /// Item count pinned by the spec, if any.
    pub fn n_items(&self) -> Option<usize> {
        match self {
            BaselineSpec::Uniform { n_items } => Some(*n_items),
            BaselineSpec::Fixed { target } => Some(target.n_items()),
            _ => None,
        }
    }
}

/// Sequential allocation state: which items have been allocated so far,
/// their labels in first-appearance order, and cluster sizes.
#[derive(Clone, Debug, Default)]
pub struct AllocationState {
    items: Vec<usize>,
    labels: Vec<usize>,
    cluster_sizes: Vec<usize>,
}

impl AllocationState {
    pub fn new() -> Self {
        Self::default()
    }

    /// The 1-based index of the upcoming allocation step.
    pub fn step(&self) -> usize {
        self.items.len() + 1
    }

    pub fn n_allocated(&self) -> usize {
        self.items.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn cluster_size(&self, label: usize) -> usize {
        self.cluster_sizes.get(label - 1).copied().unwrap_or(0)
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Valid candidate labels for the next allocation: existing clusters in
    /// label order, then one new cluster.
    pub fn candidate_labels(&self) -> impl Iterator<Item = usize> {
        1..=(self.num_clusters() + 1)
    }

    pub fn push(&mut self, item: usize, label: usize) -> Result<()> {
        let q = self.num_clusters();
        if label == 0 || label > q + 1 {
            return Err(Error::InvalidCandidate {
                candidate: label,
                step: self.step(),
            });
        }
        if label == q + 1 {
            self.cluster_sizes.push(1);
        } else {
            self.cluster_sizes[label - 1] += 1;
        }
        self.items.push(item);
        self.labels.push(label);
        Ok(())
    }

    pub fn pop(&mut self) {
        if let (Some(_), Some(label)) = (self.items.pop(), self.labels.pop()) {
            self.cluster_sizes[label - 1] -= 1;
            if self.cluster_sizes[label - 1] == 0 {
                self.cluster_sizes.pop();
            }
        }
    }
}

/// The probability that the next item is allocated to `candidate` under the
/// baseline's sequential rule. Candidates are the existing cluster labels
/// plus one new cluster; the first allocation is deterministic.
pub fn baseline_capf(
    spec: &BaselineSpec,
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
    match spec {
        BaselineSpec::EwensPitman {
            concentration,
            discount,
        } => {
            let denom = (k - 1) as f64 + concentration;
            if candidate == q + 1 {
                Ok((concentration + discount * q as f64) / denom)
            } else {
                Ok((state.cluster_size(candidate) as f64 - discount) / denom)
            }
        }
        BaselineSpec::Uniform { n_items } => {
            if k > *n_items {
                return Err(Error::invalid(format!(
                    "uniform baseline over {n_items} items cannot allocate step {k}"
                )));
            }
            let remaining = n_items - k;
            let clusters_arg = if candidate == q + 1 { q + 1 } else { q };
            if *n_items <= UP_EXACT_CAP {
                let num = extended_bell(remaining, clusters_arg)?;
                let den = extended_bell(remaining + 1, q)?;
                Ok(num.to_f64().unwrap_or(f64::INFINITY) / den.to_f64().unwrap_or(f64::INFINITY))
            } else {
                let log_num = log_extended_bell(remaining, clusters_arg)?;
                let log_den = log_extended_bell(remaining + 1, q)?;
                Ok((log_num - log_den).exp())
            }
        }
        BaselineSpec::JensenLiu { mass } => {
            let denom = q as f64 + mass;
            if candidate == q + 1 {
                Ok(mass / denom)
            } else {
                Ok(1.0 / denom)
            }
        }
        BaselineSpec::Fixed { target } => {
            if item >= target.n_items() {
                return Err(Error::SizeMismatch {
                    context: "fixed baseline",
                    expected: target.n_items(),
                    got: item + 1,
                });
            }
            // The one agreeing candidate is the cluster of the first
            // previously allocated item sharing the target cluster, or a new
            // cluster when no such item has been allocated yet.
            let agreeing = state
                .items()
                .iter()
                .position(|&j| target.same_cluster(j, item))
                .map(|pos| state.labels()[pos])
                .unwrap_or(q + 1);
            Ok(if candidate == agreeing { 1.0 } else { 0.0 })
        }
    }
}

/// Log pmf of a partition under the baseline, allocating along `perm`.
pub fn baseline_log_pmf(spec: &BaselineSpec, p: &Partition, perm: &Permutation) -> Result<f64> {
    check_consistency(spec, p, perm)?;
    let alloc = allocation_labels(p, perm);
    let mut state = AllocationState::new();
    let mut log_pmf = 0.0;
    for (k, &item) in perm.order().iter().enumerate() {
        let label = alloc[k];
        let prob = baseline_capf(spec, &state, item, label)?;
        if prob <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_pmf += prob.ln();
        state.push(item, label)?;
    }
    Ok(log_pmf)
}

pub(crate) fn check_consistency(
    spec: &BaselineSpec,
    p: &Partition,
    perm: &Permutation,
) -> Result<()> {
    if p.n_items() != perm.n_items() {
        return Err(Error::SizeMismatch {
            context: "partition vs permutation",
            expected: p.n_items(),
            got: perm.n_items(),
        });
    }
    if let Some(n) = spec.n_items() {
        if n != p.n_items() {
            return Err(Error::SizeMismatch {
                context: "baseline spec vs partition",
                expected: n,
                got: p.n_items(),
            });
        }
    }
    spec.validate()
}

/// Cluster labels of `p` re-canonicalized by first appearance along `perm`,
/// i.e. the labels a sequential allocation reproducing `p` would use.
pub fn allocation_labels(p: &Partition, perm: &Permutation) -> Vec<usize> {
    let raw: Vec<usize> = perm.iter().map(|item| p.label(item)).collect();
    canonicalize_labels(&raw)
}
