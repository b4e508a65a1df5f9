// Brute-force enumeration oracle: exact pmf tables at small n and machine
// checks of the distribution's limit, monotonicity, divergence,
// zero-shrinkage, and limiting-partition properties.

use std::fmt;

use crate::baseline::{baseline_log_pmf, BaselineSpec};
use crate::bell::extended_bell;
use crate::error::{Error, Result};
use crate::partition::{enumerate_partitions, Partition};
use crate::perm::{enumerate_permutations, Permutation};
use crate::sp::{sp_log_pmf, sp_marginal_log_pmf, MarginalMode, SpParams};

use num_traits::ToPrimitive;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Cap for exact fixed-permutation pmf tables.
pub const ORACLE_FIXED_CAP: usize = 8;
/// Cap for exact permutation-marginal pmf tables.
pub const ORACLE_MARGINAL_CAP: usize = 6;

/// Equality tolerance for the exact identities.
pub const EXACT_TOL: f64 = 1e-12;

/// How the oracle evaluates the pmf.
#[derive(Clone, Debug)]
pub enum PmfMode {
    FixedPerm(Permutation),
    Marginal,
}

/// Outcome of one machine-checked property.
#[derive(Clone, Debug)]
pub struct TheoremReport {
    pub theorem: String,
    pub grid: String,
    pub pass: bool,
    /// Smallest strict-inequality gap, or (negative) largest tolerance
    /// violation when the check fails.
    pub worst_margin: f64,
    pub diagnostics: String,
}

impl TheoremReport {
    fn new(theorem: &str, grid: String) -> Self {
        Self {
            theorem: theorem.to_string(),
            grid,
            pass: true,
            worst_margin: f64::INFINITY,
            diagnostics: String::new(),
        }
    }

    fn record(&mut self, margin: f64, context: impl Fn() -> String) {
        if margin < self.worst_margin {
            self.worst_margin = margin;
        }
        if margin <= 0.0 {
            self.pass = false;
            self.diagnostics
                .push_str(&format!("  violated at {} (margin {margin:.3e})\n", context()));
        }
    }
}

impl fmt::Display for TheoremReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "theorem {}: {}",
            self.theorem,
            if self.pass { "PASS" } else { "FAIL" }
        )?;
        writeln!(f, "  grid: {}", self.grid)?;
        writeln!(f, "  worst margin: {:.6e}", self.worst_margin)?;
        if !self.diagnostics.is_empty() {
            write!(f, "{}", self.diagnostics)?;
        }
        Ok(())
    }
}

/// Full pmf table over all partitions of `n` items. The probabilities must
/// sum to one within 1e-9 or a numerical error is raised.
pub fn exact_distribution(params: &SpParams, mode: &PmfMode) -> Result<Vec<(Partition, f64)>> {
    let n = params.n_items();
    let cap = match mode {
        PmfMode::FixedPerm(_) => ORACLE_FIXED_CAP,
        PmfMode::Marginal => ORACLE_MARGINAL_CAP,
    };
    if n > cap {
        return Err(Error::Capacity {
            context: "exact_distribution",
            limit: cap,
            got: n,
        });
    }
    let table: Vec<(Partition, f64)> = enumerate_partitions(n)?
        .map(|p| {
            let lp = match mode {
                PmfMode::FixedPerm(perm) => sp_log_pmf(params, &p, perm)?,
                PmfMode::Marginal => sp_marginal_log_pmf(params, &p, MarginalMode::Exact)?,
            };
            Ok((p, lp.exp()))
        })
        .collect::<Result<_>>()?;
    let total: f64 = table.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Numerical(format!(
            "pmf table sums to {total}, expected 1"
        )));
    }
    Ok(table)
}

fn mass_of(table: &[(Partition, f64)], target: &Partition) -> f64 {
    table
        .iter()
        .find(|(p, _)| p == target)
        .map(|(_, m)| *m)
        .unwrap_or(0.0)
}

fn perms_for_equality_checks(n: usize) -> Result<Vec<Permutation>> {
    if n <= 5 {
        Ok(enumerate_permutations(n)?.collect())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        let mut perms = vec![Permutation::natural(n)];
        perms.extend((0..12).map(|_| Permutation::random(n, &mut rng)));
        Ok(perms)
    }
}

/// Limit behavior at the shrinkage extremes: zero shrinkage recovers the
/// baseline exactly, while large common shrinkage concentrates on the anchor
/// (grit in (0, 1)), on the single-cluster partition (negative grit), or on
/// the all-singletons partition (grit above one).
pub fn verify_limits(
    anchor: &Partition,
    baseline: &BaselineSpec,
    psi_grid: &[f64],
    omega_max: f64,
    epsilon: f64,
) -> Result<TheoremReport> {
    let n = anchor.n_items();
    let mut report = TheoremReport::new(
        "1",
        format!(
            "n={n} anchor={anchor} psi_grid={psi_grid:?} omega_max={omega_max} epsilon={epsilon}"
        ),
    );

    // Case a: zero shrinkage equals the baseline for every partition and
    // permutation, at every grit value.
    for &psi in psi_grid {
        let params = SpParams::with_common_shrinkage(anchor.clone(), 0.0, psi, baseline.clone())?;
        for perm in perms_for_equality_checks(n)? {
            for p in enumerate_partitions(n)? {
                let a = sp_log_pmf(&params, &p, &perm)?;
                let b = baseline_log_pmf(baseline, &p, &perm)?;
                let diff = if a == b { 0.0 } else { (a - b).abs() };
                report.record(EXACT_TOL - diff, || {
                    format!("1a psi={psi} perm={perm} partition={p}")
                });
            }
        }
    }

    // Cases b, c, d: point-mass targets at large common shrinkage.
    for &psi in psi_grid {
        let target = if psi > 0.0 && psi < 1.0 {
            ("1b", anchor.clone())
        } else if psi < 0.0 {
            ("1c", Partition::one_cluster(n)?)
        } else if psi > 1.0 {
            ("1d", Partition::singletons(n)?)
        } else {
            continue; // boundary grit values carry no limit claim
        };
        let params =
            SpParams::with_common_shrinkage(anchor.clone(), omega_max, psi, baseline.clone())?;
        let table = exact_distribution(&params, &PmfMode::Marginal)?;
        let mass = mass_of(&table, &target.1);
        report.record(mass - (1.0 - epsilon), || {
            format!("{} psi={psi} target={} mass={mass}", target.0, target.1)
        });
    }
    Ok(report)
}

/// Strictly increasing anchor mass along an increasing common-shrinkage grid,
/// for grit in (0, 1).
pub fn verify_monotonicity(
    anchor: &Partition,
    baseline: &BaselineSpec,
    psi: f64,
    omega_grid: &[f64],
) -> Result<TheoremReport> {
    if !(0.0..1.0).contains(&psi) || psi == 0.0 {
        return Err(Error::invalid("monotonicity check requires grit in (0, 1)"));
    }
    let mut report = TheoremReport::new(
        "2",
        format!(
            "n={} anchor={anchor} psi={psi} omega_grid=[{:.3}..{:.3}]x{}",
            anchor.n_items(),
            omega_grid.first().copied().unwrap_or(f64::NAN),
            omega_grid.last().copied().unwrap_or(f64::NAN),
            omega_grid.len()
        ),
    );
    // Strict increase of the anchor mass is checked through strict decrease
    // of the complement (the mass off the anchor), which stays representable
    // long after the mass itself rounds to 1.
    let curve = anchor_mass_curve(anchor, baseline, psi, omega_grid)?;
    for (i, pair) in curve.windows(2).enumerate() {
        report.record(pair[0].complement - pair[1].complement, || {
            format!(
                "omega {} -> {}: off-anchor mass {} -> {}",
                omega_grid[i],
                omega_grid[i + 1],
                pair[0].complement,
                pair[1].complement
            )
        });
    }
    // At zero shrinkage the curve starts at the baseline mass of the anchor.
    if let Some(idx) = omega_grid.iter().position(|&w| w == 0.0) {
        let base = baseline_marginal_mass(anchor, baseline)?;
        let diff = (curve[idx].mass - base).abs();
        report.record(1e-9 - diff, || {
            format!("omega=0 mass {} vs baseline {base}", curve[idx].mass)
        });
    }
    Ok(report)
}

/// Kullback-Leibler divergence and total variation distance from the anchor
/// point mass, both strictly decreasing in the common shrinkage. With a point
/// mass reference these reduce to `-log Pr(anchor)` and `1 - Pr(anchor)`.
pub fn verify_divergences(
    anchor: &Partition,
    baseline: &BaselineSpec,
    psi: f64,
    omega_grid: &[f64],
) -> Result<TheoremReport> {
    if !(0.0..1.0).contains(&psi) || psi == 0.0 {
        return Err(Error::invalid("divergence check requires grit in (0, 1)"));
    }
    let mut report = TheoremReport::new(
        "3",
        format!(
            "n={} anchor={anchor} psi={psi} omega_grid=[{:.3}..{:.3}]x{}",
            anchor.n_items(),
            omega_grid.first().copied().unwrap_or(f64::NAN),
            omega_grid.last().copied().unwrap_or(f64::NAN),
            omega_grid.len()
        ),
    );
    let curve = anchor_mass_curve(anchor, baseline, psi, omega_grid)?;
    // With a point-mass reference the divergences reduce to functions of the
    // anchor mass: KL = -log Pr(anchor) and TV = 1 - Pr(anchor). Both are
    // computed from the off-anchor mass so they never round to zero early.
    let kl: Vec<f64> = curve.iter().map(|m| -(-m.complement).ln_1p()).collect();
    let tv: Vec<f64> = curve.iter().map(|m| m.complement).collect();
    for (i, pair) in kl.windows(2).enumerate() {
        report.record(pair[0] - pair[1], || {
            format!("KL omega {} -> {}", omega_grid[i], omega_grid[i + 1])
        });
    }
    for (i, pair) in tv.windows(2).enumerate() {
        report.record(pair[0] - pair[1], || {
            format!("TV omega {} -> {}", omega_grid[i], omega_grid[i + 1])
        });
    }
    for (i, &t) in tv.iter().enumerate() {
        report.record(t, || format!("TV >= 0 at omega {}", omega_grid[i]));
        report.record(1.0 - t, || format!("TV <= 1 at omega {}", omega_grid[i]));
    }
    if let Some(idx) = omega_grid.iter().position(|&w| w == 0.0) {
        let base = baseline_marginal_mass(anchor, baseline)?;
        let diff = (kl[idx] - (-base.ln())).abs();
        report.record(1e-9 - diff, || {
            format!(
                "KL at omega=0 is {} vs -log baseline {}",
                kl[idx],
                -base.ln()
            )
        });
    }
    Ok(report)
}

/// Anchor mass and its complement (total mass off the anchor) at one common
/// shrinkage value, under the permutation-marginal pmf.
#[derive(Clone, Copy, Debug)]
pub struct AnchorMass {
    pub mass: f64,
    pub complement: f64,
}

pub fn anchor_mass(
    anchor: &Partition,
    baseline: &BaselineSpec,
    psi: f64,
    omega: f64,
) -> Result<AnchorMass> {
    let params = SpParams::with_common_shrinkage(anchor.clone(), omega, psi, baseline.clone())?;
    let table = exact_distribution(&params, &PmfMode::Marginal)?;
    let mut mass = 0.0;
    let mut complement = 0.0;
    for (p, m) in &table {
        if p == anchor {
            mass = *m;
        } else {
            complement += *m;
        }
    }
    Ok(AnchorMass { mass, complement })
}

fn anchor_mass_curve(
    anchor: &Partition,
    baseline: &BaselineSpec,
    psi: f64,
    omega_grid: &[f64],
) -> Result<Vec<AnchorMass>> {
    omega_grid
        .iter()
        .map(|&omega| anchor_mass(anchor, baseline, psi, omega))
        .collect()
}

fn baseline_marginal_mass(anchor: &Partition, baseline: &BaselineSpec) -> Result<f64> {
    let n = anchor.n_items();
    let masses: Vec<f64> = enumerate_permutations(n)?
        .map(|perm| baseline_log_pmf(baseline, anchor, &perm))
        .collect::<Result<_>>()?;
    Ok(crate::util::log_sum_exp(&masses).exp() / crate::perm::factorial(n))
}

/// A pair of anchors that agree in co-clustering on every pair of items with
/// positive shrinkage, which must induce identical distributions.
#[derive(Clone, Debug)]
pub struct ZeroShrinkageCase {
    pub anchor_a: Partition,
    pub anchor_b: Partition,
    pub shrinkage: Vec<f64>,
}

pub fn verify_zero_shrinkage(
    cases: &[ZeroShrinkageCase],
    baseline: &BaselineSpec,
    psi: f64,
) -> Result<TheoremReport> {
    let mut report = TheoremReport::new("4", format!("{} anchor pairs, psi={psi}", cases.len()));
    for case in cases {
        let n = case.anchor_a.n_items();
        for i in 0..n {
            for j in (i + 1)..n {
                if case.shrinkage[i] > 0.0
                    && case.shrinkage[j] > 0.0
                    && case.anchor_a.same_cluster(i, j) != case.anchor_b.same_cluster(i, j)
                {
                    return Err(Error::invalid(format!(
                        "anchors {} and {} disagree on positively shrunk pair ({i}, {j})",
                        case.anchor_a, case.anchor_b
                    )));
                }
            }
        }
        let pa = SpParams::new(
            case.anchor_a.clone(),
            case.shrinkage.clone(),
            psi,
            baseline.clone(),
        )?;
        let pb = SpParams::new(
            case.anchor_b.clone(),
            case.shrinkage.clone(),
            psi,
            baseline.clone(),
        )?;
        for perm in perms_for_equality_checks(n)? {
            for p in enumerate_partitions(n)? {
                let a = sp_log_pmf(&pa, &p, &perm)?;
                let b = sp_log_pmf(&pb, &p, &perm)?;
                let diff = if a == b { 0.0 } else { (a - b).abs() };
                report.record(EXACT_TOL - diff, || {
                    format!(
                        "anchors {}|{} perm={perm} partition={p}",
                        case.anchor_a, case.anchor_b
                    )
                });
            }
        }
    }
    Ok(report)
}

/// Partitions retaining mass above `epsilon` when the 0/1 shrinkage pattern
/// is scaled by `omega_big`. The set must coincide with the partitions whose
/// co-clustering agrees with the anchor on every positively shrunk pair (and
/// that the baseline supports), and its size must equal the extended Bell
/// number B(a, b), where `a` counts zero-pattern items and `b` counts anchor
/// clusters containing a positive-pattern item.
pub fn limiting_partitions(
    anchor: &Partition,
    pattern: &[f64],
    psi: f64,
    baseline: &BaselineSpec,
    omega_big: f64,
    epsilon: f64,
) -> Result<(Vec<Partition>, TheoremReport)> {
    let n = anchor.n_items();
    if pattern.len() != n {
        return Err(Error::SizeMismatch {
            context: "shrinkage pattern vs anchor",
            expected: n,
            got: pattern.len(),
        });
    }
    if !(0.0..1.0).contains(&psi) || psi == 0.0 {
        return Err(Error::invalid("limiting partitions require grit in (0, 1)"));
    }
    let mut report = TheoremReport::new(
        "5/6",
        format!(
            "n={n} anchor={anchor} pattern={pattern:?} psi={psi} omega_big={omega_big} epsilon={epsilon}"
        ),
    );
    let shrinkage: Vec<f64> = pattern.iter().map(|s| s * omega_big).collect();
    let params = SpParams::new(anchor.clone(), shrinkage, psi, baseline.clone())?;
    let table = exact_distribution(&params, &PmfMode::Marginal)?;

    let mut observed = Vec::new();
    let mut min_retained = f64::INFINITY;
    let mut max_vanished = 0.0_f64;
    for (p, mass) in &table {
        if *mass > epsilon {
            observed.push(p.clone());
            min_retained = min_retained.min(*mass);
        } else {
            max_vanished = max_vanished.max(*mass);
        }
    }
    // Retained and vanished masses must stay separated across thresholds.
    for threshold in [epsilon, 1e-6_f64.max(epsilon)] {
        report.record(min_retained - threshold, || {
            format!("retained mass {min_retained} vs threshold {threshold}")
        });
        report.record(threshold - max_vanished, || {
            format!("vanished mass {max_vanished} vs threshold {threshold}")
        });
    }

    let natural = Permutation::natural(n);
    let expected: Vec<Partition> = table
        .iter()
        .filter(|(p, _)| {
            let agrees = (0..n).all(|i| {
                ((i + 1)..n).all(|j| {
                    pattern[i] == 0.0
                        || pattern[j] == 0.0
                        || p.same_cluster(i, j) == anchor.same_cluster(i, j)
                })
            });
            agrees
                && baseline_log_pmf(baseline, p, &natural)
                    .map(|lp| lp > f64::NEG_INFINITY)
                    .unwrap_or(false)
        })
        .map(|(p, _)| p.clone())
        .collect();
    if observed != expected {
        report.pass = false;
        report.worst_margin = f64::NEG_INFINITY;
        report.diagnostics.push_str(&format!(
            "  limiting set mismatch: observed {observed:?}, expected {expected:?}\n"
        ));
    }

    let a = pattern.iter().filter(|&&s| s == 0.0).count();
    let mut has_positive = vec![false; anchor.n_clusters()];
    for i in 0..n {
        if pattern[i] > 0.0 {
            has_positive[anchor.label(i) - 1] = true;
        }
    }
    let b = has_positive.iter().filter(|&&h| h).count();
    let count = extended_bell(a, b)?.to_f64().unwrap_or(f64::INFINITY);
    if observed.len() as f64 != count {
        report.pass = false;
        report.worst_margin = f64::NEG_INFINITY;
        report.diagnostics.push_str(&format!(
            "  count mismatch: observed {}, extended Bell B({a},{b}) = {count}\n",
            observed.len()
        ));
    }
    Ok((observed, report))
}

/// The documented default verification suite over small n.
pub fn default_suite(seed: u64) -> Result<Vec<TheoremReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ewens = BaselineSpec::ewens(1.0)?;
    let anchor4 = Partition::from_labels(&[1, 1, 2, 2])?;
    let anchor5 = random_partition(5, &mut rng)?;

    let mut reports = Vec::new();
    reports.push(verify_limits(
        &anchor4,
        &ewens,
        &[0.3, 0.7, -0.5, -2.0, 1.5, 3.0],
        1e3,
        1e-3,
    )?);
    let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
    let mut r2 = verify_monotonicity(&anchor4, &ewens, 0.3, &grid)?;
    let r2b = verify_monotonicity(&anchor5, &ewens, 0.7, &grid)?;
    r2.diagnostics.push_str(&format!(
        "  companion grid: {} -> margin {:.3e}\n",
        r2b.grid, r2b.worst_margin
    ));
    r2.pass &= r2b.pass;
    r2.worst_margin = r2.worst_margin.min(r2b.worst_margin);
    reports.push(r2);
    reports.push(verify_divergences(&anchor4, &ewens, 0.3, &grid)?);
    reports.push(verify_zero_shrinkage(
        &[
            ZeroShrinkageCase {
                anchor_a: Partition::from_labels(&[1, 2, 2, 3])?,
                anchor_b: Partition::from_labels(&[1, 2, 2, 2])?,
                shrinkage: vec![2.0, 2.0, 2.0, 0.0],
            },
            ZeroShrinkageCase {
                anchor_a: Partition::from_labels(&[1, 2, 1, 3])?,
                anchor_b: Partition::from_labels(&[1, 1, 2, 3])?,
                shrinkage: vec![0.0, 0.0, 0.0, 0.0],
            },
            random_zero_shrinkage_case(5, &mut rng)?,
        ],
        &ewens,
        0.3,
    )?);
    let (_, mut t5) = limiting_partitions(
        &Partition::from_labels(&[1, 1, 2, 3])?,
        &[1.0, 1.0, 1.0, 0.0],
        0.3,
        &ewens,
        1e4,
        1e-8,
    )?;
    t5.theorem = "5".into();
    reports.push(t5);
    let (_, mut t6) = limiting_partitions(
        &Partition::from_labels(&[1, 1, 2, 2, 3])?,
        &[1.0, 1.0, 0.0, 0.0, 1.0],
        0.5,
        &ewens,
        1e4,
        1e-8,
    )?;
    t6.theorem = "6".into();
    reports.push(t6);
    Ok(reports)
}

/// Uniformly random partition by enumeration (test-scale n only).
pub fn random_partition<R: Rng>(n: usize, rng: &mut R) -> Result<Partition> {
    let all: Vec<Partition> = enumerate_partitions(n)?.collect();
    Ok(all[rng.random_range(0..all.len())].clone())
}

fn random_zero_shrinkage_case<R: Rng>(n: usize, rng: &mut R) -> Result<ZeroShrinkageCase> {
    let anchor_a = random_partition(n, rng)?;
    let shrinkage: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_range(0.0..1.0) < 0.4 {
                0.0
            } else {
                2.0
            }
        })
        .collect();
    // Reassign the zero-shrinkage items arbitrarily to build the partner.
    let mut labels: Vec<usize> = anchor_a.labels().to_vec();
    let max = labels.iter().copied().max().unwrap();
    for i in 0..n {
        if shrinkage[i] == 0.0 {
            labels[i] = rng.random_range(1..=(max + 1));
        }
    }
    Ok(ZeroShrinkageCase {
        anchor_a,
        anchor_b: Partition::from_labels(&labels)?,
        shrinkage,
    })
}
