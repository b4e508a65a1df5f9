// Posterior simulation for partition models over panel regressions:
// independent partitions per time point, hierarchically dependent partitions
// through a random anchor, and temporally dependent partitions where each
// partition anchors the next.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDraw, Distribution, Gamma as GammaDraw, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaPdf, Continuous, Gamma as GammaPdf};

use crate::baseline::{baseline_capf, baseline_log_pmf, AllocationState, BaselineSpec};
use crate::cpp::{cpp_unnormalized_log_mass, CppParams, PartitionDistance};
use crate::error::{Error, Result};
use crate::lsp::{lsp_log_pmf, LspParams};
use crate::partition::{canonicalize_labels, Partition};
use crate::perm::Permutation;
use crate::regression::{
    beta_star_full_conditional, draw_mvn_from_precision, marginal_log_likelihood_cluster,
    update_gamma, update_tau, RegressionDataset, RegressionPriors,
};
use crate::sp::{sp_log_pmf, SpParams};
use crate::util::{normalize_log_weights, sample_categorical};

/// How the common shrinkage scale is treated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShrinkageSpec {
    Fixed { value: f64 },
    /// Per-item values fixed from configuration.
    Idiosyncratic { values: Vec<f64> },
    /// Scalar with a gamma prior, sampled by the chain.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GritSpec {
    Fixed { value: f64 },
    /// Value in (0, 1) with a beta prior, sampled by the chain.
    Random,
}

/// Prior on each time point's partition in the independent model.
#[derive(Clone, Debug)]
pub enum PartitionPrior {
    Sp {
        anchor: Partition,
        shrinkage: ShrinkageSpec,
        grit: GritSpec,
        baseline: BaselineSpec,
    },
    Cpp {
        anchor: Partition,
        shrinkage: f64,
        distance: PartitionDistance,
        baseline: BaselineSpec,
    },
    Lsp {
        anchor: Partition,
        shrinkage: f64,
    },
    Fixed {
        target: Partition,
    },
    Baseline {
        spec: BaselineSpec,
    },
}

/// Joint prior structure over the sequence of partitions.
#[derive(Clone, Debug)]
pub enum DependenceKind {
    Independent {
        prior: PartitionPrior,
    },
    Hierarchical {
        anchor_prior: BaselineSpec,
        baseline: BaselineSpec,
        shrinkage: ShrinkageSpec,
        grit: GritSpec,
    },
    Temporal {
        initial: BaselineSpec,
        baseline: BaselineSpec,
        shrinkage: ShrinkageSpec,
        grit: GritSpec,
        /// Optional gaps between consecutive time points (length T - 1); the
        /// effective shrinkage at step t is the common scale divided by the
        /// gap. Defaults to all ones.
        spacings: Option<Vec<f64>>,
    },
}

impl DependenceKind {
    pub fn shrinkage_spec(&self) -> Option<&ShrinkageSpec> {
        match self {
            DependenceKind::Independent {
                prior: PartitionPrior::Sp { shrinkage, .. },
            } => Some(shrinkage),
            DependenceKind::Hierarchical { shrinkage, .. } => Some(shrinkage),
            DependenceKind::Temporal { shrinkage, .. } => Some(shrinkage),
            _ => None,
        }
    }

    pub fn grit_spec(&self) -> Option<&GritSpec> {
        match self {
            DependenceKind::Independent {
                prior: PartitionPrior::Sp { grit, .. },
            } => Some(grit),
            DependenceKind::Hierarchical { grit, .. } => Some(grit),
            DependenceKind::Temporal { grit, .. } => Some(grit),
            _ => None,
        }
    }
}

/// How cluster labels are resampled when a Gaussian likelihood is attached:
/// with the cluster coefficients integrated out analytically, or with
/// auxiliary-parameter proposals in the style of Neal's Algorithm 8.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelUpdate {
    Collapsed,
    Neal8,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Metropolis attempts per time point per iteration for the permutation.
    pub perm_attempts: usize,
    /// Number of positions shuffled per attempt.
    pub perm_block: usize,
    /// Gamma prior (shape, rate) for a random common shrinkage.
    pub shrinkage_prior: (f64, f64),
    /// Beta prior (shape, shape) for a random grit.
    pub grit_prior: (f64, f64),
    /// Random-walk standard deviation on the log shrinkage scale.
    pub shrinkage_step: f64,
    /// Random-walk standard deviation on the logit grit scale.
    pub grit_step: f64,
    /// Metropolis attempts per iteration for each of the shrinkage scale and
    /// the grit (their updates are cheap next to a label sweep).
    pub hyper_attempts: usize,
    pub label_update: LabelUpdate,
    pub seed: u64,
    pub chains: usize,
}

impl McmcConfig {
    /// Defaults for independent partition fits: 55,000 iterations, 5,000
    /// burn-in, 1-in-10 thinning, ten permutation attempts on blocks of ten.
    pub fn default_independent() -> Self {
        Self {
            iterations: 55_000,
            burn_in: 5_000,
            thin: 10,
            perm_attempts: 10,
            perm_block: 10,
            shrinkage_prior: (5.0, 1.0),
            grit_prior: (1.0, 9.0),
            shrinkage_step: 0.35,
            grit_step: 0.6,
            hyper_attempts: 5,
            label_update: LabelUpdate::Collapsed,
            seed: 0,
            chains: 1,
        }
    }

    /// Defaults for the dependent models, which need many more permutation
    /// attempts on smaller blocks to mix.
    pub fn default_dependent() -> Self {
        Self {
            perm_attempts: 200,
            perm_block: 5,
            ..Self::default_independent()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Config(
                "burn-in must be smaller than the iteration count".into(),
            ));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.perm_block < 2 {
            return Err(Error::Config("permutation block must shuffle >= 2".into()));
        }
        let (a, b) = self.shrinkage_prior;
        let (c, d) = self.grit_prior;
        if !(a > 0.0 && b > 0.0 && c > 0.0 && d > 0.0) {
            return Err(Error::Config("prior parameters must be positive".into()));
        }
        if !(self.shrinkage_step > 0.0 && self.grit_step > 0.0) {
            return Err(Error::Config("random-walk steps must be positive".into()));
        }
        if self.hyper_attempts == 0 {
            return Err(Error::Config("need at least one hyperparameter attempt".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("at least one chain".into()));
        }
        Ok(())
    }
}

/// Observation likelihood attached to the partitions.
pub enum Likelihood<'a> {
    Gaussian {
        data: &'a RegressionDataset,
        priors: &'a RegressionPriors,
    },
    /// Constant likelihood: the chain targets the prior.
    Constant { n_units: usize, n_times: usize },
}

impl Likelihood<'_> {
    pub fn n_units(&self) -> usize {
        match self {
            Likelihood::Gaussian { data, .. } => data.n_units(),
            Likelihood::Constant { n_units, .. } => *n_units,
        }
    }

    pub fn n_times(&self) -> usize {
        match self {
            Likelihood::Gaussian { data, .. } => data.n_times(),
            Likelihood::Constant { n_times, .. } => *n_times,
        }
    }
}

/// A held-out observation row scored against each retained draw.
#[derive(Clone, Debug)]
pub struct HeldoutObs {
    pub t: usize,
    pub unit: usize,
    pub y: f64,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
}

/// Full sampler state.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub partitions: Vec<Partition>,
    pub perms: Vec<Permutation>,
    pub omega: f64,
    pub shrinkage_vec: Option<Vec<f64>>,
    pub psi: f64,
    pub anchor: Option<Partition>,
    pub beta_star: Vec<Vec<DVector<f64>>>,
    pub gamma: Vec<DVector<f64>>,
    pub tau: Vec<f64>,
    pub iteration: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RateCounter {
    pub accepted: u64,
    pub attempted: u64,
}

impl RateCounter {
    fn tally(&mut self, accepted: bool) {
        self.attempted += 1;
        if accepted {
            self.accepted += 1;
        }
    }

    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AcceptanceStats {
    pub permutation: RateCounter,
    pub shrinkage: RateCounter,
    pub grit: RateCounter,
    pub anchor: RateCounter,
}

/// Post-burn-in, thinned draws of every unknown.
#[derive(Clone, Debug, Default)]
pub struct SampleArchive {
    pub n_items: usize,
    pub n_times: usize,
    pub partitions: Vec<Vec<Partition>>,
    pub perms: Vec<Vec<Permutation>>,
    pub omegas: Vec<f64>,
    pub psis: Vec<f64>,
    pub taus: Vec<Vec<f64>>,
    pub gammas: Vec<Vec<Vec<f64>>>,
    pub anchors: Option<Vec<Partition>>,
    pub heldout_loglik: Vec<f64>,
    pub acceptance: AcceptanceStats,
}

impl SampleArchive {
    pub fn n_draws(&self) -> usize {
        self.partitions.len()
    }

    /// One CSV per recorded quantity, partitions as canonical label strings.
    pub fn write_csv<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut parts = csv::Writer::from_path(dir.join("partitions.csv"))?;
        parts.write_record(["draw", "t", "partition"])?;
        for (d, per_t) in self.partitions.iter().enumerate() {
            for (t, p) in per_t.iter().enumerate() {
                parts.write_record([d.to_string(), t.to_string(), p.to_string()])?;
            }
        }
        parts.flush()?;

        let mut perms = csv::Writer::from_path(dir.join("permutations.csv"))?;
        perms.write_record(["draw", "t", "order"])?;
        for (d, per_t) in self.perms.iter().enumerate() {
            for (t, perm) in per_t.iter().enumerate() {
                perms.write_record([d.to_string(), t.to_string(), perm.to_string()])?;
            }
        }
        perms.flush()?;

        let mut scalars = csv::Writer::from_path(dir.join("scalars.csv"))?;
        scalars.write_record(["draw", "omega", "psi"])?;
        for d in 0..self.n_draws() {
            scalars.write_record([
                d.to_string(),
                self.omegas[d].to_string(),
                self.psis[d].to_string(),
            ])?;
        }
        scalars.flush()?;

        if !self.taus.is_empty() {
            let mut taus = csv::Writer::from_path(dir.join("tau.csv"))?;
            taus.write_record(["draw", "t", "tau"])?;
            let mut gammas = csv::Writer::from_path(dir.join("gamma.csv"))?;
            gammas.write_record(["draw", "t", "component", "value"])?;
            for d in 0..self.n_draws() {
                for t in 0..self.n_times {
                    taus.write_record([d.to_string(), t.to_string(), self.taus[d][t].to_string()])?;
                    for (j, v) in self.gammas[d][t].iter().enumerate() {
                        gammas.write_record([
                            d.to_string(),
                            t.to_string(),
                            j.to_string(),
                            v.to_string(),
                        ])?;
                    }
                }
            }
            taus.flush()?;
            gammas.flush()?;
        }

        if let Some(anchors) = &self.anchors {
            let mut file = csv::Writer::from_path(dir.join("anchor.csv"))?;
            file.write_record(["draw", "partition"])?;
            for (d, a) in anchors.iter().enumerate() {
                file.write_record([d.to_string(), a.to_string()])?;
            }
            file.flush()?;
        }

        if !self.heldout_loglik.is_empty() {
            let mut file = csv::Writer::from_path(dir.join("heldout.csv"))?;
            file.write_record(["draw", "loglik"])?;
            for (d, v) in self.heldout_loglik.iter().enumerate() {
                file.write_record([d.to_string(), v.to_string()])?;
            }
            file.flush()?;
        }
        Ok(())
    }

    /// Reads the partition draws back from `partitions.csv`.
    pub fn read_partitions<P: AsRef<Path>>(dir: P) -> Result<Vec<Vec<Partition>>> {
        let mut reader = csv::Reader::from_path(dir.as_ref().join("partitions.csv"))?;
        let mut draws: Vec<Vec<Partition>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let d: usize = record[0]
                .parse()
                .map_err(|_| Error::Data("bad draw index".into()))?;
            let t: usize = record[1]
                .parse()
                .map_err(|_| Error::Data("bad time index".into()))?;
            let p: Partition = record[2].parse()?;
            if d == draws.len() {
                draws.push(Vec::new());
            }
            if t != draws[d].len() {
                return Err(Error::Data("partitions.csv out of order".into()));
            }
            draws[d].push(p);
        }
        Ok(draws)
    }
}

/// Per-chain prepared prior context (fixed-parameter distributions built
/// once, e.g. the centered-process normalizer).
struct PriorCtx<'a> {
    kind: &'a DependenceKind,
    cpp: Option<CppParams>,
    lsp: Option<LspParams>,
}

impl<'a> PriorCtx<'a> {
    fn new(kind: &'a DependenceKind) -> Result<Self> {
        let mut cpp = None;
        let mut lsp = None;
        if let DependenceKind::Independent { prior } = kind {
            match prior {
                PartitionPrior::Cpp {
                    anchor,
                    shrinkage,
                    distance,
                    baseline,
                } => {
                    cpp = Some(CppParams::new(
                        anchor.clone(),
                        *shrinkage,
                        *distance,
                        baseline.clone(),
                    )?);
                }
                PartitionPrior::Lsp { anchor, shrinkage } => {
                    lsp = Some(LspParams::new(anchor.clone(), *shrinkage)?);
                }
                _ => {}
            }
        }
        Ok(Self { kind, cpp, lsp })
    }
}

fn shrinkage_value(spec: &ShrinkageSpec, state_omega: f64) -> f64 {
    match spec {
        ShrinkageSpec::Fixed { value } => *value,
        ShrinkageSpec::Random => state_omega,
        ShrinkageSpec::Idiosyncratic { .. } => f64::NAN, // vector path below
    }
}

fn shrinkage_vec_for(
    spec: &ShrinkageSpec,
    state_omega: f64,
    n: usize,
    divisor: f64,
) -> Vec<f64> {
    match spec {
        ShrinkageSpec::Idiosyncratic { values } => values.iter().map(|v| v / divisor).collect(),
        _ => vec![shrinkage_value(spec, state_omega) / divisor; n],
    }
}

fn grit_value(spec: &GritSpec, state_psi: f64) -> f64 {
    match spec {
        GritSpec::Fixed { value } => *value,
        GritSpec::Random => state_psi,
    }
}

fn spacing_divisor(kind: &DependenceKind, t: usize) -> f64 {
    if let DependenceKind::Temporal {
        spacings: Some(d), ..
    } = kind
    {
        if t >= 1 {
            return d[t - 1];
        }
    }
    1.0
}

/// The log prior factor for slot `t` evaluated at `partition` under `perm`,
/// with `omega`/`psi` supplied explicitly so proposals can be scored. For the
/// temporal model, `anchor_override` substitutes the anchoring partition
/// (slot t - 1); for the hierarchical model it substitutes the shared anchor.
#[allow(clippy::too_many_arguments)]
fn log_prior_slot(
    ctx: &PriorCtx,
    state: &ChainState,
    t: usize,
    partition: &Partition,
    perm: &Permutation,
    omega: f64,
    psi: f64,
    anchor_override: Option<&Partition>,
) -> Result<f64> {
    let n = partition.n_items();
    match ctx.kind {
        DependenceKind::Independent { prior } => match prior {
            PartitionPrior::Sp {
                anchor,
                shrinkage,
                grit,
                baseline,
            } => {
                let params = SpParams::new(
                    anchor.clone(),
                    shrinkage_vec_for(shrinkage, omega, n, 1.0),
                    grit_value(grit, psi),
                    baseline.clone(),
                )?;
                sp_log_pmf(&params, partition, perm)
            }
            PartitionPrior::Cpp { .. } => {
                cpp_unnormalized_log_mass(ctx.cpp.as_ref().unwrap(), partition)
            }
            PartitionPrior::Lsp { .. } => lsp_log_pmf(ctx.lsp.as_ref().unwrap(), partition, perm),
            PartitionPrior::Fixed { target } => Ok(if partition == target {
                0.0
            } else {
                f64::NEG_INFINITY
            }),
            PartitionPrior::Baseline { spec } => baseline_log_pmf(spec, partition, perm),
        },
        DependenceKind::Hierarchical {
            baseline,
            shrinkage,
            grit,
            ..
        } => {
            let anchor = anchor_override
                .or(state.anchor.as_ref())
                .expect("hierarchical state carries an anchor");
            let params = SpParams::new(
                anchor.clone(),
                shrinkage_vec_for(shrinkage, omega, n, 1.0),
                grit_value(grit, psi),
                baseline.clone(),
            )?;
            sp_log_pmf(&params, partition, perm)
        }
        DependenceKind::Temporal {
            initial,
            baseline,
            shrinkage,
            grit,
            ..
        } => {
            if t == 0 {
                baseline_log_pmf(initial, partition, perm)
            } else {
                let anchor = anchor_override.unwrap_or(&state.partitions[t - 1]);
                let params = SpParams::new(
                    anchor.clone(),
                    shrinkage_vec_for(shrinkage, omega, n, spacing_divisor(ctx.kind, t)),
                    grit_value(grit, psi),
                    baseline.clone(),
                )?;
                sp_log_pmf(&params, partition, perm)
            }
        }
    }
}

/// All log prior factors touched by changing slot `t`'s partition to
/// `candidate`: the slot's own factor plus, in the temporal model, the
/// successor's factor which is anchored on slot `t`.
fn log_prior_terms_for_label_move(
    ctx: &PriorCtx,
    state: &ChainState,
    t: usize,
    candidate: &Partition,
) -> Result<f64> {
    let mut total = log_prior_slot(
        ctx,
        state,
        t,
        candidate,
        &state.perms[t],
        state.omega,
        state.psi,
        None,
    )?;
    if matches!(ctx.kind, DependenceKind::Temporal { .. }) && t + 1 < state.partitions.len() {
        total += log_prior_slot(
            ctx,
            state,
            t + 1,
            &state.partitions[t + 1],
            &state.perms[t + 1],
            state.omega,
            state.psi,
            Some(candidate),
        )?;
    }
    Ok(total)
}

/// Sum of the log prior factors that involve the common shrinkage and grit,
/// evaluated at the supplied values with everything else held at the state.
fn log_prior_sp_terms(ctx: &PriorCtx, state: &ChainState, omega: f64, psi: f64) -> Result<f64> {
    let t_range: Vec<usize> = match ctx.kind {
        DependenceKind::Independent {
            prior: PartitionPrior::Sp { .. },
        }
        | DependenceKind::Hierarchical { .. } => (0..state.partitions.len()).collect(),
        DependenceKind::Temporal { .. } => (1..state.partitions.len()).collect(),
        _ => Vec::new(),
    };
    let mut total = 0.0;
    for t in t_range {
        total += log_prior_slot(
            ctx,
            state,
            t,
            &state.partitions[t],
            &state.perms[t],
            omega,
            psi,
            None,
        )?;
    }
    Ok(total)
}

fn loglik_rows_for_unit(
    data: &RegressionDataset,
    t: usize,
    unit: usize,
    beta: &DVector<f64>,
    gamma: &DVector<f64>,
    tau: f64,
) -> f64 {
    let g = data.group(t, unit);
    if g.n_rows() == 0 {
        return 0.0;
    }
    let resid = &g.y - &g.x * beta - &g.z * gamma;
    0.5 * g.n_rows() as f64 * (tau.ln() - (2.0 * std::f64::consts::PI).ln())
        - 0.5 * tau * resid.norm_squared()
}

/// One Gibbs sweep over the items of slot `t`'s partition. Canonical form is
/// restored after every move.
fn update_labels<R: Rng>(
    ctx: &PriorCtx,
    likelihood: &Likelihood,
    config: &McmcConfig,
    state: &mut ChainState,
    t: usize,
    rng: &mut R,
) -> Result<()> {
    let n = state.partitions[t].n_items();
    if n == 1 {
        return Ok(());
    }
    for item in 0..n {
        let labels = state.partitions[t].labels().to_vec();
        let mut cand_labels: Vec<usize> = Vec::new();
        let mut max_other = 0usize;
        for (j, &l) in labels.iter().enumerate() {
            if j != item {
                if !cand_labels.contains(&l) {
                    cand_labels.push(l);
                }
                max_other = max_other.max(l);
            }
        }
        cand_labels.sort_unstable();
        let fresh = max_other + 1;
        cand_labels.push(fresh);

        // Auxiliary coefficient draw for the fresh-cluster candidate under
        // the Neal-8 scheme; a current singleton re-uses its own coefficient.
        let aux_beta: Option<DVector<f64>> = match (likelihood, config.label_update) {
            (Likelihood::Gaussian { priors, .. }, LabelUpdate::Neal8) => {
                let current_label = labels[item];
                let is_singleton = labels
                    .iter()
                    .enumerate()
                    .all(|(j, &l)| j == item || l != current_label);
                if is_singleton {
                    Some(state.beta_star[t][current_label - 1].clone())
                } else {
                    Some(draw_mvn_from_precision(
                        &priors.mu_beta,
                        &priors.lambda_beta,
                        rng,
                    )?)
                }
            }
            _ => None,
        };

        let mut log_weights = Vec::with_capacity(cand_labels.len());
        let mut candidates = Vec::with_capacity(cand_labels.len());
        for &c in &cand_labels {
            let mut raw = labels.clone();
            raw[item] = c;
            let cand = Partition::from_labels(&raw)?;
            let mut lw = log_prior_terms_for_label_move(ctx, state, t, &cand)?;
            if let Likelihood::Gaussian { data, priors } = likelihood {
                match config.label_update {
                    LabelUpdate::Collapsed => {
                        let members: Vec<usize> = (0..n)
                            .filter(|&j| j != item && labels[j] == c)
                            .collect();
                        let without = marginal_log_likelihood_cluster(
                            data,
                            priors,
                            t,
                            &members,
                            &state.gamma[t],
                            state.tau[t],
                        )?;
                        let mut with_item = members.clone();
                        with_item.push(item);
                        let with = marginal_log_likelihood_cluster(
                            data,
                            priors,
                            t,
                            &with_item,
                            &state.gamma[t],
                            state.tau[t],
                        )?;
                        lw += with - without;
                    }
                    LabelUpdate::Neal8 => {
                        let beta = if c == fresh {
                            aux_beta.as_ref().unwrap()
                        } else {
                            &state.beta_star[t][c - 1]
                        };
                        lw += loglik_rows_for_unit(
                            data,
                            t,
                            item,
                            beta,
                            &state.gamma[t],
                            state.tau[t],
                        );
                    }
                }
            }
            log_weights.push(lw);
            candidates.push((c, cand));
        }
        normalize_log_weights(&mut log_weights);
        let pick = sample_categorical(&log_weights, rng);
        let (chosen_label, chosen) = candidates.swap_remove(pick);

        if config.label_update == LabelUpdate::Neal8
            && matches!(likelihood, Likelihood::Gaussian { .. })
        {
            // Rebuild the per-cluster coefficients to track the canonical
            // relabeling of the chosen partition.
            let mut raw = labels.clone();
            raw[item] = chosen_label;
            let canonical = canonicalize_labels(&raw);
            let mut new_betas: Vec<Option<DVector<f64>>> = vec![None; chosen.n_clusters()];
            for (j, &new_l) in canonical.iter().enumerate() {
                if new_betas[new_l - 1].is_none() {
                    let old_l = raw[j];
                    let beta = if old_l == fresh {
                        aux_beta.clone().unwrap()
                    } else {
                        state.beta_star[t][old_l - 1].clone()
                    };
                    new_betas[new_l - 1] = Some(beta);
                }
            }
            state.beta_star[t] = new_betas.into_iter().map(Option::unwrap).collect();
        }
        state.partitions[t] = chosen;
    }
    Ok(())
}

/// Metropolis updates of slot `t`'s allocation order, shuffling a random
/// block of positions. The likelihood cancels, so only the slot's own prior
/// factor enters the ratio.
fn update_permutation<R: Rng>(
    ctx: &PriorCtx,
    config: &McmcConfig,
    state: &mut ChainState,
    t: usize,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<()> {
    if matches!(
        ctx.kind,
        DependenceKind::Independent {
            prior: PartitionPrior::Cpp { .. } | PartitionPrior::Fixed { .. }
        }
    ) {
        return Ok(()); // no permutation in these priors
    }
    let n = state.partitions[t].n_items();
    let block = config.perm_block.min(n);
    if block < 2 {
        return Ok(());
    }
    let mut current_lp = log_prior_slot(
        ctx,
        state,
        t,
        &state.partitions[t],
        &state.perms[t],
        state.omega,
        state.psi,
        None,
    )?;
    for _ in 0..config.perm_attempts {
        let positions = rand::seq::index::sample(rng, n, block).into_vec();
        let mut proposal = state.perms[t].clone();
        proposal.shuffle_positions(&positions, rng);
        let proposal_lp = log_prior_slot(
            ctx,
            state,
            t,
            &state.partitions[t],
            &proposal,
            state.omega,
            state.psi,
            None,
        )?;
        let accept = proposal_lp - current_lp >= 0.0
            || rng.random_range(0.0..1.0f64).ln() < proposal_lp - current_lp;
        stats.permutation.tally(accept);
        if accept {
            state.perms[t] = proposal;
            current_lp = proposal_lp;
        }
    }
    Ok(())
}

/// Random-walk Metropolis on the log of the common shrinkage scale.
fn update_shrinkage<R: Rng>(
    ctx: &PriorCtx,
    config: &McmcConfig,
    state: &mut ChainState,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<()> {
    if !matches!(ctx.kind.shrinkage_spec(), Some(ShrinkageSpec::Random)) {
        return Ok(());
    }
    let (shape, rate) = config.shrinkage_prior;
    let prior = GammaPdf::new(shape, rate).map_err(|e| Error::Numerical(e.to_string()))?;
    let prior_draw =
        GammaDraw::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(e.to_string()))?;
    let step = Normal::new(0.0, config.shrinkage_step).unwrap();
    let mut current_terms = log_prior_sp_terms(ctx, state, state.omega, state.psi)?;
    // Alternate local random walks with independence draws from the prior;
    // the latter hop between well-separated posterior modes.
    for attempt in 0..config.hyper_attempts {
        let omega = state.omega;
        let (proposal, extra) = if attempt % 2 == 0 {
            let proposal = (omega.ln() + step.sample(rng)).exp();
            let jacobian = proposal.ln() - omega.ln();
            (
                proposal,
                prior.ln_pdf(proposal) - prior.ln_pdf(omega) + jacobian,
            )
        } else {
            (prior_draw.sample(rng), 0.0) // prior and proposal cancel
        };
        let proposal_terms = log_prior_sp_terms(ctx, state, proposal, state.psi)?;
        let log_ratio = proposal_terms - current_terms + extra;
        let accept = log_ratio >= 0.0 || rng.random_range(0.0..1.0f64).ln() < log_ratio;
        stats.shrinkage.tally(accept);
        if accept {
            state.omega = proposal;
            current_terms = proposal_terms;
        }
    }
    Ok(())
}

/// Random-walk Metropolis on the logit of the grit.
fn update_grit<R: Rng>(
    ctx: &PriorCtx,
    config: &McmcConfig,
    state: &mut ChainState,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<()> {
    if !matches!(ctx.kind.grit_spec(), Some(GritSpec::Random)) {
        return Ok(());
    }
    let (a, b) = config.grit_prior;
    let prior = BetaPdf::new(a, b).map_err(|e| Error::Numerical(e.to_string()))?;
    let prior_draw = BetaDraw::new(a, b).map_err(|e| Error::Numerical(e.to_string()))?;
    let step = Normal::new(0.0, config.grit_step).unwrap();
    let mut current_terms = log_prior_sp_terms(ctx, state, state.omega, state.psi)?;
    for attempt in 0..config.hyper_attempts {
        let psi = state.psi;
        let (proposal, extra) = if attempt % 2 == 0 {
            let logit = (psi / (1.0 - psi)).ln() + step.sample(rng);
            let proposal = 1.0 / (1.0 + (-logit).exp());
            if proposal <= 0.0 || proposal >= 1.0 {
                stats.grit.tally(false);
                continue; // saturated transform; reject
            }
            let jacobian = (proposal * (1.0 - proposal)).ln() - (psi * (1.0 - psi)).ln();
            (
                proposal,
                prior.ln_pdf(proposal) - prior.ln_pdf(psi) + jacobian,
            )
        } else {
            (prior_draw.sample(rng), 0.0) // prior and proposal cancel
        };
        let proposal_terms = log_prior_sp_terms(ctx, state, state.omega, proposal)?;
        let log_ratio = proposal_terms - current_terms + extra;
        let accept = log_ratio >= 0.0 || rng.random_range(0.0..1.0f64).ln() < log_ratio;
        stats.grit.tally(accept);
        if accept {
            state.psi = proposal;
            current_terms = proposal_terms;
        }
    }
    Ok(())
}

/// Metropolis-within-Gibbs update of the hierarchical anchor, one item at a
/// time, proposing from the anchor prior's full conditional so that the prior
/// and proposal terms cancel in the acceptance ratio.
fn update_anchor<R: Rng>(
    ctx: &PriorCtx,
    state: &mut ChainState,
    stats: &mut AcceptanceStats,
    rng: &mut R,
) -> Result<()> {
    let DependenceKind::Hierarchical { anchor_prior, .. } = ctx.kind else {
        return Ok(());
    };
    let n = state.partitions[0].n_items();
    if n == 1 {
        return Ok(());
    }
    let natural = Permutation::natural(n);
    let joint_sp = |state: &ChainState, anchor: &Partition| -> Result<f64> {
        let mut total = 0.0;
        for t in 0..state.partitions.len() {
            total += log_prior_slot(
                ctx,
                state,
                t,
                &state.partitions[t],
                &state.perms[t],
                state.omega,
                state.psi,
                Some(anchor),
            )?;
        }
        Ok(total)
    };
    for item in 0..n {
        let anchor = state.anchor.clone().unwrap();
        let labels = anchor.labels().to_vec();
        let mut cand_labels: Vec<usize> = Vec::new();
        let mut max_other = 0usize;
        for (j, &l) in labels.iter().enumerate() {
            if j != item {
                if !cand_labels.contains(&l) {
                    cand_labels.push(l);
                }
                max_other = max_other.max(l);
            }
        }
        cand_labels.sort_unstable();
        cand_labels.push(max_other + 1);

        let mut weights = Vec::with_capacity(cand_labels.len());
        let mut candidates = Vec::with_capacity(cand_labels.len());
        for &c in &cand_labels {
            let mut raw = labels.clone();
            raw[item] = c;
            let cand = Partition::from_labels(&raw)?;
            weights.push(baseline_log_pmf(anchor_prior, &cand, &natural)?);
            candidates.push(cand);
        }
        normalize_log_weights(&mut weights);
        let pick = sample_categorical(&weights, rng);
        let proposal = candidates.swap_remove(pick);
        if proposal == anchor {
            stats.anchor.tally(true);
            continue;
        }
        let log_ratio = joint_sp(state, &proposal)? - joint_sp(state, &anchor)?;
        let accept = log_ratio >= 0.0 || rng.random_range(0.0..1.0f64).ln() < log_ratio;
        stats.anchor.tally(accept);
        if accept {
            state.anchor = Some(proposal);
        }
    }
    Ok(())
}

/// Draws a partition from a baseline spec by sequential allocation.
pub fn baseline_sample<R: Rng>(
    spec: &BaselineSpec,
    n: usize,
    rng: &mut R,
) -> Result<Partition> {
    let mut state = AllocationState::new();
    for item in 0..n {
        let q = state.num_clusters();
        let mut probs: Vec<f64> = Vec::with_capacity(q + 1);
        for c in 1..=(q + 1) {
            probs.push(baseline_capf(spec, &state, item, c)?);
        }
        let label = sample_categorical(&probs, rng) + 1;
        state.push(item, label)?;
    }
    Partition::from_labels(state.labels())
}

fn score_heldout(state: &ChainState, rows: &[HeldoutObs]) -> f64 {
    let mut total = 0.0;
    for row in rows {
        let c = state.partitions[row.t].label(row.unit);
        let beta = &state.beta_star[row.t][c - 1];
        let mean = row.x.dot(beta) + row.z.dot(&state.gamma[row.t]);
        let tau = state.tau[row.t];
        total += 0.5 * (tau.ln() - (2.0 * std::f64::consts::PI).ln())
            - 0.5 * tau * (row.y - mean).powi(2);
    }
    total
}

fn validate_kind(kind: &DependenceKind, n: usize, n_times: usize) -> Result<()> {
    let check_anchor = |p: &Partition| -> Result<()> {
        if p.n_items() != n {
            return Err(Error::SizeMismatch {
                context: "prior partition vs data units",
                expected: n,
                got: p.n_items(),
            });
        }
        Ok(())
    };
    match kind {
        DependenceKind::Independent { prior } => match prior {
            PartitionPrior::Sp {
                anchor, shrinkage, ..
            } => {
                check_anchor(anchor)?;
                if let ShrinkageSpec::Idiosyncratic { values } = shrinkage {
                    if values.len() != n {
                        return Err(Error::SizeMismatch {
                            context: "idiosyncratic shrinkage vs units",
                            expected: n,
                            got: values.len(),
                        });
                    }
                    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        return Err(Error::invalid("shrinkage values must be >= 0"));
                    }
                }
                Ok(())
            }
            PartitionPrior::Cpp { anchor, .. } | PartitionPrior::Lsp { anchor, .. } => {
                check_anchor(anchor)
            }
            PartitionPrior::Fixed { target } => check_anchor(target),
            PartitionPrior::Baseline { spec } => {
                spec.validate()?;
                if let Some(m) = spec.n_items() {
                    if m != n {
                        return Err(Error::SizeMismatch {
                            context: "baseline spec vs units",
                            expected: n,
                            got: m,
                        });
                    }
                }
                Ok(())
            }
        },
        DependenceKind::Hierarchical { .. } => Ok(()),
        DependenceKind::Temporal { spacings, .. } => {
            if let Some(d) = spacings {
                if d.len() + 1 != n_times {
                    return Err(Error::SizeMismatch {
                        context: "spacings vs time points",
                        expected: n_times.saturating_sub(1),
                        got: d.len(),
                    });
                }
                if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::invalid("spacings must be positive"));
                }
            }
            Ok(())
        }
    }
}

fn initial_partition<R: Rng>(
    kind: &DependenceKind,
    n: usize,
    rng: &mut R,
) -> Result<Partition> {
    match kind {
        DependenceKind::Independent { prior } => match prior {
            PartitionPrior::Fixed { target } => Ok(target.clone()),
            PartitionPrior::Sp { baseline, .. } => baseline_sample(baseline, n, rng),
            PartitionPrior::Cpp { baseline, .. } => baseline_sample(baseline, n, rng),
            PartitionPrior::Lsp { .. } => baseline_sample(
                &BaselineSpec::jensen_liu(1.0).expect("unit mass is valid"),
                n,
                rng,
            ),
            PartitionPrior::Baseline { spec } => baseline_sample(spec, n, rng),
        },
        DependenceKind::Hierarchical { baseline, .. } => baseline_sample(baseline, n, rng),
        DependenceKind::Temporal {
            initial, baseline, ..
        } => {
            // Any support point works; mix the two specs' draws.
            if rng.random_range(0.0..1.0) < 0.5 {
                baseline_sample(initial, n, rng)
            } else {
                baseline_sample(baseline, n, rng)
            }
        }
    }
}

/// Runs one chain and records post-burn-in thinned draws of all unknowns.
/// Fully reproducible for a given `(seed, stream)` pair.
pub fn run_chain(
    kind: &DependenceKind,
    likelihood: &Likelihood,
    heldout: Option<&[HeldoutObs]>,
    config: &McmcConfig,
    seed: u64,
    stream: u64,
) -> Result<SampleArchive> {
    config.validate()?;
    let n = likelihood.n_units();
    let n_times = likelihood.n_times();
    validate_kind(kind, n, n_times)?;
    if heldout.is_some() && matches!(likelihood, Likelihood::Constant { .. }) {
        return Err(Error::Config(
            "held-out scoring requires a Gaussian likelihood".into(),
        ));
    }
    let ctx = PriorCtx::new(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    // Initial state.
    let mut partitions = Vec::with_capacity(n_times);
    let mut perms = Vec::with_capacity(n_times);
    for _ in 0..n_times {
        partitions.push(initial_partition(kind, n, &mut rng)?);
        perms.push(Permutation::random(n, &mut rng));
    }
    let omega = match kind.shrinkage_spec() {
        Some(ShrinkageSpec::Random) => {
            let (shape, rate) = config.shrinkage_prior;
            GammaDraw::new(shape, 1.0 / rate)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(&mut rng)
        }
        Some(ShrinkageSpec::Fixed { value }) => *value,
        _ => 0.0,
    };
    let shrinkage_vec = match kind.shrinkage_spec() {
        Some(ShrinkageSpec::Idiosyncratic { values }) => Some(values.clone()),
        _ => None,
    };
    let psi = match kind.grit_spec() {
        Some(GritSpec::Random) => {
            let (a, b) = config.grit_prior;
            BetaDraw::new(a, b)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(&mut rng)
        }
        Some(GritSpec::Fixed { value }) => *value,
        None => 0.0,
    };
    let anchor = match kind {
        DependenceKind::Hierarchical { anchor_prior, .. } => {
            Some(baseline_sample(anchor_prior, n, &mut rng)?)
        }
        _ => None,
    };
    let mut state = ChainState {
        partitions,
        perms,
        omega,
        shrinkage_vec,
        psi,
        anchor,
        beta_star: vec![Vec::new(); n_times],
        gamma: Vec::new(),
        tau: Vec::new(),
        iteration: 0,
    };
    if let Likelihood::Gaussian { data, priors } = likelihood {
        priors.validate(data.p_x(), data.p_z())?;
        let (a, b) = (priors.a_tau, priors.b_tau);
        for t in 0..n_times {
            let q = state.partitions[t].n_clusters();
            let betas: Result<Vec<DVector<f64>>> = (0..q)
                .map(|_| draw_mvn_from_precision(&priors.mu_beta, &priors.lambda_beta, &mut rng))
                .collect();
            state.beta_star[t] = betas?;
            state.gamma.push(draw_mvn_from_precision(
                &priors.mu_gamma,
                &priors.lambda_gamma,
                &mut rng,
            )?);
            state.tau.push(
                GammaDraw::new(a, 1.0 / b)
                    .map_err(|e| Error::Numerical(e.to_string()))?
                    .sample(&mut rng),
            );
        }
    }

    let mut archive = SampleArchive {
        n_items: n,
        n_times,
        anchors: state.anchor.as_ref().map(|_| Vec::new()),
        ..Default::default()
    };
    let mut stats = AcceptanceStats::default();

    // When the spec pins the idiosyncratic vector, label moves still see it
    // through shrinkage_vec_for; the scalar omega is ignored.
    let _ = &state.shrinkage_vec;

    for iteration in 1..=config.iterations {
        state.iteration = iteration;
        for t in 0..n_times {
            update_labels(&ctx, likelihood, config, &mut state, t, &mut rng)?;
        }
        if let Likelihood::Gaussian { data, priors } = likelihood {
            for t in 0..n_times {
                let q = state.partitions[t].n_clusters();
                let mut betas = Vec::with_capacity(q);
                for c in 1..=q {
                    let members = state.partitions[t].cluster_members(c);
                    let (mean, precision) = beta_star_full_conditional(
                        data,
                        priors,
                        t,
                        &members,
                        &state.gamma[t],
                        state.tau[t],
                    )?;
                    betas.push(draw_mvn_from_precision(&mean, &precision, &mut rng)?);
                }
                state.beta_star[t] = betas;
                state.gamma[t] = update_gamma(
                    data,
                    priors,
                    t,
                    &state.partitions[t],
                    &state.beta_star[t],
                    state.tau[t],
                    &mut rng,
                )?;
                state.tau[t] = update_tau(
                    data,
                    priors,
                    t,
                    &state.partitions[t],
                    &state.beta_star[t],
                    &state.gamma[t],
                    &mut rng,
                )?;
            }
        }
        for t in 0..n_times {
            update_permutation(&ctx, config, &mut state, t, &mut stats, &mut rng)?;
        }
        update_shrinkage(&ctx, config, &mut state, &mut stats, &mut rng)?;
        update_grit(&ctx, config, &mut state, &mut stats, &mut rng)?;
        update_anchor(&ctx, &mut state, &mut stats, &mut rng)?;

        if iteration > config.burn_in && (iteration - config.burn_in).is_multiple_of(config.thin) {
            archive.partitions.push(state.partitions.clone());
            archive.perms.push(state.perms.clone());
            archive.omegas.push(state.omega);
            archive.psis.push(state.psi);
            if matches!(likelihood, Likelihood::Gaussian { .. }) {
                archive.taus.push(state.tau.clone());
                archive.gammas.push(
                    state
                        .gamma
                        .iter()
                        .map(|g| g.iter().copied().collect())
                        .collect(),
                );
            }
            if let (Some(anchors), Some(a)) = (archive.anchors.as_mut(), state.anchor.as_ref()) {
                anchors.push(a.clone());
            }
            if let Some(rows) = heldout {
                archive.heldout_loglik.push(score_heldout(&state, rows));
            }
        }
    }
    archive.acceptance = stats;
    Ok(archive)
}

/// Writes a TOML run manifest next to the archive CSVs.
pub fn write_manifest<P: AsRef<Path>>(
    dir: P,
    config_echo: &str,
    seed: u64,
    version: &str,
    wall_seconds: f64,
    acceptance: &AcceptanceStats,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut file = std::fs::File::create(dir.join("manifest.toml"))?;
    writeln!(file, "version = {version:?}")?;
    writeln!(file, "seed = {seed}")?;
    writeln!(file, "wall_seconds = {wall_seconds}")?;
    let toml_float = |x: f64| if x.is_nan() { "nan".to_string() } else { x.to_string() };
    writeln!(
        file,
        "permutation_acceptance = {}",
        toml_float(acceptance.permutation.rate())
    )?;
    writeln!(
        file,
        "shrinkage_acceptance = {}",
        toml_float(acceptance.shrinkage.rate())
    )?;
    writeln!(file, "grit_acceptance = {}", toml_float(acceptance.grit.rate()))?;
    writeln!(
        file,
        "anchor_acceptance = {}",
        toml_float(acceptance.anchor.rate())
    )?;
    writeln!(file, "config = '''")?;
    writeln!(file, "{}", config_echo.replace("'''", "' ''"))?;
    writeln!(file, "'''")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(labels: &[usize]) -> Partition {
        Partition::from_labels(labels).unwrap()
    }

    fn ewens1() -> BaselineSpec {
        BaselineSpec::ewens(1.0).unwrap()
    }

    fn quick_config() -> McmcConfig {
        McmcConfig {
            iterations: 300,
            burn_in: 100,
            thin: 2,
            ..McmcConfig::default_independent()
        }
    }

    fn sp_kind(anchor: &[usize]) -> DependenceKind {
        DependenceKind::Independent {
            prior: PartitionPrior::Sp {
                anchor: p(anchor),
                shrinkage: ShrinkageSpec::Random,
                grit: GritSpec::Random,
                baseline: ewens1(),
            },
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let kind = sp_kind(&[1, 1, 2, 2]);
        let likelihood = Likelihood::Constant {
            n_units: 4,
            n_times: 2,
        };
        let a = run_chain(&kind, &likelihood, None, &quick_config(), 42, 0).unwrap();
        let b = run_chain(&kind, &likelihood, None, &quick_config(), 42, 0).unwrap();
        assert_eq!(a.partitions, b.partitions);
        assert_eq!(a.omegas, b.omegas);
        assert_eq!(a.psis, b.psis);
        let c = run_chain(&kind, &likelihood, None, &quick_config(), 43, 0).unwrap();
        assert_ne!(a.partitions, c.partitions);
    }

    #[test]
    fn fixed_prior_pins_the_partition() {
        let target = p(&[1, 2, 2, 1]);
        let kind = DependenceKind::Independent {
            prior: PartitionPrior::Fixed {
                target: target.clone(),
            },
        };
        let likelihood = Likelihood::Constant {
            n_units: 4,
            n_times: 1,
        };
        let archive = run_chain(&kind, &likelihood, None, &quick_config(), 5, 0).unwrap();
        for draw in &archive.partitions {
            assert_eq!(draw[0], target);
        }
    }

    #[test]
    fn temporal_prior_with_zero_shrinkage_factorizes_to_the_baseline() {
        let kind = DependenceKind::Temporal {
            initial: ewens1(),
            baseline: ewens1(),
            shrinkage: ShrinkageSpec::Fixed { value: 0.0 },
            grit: GritSpec::Fixed { value: 0.3 },
            spacings: None,
        };
        let ctx = PriorCtx::new(&kind).unwrap();
        let state = ChainState {
            partitions: vec![p(&[1, 1, 2]), p(&[1, 2, 3])],
            perms: vec![Permutation::natural(3), Permutation::natural(3)],
            omega: 0.0,
            shrinkage_vec: None,
            psi: 0.3,
            anchor: None,
            beta_star: vec![Vec::new(); 2],
            gamma: Vec::new(),
            tau: Vec::new(),
            iteration: 0,
        };
        for q in crate::partition::enumerate_partitions(3).unwrap() {
            let coupled = log_prior_slot(
                &ctx,
                &state,
                1,
                &q,
                &state.perms[1],
                state.omega,
                state.psi,
                None,
            )
            .unwrap();
            let base = baseline_log_pmf(&ewens1(), &q, &state.perms[1]).unwrap();
            assert_relative_eq!(coupled, base, epsilon = 1e-12);
        }
    }

    #[test]
    fn spacing_rescaling_matches_shrinkage_rescaling() {
        let scale = 3.0;
        let mk = |spacings: Vec<f64>, omega: f64| {
            let kind = DependenceKind::Temporal {
                initial: ewens1(),
                baseline: ewens1(),
                shrinkage: ShrinkageSpec::Fixed { value: omega },
                grit: GritSpec::Fixed { value: 0.4 },
                spacings: Some(spacings),
            };
            let state = ChainState {
                partitions: vec![p(&[1, 1, 2]), p(&[1, 2, 2])],
                perms: vec![Permutation::natural(3), Permutation::natural(3)],
                omega,
                shrinkage_vec: None,
                psi: 0.4,
                anchor: None,
                beta_star: vec![Vec::new(); 2],
                gamma: Vec::new(),
                tau: Vec::new(),
                iteration: 0,
            };
            (kind, state)
        };
        // Scaling all gaps by c is the same as dividing the scale by c.
        let (kind_a, state_a) = mk(vec![2.0], 1.5 / scale);
        let (kind_b, state_b) = mk(vec![2.0 * scale], 1.5);
        let ctx_a = PriorCtx::new(&kind_a).unwrap();
        let ctx_b = PriorCtx::new(&kind_b).unwrap();
        for q in crate::partition::enumerate_partitions(3).unwrap() {
            let a = log_prior_slot(
                &ctx_a,
                &state_a,
                1,
                &q,
                &state_a.perms[1],
                state_a.omega,
                0.4,
                None,
            )
            .unwrap();
            let b = log_prior_slot(
                &ctx_b,
                &state_b,
                1,
                &q,
                &state_b.perms[1],
                state_b.omega,
                0.4,
                None,
            )
            .unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn permutation_moves_always_accept_for_exchangeable_zero_shrinkage() {
        let kind = DependenceKind::Independent {
            prior: PartitionPrior::Sp {
                anchor: p(&[1, 1, 2, 2]),
                shrinkage: ShrinkageSpec::Fixed { value: 0.0 },
                grit: GritSpec::Fixed { value: 0.3 },
                baseline: ewens1(),
            },
        };
        let likelihood = Likelihood::Constant {
            n_units: 4,
            n_times: 1,
        };
        let config = McmcConfig {
            iterations: 200,
            burn_in: 50,
            thin: 1,
            ..McmcConfig::default_independent()
        };
        let archive = run_chain(&kind, &likelihood, None, &config, 11, 0).unwrap();
        assert_eq!(archive.acceptance.permutation.rate(), 1.0);
    }

    #[test]
    fn single_item_chain_is_trivial() {
        let kind = sp_kind(&[1]);
        let likelihood = Likelihood::Constant {
            n_units: 1,
            n_times: 1,
        };
        let archive = run_chain(&kind, &likelihood, None, &quick_config(), 1, 0).unwrap();
        for draw in &archive.partitions {
            assert_eq!(draw[0].labels(), &[1]);
        }
    }

    #[test]
    fn archive_round_trips_through_csv() {
        let kind = sp_kind(&[1, 1, 2, 2]);
        let likelihood = Likelihood::Constant {
            n_units: 4,
            n_times: 2,
        };
        let archive = run_chain(&kind, &likelihood, None, &quick_config(), 9, 0).unwrap();
        let dir = std::env::temp_dir().join(format!("sp-archive-test-{}", std::process::id()));
        archive.write_csv(&dir).unwrap();
        let read = SampleArchive::read_partitions(&dir).unwrap();
        assert_eq!(read, archive.partitions);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn config_validation_catches_misuse() {
        let mut config = McmcConfig::default_independent();
        config.burn_in = config.iterations;
        assert!(config.validate().is_err());
        let mut config = McmcConfig::default_independent();
        config.thin = 0;
        assert!(config.validate().is_err());
        let mut config = McmcConfig::default_independent();
        config.perm_block = 1;
        assert!(config.validate().is_err());
    }

    #[test]
    fn baseline_sampling_matches_the_pmf() {
        let spec = BaselineSpec::ewens_pitman(1.2, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let all: Vec<Partition> = crate::partition::enumerate_partitions(4).unwrap().collect();
        let mut counts = vec![0usize; all.len()];
        let draws = 40_000;
        for _ in 0..draws {
            let s = baseline_sample(&spec, 4, &mut rng).unwrap();
            counts[all.iter().position(|q| *q == s).unwrap()] += 1;
        }
        let perm = Permutation::natural(4);
        let tv: f64 = all
            .iter()
            .zip(&counts)
            .map(|(q, &c)| {
                (baseline_log_pmf(&spec, q, &perm).unwrap().exp() - c as f64 / draws as f64).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }
}
