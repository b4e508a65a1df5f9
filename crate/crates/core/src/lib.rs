//! Random-partition distributions that shrink a baseline allocation process
//! toward an anchor partition, together with the classical baselines they
//! compose with, exact small-n enumeration oracles, and MCMC for independent,
//! hierarchically-dependent, and temporally-dependent partition models over
//! clustered Gaussian panel regressions.

pub mod baseline;
pub mod bell;
pub mod cpp;
pub mod error;
pub mod fit;
pub mod lsp;
pub mod mcmc;
pub mod metrics;
pub mod oracle;
pub mod partition;
pub mod perm;
pub mod regression;
pub mod sp;
pub mod synth;
pub(crate) mod util;

pub use baseline::{baseline_capf, baseline_log_pmf, AllocationState, BaselineSpec};
pub use bell::{bell, extended_bell, log_extended_bell, BellTable};
pub use cpp::{cpp_log_pmf, CppParams, PartitionDistance};
pub use error::{Error, Result};
pub use fit::{crossval, fit, point_estimate, CrossvalReport, FitSummary};
pub use lsp::{lsp_capf, lsp_log_pmf, lsp_marginal_log_pmf, LspParams};
pub use mcmc::{
    run_chain, DependenceKind, GritSpec, LabelUpdate, Likelihood, McmcConfig, PartitionPrior,
    SampleArchive, ShrinkageSpec,
};
pub use metrics::{adjusted_rand_index, binder_distance, vi_distance};
pub use oracle::{exact_distribution, TheoremReport};
pub use partition::{enumerate_partitions, Partition};
pub use perm::{enumerate_permutations, Permutation};
pub use regression::{ClusterParams, RegressionDataset, RegressionPriors};
pub use sp::{
    anchor_log_factor, sp_capf, sp_log_pmf, sp_marginal_log_pmf, sp_sample, AnchorSums,
    MarginalMode, SpParams,
};
