//! K-sparse variable selection for weighted linear regression.
//!
//! Given `p` noisy samples of a response and `N` candidate explanatory
//! variables, this crate searches for the best combination of exactly `K`
//! variables under two criteria: the Bayesian free energy (negative log
//! marginal likelihood under a Gaussian slab prior) and the M-fold weighted
//! cross-validation error.
//!
//! Three search strategies are provided:
//!
//! * [`exhaustive`] — evaluate every one of the `C(N,K)` supports and record
//!   exact densities of states (ES-K);
//! * [`remc`] + [`wham`] — fixed-cardinality Metropolis sampling over a
//!   replica-exchange temperature ladder, with the multiple-histogram method
//!   reconstructing the density of states when enumeration is infeasible
//!   (AES-K);
//! * [`lasso`] — an L1-regularized baseline with lambda optimization
//!   (min-CVE and the one-standard-error rule) and a lambda-scan that
//!   re-scores every support the path visits under both criteria.
//!
//! The [`vma`] module generates synthetic datasets with a planted sparse
//! truth and drives the full method comparison, which is how one checks
//! whether a given data size is sufficient for selection to work at all.
//!
//! See the `examples/` directory for one runnable program per capability;
//! the `ksparse` binary exposes the same operations as subcommands.

pub mod criteria;
pub mod data;
pub mod dos;
pub mod error;
pub mod exhaustive;
pub mod lasso;
pub mod manifest;
pub mod remc;
pub mod rng;
pub mod vma;
pub mod wham;

pub use crate::criteria::{
    cross_validation_error, estimate_prior_scale, evaluate_support, fe_gradient_z, fit_wls,
    free_energy, make_folds, posterior_moments, CriteriaConfig, CriterionPair, FoldAssignment,
    PosteriorMoments, PriorScaleEstimate, PriorSpec, WlsFit,
};
pub use crate::data::{
    destandardize, indicator_to_support, load_dataset, load_dataset_with, read_dataset,
    standardize, support_to_indicator, weighted_center, Dataset, LoadOptions, ScalingInfo,
    SupportSet,
};
pub use crate::dos::{Axis, Dos1d, Dos2d};
pub use crate::error::{Error, Result};
pub use crate::exhaustive::{
    binomial, enumerate_from_rank, enumerate_supports, exhaustive_search, joint_density,
    rank_support, unrank_support, Binning, EskConfig, EskResult, RankedSupport, SkippedSupport,
};
pub use crate::lasso::{
    coordinate_descent, debias, kkt_violation, lambda_max, lambda_optimize, lambda_path,
    lambda_scan, lasso_objective, write_path_csv, LambdaChoice, LassoPath, PathConfig, PerKMin,
    ScanEntry, ScanResult,
};
pub use crate::manifest::{RunManifest, Stopwatch};
pub use crate::remc::{
    exchange_step, metropolis_sweep, min_energy_estimate, run_remc, run_remc_with_energy,
    ChainState, CriterionKind, RemcConfig, ReplicaTrace, TemperatureLadder,
};
pub use crate::vma::{
    generate_synthetic, run_vma_experiment, run_vma_study, VmaConfig, VmaMethod, VmaMethods,
    VmaRow, VmaTable, VmaTruth,
};
pub use crate::wham::{wham, DosEstimate};
