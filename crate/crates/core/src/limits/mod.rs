//! Statistical machinery: binned likelihoods, fits, Bayesian upper limits
//! and pseudo-experiment ensembles.

pub mod bayes;
pub mod fit;
pub mod simplex;
pub mod stats;
pub mod toys;

pub use bayes::{bayesian_upper_limit, credible_upper_bound, LimitResult, ScanOptions, ScanPoint};
pub use fit::{fit_minimize, FitOptions, FitProblem, FitResult, FreeParam};
pub use simplex::SimplexOptions;
pub use stats::{binned_chi2, binned_poisson_nll, chi2_statistic, poisson_nll, Observation, Statistic};
pub use toys::{cycle_seeds, median, run_pseudo_experiments, CycleFailure, Ensemble};
