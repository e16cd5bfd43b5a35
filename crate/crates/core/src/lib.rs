//! Two-branch Boltzmann–Gibbs / Pareto income distribution: evaluation,
//! sampling, least-squares fitting against rank CCDFs, and social-class
//! indicators derived from the fitted parameters.

pub mod analysis;
pub mod empirical;
pub mod error;
pub mod fitting;
pub mod interp;
pub mod model;
pub mod optim;
pub mod quad;
pub mod synth;

pub use analysis::{ClassMetrics, RegionComparison, YearSeries};
pub use empirical::{augment_tail, log_downsample, rank_ccdf, EmpiricalCcdf, IncomeSample};
pub use error::{Error, Result};
pub use fitting::{FitConfig, FitResult};
pub use model::{EyfModel, EyfParams};
