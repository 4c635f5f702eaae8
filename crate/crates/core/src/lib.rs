//! Numerical laboratory for kinetic Langevin dynamics with rough drifts:
//! anisotropic Littlewood-Paley analysis, Bony paraproducts, the explicit
//! kinetic semigroup, a mild solver for the degenerate Kolmogorov equation,
//! Gaussian random-field drifts, and a Monte Carlo harness that checks the
//! quantitative estimates (occupation-functional exponents, moment bounds,
//! Holder slopes, L2 convergence of mollified drift functionals).

pub mod error;
pub mod fft;
pub mod filter;
pub mod gaussian;
pub mod holder;
pub mod io;
pub mod kernel;
pub mod lattice;
pub mod mollify;
pub mod para;
pub mod rng;
pub mod sde;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use filter::{block_apply, build_filter_bank, low_pass, DyadicFilterBank};
pub use gaussian::{
    block_decay_slope, covariance_check, sample_field, GaussianFieldSample, MeasureKind,
    SpectralMeasureSpec,
};
pub use holder::{bernstein_ratio, holder_norm, HolderSpec};
pub use kernel::{
    duhamel_integral, kernel_density, semigroup_apply, shear_apply, KineticPropagator, Quadrature,
    SpaceTimeField, TimeGrid,
};
pub use lattice::{anisotropic_distance, weight_rho, AnisotropicLattice, LatticeField, SCALING};
pub use mollify::{mollify_drift, BumpKind, MollifierSpec};
pub use para::{bony_decompose, drift_gradient_product, para_low_high, resonant, BonyTriple};
pub use sde::{
    drift_functional_cauchy, functional_integral, holder_exponent_of_a, ito_martingale_test,
    krylov_scan, moment_report, simulate_ensemble, AnalyticDrift, DriftSource, Functional,
    KrylovParams, PathEnsemble, SdeConfig,
};
pub use solver::{
    backward_solve, picard_solve, schauder_scan, Drift, PdeProblem, PicardOptions, SchauderParams,
    SchauderReport,
};
