//! Discrete-state diffusion on a bounded 2D grid, solved exactly.
//!
//! Every distribution is a dense probability vector over the bins of a
//! [`GridSpec`], and every noise step is a dense column-stochastic
//! [`TransitionKernel`]. That makes forward marginals, Bayesian posteriors and
//! the reverse process exact matrix algebra, with no learned approximation.
//! The [`serial`] module implements the closely related serial-reproduction
//! chain, whose stationary distribution is the agents' shared prior.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); aliases for
//! both precisions are exported below.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod metrics;
mod scalar;
pub mod serial;

pub use diffusion::{
    approximate_stationarity_profile, detailed_balance_residual, exact_posterior, forward_marginals,
    materialize_sampling_kernel, reverse_distribution, sample_reverse_trajectory, sampling_detailed_balance_probe,
    sampling_step, variational_bound_report, BoundReport, ForwardProcess, PosteriorKernel, ReversePath, ReverseSampler,
    Trajectory, TrajectorySampler, ZERO_EVIDENCE,
};
pub use error::{Error, Result};
pub use grid::{
    bin_center, gaussian_mixture_distribution, make_grid, swiss_roll_distribution, uniform_distribution, BinIndex,
    Distribution, GridSpec, MixtureComponent, SwissRoll,
};
pub use kernels::{
    bimodal_kernel, fade_kernel, gaussian_kernel, linear_schedule, stationarity_residual, NoiseFamily, Schedule,
    ScheduleFamily, StepKernels, TransitionKernel, DENSE_PRODUCT_GUARD,
};
pub use metrics::{
    consecutive_divergences, inversion_complexity, kl_divergence, reconstruction_error, total_variation, MetricOptions,
};
pub use scalar::Scalar;
pub use serial::{
    empirical_distribution, run_chain, serial_kernel, serial_step, ChainTrace, SerialChain, SerialChainConfig,
    StartState,
};

pub type GridSpecF64 = GridSpec<f64>;
pub type GridSpecF32 = GridSpec<f32>;
pub type DistributionF64 = Distribution<f64>;
pub type DistributionF32 = Distribution<f32>;
pub type TransitionKernelF64 = TransitionKernel<f64>;
pub type TransitionKernelF32 = TransitionKernel<f32>;
pub type ForwardProcessF64 = ForwardProcess<f64>;
pub type ForwardProcessF32 = ForwardProcess<f32>;
pub type SerialChainConfigF64 = SerialChainConfig<f64>;
pub type SerialChainConfigF32 = SerialChainConfig<f32>;
