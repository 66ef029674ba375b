//! Hopping rates and the continuous-time random walk.

mod index;
mod kmc;
mod msd;
mod rates;

pub use index::NeighborIndex;
pub use kmc::{
    simulate, simulate_sampled, simulate_with, Engine, Observer, SampledWalk, Trajectory, PRUNE_RELATIVE,
};
pub use msd::{
    estimate_diffusion, msd, msd_grouped, per_environment_slopes, quadratic_form_estimate, slope_weights,
    trajectory_csv, DiffusionEstimate, MsdRow, MsdTable,
};
pub use rates::{
    escape_rate, escape_rate_report, jump_distribution, rate, EnergyCost, EscapeRate, RateModel, RateParams,
    DEFAULT_R_CUT,
};
