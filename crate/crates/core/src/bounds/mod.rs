//! Variational upper bounds on the diffusion matrix and the Mott-law fit.

mod mott_law;
mod report;
mod test_function;
mod variational;

pub use mott_law::{
    a3_rate_cap, calibrate_closed_form, check_rate_cap, closed_form_bound, fit_mott_exponent, FixedExponentFit,
    MottFit, PairSample, PrefactorFit, RateCapCheck,
};
pub use report::{trace_bound_gap, BoundReport};
pub use test_function::{gradient, ClusterTest, Evaluator, TestFunction, UserFn};
pub use variational::{
    everest_bound, everest_integrand, variational_rhs, variational_samples, variational_terms, IntegrandTerms,
};
