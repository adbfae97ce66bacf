//! Nested pseudo-likelihood estimation, sandwich covariance and selection of
//! the cost switch point.

mod likelihood;
mod npl;
mod optimizer;
mod select;
mod variance;

pub use likelihood::{pseudo_loglik, LikEval, PseudoLikelihood, PROB_FLOOR};
pub use npl::{
    initial_theta, npl_estimate, npl_estimate_from, FitResult, NplSettings, NplStep, SpacingCheck,
    U0Policy,
};
pub use optimizer::{maximize, InnerMethod, InnerResult, InnerSettings};
pub use select::{select_cost_switch, switch_supported, Selection, SwitchRow};
pub use variance::{
    belief_derivative, map_jacobian_theta, map_jacobian_u, npl_variance, npl_variance_at,
    sandwich_parts, VarianceResult,
};
