//! Model-free superhedging bounds for options on the running maximum.
//!
//! Given call prices at `n` maturities, the crate computes the cheapest
//! semi-static superhedge of a payoff `φ(max X)`, builds the hedge itself and
//! checks it against simulated paths of the iterated Azéma-Yor embedding.

// `!(a < b)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod embedding;
pub mod error;
pub mod fixtures;
pub mod hedge;
pub mod marginals;
pub mod pricer;
pub mod single_marginal;

pub use boundary::{
    build_profile, objective, solve_boundary, BoundaryPoint, BoundaryProfile, BoundarySolver, GridSpec,
};
pub use embedding::{iterated_stop, marginal_fit, mc_lookback, superhedge_equality, SimConfig, StoppedSample};
pub use error::{Error, Result};
pub use hedge::{check_trajectorial, evaluate_portfolio, Holdings, PathSkeleton, SemiStaticHedge};
pub use marginals::{CallQuoteGrid, ConvexOrderReport, MarginalCurve, MarginalSystem, Tolerances};
pub use pricer::{price_digital, price_lookback, PayoffSpec, PriceReport};
pub use single_marginal::{assumption_diagnostics, lambda_star, value_one_marginal, BuiltinPayoff, GeneralPayoff};
