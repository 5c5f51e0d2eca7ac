//! Solver library for the creator / platform / GenAI revenue-sharing game.
//!
//! Creators choose a content quality and how much of it to share with the
//! platform's GenAI model. The platform returns a fraction `rho` of the GenAI
//! revenue to sharing creators. The crate computes enforced-sharing equilibria,
//! checks whether full sharing is stable, searches for the revenue-maximizing
//! `rho`, and runs the parameter sweeps used in the experiments.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod best_response;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod model;
pub mod optimizer;
pub mod search;
pub mod stability;

pub use best_response::{
    best_quality_given_sharing, deviation_gain, optimal_sharing, sharing_threshold, DeviationResult,
};
pub use equilibrium::{
    compute_x_max, compute_x_min, creator_x_max, homogeneous_closed_form, solve_ese_btes, solve_ese_dynamics_beta,
    solve_ese_foc, solve_ese_mamd, BoundsLedger, DynamicsOptions, EseMethod, EseOptions, EseResult, MamdOptions,
};
pub use error::{Error, Result};
pub use model::{
    allocation_shares, creator_utility, full_sharing_creator_utility, genai_quality, platform_revenue, traffic,
    AllocationRule, CostModel, CostShape, CustomCost, GameInstance, ModelParams, Profile, Rivals, RuleKind,
    TrafficMode,
};
pub use optimizer::{
    closed_form_rho, evaluate_objective, optimize_rho, theoretical_constants, verify_approx_guarantee, Objective,
    OptimizerConfig, OptimizerResult,
};
pub use search::SearchOptions;
pub use stability::{check_fse, check_fse_sufficient_condition, min_stable_rho, FseReport, RhoScan};
