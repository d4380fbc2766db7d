//! Super-hedging of American claims under proportional transaction costs
//! on finite event trees.
//!
//! The primal side ([`superhedge_price`]) minimizes the initial amount of
//! asset 1 from which a self-financing strategy dominates the claim at every
//! node in the solvency-cone order. The dual side ([`dual_price`]) maximizes
//! over consistent dual processes and agrees with the primal exactly in
//! rational mode. [`theta_price`] computes the smaller stopping-time price,
//! and the [`randomization`] module converts dual processes into
//! node-measures and randomized stopping times for two-asset markets.
//!
//! ```
//! use amerhedge::{superhedge_price, theta_price, Claim, ConeProcess, EventTree, LpOptions, MarketSpec, Rational, Scalar};
//!
//! let q = |n, d| Rational::ratio(n, d);
//! let tree = EventTree::deterministic(1);
//! let cones = ConeProcess::from_markets(&tree, |n| {
//!     let ask = if n == 0 { q(1, 10) } else { q(1, 2) };
//!     MarketSpec::bid_ask(q(1, 1), ask, q(1, 10))
//! })
//! .unwrap();
//! let claim = Claim::new(&tree, vec![vec![q(11, 10), q(0, 1)], vec![q(0, 1), q(1, 1)]]).unwrap();
//! let opts = LpOptions::default();
//! assert_eq!(superhedge_price(&tree, &cones, &claim, &opts).unwrap().value, q(37, 30));
//! assert_eq!(theta_price(&tree, &cones, &claim, 100, &opts).unwrap().value, q(11, 10));
//! ```

pub mod cones;
pub mod dual;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod primal;
pub mod randomization;
pub mod scalar;
pub mod tree;

use thiserror::Error;

pub use cones::{
    cone_contains, cone_from_market, constitution_value, lineality_basis, polar_constraints, tighten_costs,
    tighten_rates, ConeError, ConeProcess, MarketSpec, PolarCone, SolvencyCone,
};
pub use dual::{
    build_counterexample_claim, check_counterexample_conditions, check_null_strategy_property, dual_price,
    duality_gap_report, is_consistent_dual, strictly_positive_cps, theta_price, CounterexampleConditions,
    DualProcess, DualResult, GapReport, MartingaleCps, NaCertificate, NullStrategyReport, NullViolation,
    ThetaResult,
};
pub use io::{load_claim, load_market, ClaimFile, IoError, LoadOptions, Market, MarketFile, PriceReport};
pub use lp::{solve_lp, LpError, LpOptions, LpOutcome, LpProblem, PivotRule};
pub use primal::{
    european_price, extract_exchanges, gamma_contains, superhedge_price, superhedge_price_along, Claim,
    Exchanges, HedgeResult, PricingError, TransferPlan,
};
pub use randomization::{
    check_node_measure, check_randomized, node_measure_to_randomized, node_measure_to_z, node_measure_value,
    randomized_to_node_measure, randomized_value, z_to_node_measure, ConversionError, NodeMeasure,
    RandomizedStop, TwoAssetMarket,
};
pub use scalar::{Mode, Rational, Scalar};
pub use tree::{
    count_stopping_times, enumerate_stopping_times, EventTree, StoppingTime, TreeError, DEFAULT_STOPPING_TIME_CAP,
};

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
    #[error(transparent)]
    Io(#[from] IoError),
}
