//! Consumption–investment solvers under dynamic shortfall-risk constraints.
//!
//! An investor with power utility trades a bond and one lognormal stock and
//! consumes out of wealth. At every (re)balancing time the risk of the frozen
//! strategy over a short horizon, measured as Value at Risk, tail conditional
//! expectation or expected loss relative to a benchmark, must stay below a
//! bound. The crate solves the problem in continuous time (HJB equation with
//! policy improvement) and in discrete time (dynamic programming), and
//! provides Monte Carlo oracles to check both.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod hjb;
pub mod interp;
pub mod market;
pub mod mdp;
pub mod merton;
pub mod normal;
pub mod optimize;
pub mod quadrature;
pub mod risk;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::WealthGrid;
pub use hjb::{ContinuousProblem, ContinuousSolution, GridSpec};
pub use market::{LogNormalLaw, MarketParams, PowerUtility};
pub use mdp::{DiscreteProblem, DiscreteSolution, QuadratureSpec};
pub use merton::{MertonContinuous, MertonDiscrete};
pub use risk::{
    Benchmark, Control, FeasibleSet, MertonReference, Regime, RiskBound, RiskConstraintConfig,
    RiskConvention, RiskMeasureKind, RiskModel,
};
pub use simulate::PathEnsemble;
