//! Shared fixtures for the criterion benches.

use dynrisk_core::{
    Benchmark, MarketParams, PowerUtility, RiskBound, RiskConstraintConfig, RiskMeasureKind,
};

pub fn baseline_market() -> MarketParams {
    MarketParams::baseline()
}

pub fn baseline_utility() -> PowerUtility {
    PowerUtility::new(0.3).expect("valid risk aversion")
}

/// VaR at 1% against the Merton benchmark with bound `lambda * x`.
pub fn var_relative(lambda: f64, delta: f64) -> RiskConstraintConfig {
    RiskConstraintConfig::new(
        RiskMeasureKind::VaR(0.01),
        Benchmark::MertonConditionalExpectation,
        RiskBound::Relative(lambda),
        delta,
    )
    .expect("valid constraint")
}
