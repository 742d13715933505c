//! One-asset Black–Scholes market, power utility and one-period wealth laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Riskless rate, stock drift and stock volatility, all per year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl MarketParams {
    /// Validated constructor; solvers need `sigma > 0` and `r >= 0`.
    pub fn new(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        let p = MarketParams { r, mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn baseline() -> Self {
        MarketParams {
            r: 0.1,
            mu: 0.18,
            sigma: 0.35,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::domain(format!(
                "interest rate must be finite and >= 0, got {}",
                self.r
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::domain(format!(
                "drift must be finite, got {}",
                self.mu
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::domain(format!(
                "volatility must be finite and > 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn excess_return(&self) -> f64 {
        self.mu - self.r
    }
}

/// Power utility `x^(1-gamma) / (1-gamma)` for terminal wealth and, unless
/// disabled, for consumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerUtility {
    gamma: f64,
    consumption: bool,
}

impl PowerUtility {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) || (gamma - 1.0).abs() < 1e-12 {
            return Err(Error::domain(format!(
                "risk aversion must be > 0 and != 1, got {gamma}"
            )));
        }
        Ok(PowerUtility {
            gamma,
            consumption: true,
        })
    }

    /// Utility of terminal wealth only; consumption is fixed at zero.
    pub fn terminal_only(gamma: f64) -> Result<Self> {
        Ok(PowerUtility {
            consumption: false,
            ..Self::new(gamma)?
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn consumes(&self) -> bool {
        self.consumption
    }

    /// `1 - gamma`.
    pub fn exponent(&self) -> f64 {
        1.0 - self.gamma
    }

    /// `+1` for gamma < 1, `-1` for gamma > 1. Multiplying value coefficients
    /// by this sign turns every supremum into a maximization of a
    /// positive-homogeneous quantity.
    pub fn sign(&self) -> f64 {
        if self.gamma < 1.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let q = self.exponent();
        x.powf(q) / q
    }

    /// Running utility of a consumption amount (or rate times wealth).
    pub fn consumption_utility(&self, amount: f64) -> f64 {
        if self.consumption {
            self.eval(amount)
        } else {
            0.0
        }
    }

    /// Value of the separable form `x^(1-gamma)/(1-gamma) * coeff`.
    pub fn separable(&self, x: f64, coeff: f64) -> f64 {
        self.eval(x) * coeff
    }
}

/// Law of `exp(N(m, s2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalLaw {
    pub m: f64,
    pub s2: f64,
}

impl LogNormalLaw {
    pub fn new(m: f64, s2: f64) -> Result<Self> {
        if !m.is_finite() || !(s2.is_finite() && s2 >= 0.0) {
            return Err(Error::domain(format!(
                "invalid lognormal parameters m = {m}, s2 = {s2}"
            )));
        }
        Ok(LogNormalLaw { m, s2 })
    }

    pub fn sd(&self) -> f64 {
        self.s2.sqrt()
    }

    pub fn mean(&self) -> f64 {
        (self.m + 0.5 * self.s2).exp()
    }

    pub fn variance(&self) -> f64 {
        self.s2.exp_m1() * (2.0 * self.m + self.s2).exp()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if self.s2 == 0.0 {
            return self.m.exp();
        }
        (self.m + self.sd() * normal::inv_cdf(p)).exp()
    }

    /// Transforms a standard normal draw into a draw of this law.
    pub fn sample(&self, z: f64) -> f64 {
        (self.m + self.sd() * z).exp()
    }
}

/// Law of wealth after `dt` when proportion `pi` and consumption rate `c` are
/// held fixed from wealth `x`.
///
/// Volatility may be zero here (point mass) even though solvers require
/// `sigma > 0`.
pub fn conditional_wealth_law(
    x: f64,
    pi: f64,
    c: f64,
    dt: f64,
    params: &MarketParams,
) -> Result<LogNormalLaw> {
    if !(x > 0.0) || !(dt > 0.0) || !(c >= 0.0) {
        return Err(Error::domain(format!(
            "conditional wealth law needs x > 0, dt > 0, c >= 0 (x = {x}, dt = {dt}, c = {c})"
        )));
    }
    let var = pi * pi * params.sigma * params.sigma;
    LogNormalLaw::new(
        x.ln() + (params.r + pi * (params.mu - params.r) - c - 0.5 * var) * dt,
        var * dt,
    )
}

/// Exact wealth step under a frozen proportion and consumption rate.
pub fn wealth_step_exact(x: f64, pi: f64, c: f64, dt: f64, dw: f64, params: &MarketParams) -> f64 {
    debug_assert!(x > 0.0 && dt > 0.0);
    let sp = pi * params.sigma;
    x * ((params.r + pi * (params.mu - params.r) - c - 0.5 * sp * sp) * dt + sp * dw).exp()
}

/// Law of the gross stock price relative over `dt`.
pub fn discrete_return_law(params: &MarketParams, dt: f64) -> Result<LogNormalLaw> {
    if !(dt > 0.0) {
        return Err(Error::domain(format!(
            "return horizon must be > 0, got {dt}"
        )));
    }
    let s2 = params.sigma * params.sigma;
    LogNormalLaw::new((params.mu - 0.5 * s2) * dt, s2 * dt)
}

/// Discounted net return `exp(-r dt) * gross - 1`.
pub fn discounted_net_return(params: &MarketParams, dt: f64, gross: f64) -> f64 {
    (-params.r * dt).exp() * gross - 1.0
}
