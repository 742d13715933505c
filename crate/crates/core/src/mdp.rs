//! Discrete-time constrained consumption-investment by dynamic programming.
//!
//! Wealth is rebalanced every `delta` years. At period `n` the investor
//! consumes the amount `eta = zeta x`, invests `phi = beta (x - eta)` in the
//! stock and keeps the rest in the bond. The homogeneous case reduces to the
//! coefficient recursion `V(t_n, x) = x^(1-gamma)/(1-gamma) d_n`; everything
//! else runs the optimality equation on a wealth grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interp_log_linear, ValueSlice, WealthGrid};
use crate::market::{discounted_net_return, discrete_return_law, MarketParams, PowerUtility};
use crate::merton::{consumption_step, merton_discrete, MertonDiscrete};
use crate::optimize::{bisect_boundary, golden_max, Maximum};
use crate::quadrature::GaussHermite;
use crate::risk::{
    FeasibleSet, MertonReference, PointRisk, Regime, RiskConstraintConfig, RiskModel,
};

/// Golden-section tolerance for `beta` and `zeta`.
pub const CONTROL_TOL: f64 = 1e-8;
/// Consumption-ceiling bisection tolerance.
const CEILING_TOL: f64 = 1e-10;
/// Lowest share of the log-wealth range exempt from the grid-floor check.
const FLOOR_EXEMPT_SHARE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub node_count: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { node_count: 64 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.node_count < 16 {
            return Err(Error::config(format!(
                "quadrature needs >= 16 nodes, got {}",
                self.node_count
            )));
        }
        Ok(())
    }
}

/// Discounted net returns `R_j` at Gauss–Hermite nodes with their weights.
#[derive(Debug, Clone)]
pub struct ReturnQuadrature {
    pub returns: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ReturnQuadrature {
    pub fn new(params: &MarketParams, delta: f64, spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let law = discrete_return_law(params, delta)?;
        let gh = GaussHermite::new(spec.node_count)?;
        Ok(ReturnQuadrature {
            returns: gh
                .nodes
                .iter()
                .map(|&z| discounted_net_return(params, delta, law.sample(z)))
                .collect(),
            weights: gh.weights,
        })
    }

    /// `E[(1 + beta R)^q]`.
    pub fn expected_power(&self, beta: f64, q: f64) -> f64 {
        self.returns
            .iter()
            .zip(&self.weights)
            .map(|(&r, &w)| w * (1.0 + beta * r).powf(q))
            .sum()
    }

    /// Optimal `beta` on `[lo, hi]`: maximizes the expectation for gamma < 1,
    /// minimizes it for gamma > 1. `value` is the unsigned expectation.
    pub fn optimize_beta(&self, lo: f64, hi: f64, utility: &PowerUtility) -> Maximum {
        let (q, s) = (utility.exponent(), utility.sign());
        let m = golden_max(|b| s * self.expected_power(b, q), lo, hi, CONTROL_TOL);
        Maximum {
            x: m.x,
            value: s * m.value,
        }
    }
}

/// `E[(1 + beta (exp(-r delta) R~ - 1))^(1-gamma)]` by Gauss–Hermite quadrature.
pub fn expected_power_return(
    beta: f64,
    gamma: f64,
    delta: f64,
    params: &MarketParams,
    quad: QuadratureSpec,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(ReturnQuadrature::new(params, delta, quad)?.expected_power(beta, 1.0 - gamma))
}

/// A discrete-time problem: market, preferences, horizon `periods * delta`
/// and an optional risk constraint measured over one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteProblem {
    pub market: MarketParams,
    pub utility: PowerUtility,
    pub periods: usize,
    pub delta: f64,
    pub constraint: Option<RiskConstraintConfig>,
    pub quadrature: QuadratureSpec,
}

impl DiscreteProblem {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.quadrature.validate()?;
        if self.periods == 0 {
            return Err(Error::config("discrete problem needs at least one period"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!(
                "period length must be > 0, got {}",
                self.delta
            )));
        }
        if let Some(cfg) = &self.constraint {
            cfg.validate()?;
            if (cfg.delta - self.delta).abs() > 1e-12 * self.delta {
                return Err(Error::config(format!(
                    "risk horizon {} must equal the rebalancing period {} in discrete time",
                    cfg.delta, self.delta
                )));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.periods as f64 * self.delta
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.delta
    }
}

/// Value and policy representation of a discrete solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DiscreteSurface {
    /// Wealth-independent policy with value coefficients `d_0..d_N`.
    Separable {
        d: Vec<f64>,
        beta: Vec<f64>,
        zeta: Vec<f64>,
    },
    /// Node values `value[n][i]` for `n = 0..=N`, policies for `n < N`.
    Grid {
        grid: WealthGrid,
        value: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
        zeta: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSolution {
    pub problem: DiscreteProblem,
    pub surface: DiscreteSurface,
    /// Unconstrained reference, also backing the Merton benchmark.
    pub merton: MertonDiscrete,
}

impl DiscreteSolution {
    pub fn periods(&self) -> usize {
        self.problem.periods
    }

    pub fn value(&self, n: usize, x: f64) -> Result<f64> {
        match &self.surface {
            DiscreteSurface::Separable { d, .. } => Ok(self.problem.utility.separable(x, d[n])),
            DiscreteSurface::Grid { grid, value, .. } => {
                Ok(ValueSlice::new(grid, &value[n], self.problem.utility.exponent())?.eval(x))
            }
        }
    }

    /// `(beta, zeta)` at period `n < N`; grid policies interpolate linearly in
    /// `ln x` and clamp at the grid ends.
    pub fn policy(&self, n: usize, x: f64) -> (f64, f64) {
        match &self.surface {
            DiscreteSurface::Separable { beta, zeta, .. } => (beta[n], zeta[n]),
            DiscreteSurface::Grid {
                grid, beta, zeta, ..
            } => (
                interp_log_linear(grid, &beta[n], x),
                interp_log_linear(grid, &zeta[n], x),
            ),
        }
    }

    /// Value coefficients of a separable solution.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.surface {
            DiscreteSurface::Separable { d, .. } => Some(d),
            DiscreteSurface::Grid { .. } => None,
        }
    }

    pub fn merton_reference(&self) -> MertonReference {
        MertonReference::Discrete(self.merton.clone())
    }
}

/// Largest consumption fraction with a nonempty feasible exposure set.
/// Nonemptiness is monotone in consumption because consumed wealth only adds
/// to the loss.
fn consumption_ceiling(pr: &PointRisk<'_, '_>, t: f64, x: f64) -> Result<f64> {
    if pr.feasible_interval(0.0)?.is_empty() {
        return Err(Error::infeasible(
            t,
            x,
            "no feasible stock fraction even without consumption",
        ));
    }
    if !pr.feasible_interval(1.0)?.is_empty() {
        return Ok(1.0);
    }
    let mut err = None;
    let z = bisect_boundary(
        |z| match pr.feasible_interval(z) {
            Ok(s) => !s.is_empty(),
            Err(e) => {
                err.get_or_insert(e);
                false
            }
        },
        0.0,
        1.0,
        CEILING_TOL,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(z),
    }
}

fn exposure_set(pr: Option<&PointRisk<'_, '_>>, zeta: f64) -> Result<FeasibleSet> {
    match pr {
        Some(p) => p.feasible_interval(zeta),
        None => Ok(FeasibleSet::Interval { lo: 0.0, hi: 1.0 }),
    }
}

/// Coefficient recursion for homogeneous configurations.
pub fn solve_relative(problem: &DiscreteProblem) -> Result<DiscreteSolution> {
    problem.validate()?;
    let u = problem.utility;
    let merton = merton_discrete(
        &problem.market,
        &u,
        problem.periods,
        problem.delta,
        problem.quadrature,
    )?;
    let mref = MertonReference::Discrete(merton.clone());
    let model = match &problem.constraint {
        Some(cfg) => {
            if !cfg.is_homogeneous() {
                return Err(Error::config(
                    "benchmark or bound is not proportional to wealth; use the general grid solver",
                ));
            }
            let m = RiskModel::new(&problem.market, cfg, Some(&mref))?;
            check_homogeneity(&m)?;
            Some(m)
        }
        None => None,
    };
    let rq = ReturnQuadrature::new(&problem.market, problem.delta, problem.quadrature)?;
    let (q, sign) = (u.exponent(), u.sign());
    let growth = (problem.market.r * problem.delta * q).exp();
    let n_per = problem.periods;
    let mut d = vec![1.0; n_per + 1];
    let mut beta = vec![0.0; n_per];
    let mut zeta = vec![0.0; n_per];
    for n in (0..n_per).rev() {
        let t = problem.time(n);
        let pr = model
            .as_ref()
            .map(|m| m.at(t, 1.0, Regime::Discrete))
            .transpose()?;
        let inner = |z: f64| -> Result<Option<Maximum>> {
            Ok(exposure_set(pr.as_ref(), z)?
                .bounds()
                .map(|(lo, hi)| rq.optimize_beta(lo, hi, &u)))
        };
        let z_hi = match &pr {
            Some(p) if u.consumes() => consumption_ceiling(p, t, 1.0)?,
            Some(p) => {
                if p.feasible_interval(0.0)?.is_empty() {
                    return Err(Error::infeasible(t, 1.0, "no feasible stock fraction"));
                }
                0.0
            }
            None => {
                if u.consumes() {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let dn = d[n + 1];
        let objective = |z: f64| -> Result<(f64, f64)> {
            let Some(m) = inner(z)? else {
                return Ok((f64::NEG_INFINITY, 0.0));
            };
            let cont = (1.0 - z).powf(q) * growth * m.value * dn;
            let own = if u.consumes() { z.powf(q) } else { 0.0 };
            Ok((sign * (own + cont), m.x))
        };
        let mut err = None;
        let best = golden_max(
            |z| match objective(z) {
                Ok(v) => v.0,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            0.0,
            z_hi,
            CONTROL_TOL,
        );
        if let Some(e) = err {
            return Err(e);
        }
        let (mut z, (mut val, mut b)) = (best.x, objective(best.x)?);
        if !val.is_finite() {
            return Err(Error::infeasible(t, 1.0, "no feasible control"));
        }
        // Golden-section resolves a flat maximum only to about sqrt(eps);
        // the first-order condition at the located inner value is sharper.
        if u.consumes() {
            if let Some(m) = inner(z)? {
                let (zc, _) = consumption_step(growth * m.value * dn, u.gamma());
                if zc <= z_hi {
                    let (vc, bc) = objective(zc)?;
                    if vc >= val - 4.0 * f64::EPSILON * val.abs() {
                        (z, val, b) = (zc, vc, bc);
                    }
                }
            }
        }
        d[n] = sign * val;
        beta[n] = b;
        zeta[n] = z;
    }
    Ok(DiscreteSolution {
        problem: problem.clone(),
        surface: DiscreteSurface::Separable { d, beta, zeta },
        merton,
    })
}

/// Compares feasible sets at two wealth levels.
fn check_homogeneity(m: &RiskModel<'_>) -> Result<()> {
    for z in [0.0, 0.5] {
        let a = m.feasible_interval(0.0, 1.0, z, Regime::Discrete)?;
        let b = m.feasible_interval(0.0, 2.0, z, Regime::Discrete)?;
        let same = match (a.bounds(), b.bounds()) {
            (None, None) => true,
            (Some(p), Some(q)) => (p.0 - q.0).abs() <= 1e-8 && (p.1 - q.1).abs() <= 1e-8,
            _ => false,
        };
        if !same {
            return Err(Error::config(
                "feasible set depends on wealth; use the general grid solver",
            ));
        }
    }
    Ok(())
}

/// Optimality-equation recursion on a wealth grid.
pub fn solve_general(problem: &DiscreteProblem, grid: &WealthGrid) -> Result<DiscreteSolution> {
    problem.validate()?;
    grid.validate()?;
    let u = problem.utility;
    let merton = merton_discrete(
        &problem.market,
        &u,
        problem.periods,
        problem.delta,
        problem.quadrature,
    )?;
    let mref = MertonReference::Discrete(merton.clone());
    let model = problem
        .constraint
        .as_ref()
        .map(|cfg| RiskModel::new(&problem.market, cfg, Some(&mref)))
        .transpose()?;
    let rq = ReturnQuadrature::new(&problem.market, problem.delta, problem.quadrature)?;
    let q = u.exponent();
    let xs = grid.points();
    let growth = (problem.market.r * problem.delta).exp();
    let exempt_below = grid.x_min * (grid.x_max / grid.x_min).powf(FLOOR_EXEMPT_SHARE);
    let n_per = problem.periods;

    let mut value = vec![Vec::new(); n_per + 1];
    value[n_per] = xs.iter().map(|&x| u.eval(x)).collect();
    let mut beta = vec![Vec::new(); n_per];
    let mut zeta = vec![Vec::new(); n_per];
    for n in (0..n_per).rev() {
        let t = problem.time(n);
        let next = ValueSlice::new(grid, &value[n + 1], q)?;
        let continuation = |w: f64, b: f64| -> f64 {
            rq.returns
                .iter()
                .zip(&rq.weights)
                .map(|(&r, &wt)| wt * next.eval(w * (1.0 + b * r)))
                .sum()
        };
        let rows: Vec<(f64, f64, f64)> = xs
            .par_iter()
            .map(|&x| -> Result<(f64, f64, f64)> {
                let pr = model.as_ref().map(|m| m.at(t, x, Regime::Discrete)).transpose()?;
                let z_hi = match &pr {
                    Some(p) if u.consumes() => consumption_ceiling(p, t, x)?,
                    Some(p) => {
                        if p.feasible_interval(0.0)?.is_empty() {
                            return Err(Error::infeasible(t, x, "no feasible stock fraction"));
                        }
                        0.0
                    }
                    None => {
                        if u.consumes() {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                let node = |z: f64| -> Result<Option<(f64, f64)>> {
                    let Some((lo, hi)) = exposure_set(pr.as_ref(), z)?.bounds() else {
                        return Ok(None);
                    };
                    let w = growth * x * (1.0 - z);
                    let m = golden_max(|b| continuation(w, b), lo, hi, CONTROL_TOL);
                    Ok(Some((u.consumption_utility(z * x) + m.value, m.x)))
                };
                let mut err = None;
                let best = golden_max(
                    |z| match node(z) {
                        Ok(Some((v, _))) => v,
                        Ok(None) => f64::NEG_INFINITY,
                        Err(e) => {
                            err.get_or_insert(e);
                            f64::NEG_INFINITY
                        }
                    },
                    0.0,
                    z_hi,
                    CONTROL_TOL,
                );
                if let Some(e) = err {
                    return Err(e);
                }
                let Some((v, b)) = node(best.x)? else {
                    return Err(Error::infeasible(t, x, "no feasible control"));
                };
                if x >= exempt_below {
                    let w = growth * x * (1.0 - best.x);
                    let mass: f64 = rq
                        .returns
                        .iter()
                        .zip(&rq.weights)
                        .filter(|(&r, _)| w * (1.0 + b * r) < grid.x_min)
                        .map(|(_, &wt)| wt)
                        .sum();
                    if mass > 1e-8 {
                        return Err(Error::GridDomain(format!(
                            "probability {mass:.3e} of leaving the grid below x_min = {} from x = {x} at t = {t}; lower x_min",
                            grid.x_min
                        )));
                    }
                }
                Ok((v, b, best.x))
            })
            .collect::<Result<_>>()?;
        value[n] = rows.iter().map(|r| r.0).collect();
        beta[n] = rows.iter().map(|r| r.1).collect();
        zeta[n] = rows.iter().map(|r| r.2).collect();
    }
    Ok(DiscreteSolution {
        problem: problem.clone(),
        surface: DiscreteSurface::Grid {
            grid: *grid,
            value,
            beta,
            zeta,
        },
        merton,
    })
}
