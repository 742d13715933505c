//! Benchmarks, closed-form dynamic risk measures, feasibility and the Monte
//! Carlo risk oracle.
//!
//! Losses are `L = Y - X_{t+Delta}` with the strategy frozen over the
//! measurement horizon. In continuous time the frozen quantity is the
//! proportion `pi` (wealth stays lognormal); in discrete time it is the
//! invested amount `phi` (wealth is a shifted lognormal).

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::merton::{MertonContinuous, MertonDiscrete};
use crate::normal;
use crate::optimize::{bisect_boundary, golden_min};
use crate::simulate::{par_streams, stream_rng};

/// Exposure bisection tolerance.
pub const EXPOSURE_TOL: f64 = 1e-10;
/// Default continuous exposure box half-width.
pub const PI_MAX: f64 = 10.0;
const SCAN_POINTS: usize = 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Benchmark {
    Constant(f64),
    /// `(t, y)` knots, linear in between, constant beyond the ends.
    DeterministicTable(Vec<(f64, f64)>),
    FractionOfWealth(f64),
    MertonConditionalExpectation,
}

impl Benchmark {
    pub fn validate(&self) -> Result<()> {
        match self {
            Benchmark::Constant(y) if !(y.is_finite() && *y >= 0.0) => Err(Error::config(format!(
                "constant benchmark must be >= 0, got {y}"
            ))),
            Benchmark::FractionOfWealth(p) if !(p.is_finite() && *p > 0.0) => Err(Error::config(
                format!("benchmark fraction must be > 0, got {p}"),
            )),
            Benchmark::DeterministicTable(knots) => {
                if knots.is_empty() {
                    return Err(Error::config("benchmark table is empty"));
                }
                if knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return Err(Error::config(
                        "benchmark table times must be strictly increasing",
                    ));
                }
                if knots
                    .iter()
                    .any(|&(t, y)| !t.is_finite() || !(y.is_finite() && y >= 0.0))
                {
                    return Err(Error::config(
                        "benchmark table values must be finite and >= 0",
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Scales linearly with wealth.
    pub fn is_homogeneous(&self) -> bool {
        matches!(
            self,
            Benchmark::FractionOfWealth(_) | Benchmark::MertonConditionalExpectation
        )
    }

    fn table_value(knots: &[(f64, f64)], t: f64) -> f64 {
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if t <= first.0 {
            return first.1;
        }
        if t >= last.0 {
            return last.1;
        }
        let i = knots.partition_point(|k| k.0 <= t) - 1;
        let (t0, y0) = knots[i];
        let (t1, y1) = knots[i + 1];
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RiskMeasureKind {
    VaR(f64),
    Tce(f64),
    El,
}

impl RiskMeasureKind {
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            RiskMeasureKind::VaR(a) | RiskMeasureKind::Tce(a) => Some(a),
            RiskMeasureKind::El => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.alpha() {
            Some(a) if !(a > 0.0 && a < 1.0) => Err(Error::config(format!(
                "confidence level must lie in (0, 1), got {a}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RiskMeasureKind::VaR(_) => "var",
            RiskMeasureKind::Tce(_) => "tce",
            RiskMeasureKind::El => "el",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RiskBound {
    Relative(f64),
    Absolute(f64),
}

impl RiskBound {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            RiskBound::Relative(l) => l * x,
            RiskBound::Absolute(e) => e,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            RiskBound::Relative(v) | RiskBound::Absolute(v) => v,
        };
        if !(v >= 0.0) {
            return Err(Error::config(format!(
                "risk bound level must be >= 0, got {v}"
            )));
        }
        Ok(())
    }
}

/// What is held fixed over the measurement horizon in continuous time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RiskConvention {
    /// Proportion of wealth in the stock and consumption rate are frozen.
    #[default]
    FrozenProportions,
    /// Number of shares is frozen: the continuous investor is measured with
    /// the discrete formulas, `phi = pi x`, `eta = c x Delta`.
    FrozenShares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConstraintConfig {
    pub kind: RiskMeasureKind,
    pub benchmark: Benchmark,
    pub bound: RiskBound,
    pub delta: f64,
    #[serde(default)]
    pub convention: RiskConvention,
}

impl RiskConstraintConfig {
    pub fn new(
        kind: RiskMeasureKind,
        benchmark: Benchmark,
        bound: RiskBound,
        delta: f64,
    ) -> Result<Self> {
        let cfg = RiskConstraintConfig {
            kind,
            benchmark,
            bound,
            delta,
            convention: RiskConvention::FrozenProportions,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_convention(mut self, convention: RiskConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn with_bound(mut self, bound: RiskBound) -> Self {
        self.bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.benchmark.validate()?;
        self.bound.validate()?;
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!(
                "risk horizon must be > 0, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Benchmark and bound both scale linearly in wealth.
    pub fn is_homogeneous(&self) -> bool {
        self.benchmark.is_homogeneous() && matches!(self.bound, RiskBound::Relative(_))
    }
}

/// Merton data backing the `MertonConditionalExpectation` benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MertonReference {
    Continuous(MertonContinuous),
    Discrete(MertonDiscrete),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Control {
    /// Stock proportion and consumption rate.
    Continuous { pi: f64, c: f64 },
    /// Invested amount and consumed amount.
    Discrete { phi: f64, eta: f64 },
}

/// Feasible stock exposures at a fixed consumption level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeasibleSet {
    Empty,
    Interval { lo: f64, hi: f64 },
}

impl FeasibleSet {
    pub fn is_empty(&self) -> bool {
        matches!(self, FeasibleSet::Empty)
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            FeasibleSet::Empty => None,
            FeasibleSet::Interval { lo, hi } => Some((lo, hi)),
        }
    }

    pub fn clamp(&self, e: f64) -> Option<f64> {
        self.bounds().map(|(lo, hi)| e.clamp(lo, hi))
    }
}

/// Continuous-time risk of proportion `pi` and rate `c` for benchmark `y`.
pub fn continuous_risk(
    kind: RiskMeasureKind,
    x: f64,
    y: f64,
    pi: f64,
    c: f64,
    delta: f64,
    params: &MarketParams,
) -> f64 {
    let s = pi.abs() * params.sigma * delta.sqrt();
    let b = (params.r + pi * (params.mu - params.r) - c) * delta;
    match kind {
        RiskMeasureKind::VaR(alpha) => y - x * (b - 0.5 * s * s + normal::inv_cdf(alpha) * s).exp(),
        RiskMeasureKind::Tce(alpha) => {
            y - x / alpha * b.exp() * normal::cdf(normal::inv_cdf(alpha) - s)
        }
        RiskMeasureKind::El => continuous_el(x, y, b, s),
    }
}

fn continuous_el(x: f64, y: f64, b: f64, s: f64) -> f64 {
    if s == 0.0 || y <= 0.0 {
        return (y - x * b.exp()).max(0.0);
    }
    let d1 = ((y / x).ln() - b + 0.5 * s * s) / s;
    (y * normal::cdf(d1) - x * b.exp() * normal::cdf(d1 - s)).max(0.0)
}

/// Discrete-time risk of investing `phi` and consuming `eta` from wealth `x`.
pub fn discrete_risk(
    kind: RiskMeasureKind,
    x: f64,
    y: f64,
    phi: f64,
    eta: f64,
    delta: f64,
    params: &MarketParams,
) -> f64 {
    let base = (params.r * delta).exp() * (x - eta - phi);
    let s = params.sigma * delta.sqrt();
    let m = (params.mu - 0.5 * params.sigma * params.sigma) * delta;
    match kind {
        RiskMeasureKind::VaR(alpha) => y - base - phi * (m + normal::inv_cdf(alpha) * s).exp(),
        RiskMeasureKind::Tce(alpha) => {
            y - base
                - phi / alpha * (params.mu * delta).exp() * normal::cdf(normal::inv_cdf(alpha) - s)
        }
        RiskMeasureKind::El => discrete_el(y - base, phi, m, s, (params.mu * delta).exp()),
    }
}

fn discrete_el(k: f64, phi: f64, m: f64, s: f64, mean_gross: f64) -> f64 {
    if phi == 0.0 {
        return k.max(0.0);
    }
    if k <= 0.0 {
        return 0.0;
    }
    let d1 = ((k / phi).ln() - m) / s;
    (k * normal::cdf(d1) - phi * mean_gross * normal::cdf(d1 - s)).max(0.0)
}

/// Precomputed constants for fast repeated risk evaluation.
#[derive(Debug, Clone, Copy)]
struct Constants {
    z: f64,
    alpha: f64,
    sqrt_dt: f64,
    growth_r: f64,
    growth_mu: f64,
    disc_m: f64,
    disc_s: f64,
    /// `exp(m + z s)` for the discrete VaR.
    var_quantile: f64,
    /// `exp(mu dt) Phi(z - s) / alpha` for the discrete TCE.
    tce_tail: f64,
}

/// Risk constraint bound to market parameters and, when needed, Merton data.
#[derive(Debug, Clone)]
pub struct RiskModel<'a> {
    pub market: MarketParams,
    pub cfg: &'a RiskConstraintConfig,
    merton: Option<&'a MertonReference>,
    exposure_box: (f64, f64),
    k: Constants,
}

impl<'a> RiskModel<'a> {
    pub fn new(
        market: &MarketParams,
        cfg: &'a RiskConstraintConfig,
        merton: Option<&'a MertonReference>,
    ) -> Result<Self> {
        market.validate()?;
        cfg.validate()?;
        if matches!(cfg.benchmark, Benchmark::MertonConditionalExpectation) && merton.is_none() {
            return Err(Error::config(
                "Merton benchmark requires Merton reference data",
            ));
        }
        let alpha = cfg.kind.alpha().unwrap_or(0.5);
        let z = normal::inv_cdf(alpha);
        let dt = cfg.delta;
        let disc_s = market.sigma * dt.sqrt();
        let disc_m = (market.mu - 0.5 * market.sigma * market.sigma) * dt;
        let growth_mu = (market.mu * dt).exp();
        let k = Constants {
            z,
            alpha,
            sqrt_dt: dt.sqrt(),
            growth_r: (market.r * dt).exp(),
            growth_mu,
            disc_m,
            disc_s,
            var_quantile: (disc_m + z * disc_s).exp(),
            tce_tail: growth_mu * normal::cdf(z - disc_s) / alpha,
        };
        let exposure_box = match cfg.convention {
            RiskConvention::FrozenProportions => (-PI_MAX, PI_MAX),
            RiskConvention::FrozenShares => (0.0, PI_MAX),
        };
        Ok(RiskModel {
            market: *market,
            cfg,
            merton,
            exposure_box,
            k,
        })
    }

    /// Restricts the continuous exposure search box.
    pub fn with_exposure_box(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!("invalid exposure box [{lo}, {hi}]")));
        }
        if self.cfg.convention == RiskConvention::FrozenShares && lo < 0.0 {
            return Err(Error::config(
                "frozen-shares risk needs a nonnegative exposure box",
            ));
        }
        self.exposure_box = (lo, hi);
        Ok(self)
    }

    pub fn exposure_box(&self, regime: Regime) -> (f64, f64) {
        match regime {
            Regime::Continuous => self.exposure_box,
            Regime::Discrete => (0.0, 1.0),
        }
    }

    pub fn delta(&self) -> f64 {
        self.cfg.delta
    }

    pub fn bound(&self, x: f64) -> f64 {
        self.cfg.bound.eval(x)
    }

    pub fn benchmark_value(&self, t: f64, x: f64, regime: Regime) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("benchmark needs x > 0, got {x}")));
        }
        let dt = self.cfg.delta;
        Ok(match &self.cfg.benchmark {
            Benchmark::Constant(y) => *y,
            Benchmark::DeterministicTable(knots) => Benchmark::table_value(knots, t),
            Benchmark::FractionOfWealth(p) => p * x,
            Benchmark::MertonConditionalExpectation => match (self.merton, regime) {
                (Some(MertonReference::Continuous(m)), _) => {
                    let c = m.consumption_rate(t);
                    match (regime, self.cfg.convention) {
                        (Regime::Continuous, RiskConvention::FrozenProportions) => {
                            x * ((self.market.r + m.pi_m * self.market.excess_return() - c) * dt)
                                .exp()
                        }
                        _ => {
                            let phi = m.pi_m * x;
                            let eta = c * x * dt;
                            self.k.growth_r * (x - eta - phi) + self.k.growth_mu * phi
                        }
                    }
                }
                (Some(MertonReference::Discrete(m)), _) => {
                    let (phi, eta) = m.amounts(t, x);
                    self.k.growth_r * (x - eta - phi) + self.k.growth_mu * phi
                }
                (None, _) => {
                    return Err(Error::config(
                        "Merton benchmark requires Merton reference data",
                    ))
                }
            },
        })
    }

    /// Risk evaluator with benchmark and bound fixed at `(t, x)`.
    pub fn at(&self, t: f64, x: f64, regime: Regime) -> Result<PointRisk<'_, 'a>> {
        let y = self.benchmark_value(t, x, regime)?;
        Ok(PointRisk {
            model: self,
            regime,
            t,
            x,
            y,
            bound: self.bound(x),
        })
    }

    pub fn risk_continuous(&self, t: f64, x: f64, pi: f64, c: f64) -> Result<f64> {
        if !(c >= 0.0) {
            return Err(Error::domain(format!(
                "consumption rate must be >= 0, got {c}"
            )));
        }
        Ok(self.at(t, x, Regime::Continuous)?.continuous(pi, c))
    }

    pub fn risk_discrete(&self, t: f64, x: f64, phi: f64, eta: f64) -> Result<f64> {
        check_discrete_amounts(x, phi, eta)?;
        Ok(self.at(t, x, Regime::Discrete)?.discrete(phi, eta))
    }

    pub fn is_feasible(&self, t: f64, x: f64, control: Control) -> Result<bool> {
        Ok(match control {
            Control::Continuous { pi, c } => {
                let p = self.at(t, x, Regime::Continuous)?;
                p.continuous(pi, c) <= p.bound
            }
            Control::Discrete { phi, eta } => {
                let p = self.at(t, x, Regime::Discrete)?;
                p.discrete(phi, eta) <= p.bound
            }
        })
    }

    /// Exposures (proportion `pi` in continuous time, fraction `beta` of
    /// non-consumed wealth in discrete time) meeting the constraint at the
    /// given consumption (rate `c`, or fraction `zeta` in discrete time).
    pub fn feasible_interval(
        &self,
        t: f64,
        x: f64,
        consumption: f64,
        regime: Regime,
    ) -> Result<FeasibleSet> {
        self.at(t, x, regime)?.feasible_interval(consumption)
    }
}

fn check_discrete_amounts(x: f64, phi: f64, eta: f64) -> Result<()> {
    let slack = 1e-12 * x.abs().max(1.0);
    if !(eta >= 0.0 && eta <= x + slack && phi >= 0.0 && phi <= x - eta + slack) {
        return Err(Error::domain(format!(
            "discrete control needs 0 <= eta <= x and 0 <= phi <= x - eta (x = {x}, phi = {phi}, eta = {eta})"
        )));
    }
    Ok(())
}

/// Risk evaluation at a fixed state.
#[derive(Debug, Clone, Copy)]
pub struct PointRisk<'m, 'a> {
    model: &'m RiskModel<'a>,
    regime: Regime,
    pub t: f64,
    pub x: f64,
    /// Benchmark value.
    pub y: f64,
    /// Constraint bound.
    pub bound: f64,
}

impl PointRisk<'_, '_> {
    pub fn continuous(&self, pi: f64, c: f64) -> f64 {
        let m = self.model;
        let dt = m.cfg.delta;
        if m.cfg.convention == RiskConvention::FrozenShares {
            return self.discrete(pi * self.x, c * self.x * dt);
        }
        let p = &m.market;
        let k = &m.k;
        let s = pi.abs() * p.sigma * k.sqrt_dt;
        let b = (p.r + pi * (p.mu - p.r) - c) * dt;
        match m.cfg.kind {
            RiskMeasureKind::VaR(_) => self.y - self.x * (b - 0.5 * s * s + k.z * s).exp(),
            RiskMeasureKind::Tce(_) => self.y - self.x / k.alpha * b.exp() * normal::cdf(k.z - s),
            RiskMeasureKind::El => continuous_el(self.x, self.y, b, s),
        }
    }

    pub fn discrete(&self, phi: f64, eta: f64) -> f64 {
        let k = &self.model.k;
        let base = k.growth_r * (self.x - eta - phi);
        match self.model.cfg.kind {
            RiskMeasureKind::VaR(_) => self.y - base - phi * k.var_quantile,
            RiskMeasureKind::Tce(_) => self.y - base - phi * k.tce_tail,
            RiskMeasureKind::El => discrete_el(self.y - base, phi, k.disc_m, k.disc_s, k.growth_mu),
        }
    }

    /// Risk as a function of exposure at fixed consumption.
    pub fn exposure_risk(&self, consumption: f64, e: f64) -> f64 {
        match self.regime {
            Regime::Continuous => self.continuous(e, consumption),
            Regime::Discrete => {
                let eta = consumption * self.x;
                self.discrete((self.x - eta) * e, eta)
            }
        }
    }

    pub fn feasible(&self, consumption: f64, e: f64) -> bool {
        self.exposure_risk(consumption, e) <= self.bound
    }

    /// Feasible exposure interval: a coarse scan of the box, a golden-section
    /// search for the risk minimum when the scan finds nothing feasible, and
    /// bisection of each endpoint to [`EXPOSURE_TOL`].
    pub fn feasible_interval(&self, consumption: f64) -> Result<FeasibleSet> {
        let (lo_b, hi_b) = self.model.exposure_box(self.regime);
        let h = (hi_b - lo_b) / (SCAN_POINTS - 1) as f64;
        let grid = |i: usize| {
            if i == SCAN_POINTS - 1 {
                hi_b
            } else {
                lo_b + h * i as f64
            }
        };
        let mut risk = [0.0; SCAN_POINTS];
        for (i, r) in risk.iter_mut().enumerate() {
            *r = self.exposure_risk(consumption, grid(i));
        }
        let ok = |r: f64| r <= self.bound;
        let first = risk.iter().position(|&r| ok(r));
        let last = risk.iter().rposition(|&r| ok(r));
        let (lo_in, hi_in, lo_out, hi_out) = match (first, last) {
            (Some(a), Some(b)) => {
                if risk[a..=b].iter().any(|&r| !ok(r)) {
                    return Err(Error::numerical(format!(
                        "feasible exposure set is not an interval at t = {}, x = {}, consumption = {consumption}",
                        self.t, self.x
                    )));
                }
                (
                    grid(a),
                    grid(b),
                    (a > 0).then(|| grid(a - 1)),
                    (b + 1 < SCAN_POINTS).then(|| grid(b + 1)),
                )
            }
            _ => {
                let best = risk
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let a = grid(best.saturating_sub(1));
                let b = grid((best + 1).min(SCAN_POINTS - 1));
                let m = golden_min(|e| self.exposure_risk(consumption, e), a, b, EXPOSURE_TOL);
                if !ok(m.value) {
                    return Ok(FeasibleSet::Empty);
                }
                (
                    m.x,
                    m.x,
                    Some(a).filter(|&v| v < m.x),
                    Some(b).filter(|&v| v > m.x),
                )
            }
        };
        let pred = |e: f64| ok(self.exposure_risk(consumption, e));
        let lo = match lo_out {
            Some(out) => bisect_boundary(pred, lo_in, out, EXPOSURE_TOL),
            None => lo_in,
        };
        let hi = match hi_out {
            Some(out) => bisect_boundary(pred, hi_in, out, EXPOSURE_TOL),
            None => hi_in,
        };
        Ok(FeasibleSet::Interval { lo, hi })
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

const ORACLE_CHUNK: usize = 1 << 16;
const BOOTSTRAP_RESAMPLES: usize = 200;

impl RiskModel<'_> {
    /// Simulates the one-period loss of `control` and estimates the configured
    /// risk measure.
    ///
    /// The VaR standard error is a 200-resample bootstrap of the empirical
    /// quantile. Each resample draws the multinomial counts of the order
    /// statistics sequentially as conditional binomials, restricted to a
    /// window of ten standard deviations around the quantile rank, which is
    /// distributionally identical to resampling the full loss vector.
    pub fn mc_oracle(
        &self,
        t: f64,
        x: f64,
        control: Control,
        n_samples: usize,
        seed: u64,
    ) -> Result<OracleEstimate> {
        if n_samples < 10_000 {
            return Err(Error::domain(format!(
                "oracle needs >= 1e4 samples, got {n_samples}"
            )));
        }
        let p = &self.market;
        let dt = self.cfg.delta;
        let (regime, sampler): (Regime, Box<dyn Fn(f64) -> f64 + Sync>) = match control {
            Control::Continuous { pi, c }
                if self.cfg.convention == RiskConvention::FrozenProportions =>
            {
                let law = crate::market::conditional_wealth_law(x, pi, c, dt, p)?;
                (Regime::Continuous, Box::new(move |z| law.sample(z)))
            }
            Control::Continuous { pi, c } => {
                let (phi, eta) = (pi * x, c * x * dt);
                check_discrete_amounts(x, phi, eta)?;
                let base = self.k.growth_r * (x - eta - phi);
                let (m, s) = (self.k.disc_m, self.k.disc_s);
                (
                    Regime::Continuous,
                    Box::new(move |z| base + phi * (m + s * z).exp()),
                )
            }
            Control::Discrete { phi, eta } => {
                check_discrete_amounts(x, phi, eta)?;
                let base = self.k.growth_r * (x - eta - phi);
                let (m, s) = (self.k.disc_m, self.k.disc_s);
                (
                    Regime::Discrete,
                    Box::new(move |z| base + phi * (m + s * z).exp()),
                )
            }
        };
        let y = self.benchmark_value(t, x, regime)?;
        let chunks = n_samples.div_ceil(ORACLE_CHUNK);
        let parts = par_streams(chunks, seed, |i, rng| {
            let len = ORACLE_CHUNK.min(n_samples - i * ORACLE_CHUNK);
            Ok((0..len)
                .map(|_| y - sampler(rng.sample::<f64, _>(StandardNormal)))
                .collect::<Vec<f64>>())
        })?;
        let mut losses: Vec<f64> = parts.into_iter().flatten().collect();
        let n = losses.len() as f64;
        match self.cfg.kind {
            RiskMeasureKind::El => {
                let pos: Vec<f64> = losses.iter().map(|l| l.max(0.0)).collect();
                let (mean, var) = mean_var(&pos);
                Ok(OracleEstimate {
                    estimate: mean,
                    std_error: (var / n).sqrt(),
                })
            }
            RiskMeasureKind::VaR(alpha) | RiskMeasureKind::Tce(alpha) => {
                losses.sort_unstable_by(f64::total_cmp);
                let k = ((1.0 - alpha) * n).ceil() as usize;
                let k = k.clamp(1, losses.len());
                let var = losses[k - 1];
                if matches!(self.cfg.kind, RiskMeasureKind::Tce(_)) {
                    let (tce, tail_var) = mean_var(&losses[k - 1..]);
                    let se =
                        ((tail_var + (1.0 - alpha) * (tce - var).powi(2)) / (n * alpha)).sqrt();
                    Ok(OracleEstimate {
                        estimate: tce,
                        std_error: se,
                    })
                } else {
                    let se = bootstrap_quantile_se(&losses, k, seed, alpha);
                    Ok(OracleEstimate {
                        estimate: var,
                        std_error: se,
                    })
                }
            }
        }
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

fn bootstrap_quantile_se(sorted: &[f64], k: usize, seed: u64, alpha: f64) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let width = (10.0 * (nf * alpha * (1.0 - alpha)).sqrt()).ceil() as usize + 2;
    let j0 = (k - 1).saturating_sub(width);
    let j1 = (k - 1 + width).min(n - 1);
    let mut rng = stream_rng(seed, u64::MAX);
    let cell = 1.0 / nf;
    let reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let below = if j0 == 0 {
                0
            } else {
                Binomial::new(n as u64, j0 as f64 / nf)
                    .expect("valid binomial")
                    .sample(&mut rng)
            };
            if below >= k as u64 {
                return sorted[j0];
            }
            let mut left = n as u64 - below;
            let mut mass = 1.0 - j0 as f64 / nf;
            let mut count = below;
            for (j, &value) in sorted.iter().enumerate().take(j1 + 1).skip(j0) {
                let p = (cell / mass).min(1.0);
                let c = if left == 0 {
                    0
                } else {
                    Binomial::new(left, p)
                        .expect("valid binomial")
                        .sample(&mut rng)
                };
                count += c;
                left -= c;
                mass -= cell;
                if count >= k as u64 || j == j1 {
                    return value;
                }
            }
            sorted[j1]
        })
        .collect();
    mean_var(&reps).1.sqrt()
}
