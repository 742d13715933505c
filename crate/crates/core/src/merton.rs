//! Unconstrained Merton baselines in continuous and discrete time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, PowerUtility};
use crate::mdp::{QuadratureSpec, ReturnQuadrature};

/// Closed-form continuous-time Merton policy and value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonContinuous {
    pub pi_m: f64,
    pub tau: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub consumption: bool,
    /// `r + (mu - r)^2 / (2 gamma sigma^2)`, the certainty-equivalent growth.
    pub growth: f64,
}

pub fn merton_continuous(
    params: &MarketParams,
    utility: &PowerUtility,
    horizon: f64,
) -> Result<MertonContinuous> {
    params.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain(format!("horizon must be > 0, got {horizon}")));
    }
    let gamma = utility.gamma();
    let s2 = params.sigma * params.sigma;
    let ex = params.excess_return();
    let growth = params.r + ex * ex / (2.0 * gamma * s2);
    Ok(MertonContinuous {
        pi_m: ex / (gamma * s2),
        tau: -(1.0 - gamma) * growth / gamma,
        horizon,
        gamma,
        consumption: utility.consumes(),
        growth,
    })
}

impl MertonContinuous {
    /// `w(t) = 1/tau + (1 - 1/tau) exp(-tau (T - t))`, written so that the
    /// `tau -> 0` limit `1 + T - t` is exact.
    fn inverse_rate(&self, t: f64) -> f64 {
        let s = (self.horizon - t).max(0.0);
        let a = -self.tau * s;
        let tail = if self.tau.abs() < 1e-14 {
            s
        } else {
            -a.exp_m1() / self.tau
        };
        a.exp() + tail
    }

    /// Optimal consumption rate `c^M(t)`; zero when consumption is disabled.
    pub fn consumption_rate(&self, t: f64) -> f64 {
        if self.consumption {
            1.0 / self.inverse_rate(t)
        } else {
            0.0
        }
    }

    /// Coefficient `h` in `V(t, x) = x^(1-gamma)/(1-gamma) * h(t)`.
    pub fn value_coefficient(&self, t: f64) -> f64 {
        if self.consumption {
            self.inverse_rate(t).powf(self.gamma)
        } else {
            ((1.0 - self.gamma) * self.growth * (self.horizon - t)).exp()
        }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        let q = 1.0 - self.gamma;
        x.powf(q) / q * self.value_coefficient(t)
    }
}

/// Discrete-time Merton policy from the coefficient recursion over the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MertonDiscrete {
    /// Stock fraction of invested wealth per period.
    pub beta_m: Vec<f64>,
    /// Consumed fraction of wealth per period.
    pub zeta_m: Vec<f64>,
    /// Optimized `E[(1 + beta R)^(1-gamma)]` per period.
    pub v: Vec<f64>,
    /// Value coefficients `d_0..d_N`, `d_N = 1`.
    pub d: Vec<f64>,
    pub delta: f64,
}

impl MertonDiscrete {
    pub fn periods(&self) -> usize {
        self.beta_m.len()
    }

    /// Period index containing time `t`.
    pub fn period_at(&self, t: f64) -> usize {
        let n = (t / self.delta + 1e-9).floor().max(0.0) as usize;
        n.min(self.periods().saturating_sub(1))
    }

    /// Invested amount `phi^M` and consumed amount `eta^M` at `(t, x)`.
    pub fn amounts(&self, t: f64, x: f64) -> (f64, f64) {
        let n = self.period_at(t);
        let eta = self.zeta_m[n] * x;
        ((x - eta) * self.beta_m[n], eta)
    }
}

/// Consumption fraction and coefficient of the period problem
/// `sup_zeta zeta^(1-gamma) + (1-zeta)^(1-gamma) a` (infimum for gamma > 1).
pub(crate) fn consumption_step(a: f64, gamma: f64) -> (f64, f64) {
    let root = a.powf(1.0 / gamma);
    (1.0 / (1.0 + root), (1.0 + root).powf(gamma))
}

pub fn merton_discrete(
    params: &MarketParams,
    utility: &PowerUtility,
    n_periods: usize,
    delta: f64,
    quad: QuadratureSpec,
) -> Result<MertonDiscrete> {
    if n_periods == 0 {
        return Err(Error::domain("discrete horizon needs at least one period"));
    }
    params.validate()?;
    let rq = ReturnQuadrature::new(params, delta, quad)?;
    let gamma = utility.gamma();
    let growth = (params.r * delta * (1.0 - gamma)).exp();
    let mut beta_m = vec![0.0; n_periods];
    let mut zeta_m = vec![0.0; n_periods];
    let mut v = vec![0.0; n_periods];
    let mut d = vec![1.0; n_periods + 1];
    for n in (0..n_periods).rev() {
        let best = rq.optimize_beta(0.0, 1.0, utility);
        beta_m[n] = best.x;
        v[n] = best.value;
        let a = growth * v[n] * d[n + 1];
        if utility.consumes() {
            let (zeta, coeff) = consumption_step(a, gamma);
            zeta_m[n] = zeta;
            d[n] = coeff;
        } else {
            d[n] = a;
        }
    }
    Ok(MertonDiscrete {
        beta_m,
        zeta_m,
        v,
        d,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_proportion() {
        let m = merton_continuous(
            &MarketParams::baseline(),
            &PowerUtility::new(0.3).unwrap(),
            2.0,
        )
        .unwrap();
        assert!((m.pi_m - 0.08 / (0.3 * 0.1225)).abs() < 1e-14);
        assert!((m.pi_m - 2.18).abs() < 0.005);
        assert!(m.tau < 0.0);
        assert!((m.consumption_rate(2.0) - 1.0).abs() < 1e-15);
        for k in 0..=20 {
            assert!(m.consumption_rate(0.1 * k as f64) > 0.0);
        }
    }

    #[test]
    fn zero_premium_means_no_stock() {
        let p = MarketParams::new(0.05, 0.05, 0.2).unwrap();
        let m = merton_continuous(&p, &PowerUtility::new(0.5).unwrap(), 1.0).unwrap();
        assert_eq!(m.pi_m, 0.0);
    }

    #[test]
    fn value_coefficient_solves_reduced_ode() {
        // h' = -(1-gamma) [ gamma/(1-gamma) h^{(gamma-1)/gamma} + growth h ]
        for gamma in [0.3, 0.7, 2.0, 5.0] {
            let u = PowerUtility::new(gamma).unwrap();
            let m = merton_continuous(&MarketParams::baseline(), &u, 3.0).unwrap();
            for k in 0..29 {
                let t = 0.1 * k as f64 + 0.05;
                let e = 1e-5;
                let dh = (m.value_coefficient(t + e) - m.value_coefficient(t - e)) / (2.0 * e);
                let h = m.value_coefficient(t);
                let rhs = -(gamma * h.powf((gamma - 1.0) / gamma) + (1.0 - gamma) * m.growth * h);
                assert!(
                    (dh - rhs).abs() < 1e-6 * h.abs().max(1.0),
                    "gamma {gamma} t {t}"
                );
                assert!((m.consumption_rate(t) - h.powf(-1.0 / gamma)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tau_zero_limit() {
        let m = MertonContinuous {
            pi_m: 0.0,
            tau: 0.0,
            horizon: 2.0,
            gamma: 0.5,
            consumption: true,
            growth: 0.0,
        };
        assert!((m.consumption_rate(0.5) - 1.0 / 2.5).abs() < 1e-15);
    }

    #[test]
    fn discrete_baseline() {
        let u = PowerUtility::new(0.3).unwrap();
        let m = merton_discrete(
            &MarketParams::baseline(),
            &u,
            48,
            1.0 / 24.0,
            QuadratureSpec::default(),
        )
        .unwrap();
        assert_eq!(m.d[48], 1.0);
        assert!(m.beta_m.iter().all(|&b| b == 1.0));
        for n in 0..48 {
            assert!(m.d[n] >= m.d[n + 1].max(1.0));
            assert!((0.0..=1.0).contains(&m.zeta_m[n]));
        }
    }

    #[test]
    fn consumption_step_matches_search() {
        for (a, gamma) in [(3.0, 0.3), (0.7, 0.3), (2.0, 2.5)] {
            let (zeta, coeff) = consumption_step(a, gamma);
            let q = 1.0 - gamma;
            let f = |z: f64| z.powf(q) + (1.0 - z).powf(q) * a;
            assert!((f(zeta) - coeff).abs() < 1e-12);
            let s = q.signum();
            for k in 1..1000 {
                let z = k as f64 / 1000.0;
                assert!(s * f(z) <= s * coeff + 1e-12);
            }
        }
    }
}
