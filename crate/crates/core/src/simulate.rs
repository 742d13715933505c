//! Seeded Monte Carlo simulation of controlled wealth paths.
//!
//! Every path `i` draws from its own ChaCha8 stream: the generator is seeded
//! from the user seed and then switched to stream `i`. Paths are produced in
//! parallel and collected in index order, so results do not depend on the
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{wealth_step_exact, MarketParams};

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `f` for every index in `0..n` on its own stream and returns the
/// results in index order.
pub(crate) fn par_streams<A, F>(n: usize, seed: u64, f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<A> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Feedback control `(t, x) -> (pi, c)`.
pub trait ContinuousPolicy: Sync {
    fn control(&self, t: f64, x: f64) -> (f64, f64);
}

impl<F: Fn(f64, f64) -> (f64, f64) + Sync> ContinuousPolicy for F {
    fn control(&self, t: f64, x: f64) -> (f64, f64) {
        self(t, x)
    }
}

/// Uniform grid from `t0` to `t_end` whose step matches `dt` to rounding.
pub fn time_grid(t0: f64, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end > t0) {
        return Err(Error::domain(format!(
            "time grid needs dt > 0 and t_end > t0 (t0 = {t0}, t_end = {t_end}, dt = {dt})"
        )));
    }
    let span = t_end - t0;
    let steps = (span / dt).round();
    if steps < 1.0 || (steps * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::domain(format!(
            "dt = {dt} does not divide the horizon {span}"
        )));
    }
    let steps = steps as usize;
    Ok((0..=steps)
        .map(|k| {
            if k == steps {
                t_end
            } else {
                t0 + span * k as f64 / steps as f64
            }
        })
        .collect())
}

/// Simulated wealth paths with the controls applied on each step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// Row-major, `n_paths x times.len()`.
    pub wealth: Vec<f64>,
    /// Row-major, `n_paths x (times.len() - 1)`, `(pi, c)` held over each step.
    pub controls: Vec<(f64, f64)>,
    pub seed: u64,
}

impl PathEnsemble {
    pub fn path(&self, i: usize) -> &[f64] {
        let k = self.times.len();
        &self.wealth[i * k..(i + 1) * k]
    }

    pub fn path_controls(&self, i: usize) -> &[(f64, f64)] {
        let k = self.times.len() - 1;
        &self.controls[i * k..(i + 1) * k]
    }

    pub fn terminal(&self, i: usize) -> f64 {
        *self.path(i).last().expect("non-empty path")
    }
}

/// Simulates `n_paths` paths from `(t0, x0)`, applying `policy` at each step
/// start and holding it for `dt`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths<P: ContinuousPolicy>(
    params: &MarketParams,
    policy: &P,
    t0: f64,
    t_end: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    x0: f64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be >= 1"));
    }
    if !(x0 > 0.0) {
        return Err(Error::domain(format!(
            "initial wealth must be > 0, got {x0}"
        )));
    }
    let times = time_grid(t0, t_end, dt)?;
    let rows = par_streams(n_paths, seed, |_, rng| {
        let mut w = Vec::with_capacity(times.len());
        let mut u = Vec::with_capacity(times.len() - 1);
        let mut x = x0;
        w.push(x);
        for k in 0..times.len() - 1 {
            let (t, h) = (times[k], times[k + 1] - times[k]);
            let (pi, c) = policy.control(t, x);
            if !pi.is_finite() || !c.is_finite() {
                return Err(Error::NonFiniteControl { t, x, pi, c });
            }
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            x = wealth_step_exact(x, pi, c, h, z * h.sqrt(), params);
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::numerical(format!(
                    "wealth left (0, inf) at t = {}: {x}",
                    times[k + 1]
                )));
            }
            w.push(x);
            u.push((pi, c));
        }
        Ok((w, u))
    })?;
    let mut wealth = Vec::with_capacity(n_paths * times.len());
    let mut controls = Vec::with_capacity(n_paths * (times.len() - 1));
    for (w, u) in rows {
        wealth.extend(w);
        controls.extend(u);
    }
    Ok(PathEnsemble {
        times,
        n_paths,
        wealth,
        controls,
        seed,
    })
}
