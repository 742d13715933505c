//! Log-uniform wealth grids and interpolated value slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::Pchip;

/// Wealth nodes uniformly spaced in `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
}

impl WealthGrid {
    pub fn new(x_min: f64, x_max: f64, nodes: usize) -> Result<Self> {
        let g = WealthGrid {
            x_min,
            x_max,
            nodes,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min > 0.0 && self.x_min < self.x_max && self.x_max.is_finite()) {
            return Err(Error::config(format!(
                "wealth grid needs 0 < x_min < x_max (got [{}, {}])",
                self.x_min, self.x_max
            )));
        }
        if self.nodes < 5 {
            return Err(Error::config(format!(
                "wealth grid needs >= 5 nodes, got {}",
                self.nodes
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.x_max / self.x_min).ln() / (self.nodes - 1) as f64
    }

    pub fn log_nodes(&self) -> Vec<f64> {
        let (y0, h) = (self.x_min.ln(), self.step());
        (0..self.nodes)
            .map(|i| {
                if i + 1 == self.nodes {
                    self.x_max.ln()
                } else {
                    y0 + h * i as f64
                }
            })
            .collect()
    }

    pub fn points(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.log_nodes().into_iter().map(f64::exp).collect();
        x[0] = self.x_min;
        let last = x.len() - 1;
        x[last] = self.x_max;
        x
    }

    /// Fractional node position of wealth `x`.
    pub fn position(&self, x: f64) -> f64 {
        (x / self.x_min).ln() / self.step()
    }
}

/// A value slice on a log grid, interpolated by monotone cubic in `ln x` and
/// continued beyond the grid with the power asymptote `V(x_b) (x/x_b)^q`.
#[derive(Debug, Clone)]
pub struct ValueSlice {
    pchip: Pchip,
    exponent: f64,
    lo: (f64, f64),
    hi: (f64, f64),
}

impl ValueSlice {
    pub fn new(grid: &WealthGrid, values: &[f64], exponent: f64) -> Result<Self> {
        let pchip = Pchip::new(grid.log_nodes(), values.to_vec())?;
        Ok(ValueSlice {
            pchip,
            exponent,
            lo: (grid.x_min, values[0]),
            hi: (grid.x_max, values[values.len() - 1]),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.lo.0 {
            if x <= 0.0 {
                return if self.exponent > 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
            }
            return self.lo.1 * (x / self.lo.0).powf(self.exponent);
        }
        if x >= self.hi.0 {
            return self.hi.1 * (x / self.hi.0).powf(self.exponent);
        }
        self.pchip.eval(x.ln())
    }
}

/// Linear interpolation of node data in `ln x`, clamped at the grid ends.
pub fn interp_log_linear(grid: &WealthGrid, values: &[f64], x: f64) -> f64 {
    let p = grid.position(x).clamp(0.0, (grid.nodes - 1) as f64);
    let i = (p.floor() as usize).min(grid.nodes - 2);
    let w = p - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}
