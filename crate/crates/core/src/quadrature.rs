//! Gauss–Hermite rules normalized for expectations under N(0, 1).
//!
//! Nodes start from the eigenvalues of the Jacobi matrix (implicit QL) and
//! are polished by Newton steps on the orthonormal Hermite recurrence, which
//! also yields the weights.

use crate::error::{Error, Result};

/// Nodes and weights with `sum(w_i f(z_i)) ~= E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e[i]` between rows `i` and `i + 1`.
fn tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::numerical(
                    "tridiagonal eigenvalue iteration did not converge",
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Orthonormal Hermite recurrence (weight `exp(-x^2)`): returns
/// `(p_n(z), p_n'(z))`.
fn hermite(n: usize, z: f64) -> (f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut p1 = PIM4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!(
                "Gauss-Hermite rule needs n >= 2, got {n}"
            )));
        }
        let mut d = vec![0.0; n];
        let mut e: Vec<f64> = (1..=n).map(|k| (k as f64 / 2.0).sqrt()).collect();
        e[n - 1] = 0.0;
        tridiagonal_eigenvalues(&mut d, &mut e)?;
        d.sort_by(f64::total_cmp);
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for &z0 in &d {
            let mut z = z0;
            for _ in 0..3 {
                let (p, dp) = hermite(n, z);
                z -= p / dp;
            }
            let (_, dp) = hermite(n, z);
            nodes.push(z * std::f64::consts::SQRT_2);
            weights.push(2.0 / (dp * dp) * inv_sqrt_pi);
        }
        // Enforce exact symmetry.
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::numerical(format!(
                "Gauss-Hermite rule with {n} nodes is degenerate"
            )));
        }
        Ok(GaussHermite { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}
