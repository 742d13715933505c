//! Comparison metrics, named experiment recipes and Monte Carlo value checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WealthGrid;
use crate::hjb::{self, ContinuousProblem, ContinuousSolution, GridSpec, Hamiltonian};
use crate::market::{discrete_return_law, wealth_step_exact, MarketParams, PowerUtility};
use crate::mdp::{self, DiscreteProblem, DiscreteSolution, QuadratureSpec};
use crate::risk::{
    Benchmark, Control, MertonReference, Regime, RiskBound, RiskConstraintConfig, RiskConvention,
    RiskMeasureKind, RiskModel,
};
use crate::simulate::par_streams;

/// `(V^M - V) / V^M`.
pub fn relative_gap(v_baseline: f64, v_constrained: f64) -> Result<f64> {
    if v_baseline == 0.0 || !v_baseline.is_finite() {
        return Err(Error::domain(format!(
            "baseline value must be finite and nonzero, got {v_baseline}"
        )));
    }
    Ok((v_baseline - v_constrained) / v_baseline)
}

/// Initial wealth `e` with `V_B(0, e) = V_A(0, 1)` for power-form values
/// `x^(1-gamma)/(1-gamma) h`: `e = (h_A / h_B)^(1/(1-gamma))`.
pub fn efficiency(coeff_a: f64, coeff_b: f64, gamma: f64) -> Result<f64> {
    if !(coeff_a > 0.0 && coeff_b > 0.0) {
        return Err(Error::domain(format!(
            "value coefficients must be positive (got {coeff_a}, {coeff_b})"
        )));
    }
    Ok((coeff_a / coeff_b).powf(1.0 / (1.0 - gamma)))
}

/// Solves `V_B(0, e) = target` by bisection on `e in [lo, hi]`, where
/// `value_b` is increasing in wealth.
pub fn efficiency_general<F: FnMut(f64) -> Result<f64>>(
    target: f64,
    mut value_b: F,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let (vlo, vhi) = (value_b(lo)?, value_b(hi)?);
    if !(vlo <= target && target <= vhi) {
        return Err(Error::domain(format!(
            "target value {target} outside [{vlo}, {vhi}] on the wealth range [{lo}, {hi}]"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > 1e-8 {
        let m = 0.5 * (a + b);
        if value_b(m)? < target {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub sweep_value: f64,
    pub value_coeff_a: f64,
    pub value_coeff_b: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub experiment: String,
    pub sweep_var: String,
    pub points: Vec<EfficiencyPoint>,
}

impl EfficiencyReport {
    pub fn to_table(&self, name: &str) -> Table {
        let mut t = Table::new(
            name,
            &["sweep_var", "value_coeff_a", "value_coeff_b", "efficiency"],
        );
        for p in &self.points {
            t.push(vec![
                Cell::Num(p.sweep_value),
                Cell::Num(p.value_coeff_a),
                Cell::Num(p.value_coeff_b),
                Cell::Num(p.efficiency),
            ]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

/// Tidy table serialized as CSV with 17 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[j] {
                    Cell::Num(v) => *v,
                    Cell::Int(v) => *v as f64,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (j, c) in row.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                match c {
                    Cell::Num(v) => write!(s, "{v:.16e}").expect("string write"),
                    Cell::Int(v) => write!(s, "{v}").expect("string write"),
                    Cell::Text(v) => s.push_str(v),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Tables plus headline scalars of one recipe run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub name: String,
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, f64>,
}

/// Inputs shared by the recipes; defaults are the baseline study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub market: MarketParams,
    pub gamma: f64,
    pub horizon: f64,
    pub delta: f64,
    pub alpha: f64,
    /// Relative bound of the single-bound recipes.
    pub lambda: f64,
    /// Level of the absolute bound recipe.
    pub absolute_level: f64,
    /// Time steps per year of the continuous solvers.
    pub steps_per_year: usize,
    pub grid: GridSpec,
    pub wealth_grid: WealthGrid,
    pub quadrature: QuadratureSpec,
    pub lambdas: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Horizon of the risk-horizon sweep, a common multiple of `deltas`.
    pub delta_sweep_horizon: f64,
    /// Risk aversion of the risk-horizon sweep.
    pub delta_sweep_gamma: f64,
    /// Wealth points exported for separable surfaces.
    pub export_points: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            market: MarketParams::baseline(),
            gamma: 0.3,
            horizon: 2.0,
            delta: 1.0 / 24.0,
            alpha: 0.01,
            lambda: 0.05,
            absolute_level: 0.05,
            steps_per_year: 120,
            grid: GridSpec::default(),
            wealth_grid: WealthGrid {
                x_min: 0.05,
                x_max: 20.0,
                nodes: 401,
            },
            quadrature: QuadratureSpec::default(),
            lambdas: (0..=15).map(|i| i as f64 / 100.0).collect(),
            deltas: vec![1.0 / 24.0, 1.0 / 12.0, 0.25, 0.5, 1.0, 2.0, 2.5],
            delta_sweep_horizon: 10.0,
            delta_sweep_gamma: 0.9,
            export_points: 41,
        }
    }
}

pub const RECIPES: [&str; 7] = [
    "fig1_var_continuous",
    "eff_vs_lambda_continuous",
    "fig3_absolute_bound",
    "fig4_bounds_horizons_measures",
    "fig7_var_discrete",
    "eff_vs_lambda_discrete",
    "eff_vs_delta",
];

impl ExperimentSettings {
    pub fn utility(&self) -> Result<PowerUtility> {
        PowerUtility::new(self.gamma)
    }

    pub fn t_steps(&self, horizon: f64) -> usize {
        ((self.steps_per_year as f64 * horizon).round() as usize).max(2)
    }

    pub fn periods(&self, horizon: f64, delta: f64) -> Result<usize> {
        let n = (horizon / delta).round();
        if n < 1.0 || (n * delta - horizon).abs() > 1e-9 * horizon {
            return Err(Error::config(format!(
                "period {delta} does not divide the horizon {horizon}"
            )));
        }
        Ok(n as usize)
    }

    pub fn constraint(
        &self,
        kind: RiskMeasureKind,
        bound: RiskBound,
        delta: f64,
    ) -> Result<RiskConstraintConfig> {
        RiskConstraintConfig::new(kind, Benchmark::MertonConditionalExpectation, bound, delta)
    }

    pub fn continuous_problem(
        &self,
        horizon: f64,
        constraint: Option<RiskConstraintConfig>,
    ) -> Result<ContinuousProblem> {
        Ok(ContinuousProblem::new(
            self.market,
            self.utility()?,
            horizon,
            constraint,
        ))
    }

    pub fn discrete_problem(
        &self,
        horizon: f64,
        constraint: Option<RiskConstraintConfig>,
    ) -> Result<DiscreteProblem> {
        Ok(DiscreteProblem {
            market: self.market,
            utility: self.utility()?,
            periods: self.periods(horizon, self.delta)?,
            delta: self.delta,
            constraint,
            quadrature: self.quadrature,
        })
    }

    fn export_wealth(&self) -> Vec<f64> {
        let g = WealthGrid {
            x_min: self.grid.x_min,
            x_max: self.grid.x_max,
            nodes: self.export_points.max(2),
        };
        g.points()
    }
}

/// Runs a named recipe.
pub fn run_experiment(name: &str, settings: &ExperimentSettings) -> Result<ExperimentOutput> {
    match name {
        "fig1_var_continuous" => fig1_var_continuous(settings),
        "eff_vs_lambda_continuous" => eff_vs_lambda_continuous(settings),
        "fig3_absolute_bound" => fig3_absolute_bound(settings),
        "fig4_bounds_horizons_measures" => fig4_bounds_horizons_measures(settings),
        "fig7_var_discrete" => fig7_var_discrete(settings),
        "eff_vs_lambda_discrete" => eff_vs_lambda_discrete(settings),
        "eff_vs_delta" => eff_vs_delta(settings),
        other => Err(Error::config(format!(
            "unknown experiment '{other}'; expected one of {}",
            RECIPES.join(", ")
        ))),
    }
}

/// Long-format `t,x,value,pi,c` surface of a continuous solution.
pub fn continuous_surface_table(
    name: &str,
    sol: &ContinuousSolution,
    xs: Option<&[f64]>,
) -> Result<Table> {
    let mut t = Table::new(name, &["t", "x", "value", "pi", "c"]);
    let grid_xs;
    let xs = match (xs, &sol.surface) {
        (Some(x), _) => x,
        (None, hjb::ContinuousSurface::Grid { grid, .. }) => {
            grid_xs = grid.points();
            &grid_xs[..]
        }
        (None, hjb::ContinuousSurface::Separable { .. }) => {
            grid_xs = vec![1.0];
            &grid_xs[..]
        }
    };
    for (n, &time) in sol.times.iter().enumerate() {
        for &x in xs {
            let (pi, c) = sol.policy(n, x);
            t.push(vec![
                Cell::Num(time),
                Cell::Num(x),
                Cell::Num(sol.value(n, x)?),
                Cell::Num(pi),
                Cell::Num(c),
            ]);
        }
    }
    Ok(t)
}

/// Long-format `n,t,x,value,beta,zeta` surface of a discrete solution.
pub fn discrete_surface_table(
    name: &str,
    sol: &DiscreteSolution,
    xs: Option<&[f64]>,
) -> Result<Table> {
    let mut t = Table::new(name, &["n", "t", "x", "value", "beta", "zeta"]);
    let grid_xs;
    let xs = match (xs, &sol.surface) {
        (Some(x), _) => x,
        (None, mdp::DiscreteSurface::Grid { grid, .. }) => {
            grid_xs = grid.points();
            &grid_xs[..]
        }
        (None, mdp::DiscreteSurface::Separable { .. }) => {
            grid_xs = vec![1.0];
            &grid_xs[..]
        }
    };
    for n in 0..=sol.periods() {
        for &x in xs {
            let (beta, zeta) = if n < sol.periods() {
                sol.policy(n, x)
            } else {
                (f64::NAN, 1.0)
            };
            t.push(vec![
                Cell::Int(n as i64),
                Cell::Num(sol.problem.time(n)),
                Cell::Num(x),
                Cell::Num(sol.value(n, x)?),
                Cell::Num(beta),
                Cell::Num(zeta),
            ]);
        }
    }
    Ok(t)
}

fn gap_table(
    name: &str,
    merton: &ContinuousSolution,
    sol: &ContinuousSolution,
    xs: &[f64],
) -> Result<Table> {
    let mut t = Table::new(name, &["t", "x", "value_merton", "value", "delta_v"]);
    for (n, &time) in sol.times.iter().enumerate() {
        for &x in xs {
            let vm = merton.value(n, x)?;
            let v = sol.value(n, x)?;
            t.push(vec![
                Cell::Num(time),
                Cell::Num(x),
                Cell::Num(vm),
                Cell::Num(v),
                Cell::Num(relative_gap(vm, v)?),
            ]);
        }
    }
    Ok(t)
}

fn head_coeff(sol: &ContinuousSolution) -> Result<f64> {
    sol.coefficients()
        .map(|h| h[0])
        .ok_or_else(|| Error::config("solution is not separable"))
}

fn fig1_var_continuous(s: &ExperimentSettings) -> Result<ExperimentOutput> {
    let t_steps = s.t_steps(s.horizon);
    let cfg = s.constraint(
        RiskMeasureKind::VaR(s.alpha),
        RiskBound::Relative(s.lambda),
        s.delta,
    )?;
    let merton = hjb::solve_relative(&s.continuous_problem(s.horizon, None)?, t_steps)?;
    let sol = hjb::solve_relative(&s.continuous_problem(s.horizon, Some(cfg))?, t_steps)?;
    let xs = s.export_wealth();
    let (h0, hm) = (head_coeff(&sol)?, head_coeff(&merton)?);
    let mut summary = BTreeMap::new();
    summary.insert("value_coeff".into(), h0);
    summary.insert("value_coeff_merton".into(), hm);
    summary.insert("efficiency".into(), efficiency(h0, hm, s.gamma)?);
    summary.insert("delta_v_unit_wealth".into(), relative_gap(hm, h0)?);
    summary.insert("pi_t0".into(), sol.policy(0, 1.0).0);
    summary.insert("c_t0".into(), sol.policy(0, 1.0).1);
    summary.insert("pi_merton".into(), merton.merton.pi_m);
    summary.insert("residual".into(), sol.residual);
    Ok(ExperimentOutput {
        name: "fig1_var_continuous".into(),
        tables: vec![
            continuous_surface_table("surface", &sol, Some(&xs))?,
            continuous_surface_table("surface_merton", &merton, Some(&xs))?,
            gap_table("delta_v", &merton, &sol, &xs)?,
        ],
        summary,
    })
}

/// Continuous efficiency against Merton over the relative-bound grid.
pub fn continuous_lambda_sweep(
    s: &ExperimentSettings,
    kind: RiskMeasureKind,
) -> Result<EfficiencyReport> {
    let t_steps = s.t_steps(s.horizon);
    let hm = head_coeff(&hjb::solve_relative(
        &s.continuous_problem(s.horizon, None)?,
        t_steps,
    )?)?;
    let points = s
        .lambdas
        .par_iter()
        .map(|&l| -> Result<EfficiencyPoint> {
            let cfg = s.constraint(kind, RiskBound::Relative(l), s.delta)?;
            let h = head_coeff(&hjb::solve_relative(
                &s.continuous_problem(s.horizon, Some(cfg))?,
                t_steps,
            )?)?;
            Ok(EfficiencyPoint {
                sweep_value: l,
                value_coeff_a: h,
                value_coeff_b: hm,
                efficiency: efficiency(h, hm, s.gamma)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EfficiencyReport {
        experiment: "eff_vs_lambda_continuous".into(),
        sweep_var: "lambda".into(),
        points,
    })
}

fn sweep_summary(report: &EfficiencyReport) -> BTreeMap<String, f64> {
    let mut summary = BTreeMap::new();
    for p in &report.points {
        summary.insert(
            format!("loss_at_{}_{:.4}", report.sweep_var, p.sweep_value),
            1.0 - p.efficiency,
        );
    }
    summary
}

fn eff_vs_lambda_continuous(s: &ExperimentSettings) -> Result<ExperimentOutput> {
    let report = continuous_lambda_sweep(s, RiskMeasureKind::VaR(s.alpha))?;
    Ok(ExperimentOutput {
        name: report.experiment.clone(),
        summary: sweep_summary(&report),
        tables: vec![report.to_table("efficiency")],
    })
}

fn fig3_absolute_bound(s: &ExperimentSettings) -> Result<ExperimentOutput> {
    let t_steps = s.t_steps(s.horizon);
    let grid = GridSpec { t_steps, ..s.grid };
    let abs = s.constraint(
        RiskMeasureKind::VaR(s.alpha),
        RiskBound::Absolute(s.absolute_level),
        s.delta,
    )?;
    let rel = s.constraint(
        RiskMeasureKind::VaR(s.alpha),
        RiskBound::Relative(s.absolute_level),
        s.delta,
    )?;
    let sol = hjb::solve_general(&s.continuous_problem(s.horizon, Some(abs))?, &grid)?;
    let rel_sol = hjb::solve_relative(&s.continuous_problem(s.horizon, Some(rel))?, t_steps)?;
    let xs = grid.wealth().points();
    let mut summary = BTreeMap::new();
    summary.insert("iterations".into(), sol.iterations as f64);
    summary.insert("converged".into(), if sol.converged { 1.0 } else { 0.0 });
    summary.insert("residual".into(), sol.residual);
    summary.insert("pi_relative_t0".into(), rel_sol.policy(0, 1.0).0);
    summary.insert("pi_absolute_t0_x1".into(), sol.policy(0, 1.0).0);
    Ok(ExperimentOutput {
        name: "fig3_absolute_bound".into(),
        tables: vec![
            continuous_surface_table("surface", &sol, None)?,
            continuous_surface_table("surface_relative", &rel_sol, Some(&xs))?,
        ],
        summary,
    })
}

fn fig4_bounds_horizons_measures(s: &ExperimentSettings) -> Result<ExperimentOutput> {
    let cases: Vec<(f64, RiskMeasureKind, f64)> = [1.0, 2.0, 5.0]
        .iter()
        .flat_map(|&t| {
            [
                (t, RiskMeasureKind::VaR(s.alpha), 0.15),
                (t, RiskMeasureKind::VaR(s.alpha), 0.05),
                (t, RiskMeasureKind::Tce(s.alpha), 0.05),
                (t, RiskMeasureKind::El, 0.01),
            ]
        })
        .collect();
    let rows = cases
        .par_iter()
        .map(
            |&(horizon, kind, l)| -> Result<(f64, RiskMeasureKind, f64, f64, f64, f64)> {
                let t_steps = s.t_steps(horizon);
                let cfg = s.constraint(kind, RiskBound::Relative(l), s.delta)?;
                let sol = hjb::solve_relative(&s.continuous_problem(horizon, Some(cfg))?, t_steps)?;
                let hm = sol.merton.value_coefficient(0.0);
                Ok((
                    horizon,
                    kind,
                    l,
                    head_coeff(&sol)?,
                    hm,
                    sol.policy(0, 1.0).0,
                ))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(
        "values",
        &[
            "horizon",
            "measure",
            "lambda",
            "value_coeff",
            "value_coeff_merton",
            "delta_v",
            "pi_t0",
        ],
    );
    let mut max_diff: f64 = 0.0;
    for &(horizon, kind, l, h, hm, pi) in &rows {
        table.push(vec![
            Cell::Num(horizon),
            Cell::Text(kind.name().into()),
            Cell::Num(l),
            Cell::Num(h),
            Cell::Num(hm),
            Cell::Num(relative_gap(hm, h)?),
            Cell::Num(pi),
        ]);
        if let RiskMeasureKind::Tce(_) = kind {
            if let Some(v) = rows
                .iter()
                .find(|r| r.0 == horizon && r.2 == l && matches!(r.1, RiskMeasureKind::VaR(_)))
            {
                max_diff = max_diff.max(((v.3 - h) / v.3).abs());
            }
        }
    }
    let mut summary = BTreeMap::new();
    summary.insert("max_rel_diff_var_tce".into(), max_diff);
    Ok(ExperimentOutput {
        name: "fig4_bounds_horizons_measures".into(),
        tables: vec![table],
        summary,
    })
}

fn fig7_var_discrete(s: &ExperimentSettings) -> Result<ExperimentOutput> {
    let cfg = s.constraint(
        RiskMeasureKind::VaR(s.alpha),
        RiskBound::Relative(s.lambda),
        s.delta,
    )?;
    let sol = mdp::solve_relative(&s.discrete_problem(s.horizon, Some(cfg))?)?;
    let merton = mdp::solve_relative(&s.discrete_problem(s.horizon, None)?)?;
    let xs = s.export_wealth();
    let d0 = sol.coefficients().expect("separable")[0];
    let dm = merton.coefficients().expect("separable")[0];
    let mut summary = BTreeMap::new();
    summary.insert("value_coeff".into(), d0);
    summary.insert("value_coeff_merton".into(), dm);
    summary.insert("efficiency".into(), efficiency(d0, dm, s.gamma)?);
    summary.insert("beta_t0".into(), sol.policy(0, 1.0).0);
    summary.insert("zeta_t0".into(), sol.policy(0, 1.0).1);
    summary.insert("beta_merton".into(), merton.merton.beta_m[0]);
    summary.insert("zeta_merton_t0".into(), merton.merton.zeta_m[0]);
    Ok(ExperimentOutput {
        name: "fig7_var_discrete".into(),
        tables: vec![
            discrete_surface_table("surface", &sol, Some(&xs))?,
            discrete_surface_table("surface_merton", &merton, Some(&xs))?,
        ],
        summary,
    })
}

/// Discrete efficiency against the discrete Merton investor over the
/// relative-bound grid.
pub fn discrete_lambda_sweep(
    s: &ExperimentSettings,
    kind: RiskMeasureKind,
) -> Result<EfficiencyReport> {
    let dm = mdp::solve_relative(&s.discrete_problem(s.horizon, None)?)?
        .coefficients()
        .expect("separable")[0];
    let points = s
        .lambdas
        .par_iter()
        .map(|&l| -> Result<EfficiencyPoint> {
            let cfg = s.constraint(kind, RiskBound::Relative(l), s.delta)?;
            let sol = mdp::solve_relative(&s.discrete_problem(s.horizon, Some(cfg))?)?;
            let d = sol.coefficients().expect("separable")[0];
            Ok(EfficiencyPoint {
                sweep_value: l,
                value_coeff_a: d,
                value_coeff_b: dm,
                efficiency: efficiency(d, dm, s.gamma)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EfficiencyReport {
        experiment: "eff_vs_lambda_discrete".into(),
        sweep_var: "lambda".into(),
        points,
    })
}

fn eff_vs_lambda_discrete(s: &ExperimentSettings) -> Result<ExperimentOutput> {
    let report = discrete_lambda_sweep(s, RiskMeasureKind::VaR(s.alpha))?;
    Ok(ExperimentOutput {
        name: report.experiment.clone(),
        summary: sweep_summary(&report),
        tables: vec![report.to_table("efficiency")],
    })
}

/// Discrete investor (A) against the continuous investor (B) over the
/// rebalancing/risk horizon, without consumption or short-selling. Returns
/// the unconstrained pairing and the VaR-constrained pairing.
pub fn delta_sweep(s: &ExperimentSettings) -> Result<(EfficiencyReport, EfficiencyReport)> {
    let horizon = s.delta_sweep_horizon;
    let utility = PowerUtility::terminal_only(s.delta_sweep_gamma)?;
    let gamma = utility.gamma();
    let t_steps = s.t_steps(horizon);
    let continuous = |constraint: Option<RiskConstraintConfig>| -> Result<f64> {
        let p =
            ContinuousProblem::new(s.market, utility, horizon, constraint).without_short_selling();
        head_coeff(&hjb::solve_relative(&p, t_steps)?)
    };
    let h_merton = continuous(None)?;
    let rows = s
        .deltas
        .par_iter()
        .map(|&delta| -> Result<(EfficiencyPoint, EfficiencyPoint)> {
            let periods = s.periods(horizon, delta)?;
            let discrete = |constraint: Option<RiskConstraintConfig>| -> Result<f64> {
                let p = DiscreteProblem {
                    market: s.market,
                    utility,
                    periods,
                    delta,
                    constraint,
                    quadrature: s.quadrature,
                };
                Ok(mdp::solve_relative(&p)?.coefficients().expect("separable")[0])
            };
            let cfg = s.constraint(
                RiskMeasureKind::VaR(s.alpha),
                RiskBound::Relative(s.lambda),
                delta,
            )?;
            let d_merton = discrete(None)?;
            // A long horizon can push the benchmark out of reach of every
            // admissible position; such rows are kept and marked with NaN.
            let infeasible_as_nan = |v: Result<f64>| match v {
                Err(Error::Infeasible { .. }) => Ok(f64::NAN),
                other => other,
            };
            let d_var = infeasible_as_nan(discrete(Some(cfg.clone())))?;
            let h_var = infeasible_as_nan(continuous(Some(
                cfg.with_convention(RiskConvention::FrozenShares),
            )))?;
            let var_eff = if d_var.is_nan() || h_var.is_nan() {
                f64::NAN
            } else {
                efficiency(d_var, h_var, gamma)?
            };
            Ok((
                EfficiencyPoint {
                    sweep_value: delta,
                    value_coeff_a: d_merton,
                    value_coeff_b: h_merton,
                    efficiency: efficiency(d_merton, h_merton, gamma)?,
                },
                EfficiencyPoint {
                    sweep_value: delta,
                    value_coeff_a: d_var,
                    value_coeff_b: h_var,
                    efficiency: var_eff,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (merton, var): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((
        EfficiencyReport {
            experiment: "eff_vs_delta".into(),
            sweep_var: "delta".into(),
            points: merton,
        },
        EfficiencyReport {
            experiment: "eff_vs_delta".into(),
            sweep_var: "delta".into(),
            points: var,
        },
    ))
}

fn eff_vs_delta(s: &ExperimentSettings) -> Result<ExperimentOutput> {
    let (merton, var) = delta_sweep(s)?;
    let mut summary = BTreeMap::new();
    // NaN (infeasible) rows propagate into the minimum on purpose.
    let min = |r: &EfficiencyReport| {
        r.points
            .iter()
            .map(|p| p.efficiency)
            .fold(f64::INFINITY, |a, b| {
                if a.is_nan() || b.is_nan() {
                    f64::NAN
                } else {
                    a.min(b)
                }
            })
    };
    summary.insert("min_efficiency_merton".into(), min(&merton));
    summary.insert("min_efficiency_var".into(), min(&var));
    summary.insert(
        "infeasible_var_rows".into(),
        var.points.iter().filter(|p| p.efficiency.is_nan()).count() as f64,
    );
    Ok(ExperimentOutput {
        name: "eff_vs_delta".into(),
        tables: vec![
            merton.to_table("efficiency_merton"),
            var.to_table("efficiency_var"),
        ],
        summary,
    })
}

/// One closed-form risk value checked against its Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub kind: RiskMeasureKind,
    pub regime: Regime,
    pub convention: RiskConvention,
    pub t: f64,
    pub x: f64,
    pub delta: f64,
    pub control: Control,
    pub closed_form: f64,
    pub estimate: f64,
    pub std_error: f64,
}

impl OracleCase {
    /// Standardized discrepancy; zero when both sides agree exactly.
    pub fn z_score(&self) -> f64 {
        let diff = self.closed_form - self.estimate;
        if diff.abs() <= 1e-12 * self.closed_form.abs().max(1.0) {
            0.0
        } else {
            diff / self.std_error
        }
    }
}

/// Compares closed-form risk with the Monte Carlo oracle on `n_configs`
/// randomized admissible configurations (wealth, time, horizon, benchmark
/// family and control all drawn from `seed`).
pub fn risk_oracle_cases(
    market: &MarketParams,
    kind: RiskMeasureKind,
    regime: Regime,
    convention: RiskConvention,
    n_configs: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<OracleCase>> {
    if regime == Regime::Discrete && convention == RiskConvention::FrozenShares {
        return Err(Error::config(
            "frozen shares is a continuous-time convention",
        ));
    }
    let horizon = 2.0;
    let utility = PowerUtility::new(0.3)?;
    let deltas = [1.0 / 52.0, 1.0 / 24.0, 1.0 / 12.0, 0.25];
    let mut rng = crate::simulate::stream_rng(seed, 0);
    let mut cases = Vec::with_capacity(n_configs);
    for i in 0..n_configs {
        let delta = deltas[i % deltas.len()];
        let t = rng.random_range(0.0..horizon - delta);
        let x = rng.random_range(0.5..2.0);
        let benchmark = match i % 3 {
            0 => Benchmark::FractionOfWealth(rng.random_range(0.95..1.1)),
            1 => Benchmark::Constant(x * rng.random_range(0.9..1.15)),
            _ => Benchmark::MertonConditionalExpectation,
        };
        let merton = match regime {
            Regime::Continuous => MertonReference::Continuous(crate::merton::merton_continuous(
                market, &utility, horizon,
            )?),
            Regime::Discrete => MertonReference::Discrete(crate::merton::merton_discrete(
                market,
                &utility,
                (horizon / delta).round() as usize,
                delta,
                QuadratureSpec::default(),
            )?),
        };
        let cfg = RiskConstraintConfig::new(kind, benchmark, RiskBound::Relative(0.05), delta)?
            .with_convention(convention);
        let model = RiskModel::new(market, &cfg, Some(&merton))?;
        let control = match (regime, convention) {
            (Regime::Continuous, RiskConvention::FrozenProportions) => Control::Continuous {
                pi: rng.random_range(-2.5..3.0),
                c: rng.random_range(0.0..1.0),
            },
            (Regime::Continuous, RiskConvention::FrozenShares) => {
                // the frozen holding and the consumed amount must fit in x
                let c = rng.random_range(0.0..1.0);
                Control::Continuous {
                    pi: rng.random_range(0.0..1.0 - c * delta),
                    c,
                }
            }
            (Regime::Discrete, _) => {
                let eta = x * rng.random_range(0.0..0.05);
                Control::Discrete {
                    phi: (x - eta) * rng.random_range(0.0..1.0),
                    eta,
                }
            }
        };
        let closed_form = match control {
            Control::Continuous { pi, c } => model.risk_continuous(t, x, pi, c)?,
            Control::Discrete { phi, eta } => model.risk_discrete(t, x, phi, eta)?,
        };
        let est = model.mc_oracle(t, x, control, n_samples, seed.wrapping_add(1 + i as u64))?;
        cases.push(OracleCase {
            kind,
            regime,
            convention,
            t,
            x,
            delta,
            control,
            closed_form,
            estimate: est.estimate,
            std_error: est.std_error,
        });
    }
    Ok(cases)
}

/// Simulated objective of a stored policy against the solver value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McValueReport {
    pub estimate: f64,
    pub std_error: f64,
    pub reference: f64,
    pub z_score: f64,
    /// Largest `risk - bound` met along the paths (nonpositive when every
    /// applied control is feasible).
    pub max_risk_excess: f64,
    pub n_paths: usize,
}

/// A solution whose stored policy can be simulated.
#[derive(Debug, Clone, Copy)]
pub enum SolutionRef<'a> {
    Continuous(&'a ContinuousSolution),
    Discrete(&'a DiscreteSolution),
}

/// Simulates the stored policy from `(0, x0)` and compares the realized
/// objective with `V(0, x0)`. Continuous running utility is integrated by
/// the trapezoidal rule on the solver's time grid.
pub fn mc_value_check(
    solution: SolutionRef<'_>,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McValueReport> {
    if n_paths < 2 || !(x0 > 0.0) {
        return Err(Error::domain("value check needs >= 2 paths and x0 > 0"));
    }
    let (samples, reference) = match solution {
        SolutionRef::Continuous(sol) => (
            simulate_continuous(sol, x0, n_paths, seed)?,
            sol.value(0, x0)?,
        ),
        SolutionRef::Discrete(sol) => (
            simulate_discrete(sol, x0, n_paths, seed)?,
            sol.value(0, x0)?,
        ),
    };
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    Ok(McValueReport {
        estimate: mean,
        std_error: se,
        reference,
        z_score: (mean - reference) / se,
        max_risk_excess: samples
            .iter()
            .map(|s| s.1)
            .fold(f64::NEG_INFINITY, f64::max),
        n_paths,
    })
}

fn simulate_continuous(
    sol: &ContinuousSolution,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let mref = sol.merton_reference();
    let ham = Hamiltonian::new(&sol.problem, &mref)?;
    let p = &sol.problem;
    let u = p.utility;
    let times = &sol.times;
    let model = p
        .constraint
        .as_ref()
        .map(|cfg| RiskModel::new(&p.market, cfg, Some(&mref)))
        .transpose()?;
    par_streams(n_paths, seed, |_, rng| {
        let mut x = x0;
        let mut total = 0.0;
        let mut excess = f64::NEG_INFINITY;
        for k in 0..times.len() - 1 {
            let (t, dt) = (times[k], times[k + 1] - times[k]);
            let (mut pi, mut c) = sol.policy(k, x);
            if let Some(m) = &model {
                let pr = m.at(t, x, Regime::Continuous)?;
                // Interpolated grid controls can sit just outside the set:
                // clip the proportion first, lower consumption only if needed.
                if pr.continuous(pi, c) > pr.bound {
                    let pr = ham.point(t, x)?;
                    match ham.interval(pr.as_ref(), c)?.clamp(pi) {
                        Some(p) => pi = p,
                        None => {
                            c = c.min(ham.ceiling(pr.as_ref(), t, x)?);
                            pi = ham.interval(pr.as_ref(), c)?.clamp(pi).unwrap_or(0.0);
                        }
                    }
                }
                let pr = m.at(t, x, Regime::Continuous)?;
                excess = excess.max(pr.continuous(pi, c) - pr.bound);
            }
            let z: f64 = rng.sample(StandardNormal);
            let next = wealth_step_exact(x, pi, c, dt, z * dt.sqrt(), &p.market);
            total += 0.5 * dt * (u.consumption_utility(c * x) + u.consumption_utility(c * next));
            x = next;
        }
        Ok((total + u.eval(x), excess))
    })
}

fn simulate_discrete(
    sol: &DiscreteSolution,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let mref = sol.merton_reference();
    let p = &sol.problem;
    let u = p.utility;
    let law = discrete_return_law(&p.market, p.delta)?;
    let growth = (p.market.r * p.delta).exp();
    let model = p
        .constraint
        .as_ref()
        .map(|cfg| RiskModel::new(&p.market, cfg, Some(&mref)))
        .transpose()?;
    par_streams(n_paths, seed, |_, rng| {
        let mut x = x0;
        let mut total = 0.0;
        let mut excess = f64::NEG_INFINITY;
        for n in 0..p.periods {
            let t = p.time(n);
            let (mut beta, zeta) = sol.policy(n, x);
            let eta = zeta * x;
            if let Some(m) = &model {
                let pr = m.at(t, x, Regime::Discrete)?;
                if !pr.feasible(zeta, beta) {
                    beta = pr.feasible_interval(zeta)?.clamp(beta).unwrap_or(0.0);
                }
                excess = excess.max(pr.exposure_risk(zeta, beta) - pr.bound);
            }
            let phi = beta * (x - eta);
            total += u.consumption_utility(eta);
            let z: f64 = rng.sample(StandardNormal);
            x = growth * (x - eta - phi) + phi * law.sample(z);
        }
        Ok((total + u.eval(x), excess))
    })
}
