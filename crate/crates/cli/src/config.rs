//! Flat `key = value` run configuration.
//!
//! Values come from built-in defaults, then an optional config file, then
//! `--key value` flags. Every key is registered in [`KEYS`]; anything else is
//! rejected by name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dynrisk_core::experiments::ExperimentSettings;
use dynrisk_core::hjb::{ContinuousProblem, GridSpec};
use dynrisk_core::mdp::{DiscreteProblem, QuadratureSpec};
use dynrisk_core::{
    Benchmark, MarketParams, PowerUtility, Regime, RiskBound, RiskConstraintConfig, RiskConvention,
    RiskMeasureKind, WealthGrid,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DYNRISK_OUTPUT_DIR";

/// Registered keys with their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("market.r", "0.1"),
    ("market.mu", "0.18"),
    ("market.sigma", "0.35"),
    ("utility.gamma", "0.3"),
    ("utility.consumption", "true"),
    ("horizon.T", "2"),
    ("horizon.delta", "1/24"),
    ("risk.measure", "var"),
    ("risk.alpha", "0.01"),
    ("risk.benchmark", "merton"),
    ("risk.bound", "relative"),
    ("risk.level", "0.05"),
    ("risk.convention", "proportions"),
    ("risk.regime", "continuous"),
    ("solver.method", "auto"),
    ("solver.t_steps", "240"),
    ("solver.x_min", "0.1"),
    ("solver.x_max", "10"),
    ("solver.x_steps", "201"),
    ("solver.wealth_min", "0.05"),
    ("solver.wealth_max", "20"),
    ("solver.wealth_nodes", "401"),
    ("solver.quadrature_nodes", "64"),
    ("solver.short_selling", "true"),
    ("solver.export_points", "41"),
    ("control.t", "0"),
    ("control.x", "1"),
    ("control.pi", "0"),
    ("control.c", "0"),
    ("control.phi", "0"),
    ("control.eta", "0"),
    ("simulation.n_paths", "100000"),
    ("simulation.seed", "42"),
    ("simulation.x0", "1"),
    ("simulation.regime", "continuous"),
    (
        "sweep.lambdas",
        "0,0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09,0.1,0.11,0.12,0.13,0.14,0.15",
    ),
    ("sweep.deltas", "1/24,1/12,1/4,1/2,1,2,2.5"),
    ("sweep.delta_horizon", "10"),
    ("sweep.delta_gamma", "0.9"),
    ("output.dir", ""),
    ("output.format", "csv"),
];

/// Short flag names for frequently used keys.
pub const ALIASES: &[(&str, &str)] = &[
    ("alpha", "risk.alpha"),
    ("benchmark", "risk.benchmark"),
    ("bound", "risk.bound"),
    ("delta", "horizon.delta"),
    ("gamma", "utility.gamma"),
    ("level", "risk.level"),
    ("measure", "risk.measure"),
    ("out", "output.dir"),
    ("paths", "simulation.n_paths"),
    ("regime", "risk.regime"),
    ("seed", "simulation.seed"),
    ("T", "horizon.T"),
];

pub fn canonical_key(key: &str) -> CliResult<&'static str> {
    if let Some(&(k, _)) = KEYS.iter().find(|(k, _)| *k == key) {
        return Ok(k);
    }
    if let Some(&(_, k)) = ALIASES.iter().find(|(a, _)| *a == key) {
        return Ok(k);
    }
    Err(CliError::Config(format!(
        "unknown configuration key '{key}'"
    )))
}

/// Raw string values keyed by canonical name.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

impl RawConfig {
    /// Applies a config file. A key may appear only once per file.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        let mut seen = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{origin}:{}: expected 'key = value', got '{line}'",
                    lineno + 1
                ))
            })?;
            let key = canonical_key(key.trim())
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", lineno + 1)))?;
            if let Some(prev) = seen.insert(key, lineno + 1) {
                return Err(CliError::Config(format!(
                    "{origin}:{}: key '{key}' already set on line {prev}",
                    lineno + 1
                )));
            }
            self.values.insert(key, value.trim().to_string());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &'static str, value: String) {
        self.values.insert(key, value);
    }

    fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .expect("registered key")
    }

    fn num(&self, key: &str) -> CliResult<f64> {
        parse_number(self.get(key)).map_err(|e| CliError::Config(format!("{key}: {e}")))
    }

    fn count(&self, key: &str) -> CliResult<usize> {
        let v = self.get(key);
        v.parse::<usize>().map_err(|_| {
            CliError::Config(format!("{key}: expected a nonnegative integer, got '{v}'"))
        })
    }

    fn flag(&self, key: &str) -> CliResult<bool> {
        match self.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(CliError::Config(format!(
                "{key}: expected true or false, got '{v}'"
            ))),
        }
    }

    fn list(&self, key: &str) -> CliResult<Vec<f64>> {
        self.get(key)
            .split(',')
            .map(|s| parse_number(s.trim()).map_err(|e| CliError::Config(format!("{key}: {e}"))))
            .collect()
    }

    fn regime(&self, key: &str) -> CliResult<Regime> {
        match self.get(key) {
            "continuous" => Ok(Regime::Continuous),
            "discrete" => Ok(Regime::Discrete),
            v => Err(CliError::Config(format!(
                "{key}: expected continuous or discrete, got '{v}'"
            ))),
        }
    }

    /// Typed, validated configuration.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let market = MarketParams::new(
            self.num("market.r")?,
            self.num("market.mu")?,
            self.num("market.sigma")?,
        )
        .map_err(config_error)?;
        let gamma = self.num("utility.gamma")?;
        let consumption = self.flag("utility.consumption")?;
        let utility = if consumption {
            PowerUtility::new(gamma)
        } else {
            PowerUtility::terminal_only(gamma)
        }
        .map_err(config_error)?;
        let horizon = self.num("horizon.T")?;
        let delta = self.num("horizon.delta")?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(CliError::Config(format!(
                "horizon.T must be > 0, got {horizon}"
            )));
        }
        if !(delta > 0.0 && delta <= horizon) {
            return Err(CliError::Config(format!(
                "horizon.delta must lie in (0, T], got {delta}"
            )));
        }
        let risk = self.risk(delta)?;
        let method = match self.get("solver.method") {
            "auto" => SolverMethod::Auto,
            "reduced" => SolverMethod::Reduced,
            "grid" => SolverMethod::Grid,
            v => {
                return Err(CliError::Config(format!(
                    "solver.method: expected auto, reduced or grid, got '{v}'"
                )))
            }
        };
        let grid = GridSpec {
            t_steps: self.count("solver.t_steps")?,
            x_min: self.num("solver.x_min")?,
            x_max: self.num("solver.x_max")?,
            x_steps: self.count("solver.x_steps")?,
        };
        grid.validate().map_err(config_error)?;
        let wealth_grid = WealthGrid::new(
            self.num("solver.wealth_min")?,
            self.num("solver.wealth_max")?,
            self.count("solver.wealth_nodes")?,
        )
        .map_err(config_error)?;
        let quadrature = QuadratureSpec {
            node_count: self.count("solver.quadrature_nodes")?,
        };
        quadrature.validate().map_err(config_error)?;
        let solver = SolverConfig {
            method,
            grid,
            wealth_grid,
            quadrature,
            short_selling: self.flag("solver.short_selling")?,
            export_points: self.count("solver.export_points")?.max(2),
        };
        let control = ControlConfig {
            t: self.num("control.t")?,
            x: self.num("control.x")?,
            pi: self.num("control.pi")?,
            c: self.num("control.c")?,
            phi: self.num("control.phi")?,
            eta: self.num("control.eta")?,
        };
        let seed_text = self.get("simulation.seed");
        let simulation = SimulationConfig {
            n_paths: self.count("simulation.n_paths")?,
            seed: seed_text.parse().map_err(|_| {
                CliError::Config(format!(
                    "simulation.seed: expected an unsigned integer, got '{seed_text}'"
                ))
            })?,
            x0: self.num("simulation.x0")?,
            regime: self.regime("simulation.regime")?,
        };
        if simulation.n_paths < 2 || !(simulation.x0 > 0.0) {
            return Err(CliError::Config(
                "simulation needs n_paths >= 2 and x0 > 0".into(),
            ));
        }
        let sweep = SweepConfig {
            lambdas: self.list("sweep.lambdas")?,
            deltas: self.list("sweep.deltas")?,
            delta_horizon: self.num("sweep.delta_horizon")?,
            delta_gamma: self.num("sweep.delta_gamma")?,
        };
        if sweep.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(CliError::Config("sweep.lambdas must be >= 0".into()));
        }
        if sweep.deltas.iter().any(|d| !(*d > 0.0)) || !(sweep.delta_horizon > 0.0) {
            return Err(CliError::Config(
                "sweep.deltas and sweep.delta_horizon must be > 0".into(),
            ));
        }
        PowerUtility::new(sweep.delta_gamma).map_err(config_error)?;
        let dir = match self.get("output.dir") {
            "" => std::env::var(OUTPUT_DIR_ENV).unwrap_or_else(|_| "out".to_string()),
            d => d.to_string(),
        };
        let format = match self.get("output.format") {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            v => {
                return Err(CliError::Config(format!(
                    "output.format: expected csv or json, got '{v}'"
                )))
            }
        };
        Ok(RunConfig {
            market,
            utility,
            horizon,
            delta,
            risk,
            solver,
            control,
            simulation,
            sweep,
            output: OutputConfig {
                dir: PathBuf::from(dir),
                format,
            },
        })
    }

    fn risk(&self, delta: f64) -> CliResult<Option<RiskConfig>> {
        let alpha = self.num("risk.alpha")?;
        let kind = match self.get("risk.measure") {
            "none" => return Ok(None),
            "var" => RiskMeasureKind::VaR(alpha),
            "tce" => RiskMeasureKind::Tce(alpha),
            "el" => RiskMeasureKind::El,
            v => {
                return Err(CliError::Config(format!(
                    "risk.measure: expected var, tce, el or none, got '{v}'"
                )))
            }
        };
        let benchmark = parse_benchmark(self.get("risk.benchmark"))?;
        let level = self.num("risk.level")?;
        let bound = match self.get("risk.bound") {
            "relative" => RiskBound::Relative(level),
            "absolute" => RiskBound::Absolute(level),
            v => {
                return Err(CliError::Config(format!(
                    "risk.bound: expected relative or absolute, got '{v}'"
                )))
            }
        };
        let convention = match self.get("risk.convention") {
            "proportions" => RiskConvention::FrozenProportions,
            "shares" => RiskConvention::FrozenShares,
            v => {
                return Err(CliError::Config(format!(
                    "risk.convention: expected proportions or shares, got '{v}'"
                )))
            }
        };
        let constraint = RiskConstraintConfig::new(kind, benchmark, bound, delta)
            .map_err(config_error)?
            .with_convention(convention);
        Ok(Some(RiskConfig {
            constraint,
            regime: self.regime("risk.regime")?,
        }))
    }

    /// Resolved key/value pairs in key order.
    pub fn entries(&self) -> &BTreeMap<&'static str, String> {
        &self.values
    }
}

fn config_error(e: dynrisk_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Parses a decimal number or a fraction `a/b`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let parsed = match s.split_once('/') {
        Some((a, b)) => match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(a), Ok(b)) if b != 0.0 => Ok(a / b),
            _ => Err(()),
        },
        None => s.parse::<f64>().map_err(|_| ()),
    };
    match parsed {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got '{s}'")),
    }
}

/// `merton`, `fraction:P`, `constant:Y` or `table:T1:Y1;T2:Y2;...`.
pub fn parse_benchmark(s: &str) -> CliResult<Benchmark> {
    let bad = || CliError::Config(format!("risk.benchmark: cannot parse '{s}'"));
    let (name, arg) = s.split_once(':').unwrap_or((s, ""));
    let b = match name {
        "merton" if arg.is_empty() => Benchmark::MertonConditionalExpectation,
        "fraction" => Benchmark::FractionOfWealth(parse_number(arg).map_err(|_| bad())?),
        "constant" => Benchmark::Constant(parse_number(arg).map_err(|_| bad())?),
        "table" => Benchmark::DeterministicTable(
            arg.split(';')
                .map(|kv| {
                    let (t, y) = kv.split_once(':').ok_or_else(bad)?;
                    Ok((
                        parse_number(t.trim()).map_err(|_| bad())?,
                        parse_number(y.trim()).map_err(|_| bad())?,
                    ))
                })
                .collect::<CliResult<Vec<_>>>()?,
        ),
        _ => return Err(bad()),
    };
    b.validate().map_err(config_error)?;
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolverMethod {
    /// Reduced solver for homogeneous configurations, grid otherwise.
    Auto,
    Reduced,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskConfig {
    pub constraint: RiskConstraintConfig,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub grid: GridSpec,
    pub wealth_grid: WealthGrid,
    pub quadrature: QuadratureSpec,
    pub short_selling: bool,
    pub export_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlConfig {
    pub t: f64,
    pub x: f64,
    pub pi: f64,
    pub c: f64,
    pub phi: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub delta_horizon: f64,
    pub delta_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub market: MarketParams,
    pub utility: PowerUtility,
    pub horizon: f64,
    pub delta: f64,
    pub risk: Option<RiskConfig>,
    pub solver: SolverConfig,
    pub control: ControlConfig,
    pub simulation: SimulationConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn constraint(&self) -> Option<RiskConstraintConfig> {
        self.risk.as_ref().map(|r| r.constraint.clone())
    }

    pub fn continuous_problem(&self) -> ContinuousProblem {
        let p = ContinuousProblem::new(self.market, self.utility, self.horizon, self.constraint());
        if self.solver.short_selling {
            p
        } else {
            p.without_short_selling()
        }
    }

    pub fn periods(&self) -> CliResult<usize> {
        let n = (self.horizon / self.delta).round();
        if n < 1.0 || (n * self.delta - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(CliError::Config(format!(
                "horizon.delta = {} does not divide horizon.T = {}",
                self.delta, self.horizon
            )));
        }
        Ok(n as usize)
    }

    pub fn discrete_problem(&self) -> CliResult<DiscreteProblem> {
        Ok(DiscreteProblem {
            market: self.market,
            utility: self.utility,
            periods: self.periods()?,
            delta: self.delta,
            constraint: self.constraint(),
            quadrature: self.solver.quadrature,
        })
    }

    pub fn experiment_settings(&self) -> ExperimentSettings {
        let (alpha, lambda) = match &self.risk {
            Some(r) => (
                r.constraint.kind.alpha().unwrap_or(0.01),
                match r.constraint.bound {
                    RiskBound::Relative(l) | RiskBound::Absolute(l) => l,
                },
            ),
            None => (0.01, 0.05),
        };
        let steps_per_year =
            ((self.solver.grid.t_steps as f64 / self.horizon).round() as usize).max(1);
        ExperimentSettings {
            market: self.market,
            gamma: self.utility.gamma(),
            horizon: self.horizon,
            delta: self.delta,
            alpha,
            lambda,
            absolute_level: lambda,
            steps_per_year,
            grid: self.solver.grid,
            wealth_grid: self.solver.wealth_grid,
            quadrature: self.solver.quadrature,
            lambdas: self.sweep.lambdas.clone(),
            deltas: self.sweep.deltas.clone(),
            delta_sweep_horizon: self.sweep.delta_horizon,
            delta_sweep_gamma: self.sweep.delta_gamma,
            export_points: self.solver.export_points,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_the_baseline() {
        let cfg = RawConfig::default().resolve().unwrap();
        assert_eq!(cfg.market, MarketParams::baseline());
        assert_eq!(cfg.utility.gamma(), 0.3);
        assert_eq!(cfg.horizon, 2.0);
        assert!((cfg.delta - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(
            cfg.risk.as_ref().unwrap().constraint.kind,
            RiskMeasureKind::VaR(0.01)
        );
        assert_eq!(cfg.periods().unwrap(), 48);
    }

    #[test]
    fn file_parsing() {
        let mut raw = RawConfig::default();
        raw.apply_text(
            "# comment\nrisk.alpha = 0.05  # trailing\n\ngamma=0.5\n",
            "test",
        )
        .unwrap();
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.utility.gamma(), 0.5);
        assert_eq!(
            cfg.risk.unwrap().constraint.kind,
            RiskMeasureKind::VaR(0.05)
        );
        let err = RawConfig::default()
            .apply_text("risk.nope = 1", "test")
            .unwrap_err();
        assert!(err.to_string().contains("risk.nope"));
        assert!(RawConfig::default()
            .apply_text("gamma = 1\nutility.gamma = 2", "t")
            .is_err());
        assert!(RawConfig::default().apply_text("just text", "t").is_err());
    }

    #[test]
    fn value_parsing() {
        assert_eq!(parse_number("1/4").unwrap(), 0.25);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("nan").is_err());
        assert_eq!(
            parse_benchmark("fraction:1.0").unwrap(),
            Benchmark::FractionOfWealth(1.0)
        );
        assert_eq!(
            parse_benchmark("table:0:1;1:1.1").unwrap(),
            Benchmark::DeterministicTable(vec![(0.0, 1.0), (1.0, 1.1)])
        );
        assert!(parse_benchmark("fraction:-1").is_err());
        assert!(parse_benchmark("merton:2").is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (k, v) in [
            ("market.sigma", "0"),
            ("utility.gamma", "1"),
            ("risk.alpha", "1.5"),
            ("horizon.delta", "3"),
        ] {
            let mut raw = RawConfig::default();
            raw.set(canonical_key(k).unwrap(), v.to_string());
            assert!(
                matches!(raw.resolve(), Err(CliError::Config(_))),
                "{k} = {v}"
            );
        }
    }
}
