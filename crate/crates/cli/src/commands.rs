use std::collections::BTreeMap;
use std::time::Instant;

use dynrisk_core::experiments::{
    self, continuous_surface_table, discrete_surface_table, mc_value_check, Cell, SolutionRef,
    Table,
};
use dynrisk_core::merton::{merton_continuous, merton_discrete};
use dynrisk_core::{
    hjb, mdp, ContinuousSolution, Control, DiscreteSolution, MertonReference, Regime, RiskModel,
    WealthGrid,
};

use crate::config::{RawConfig, RunConfig, SolverMethod};
use crate::error::{CliError, CliResult};
use crate::output::OutputWriter;

pub const COMMANDS: [&str; 7] = [
    "merton",
    "risk",
    "solve-continuous",
    "solve-discrete",
    "simulate",
    "efficiency",
    "experiment",
];

/// Wall-clock per named stage.
#[derive(Default)]
struct Stopwatch {
    stages: Vec<(String, f64)>,
}

impl Stopwatch {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages
            .push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }
}

pub fn run(command: &str, experiment: Option<&str>, raw: &RawConfig) -> CliResult<()> {
    let cfg = raw.resolve()?;
    match command {
        "merton" => merton(&cfg),
        "risk" => risk(&cfg),
        "solve-continuous" => solve_continuous_cmd(&cfg, raw),
        "solve-discrete" => solve_discrete_cmd(&cfg, raw),
        "simulate" => simulate(&cfg, raw),
        "efficiency" => efficiency(&cfg, raw),
        "experiment" => {
            let name = experiment.ok_or_else(|| {
                CliError::Usage(format!(
                    "experiment needs a recipe name: {}",
                    experiments::RECIPES.join(", ")
                ))
            })?;
            experiment_cmd(name, &cfg, raw)
        }
        other => Err(CliError::Usage(format!(
            "unknown command '{other}'; expected one of {}",
            COMMANDS.join(", ")
        ))),
    }
}

fn merton(cfg: &RunConfig) -> CliResult<()> {
    let m = merton_continuous(&cfg.market, &cfg.utility, cfg.horizon)?;
    println!("pi_m = {}", m.pi_m);
    println!("tau = {}", m.tau);
    println!("c_m(0) = {}", m.consumption_rate(0.0));
    println!("value_coefficient(0) = {}", m.value_coefficient(0.0));
    if let Ok(n) = cfg.periods() {
        let d = merton_discrete(
            &cfg.market,
            &cfg.utility,
            n,
            cfg.delta,
            cfg.solver.quadrature,
        )?;
        println!("beta_m(0) = {}", d.beta_m[0]);
        println!("zeta_m(0) = {}", d.zeta_m[0]);
        println!("d(0) = {}", d.d[0]);
    }
    Ok(())
}

fn merton_reference(cfg: &RunConfig, regime: Regime) -> CliResult<MertonReference> {
    Ok(match regime {
        Regime::Continuous => {
            MertonReference::Continuous(merton_continuous(&cfg.market, &cfg.utility, cfg.horizon)?)
        }
        Regime::Discrete => MertonReference::Discrete(merton_discrete(
            &cfg.market,
            &cfg.utility,
            cfg.periods()?,
            cfg.delta,
            cfg.solver.quadrature,
        )?),
    })
}

fn risk(cfg: &RunConfig) -> CliResult<()> {
    let rc = cfg
        .risk
        .as_ref()
        .ok_or_else(|| CliError::Config("risk needs risk.measure other than none".into()))?;
    let reference = merton_reference(cfg, rc.regime)?;
    let model = RiskModel::new(&cfg.market, &rc.constraint, Some(&reference))?;
    let c = cfg.control;
    let (value, control) = match rc.regime {
        Regime::Continuous => (
            model.risk_continuous(c.t, c.x, c.pi, c.c)?,
            Control::Continuous { pi: c.pi, c: c.c },
        ),
        Regime::Discrete => (
            model.risk_discrete(c.t, c.x, c.phi, c.eta)?,
            Control::Discrete {
                phi: c.phi,
                eta: c.eta,
            },
        ),
    };
    println!("risk = {value}");
    println!("bound = {}", model.bound(c.x));
    println!(
        "benchmark = {}",
        model.benchmark_value(c.t, c.x, rc.regime)?
    );
    println!("feasible = {}", model.is_feasible(c.t, c.x, control)?);
    Ok(())
}

fn use_reduced(cfg: &RunConfig) -> bool {
    match cfg.solver.method {
        SolverMethod::Reduced => true,
        SolverMethod::Grid => false,
        SolverMethod::Auto => cfg
            .risk
            .as_ref()
            .is_none_or(|r| r.constraint.is_homogeneous()),
    }
}

fn solve_continuous(cfg: &RunConfig) -> CliResult<ContinuousSolution> {
    let problem = cfg.continuous_problem();
    problem.validate()?;
    Ok(if use_reduced(cfg) {
        hjb::solve_relative(&problem, cfg.solver.grid.t_steps)?
    } else {
        hjb::solve_general(&problem, &cfg.solver.grid)?
    })
}

fn solve_discrete(cfg: &RunConfig) -> CliResult<DiscreteSolution> {
    let problem = cfg.discrete_problem()?;
    problem.validate()?;
    Ok(if use_reduced(cfg) {
        mdp::solve_relative(&problem)?
    } else {
        mdp::solve_general(&problem, &cfg.solver.wealth_grid)?
    })
}

fn export_wealth(cfg: &RunConfig, x_min: f64, x_max: f64) -> Vec<f64> {
    WealthGrid {
        x_min,
        x_max,
        nodes: cfg.solver.export_points,
    }
    .points()
}

fn solve_continuous_cmd(cfg: &RunConfig, raw: &RawConfig) -> CliResult<()> {
    let mut clock = Stopwatch::default();
    let sol = clock.time("solve", || solve_continuous(cfg))?;
    let xs = export_wealth(cfg, cfg.solver.grid.x_min, cfg.solver.grid.x_max);
    let grid_surface = matches!(sol.surface, hjb::ContinuousSurface::Grid { .. });
    let table =
        continuous_surface_table("value_surface", &sol, (!grid_surface).then_some(&xs[..]))?;
    let x0 = cfg.simulation.x0;
    let (pi, c) = sol.policy(0, x0);
    let mut scalars = BTreeMap::new();
    scalars.insert("x0".into(), x0);
    scalars.insert("value_x0".into(), sol.value(0, x0)?);
    scalars.insert("merton_value_x0".into(), sol.merton.value(0.0, x0));
    scalars.insert("pi_x0".into(), pi);
    scalars.insert("c_x0".into(), c);
    scalars.insert("iterations".into(), sol.iterations as f64);
    scalars.insert("converged".into(), f64::from(u8::from(sol.converged)));
    scalars.insert("residual".into(), sol.residual);
    print_scalars(&scalars);
    finish(cfg, raw, "solve-continuous", &[table], &scalars, clock)
}

fn solve_discrete_cmd(cfg: &RunConfig, raw: &RawConfig) -> CliResult<()> {
    let mut clock = Stopwatch::default();
    let sol = clock.time("solve", || solve_discrete(cfg))?;
    let g = cfg.solver.wealth_grid;
    let xs = export_wealth(cfg, g.x_min, g.x_max);
    let grid_surface = matches!(sol.surface, mdp::DiscreteSurface::Grid { .. });
    let table = discrete_surface_table("value_surface", &sol, (!grid_surface).then_some(&xs[..]))?;
    let x0 = cfg.simulation.x0;
    let (beta, zeta) = sol.policy(0, x0);
    let mut scalars = BTreeMap::new();
    scalars.insert("x0".into(), x0);
    scalars.insert("value_x0".into(), sol.value(0, x0)?);
    scalars.insert(
        "merton_value_x0".into(),
        cfg.utility.separable(x0, sol.merton.d[0]),
    );
    scalars.insert("beta_x0".into(), beta);
    scalars.insert("zeta_x0".into(), zeta);
    print_scalars(&scalars);
    finish(cfg, raw, "solve-discrete", &[table], &scalars, clock)
}

fn simulate(cfg: &RunConfig, raw: &RawConfig) -> CliResult<()> {
    let mut clock = Stopwatch::default();
    let sim = cfg.simulation;
    let report = match sim.regime {
        Regime::Continuous => {
            let sol = clock.time("solve", || solve_continuous(cfg))?;
            clock.time("simulate", || {
                mc_value_check(SolutionRef::Continuous(&sol), sim.x0, sim.n_paths, sim.seed)
            })?
        }
        Regime::Discrete => {
            let sol = clock.time("solve", || solve_discrete(cfg))?;
            clock.time("simulate", || {
                mc_value_check(SolutionRef::Discrete(&sol), sim.x0, sim.n_paths, sim.seed)
            })?
        }
    };
    let mut table = Table::new(
        "mc_value",
        &[
            "estimate",
            "std_error",
            "reference",
            "z_score",
            "max_risk_excess",
            "n_paths",
        ],
    );
    table.push(vec![
        Cell::Num(report.estimate),
        Cell::Num(report.std_error),
        Cell::Num(report.reference),
        Cell::Num(report.z_score),
        Cell::Num(report.max_risk_excess),
        Cell::Int(report.n_paths as i64),
    ]);
    let mut scalars = BTreeMap::new();
    scalars.insert("estimate".into(), report.estimate);
    scalars.insert("std_error".into(), report.std_error);
    scalars.insert("reference".into(), report.reference);
    scalars.insert("z_score".into(), report.z_score);
    scalars.insert("max_risk_excess".into(), report.max_risk_excess);
    print_scalars(&scalars);
    finish(cfg, raw, "simulate", &[table], &scalars, clock)
}

fn efficiency(cfg: &RunConfig, raw: &RawConfig) -> CliResult<()> {
    let rc = cfg
        .risk
        .as_ref()
        .ok_or_else(|| CliError::Config("efficiency needs risk.measure other than none".into()))?;
    let settings = cfg.experiment_settings();
    let mut clock = Stopwatch::default();
    let report = clock.time("sweep", || match rc.regime {
        Regime::Continuous => experiments::continuous_lambda_sweep(&settings, rc.constraint.kind),
        Regime::Discrete => experiments::discrete_lambda_sweep(&settings, rc.constraint.kind),
    })?;
    let mut scalars = BTreeMap::new();
    for p in &report.points {
        let key = format!("loss_lambda_{}", p.sweep_value);
        println!("{key} = {}", 1.0 - p.efficiency);
        scalars.insert(key, 1.0 - p.efficiency);
    }
    finish(
        cfg,
        raw,
        "efficiency",
        &[report.to_table("efficiency")],
        &scalars,
        clock,
    )
}

fn experiment_cmd(name: &str, cfg: &RunConfig, raw: &RawConfig) -> CliResult<()> {
    let settings = cfg.experiment_settings();
    let mut clock = Stopwatch::default();
    let out = clock.time(name, || experiments::run_experiment(name, &settings))?;
    print_scalars(&out.summary);
    let sub = cfg.output.dir.join(name);
    let mut writer = OutputWriter::create(&sub, cfg.output.format)?;
    for t in &out.tables {
        writer.table(t)?;
    }
    writer.summary(&format!("experiment {name}"), raw, cfg, &out.summary)?;
    writer.timings(&clock.stages)?;
    report_files(&writer);
    Ok(())
}

fn finish(
    cfg: &RunConfig,
    raw: &RawConfig,
    command: &str,
    tables: &[Table],
    scalars: &BTreeMap<String, f64>,
    clock: Stopwatch,
) -> CliResult<()> {
    let mut writer = OutputWriter::create(&cfg.output.dir.join(command), cfg.output.format)?;
    for t in tables {
        writer.table(t)?;
    }
    writer.summary(command, raw, cfg, scalars)?;
    writer.timings(&clock.stages)?;
    report_files(&writer);
    Ok(())
}

fn print_scalars(scalars: &BTreeMap<String, f64>) {
    for (k, v) in scalars {
        println!("{k} = {v}");
    }
}

fn report_files(writer: &OutputWriter) {
    for p in writer.written() {
        eprintln!("wrote {}", p.display());
    }
}
