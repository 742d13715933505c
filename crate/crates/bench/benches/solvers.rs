use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dynrisk_core::merton::merton_continuous;
use dynrisk_core::*;

fn var_relative(lambda: f64) -> RiskConstraintConfig {
    RiskConstraintConfig::new(
        RiskMeasureKind::VaR(0.01),
        Benchmark::MertonConditionalExpectation,
        RiskBound::Relative(lambda),
        1.0 / 24.0,
    )
    .unwrap()
}

fn continuous(constraint: Option<RiskConstraintConfig>) -> ContinuousProblem {
    ContinuousProblem::new(
        MarketParams::baseline(),
        PowerUtility::new(0.3).unwrap(),
        2.0,
        constraint,
    )
}

fn discrete(constraint: Option<RiskConstraintConfig>) -> DiscreteProblem {
    DiscreteProblem {
        market: MarketParams::baseline(),
        utility: PowerUtility::new(0.3).unwrap(),
        periods: 48,
        delta: 1.0 / 24.0,
        constraint,
        quadrature: QuadratureSpec::default(),
    }
}

fn risk_benchmark(c: &mut Criterion) {
    let m = MarketParams::baseline();
    let cfg = var_relative(0.05);
    let reference = MertonReference::Continuous(
        merton_continuous(&m, &PowerUtility::new(0.3).unwrap(), 2.0).unwrap(),
    );
    let model = RiskModel::new(&m, &cfg, Some(&reference)).unwrap();
    c.bench_function("continuous VaR closed form", |b| {
        b.iter(|| {
            model.risk_continuous(
                black_box(0.5),
                black_box(1.0),
                black_box(1.2),
                black_box(0.2),
            )
        })
    });
    c.bench_function("continuous feasible interval", |b| {
        b.iter(|| {
            model.feasible_interval(
                black_box(0.5),
                black_box(1.0),
                black_box(0.2),
                Regime::Continuous,
            )
        })
    });
}

fn solver_benchmark(c: &mut Criterion) {
    let p = continuous(Some(var_relative(0.05)));
    c.bench_function("continuous reduced solver, 240 steps", |b| {
        b.iter(|| hjb::solve_relative(black_box(&p), 240).unwrap())
    });
    let p = discrete(Some(var_relative(0.05)));
    c.bench_function("discrete reduced solver, 48 periods", |b| {
        b.iter(|| mdp::solve_relative(black_box(&p)).unwrap())
    });

    let mut group = c.benchmark_group("grid solvers");
    group.sample_size(10);
    let p = continuous(None);
    let spec = GridSpec {
        t_steps: 60,
        x_min: 0.2,
        x_max: 5.0,
        x_steps: 81,
    };
    group.bench_function("continuous grid, 60 x 81, unconstrained", |b| {
        b.iter(|| hjb::solve_general(black_box(&p), &spec).unwrap())
    });
    let p = discrete(None);
    let grid = WealthGrid::new(0.05, 20.0, 101).unwrap();
    group.bench_function("discrete grid, 101 nodes, unconstrained", |b| {
        b.iter(|| mdp::solve_general(black_box(&p), &grid).unwrap())
    });
    group.finish();
}

criterion_group!(benches, risk_benchmark, solver_benchmark);
criterion_main!(benches);
