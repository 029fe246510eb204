use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use logdiff_core::{
    evolve, minimize_j, resolvent_step, Field, Grid1D, Nonlinearity, RunConfig, StepConfig,
    TimeSchedule,
};

fn datum(n: usize) -> Field {
    let grid = Grid1D::new(n, 20.0).unwrap();
    Field::from_fn(grid, |x| 4.0 * (-x * x).exp()).unwrap()
}

fn resolvent(c: &mut Criterion) {
    let mut g = c.benchmark_group("resolvent_step");
    for dt in [1e-2, 1.0] {
        let f = datum(1024);
        let cfg = StepConfig::new(dt);
        g.bench_with_input(BenchmarkId::new("newton", dt), &f, |b, f| {
            b.iter(|| resolvent_step(black_box(f), Nonlinearity::Log1p, &cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("lbfgs", dt), &f, |b, f| {
            b.iter(|| minimize_j(black_box(f), Nonlinearity::Log1p, &cfg).unwrap())
        });
    }
    g.finish();
}

fn trajectory(c: &mut Criterion) {
    let mut g = c.benchmark_group("evolve");
    g.sample_size(10);
    let cfg = RunConfig::new(
        datum(512),
        Nonlinearity::Log1p,
        1.0,
        TimeSchedule::Fixed { dt: 0.01 },
    );
    g.bench_function("n512_100_steps", |b| {
        b.iter(|| evolve(black_box(&cfg)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, resolvent, trajectory);
criterion_main!(benches);
