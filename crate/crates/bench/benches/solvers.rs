use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use geqhom_core::gequation::RepOptions;
use geqhom_core::traveltime::{SolverGraph, StopRule};
use geqhom_core::{sample_field, solve_geq, ueps_rep, DriftSign, FieldSpec, Grid2, InitialData, Vec2};

fn lattice(c: &mut Criterion) {
    let f = sample_field(&FieldSpec::cellular(1.0), 0).unwrap();
    let mut group = c.benchmark_group("travel_time");
    group.sample_size(10);
    for side in [101usize, 201, 401] {
        let h = 0.05;
        let grid = Grid2::new(Vec2::ZERO, h * (side / 2) as f64, h, 3).unwrap();
        group.bench_with_input(BenchmarkId::new("build_graph", side), &grid, |b, g| {
            b.iter(|| SolverGraph::new(&f, *g, DriftSign::Minus, 1.0).unwrap())
        });
        let graph = SolverGraph::new(&f, grid, DriftSign::Minus, 1.0).unwrap();
        group.bench_with_input(BenchmarkId::new("solve", side), &graph, |b, g| {
            b.iter(|| g.solve(&[Vec2::ZERO], &StopRule::default()).unwrap())
        });
    }
    group.finish();
}

fn front(c: &mut Criterion) {
    let f = sample_field(&FieldSpec::shear(2.0), 0).unwrap();
    let u0 = InitialData::cosine(1.0, 0.0);
    let mut group = c.benchmark_group("front");
    group.sample_size(10);
    let domain = Grid2::new(Vec2::ZERO, 4.0, 0.04, 1).unwrap();
    group.bench_function("lax_friedrichs_t1", |b| {
        b.iter(|| solve_geq(&f, 0.5, &u0, &[1.0], &domain, 0.9, None).unwrap())
    });
    let eval = Grid2::new(Vec2::ZERO, 1.0, 0.25, 1).unwrap();
    group.bench_function("ueps_rep_t1", |b| {
        b.iter(|| ueps_rep(&f, 0.5, &u0, &[1.0], &eval, &RepOptions { h: 0.05, stencil: 3 }).unwrap())
    });
    group.finish();
}

criterion_group!(benches, lattice, front);
criterion_main!(benches);
