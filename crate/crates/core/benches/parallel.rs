use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tensormg::discretize::{assemble_affine_family, CookieGeometry, ParameterGrid};
use tensormg::multigrid::SmootherKind;
use tensormg::oracle::{two_grid_contraction, verify_galerkin, verify_smoothing, SmoothingSetup, TwoGridSetup};
use tensormg::par::Execution;

fn oracle_sweeps(c: &mut Criterion) {
    let family = assemble_affine_family(&CookieGeometry::two_cookie(), 7, 1).unwrap();
    let pgrid = ParameterGrid::uniform(2, 0.0, 0.25, 5).unwrap();
    let samples: Vec<Vec<f64>> = pgrid.indices().iter().map(|i| pgrid.point(i)).collect();
    let smoothing = SmoothingSetup {
        kind: SmootherKind::ModifiedJacobi,
        expsum_k: 10,
        omega_factor: 1.0,
        nu_max: 8,
    };
    let twogrid = TwoGridSetup {
        kind: SmootherKind::ModifiedJacobi,
        omega: 0.5,
        expsum_k: 10,
    };

    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let label = format!("{exec:?}");
        group.bench_with_input(BenchmarkId::new("galerkin", &label), &exec, |b, &exec| {
            b.iter(|| verify_galerkin(&family, &samples, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("smoothing_7x7", &label), &exec, |b, &exec| {
            b.iter(|| verify_smoothing(&family, &pgrid, 0, &smoothing, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("twogrid_15x15", &label), &exec, |b, &exec| {
            b.iter(|| two_grid_contraction(&family, &pgrid, 1, &[2, 5], &twogrid, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, oracle_sweeps);
criterion_main!(benches);
