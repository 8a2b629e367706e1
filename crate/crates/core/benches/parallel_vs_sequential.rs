use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use perron_core::constructions::{wiener_solve, BoundaryData, BoundaryFn, WienerConfig};
use perron_core::geometry::{Domain, Point2};
use perron_core::grid::Grid;
use perron_core::harmonic_measure::{wos_field, WosConfig};
use perron_core::par::{set_exec, Exec};
use perron_core::poisson::{newtonian_potential, ScalarSource, SourceField};

const MODES: [(Exec, &str); 2] = [(Exec::Sequential, "sequential"), (Exec::Parallel, "parallel")];

fn walks(c: &mut Criterion) {
    let d = Arc::new(Domain::punctured_unit_disk());
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::fourier_cos(2, Point2::new(0.0, 0.0)));
    let probes: Vec<Point2> = (0..16).map(|k| Point2::from_polar(Point2::new(0.0, 0.0), 0.3 + 0.03 * k as f64, 0.7 * k as f64)).collect();
    let cfg = WosConfig { n_samples: 2_000, seed: 1, ..Default::default() };
    let mut g = c.benchmark_group("wos_field");
    for (mode, name) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_exec(mode);
            b.iter(|| wos_field(&f, &probes, &cfg).unwrap())
        });
    }
    g.finish();
}

fn potential(c: &mut Criterion) {
    let d = Arc::new(Domain::unit_disk());
    let grid = Grid::covering(&d, 1.0 / 64.0).unwrap();
    let src = SourceField::scalar(d, ScalarSource::Gaussian { center: Point2::new(0.2, -0.1), sigma: 0.3, amplitude: 1.0 });
    let mut g = c.benchmark_group("newtonian_potential");
    g.sample_size(10);
    for (mode, name) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_exec(mode);
            b.iter(|| newtonian_potential(&src, grid))
        });
    }
    g.finish();
}

fn wiener(c: &mut Criterion) {
    let d = Arc::new(Domain::unit_disk());
    let grid = Grid::covering(&d, 1.0 / 64.0).unwrap();
    let f = BoundaryData::scalar(d, BoundaryFn::fourier_sin(3, Point2::new(0.0, 0.0)));
    // first call builds and caches the factorizations
    wiener_solve(&f, grid, &WienerConfig::default()).unwrap();
    let mut g = c.benchmark_group("wiener_solve");
    g.sample_size(10);
    for (mode, name) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            set_exec(mode);
            b.iter(|| wiener_solve(&f, grid, &WienerConfig::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, walks, potential, wiener);
criterion_main!(benches);
