use std::sync::Arc;

use perron_core::constructions::{wiener_solve, BoundaryData, BoundaryFn, TensorTerm, WienerConfig};
use perron_core::geometry::{Domain, Point2};
use perron_core::grid::Grid;
use perron_core::harmonic_measure::WosConfig;
use perron_core::poisson::{gamma, laplacian_residual, newtonian_potential, solve_poisson, Monomial, PoissonError, ScalarSource, SolverChoice, SourceField};
use perron_core::values::{ValueSpace, VecValue};

fn wiener() -> SolverChoice {
    SolverChoice::Wiener(WienerConfig::default())
}

fn probes() -> Vec<Point2> {
    vec![Point2::new(0.0, 0.0), Point2::new(0.4, -0.2), Point2::new(-0.3, 0.55), Point2::new(0.7, 0.1)]
}

#[test]
fn fundamental_solution_in_three_dimensions() {
    // −1/(4π r)
    let g = gamma(&[0.0, 2.0, 0.0]).unwrap();
    assert!((g + 1.0 / (8.0 * std::f64::consts::PI)).abs() < 1e-15);
    assert!(matches!(gamma(&[0.0, 0.0]), Err(PoissonError::Singular)));
    assert!(matches!(gamma(&[1.0]), Err(PoissonError::Dimension(1))));
}

#[test]
fn cubic_with_its_laplacian_as_source() {
    // u = x³ + xy, Δu = 6x
    let d = Arc::new(Domain::unit_disk());
    let grid = Grid::covering(&d, 1.0 / 32.0).unwrap();
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::new("cubic", |p| p.x.powi(3) + p.x * p.y));
    let g = SourceField::scalar(d.clone(), ScalarSource::Polynomial { terms: vec![Monomial { px: 1, py: 0, coef: 6.0 }] });
    let s = solve_poisson(&f, &g, grid, &wiener(), &probes()).unwrap();
    for (p, v) in probes().iter().zip(&s.probe_values) {
        let exact = p.x.powi(3) + p.x * p.y;
        assert!((v.get(0) - exact).abs() < 5e-3, "{p:?}: {} vs {exact}", v.get(0));
    }
}

#[test]
fn zero_source_reduces_to_the_dirichlet_solve() {
    let d = Arc::new(Domain::unit_disk());
    let grid = Grid::covering(&d, 1.0 / 32.0).unwrap();
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::fourier_cos(3, Point2::new(0.0, 0.0)));
    let s = solve_poisson(&f, &SourceField::zero(d.clone(), ValueSpace::scalar()), grid, &wiener(), &[]).unwrap();
    let direct = wiener_solve(&f, grid, &WienerConfig::default()).unwrap().field;
    let diff = s.field.unwrap().max_diff(&direct).unwrap();
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn joint_linearity_in_data_and_source() {
    let d = Arc::new(Domain::unit_disk());
    let grid = Grid::covering(&d, 1.0 / 16.0).unwrap();
    let c = Point2::new(0.0, 0.0);
    let f1 = BoundaryData::scalar(d.clone(), BoundaryFn::fourier_sin(1, c));
    let f2 = BoundaryData::scalar(d.clone(), BoundaryFn::constant(2.0));
    let f12 = BoundaryData::scalar(d.clone(), BoundaryFn::new("sum", move |p| BoundaryFn::fourier_sin(1, c).eval(p) + 2.0));
    let gauss = ScalarSource::Gaussian { center: Point2::new(0.2, 0.1), sigma: 0.2, amplitude: 3.0 };
    let g1 = SourceField::scalar(d.clone(), gauss.clone());
    let g2 = SourceField::scalar(d.clone(), ScalarSource::Constant { value: -1.0 });
    let g12 = SourceField::new(d.clone(), ValueSpace::scalar(), vec![0], move |p| vec![gauss.eval(p) - 1.0]).unwrap();
    let a = solve_poisson(&f1, &g1, grid, &wiener(), &probes()).unwrap();
    let b = solve_poisson(&f2, &g2, grid, &wiener(), &probes()).unwrap();
    let s = solve_poisson(&f12, &g12, grid, &wiener(), &probes()).unwrap();
    let sum = a.field.unwrap().add(&b.field.unwrap()).unwrap();
    let diff = sum.max_diff(&s.field.unwrap()).unwrap();
    assert!(diff < 1e-9, "{diff}");
    for k in 0..probes().len() {
        assert!((a.probe_values[k].get(0) + b.probe_values[k].get(0) - s.probe_values[k].get(0)).abs() < 1e-9);
    }
}

#[test]
fn walks_agree_with_the_grid_solution() {
    let d = Arc::new(Domain::unit_disk());
    let grid = Grid::covering(&d, 1.0 / 32.0).unwrap();
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::fourier_cos(1, Point2::new(0.0, 0.0)));
    let g = SourceField::scalar(d.clone(), ScalarSource::Gaussian { center: Point2::new(-0.2, 0.3), sigma: 0.25, amplitude: 2.0 });
    let a = solve_poisson(&f, &g, grid, &wiener(), &probes()).unwrap();
    let b = solve_poisson(&f, &g, grid, &SolverChoice::Wos(WosConfig { n_samples: 20_000, seed: 4, ..Default::default() }), &probes()).unwrap();
    let se = b.probe_stderr.unwrap();
    for k in 0..probes().len() {
        let gap = (a.probe_values[k].get(0) - b.probe_values[k].get(0)).abs();
        assert!(gap <= (5e-3f64).max(4.0 * se[k][0]), "probe {k}: {gap} vs σ {}", se[k][0]);
    }
}

#[test]
fn vector_source_is_componentwise() {
    let d = Arc::new(Domain::unit_disk());
    let grid = Grid::covering(&d, 1.0 / 16.0).unwrap();
    let space = ValueSpace::rn_sup(2);
    let e1 = VecValue::from_slice(space, &[0.0, 1.0]).unwrap();
    let src = ScalarSource::Constant { value: 1.0 };
    let g = SourceField::tensor(d.clone(), space, vec![(src.clone(), e1)]).unwrap();
    let e0 = VecValue::from_slice(space, &[1.0, 0.0]).unwrap();
    let f = BoundaryData::tensor(d.clone(), space, vec![TensorTerm { g: BoundaryFn::fourier_cos(1, Point2::new(0.0, 0.0)), x: e0 }]).unwrap();
    let s = solve_poisson(&f, &g, grid, &wiener(), &probes()).unwrap();
    let scalar = solve_poisson(&BoundaryData::scalar(d.clone(), BoundaryFn::constant(0.0)), &SourceField::scalar(d.clone(), src), grid, &wiener(), &probes()).unwrap();
    for (k, p) in probes().iter().enumerate() {
        assert!((s.probe_values[k].get(0) - p.x).abs() < 1e-9);
        assert!((s.probe_values[k].get(1) - scalar.probe_values[k].get(0)).abs() < 1e-9);
    }
}

#[test]
fn gaussian_source_residual_vanishes_with_h() {
    let d = Arc::new(Domain::unit_disk());
    let g = SourceField::scalar(d.clone(), ScalarSource::Gaussian { center: Point2::new(0.1, -0.1), sigma: 0.3, amplitude: 1.0 });
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::constant(0.0));
    let res = |h: f64| {
        let u = solve_poisson(&f, &g, Grid::covering(&d, h).unwrap(), &wiener(), &[]).unwrap().field.unwrap();
        laplacian_residual(&u, &g, 0.1)
    };
    let (r1, r2) = (res(1.0 / 16.0), res(1.0 / 32.0));
    assert!(r2 < r1 && r2 < 0.05, "{r1} {r2}");
}

#[test]
fn potential_of_a_constant_source_is_rotation_invariant() {
    let d = Arc::new(Domain::unit_disk());
    let grid = Grid::covering(&d, 1.0 / 32.0).unwrap();
    let w = newtonian_potential(&SourceField::scalar(d.clone(), ScalarSource::Constant { value: 1.0 }), grid);
    let p = Point2::new(0.13, -0.27);
    let v = w.eval(p)[0];
    let v2 = w.eval(Point2::new(-0.27, 0.13))[0];
    assert!((v - v2).abs() < 2e-3, "{v} {v2}");
}
