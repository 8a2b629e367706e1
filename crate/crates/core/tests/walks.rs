use std::sync::Arc;

use perron_core::constructions::{BoundaryData, BoundaryFn};
use perron_core::geometry::{BaseShape, Domain, Point2};
use perron_core::harmonic_measure::{wos, wos_field, PunctureMode, WosConfig};

fn annulus() -> Arc<Domain> {
    Arc::new(Domain::new(BaseShape::Annulus { center: Point2::new(0.0, 0.0), r_in: 0.25, r_out: 1.0 }, Vec::new()).unwrap())
}

#[test]
fn outer_circle_measure_on_the_annulus_is_logarithmic() {
    let d = annulus();
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::new("outer", |p| if p.norm() > 0.6 { 1.0 } else { 0.0 }));
    let cfg = WosConfig { n_samples: 20_000, seed: 5, ..Default::default() };
    for r in [0.35, 0.5, 0.8] {
        let est = wos(&f, Point2::from_polar(Point2::new(0.0, 0.0), r, 0.7), &cfg).unwrap();
        let exact = (r / 0.25f64).ln() / 4f64.ln();
        let z = (est.mean.get(0) - exact) / est.stderr[0];
        assert!(z.abs() < 4.0, "r={r}: {} vs {exact} (z={z})", est.mean.get(0));
    }
}

#[test]
fn poisson_kernel_mean_on_the_disk() {
    let d = Arc::new(Domain::unit_disk());
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::fourier_cos(2, Point2::new(0.0, 0.0)));
    let probes = [Point2::new(0.3, 0.2), Point2::new(-0.5, 0.1)];
    let est = wos_field(&f, &probes, &WosConfig { n_samples: 20_000, seed: 9, ..Default::default() }).unwrap();
    for (p, e) in probes.iter().zip(&est) {
        let exact = p.x * p.x - p.y * p.y;
        assert!((e.mean.get(0) - exact).abs() < 4.0 * e.stderr[0] + 1e-3, "{p:?}");
    }
}

#[test]
fn seeds_determine_the_estimate() {
    let d = Arc::new(Domain::unit_disk());
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::fourier_sin(1, Point2::new(0.0, 0.0)));
    let cfg = WosConfig { n_samples: 2_000, seed: 1, ..Default::default() };
    let p = Point2::new(0.1, 0.4);
    assert_eq!(wos(&f, p, &cfg).unwrap(), wos(&f, p, &cfg).unwrap());
    assert_ne!(wos(&f, p, &cfg).unwrap().mean, wos(&f, p, &WosConfig { seed: 2, ..cfg }).unwrap().mean);
}

#[test]
fn ignored_puncture_is_never_hit() {
    let d = Arc::new(Domain::punctured_unit_disk());
    let f = BoundaryData::scalar(d.clone(), BoundaryFn::constant(0.0)).with_puncture_values(&[perron_core::values::VecValue::scalar(7.0)]).unwrap();
    let est = wos(&f, Point2::new(0.05, 0.0), &WosConfig { n_samples: 2_000, ..Default::default() }).unwrap();
    assert_eq!(est.n_puncture_captures, 0);
    assert_eq!(est.mean.get(0), 0.0);
    let strict = WosConfig { n_samples: 2_000, puncture_mode: PunctureMode::Strict { capture_radius: 0.02 }, ..Default::default() };
    let est = wos(&f, Point2::new(0.05, 0.0), &strict).unwrap();
    assert!(est.n_puncture_captures > 0);
    assert!((est.mean.get(0) - 7.0 * est.capture_fraction()).abs() < 1e-12);
}
