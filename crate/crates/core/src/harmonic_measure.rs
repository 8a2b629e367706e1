//! Walk-on-spheres estimates of H_f(ξ) = ∫ f dμ_ξ.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constructions::BoundaryData;
use crate::geometry::{DistanceMode, GeometryError, Point2};
use crate::par;
use crate::values::VecValue;

/// Samples per reduction chunk. Chunk statistics are merged in index order,
/// so results do not depend on the number of workers.
const SAMPLE_CHUNK: usize = 1024;

/// Fraction of capped walks above which an estimate is flagged.
const CAP_HEAVY: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WosError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid walk-on-spheres configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PunctureMode {
    /// Distances ignore punctures; walks can never hit one.
    Ignore,
    /// Walks entering the capture disk of a puncture record its value.
    Strict { capture_radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WosConfig {
    /// Defaults to 1e-4·diam.
    pub eps_shell: Option<f64>,
    pub max_steps: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub puncture_mode: PunctureMode,
}

impl Default for WosConfig {
    fn default() -> Self {
        Self { eps_shell: None, max_steps: 10_000, n_samples: 10_000, seed: 0, puncture_mode: PunctureMode::Ignore }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WosEstimate {
    pub mean: VecValue,
    /// Standard error per coordinate of the data support.
    pub stderr: Vec<f64>,
    pub support: Vec<usize>,
    pub n_samples: usize,
    pub n_capped: usize,
    pub n_puncture_captures: usize,
    pub cap_heavy: bool,
}

impl WosEstimate {
    /// Norm of the standard-error vector in the value space.
    pub fn stderr_norm(&self) -> f64 {
        self.mean.space().norm_of(&self.stderr)
    }

    pub fn capture_fraction(&self) -> f64 {
        self.n_puncture_captures as f64 / self.n_samples as f64
    }
}

enum Exit {
    Boundary(Point2),
    Capped(Point2),
    Puncture(usize),
}

#[derive(Clone, Debug)]
struct Moments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    capped: usize,
    captured: usize,
}

impl Moments {
    fn new(m: usize) -> Self {
        Self { n: 0, mean: vec![0.0; m], m2: vec![0.0; m], capped: 0, captured: 0 }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for c in 0..x.len() {
            let d = x[c] - self.mean[c];
            self.mean[c] += d / n;
            self.m2[c] += d * (x[c] - self.mean[c]);
        }
    }

    /// Chan et al. pairwise update.
    fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        for c in 0..self.mean.len() {
            let d = o.mean[c] - self.mean[c];
            self.mean[c] += d * nb / n;
            self.m2[c] += o.m2[c] + d * d * na * nb / n;
        }
        self.n += o.n;
        self.capped += o.capped;
        self.captured += o.captured;
    }
}

fn walk(f: &BoundaryData, xi: Point2, eps: f64, cfg: &WosConfig, rng: &mut ChaCha8Rng) -> Exit {
    let d = f.domain();
    let mut x = xi;
    for _ in 0..cfg.max_steps {
        let outer = d.regular_distance(x);
        if outer < eps {
            return Exit::Boundary(x);
        }
        let r = match cfg.puncture_mode {
            PunctureMode::Ignore => outer,
            PunctureMode::Strict { capture_radius } => {
                let (j, dp) = d
                    .punctures()
                    .iter()
                    .enumerate()
                    .map(|(j, z)| (j, z.dist(x) - capture_radius))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                if dp < eps.min(1e-3 * capture_radius) {
                    return Exit::Puncture(j);
                }
                outer.min(dp)
            }
        };
        let (s, c) = (rng.random::<f64>() * TAU).sin_cos();
        x = Point2::new(x.x + r * c, x.y + r * s);
    }
    Exit::Capped(x)
}

/// Estimates H_f(ξ) from `cfg.n_samples` walks. Sample `i` draws from the
/// ChaCha8 stream `i` of a generator seeded with `seed`.
pub fn wos_seeded(f: &BoundaryData, xi: Point2, cfg: &WosConfig, seed: u64) -> Result<WosEstimate, WosError> {
    let dom = f.domain();
    dom.dist_to_boundary(xi, DistanceMode::Full)?;
    let eps = cfg.eps_shell.unwrap_or(1e-4 * dom.diameter());
    if !(eps > 0.0) || cfg.n_samples == 0 || cfg.max_steps == 0 {
        return Err(WosError::InvalidConfig("eps_shell, n_samples and max_steps must be positive".into()));
    }
    if let PunctureMode::Strict { capture_radius } = cfg.puncture_mode {
        if !(capture_radius > 0.0) {
            return Err(WosError::InvalidConfig(format!("capture radius must be positive, got {capture_radius}")));
        }
    }
    let m = f.support().len();
    let base = ChaCha8Rng::seed_from_u64(seed);
    let n_chunks = cfg.n_samples.div_ceil(SAMPLE_CHUNK);
    let chunks = par::map_range(n_chunks, |k| {
        let mut mo = Moments::new(m);
        for i in k * SAMPLE_CHUNK..((k + 1) * SAMPLE_CHUNK).min(cfg.n_samples) {
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            let v = match walk(f, xi, eps, cfg, &mut rng) {
                Exit::Boundary(x) => f.eval(dom.nearest_boundary_point(x).0),
                Exit::Capped(x) => {
                    mo.capped += 1;
                    f.eval(dom.nearest_boundary_point(x).0)
                }
                Exit::Puncture(j) => {
                    mo.captured += 1;
                    f.puncture_value(j).to_vec()
                }
            };
            mo.push(&v);
        }
        mo
    });
    let mut total = Moments::new(m);
    for c in &chunks {
        total.merge(c);
    }
    let n = cfg.n_samples as f64;
    let stderr = if cfg.n_samples > 1 { total.m2.iter().map(|s| (s / (n - 1.0)).max(0.0).sqrt() / n.sqrt()).collect() } else { vec![0.0; m] };
    Ok(WosEstimate {
        mean: VecValue::from_support(f.space(), f.support(), &total.mean).expect("finite samples"),
        stderr,
        support: f.support().to_vec(),
        n_samples: cfg.n_samples,
        n_capped: total.capped,
        n_puncture_captures: total.captured,
        cap_heavy: total.capped as f64 > CAP_HEAVY * n,
    })
}

/// Walk-on-spheres estimate at ξ with the configured seed.
pub fn wos(f: &BoundaryData, xi: Point2, cfg: &WosConfig) -> Result<WosEstimate, WosError> {
    wos_seeded(f, xi, cfg, cfg.seed)
}

/// Estimates at several probes; probe `j` uses seed `cfg.seed ^ j`.
pub fn wos_field(f: &BoundaryData, probes: &[Point2], cfg: &WosConfig) -> Result<Vec<WosEstimate>, WosError> {
    probes.iter().enumerate().map(|(j, &p)| wos_seeded(f, p, cfg, cfg.seed ^ j as u64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::BoundaryFn;
    use crate::geometry::Domain;
    use std::sync::Arc;

    #[test]
    fn constant_data_is_exact() {
        let d = Arc::new(Domain::punctured_unit_disk());
        let f = BoundaryData::scalar(d, BoundaryFn::constant(0.7));
        let e = wos(&f, Point2::new(0.3, 0.2), &WosConfig { n_samples: 3000, ..Default::default() }).unwrap();
        assert_eq!(e.mean.get(0), 0.7);
        assert_eq!(e.stderr, vec![0.0]);
        assert_eq!(e.n_capped, 0);
    }

    #[test]
    fn rejects_bad_points_and_configs() {
        let d = Arc::new(Domain::punctured_unit_disk());
        let f = BoundaryData::scalar(d, BoundaryFn::constant(1.0));
        let cfg = WosConfig::default();
        assert!(matches!(wos(&f, Point2::new(0.0, 0.0), &cfg), Err(WosError::Geometry(GeometryError::AtPuncture { .. }))));
        assert!(matches!(wos(&f, Point2::new(2.0, 0.0), &cfg), Err(WosError::Geometry(GeometryError::OutsideDomain { .. }))));
        let bad = WosConfig { puncture_mode: PunctureMode::Strict { capture_radius: 0.0 }, ..Default::default() };
        assert!(wos(&f, Point2::new(0.5, 0.0), &bad).is_err());
    }

    #[test]
    fn cosine_on_the_disk() {
        let d = Arc::new(Domain::unit_disk());
        let f = BoundaryData::scalar(d, BoundaryFn::fourier_cos(1, Point2::new(0.0, 0.0)));
        let e = wos(&f, Point2::new(0.5, 0.0), &WosConfig { n_samples: 100_000, seed: 11, ..Default::default() }).unwrap();
        assert!((e.mean.get(0) - 0.5).abs() < 4.0 * e.stderr[0], "{e:?}");
    }

    #[test]
    fn strict_capture_matches_the_annulus() {
        let d = Arc::new(Domain::punctured_unit_disk());
        let f = BoundaryData::scalar(d, BoundaryFn::constant(0.0)).with_puncture_values(&[VecValue::scalar(1.0)]).unwrap();
        let cfg = WosConfig { n_samples: 20_000, seed: 1, puncture_mode: PunctureMode::Strict { capture_radius: 1e-2 }, ..Default::default() };
        let e = wos(&f, Point2::new(0.1, 0.0), &cfg).unwrap();
        let p = 10f64.ln() / 100f64.ln();
        let se = (p * (1.0 - p) / cfg.n_samples as f64).sqrt();
        assert!((e.capture_fraction() - p).abs() < 4.0 * se, "{}", e.capture_fraction());
        assert!((e.mean.get(0) - e.capture_fraction()).abs() < 1e-12);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let d = Arc::new(Domain::unit_disk());
        let f = BoundaryData::scalar(d, BoundaryFn::fourier_sin(2, Point2::new(0.0, 0.0)));
        let cfg = WosConfig { n_samples: 5000, seed: 42, ..Default::default() };
        let probes = [Point2::new(0.1, 0.2), Point2::new(-0.4, 0.3)];
        let a = wos_field(&f, &probes, &cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| wos_field(&f, &probes, &cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a[0], wos_seeded(&f, probes[0], &cfg, 42).unwrap());
    }
}
