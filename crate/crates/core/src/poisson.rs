//! Δu = g with Dirichlet data: u = w + H_{f − w|∂Ω} with w the Newtonian
//! potential of g.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constructions::{default_k_nodes, full_cached, poincare_solve, wiener_solve, BoundaryData, ConstructionError, PoincareConfig, WienerConfig};
use crate::geometry::{DistanceMode, Domain, Point2};
use crate::grid::{transpose, union_support, Grid, GridError, GridField, NodeClass};
use crate::harmonic_measure::{wos_field, WosConfig, WosError};
use crate::par;
use crate::values::{ValueError, ValueSpace, VecValue};

/// Sub-cells per side used for coverage fractions and near-field quadrature.
const SUB: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoissonError {
    #[error("singular: the fundamental solution is undefined at the origin")]
    Singular,
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("probe ({0}, {1}) is not interior to the grid domain")]
    ProbeOutside(f64, f64),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Wos(#[from] WosError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

/// Γ(d/2 + 1) for integer d ≥ 0.
fn gamma_half(d: usize) -> f64 {
    // Γ(x + 1) = xΓ(x), starting from Γ(1) = 1 or Γ(1/2) = √π
    let (mut x, mut g) = if d % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = d as f64 / 2.0 + 1.0;
    while x < target - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Fundamental solution of the Laplacian in ℝᵈ, d = x.len().
pub fn gamma(x: &[f64]) -> Result<f64, PoissonError> {
    let d = x.len();
    if d < 2 {
        return Err(PoissonError::Dimension(d));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(PoissonError::Singular);
    }
    if d == 2 {
        return Ok(r.ln() / (2.0 * PI));
    }
    let ball = PI.powf(d as f64 / 2.0) / gamma_half(d);
    let df = d as f64;
    Ok(r.powf(2.0 - df) / (df * (2.0 - df) * ball))
}

fn gamma2(v: Point2) -> f64 {
    v.norm_sq().ln() / (4.0 * PI)
}

/// ∫ Γ over a disk of radius a centred at the origin.
fn disk_integral(a: f64) -> f64 {
    a * a / 2.0 * a.ln() - a * a / 4.0
}

/// Named scalar source builtins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSource {
    Constant { value: f64 },
    Gaussian { center: Point2, sigma: f64, amplitude: f64 },
    /// Σ coef·xᵖʸ·yᵖʸ
    Polynomial { terms: Vec<Monomial> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub px: u32,
    pub py: u32,
    pub coef: f64,
}

impl ScalarSource {
    pub fn eval(&self, p: Point2) -> f64 {
        match self {
            ScalarSource::Constant { value } => *value,
            ScalarSource::Gaussian { center, sigma, amplitude } => amplitude * (-(p - *center).norm_sq() / (2.0 * sigma * sigma)).exp(),
            ScalarSource::Polynomial { terms } => terms.iter().map(|t| t.coef * p.x.powi(t.px as i32) * p.y.powi(t.py as i32)).sum(),
        }
    }
}

/// A bounded source g: Ω → X.
#[derive(Clone)]
pub struct SourceField {
    domain: Arc<Domain>,
    space: ValueSpace,
    support: Vec<usize>,
    f: Arc<dyn Fn(Point2) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for SourceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceField").field("space", &self.space).field("support", &self.support).finish_non_exhaustive()
    }
}

impl SourceField {
    /// `f` returns coordinates on `support`.
    pub fn new(domain: Arc<Domain>, space: ValueSpace, support: Vec<usize>, f: impl Fn(Point2) -> Vec<f64> + Send + Sync + 'static) -> Result<Self, PoissonError> {
        for &k in &support {
            space.check_index(k)?;
        }
        Ok(Self { domain, space, support, f: Arc::new(f) })
    }

    pub fn zero(domain: Arc<Domain>, space: ValueSpace) -> Self {
        Self { domain, space, support: Vec::new(), f: Arc::new(|_| Vec::new()) }
    }

    pub fn scalar(domain: Arc<Domain>, s: ScalarSource) -> Self {
        Self { domain, space: ValueSpace::scalar(), support: vec![0], f: Arc::new(move |p| vec![s.eval(p)]) }
    }

    /// Σ sⱼ ⊗ xⱼ
    pub fn tensor(domain: Arc<Domain>, space: ValueSpace, terms: Vec<(ScalarSource, VecValue)>) -> Result<Self, PoissonError> {
        let mut support = Vec::new();
        for (_, x) in &terms {
            if x.space() != space {
                return Err(ValueError::SpaceMismatch(x.space().to_string(), space.to_string()).into());
            }
            support = union_support(&support, &x.support().collect::<Vec<_>>());
        }
        let coords: Vec<Vec<f64>> = terms.iter().map(|(_, x)| x.on_support(&support)).collect();
        let scalars: Vec<ScalarSource> = terms.into_iter().map(|t| t.0).collect();
        let m = support.len();
        Self::new(domain, space, support, move |p| {
            let mut v = vec![0.0; m];
            for (s, x) in scalars.iter().zip(&coords) {
                let a = s.eval(p);
                v.iter_mut().zip(x).for_each(|(o, xi)| *o += a * xi);
            }
            v
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn space(&self) -> ValueSpace {
        self.space
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn eval(&self, p: Point2) -> Vec<f64> {
        (self.f)(p)
    }

    /// Values on a larger support.
    pub fn eval_on(&self, p: Point2, support: &[usize]) -> Vec<f64> {
        let v = self.eval(p);
        support.iter().map(|k| self.support.iter().position(|s| s == k).map_or(0.0, |c| v[c])).collect()
    }
}

/// w = Γ ∗ g on a grid: node values from an FFT convolution, point values by
/// direct summation.
#[derive(Clone, Debug)]
pub struct NewtonianPotential {
    source: SourceField,
    grid: Grid,
    /// `[c][node]`: χ·g·h² with χ the covered fraction of the node's cell.
    weights: Vec<Vec<f64>>,
    /// `[c][node]`
    nodes: Vec<Vec<f64>>,
}

fn coverage(domain: &Domain, grid: &Grid, id: usize) -> f64 {
    let p = grid.point(id);
    let h = grid.h;
    let d = domain.regular_distance(p);
    if d > 0.75 * h {
        return f64::from(u8::from(domain.inside_base(p)));
    }
    let mut inside = 0;
    for b in 0..SUB {
        for a in 0..SUB {
            let q = Point2::new(p.x + h * ((a as f64 + 0.5) / SUB as f64 - 0.5), p.y + h * ((b as f64 + 0.5) / SUB as f64 - 0.5));
            inside += usize::from(domain.inside_base(q));
        }
    }
    inside as f64 / (SUB * SUB) as f64
}

fn fft2(buf: &mut [Complex<f64>], px: usize, py: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (fx, fy) = if inverse { (planner.plan_fft_inverse(px), planner.plan_fft_inverse(py)) } else { (planner.plan_fft_forward(px), planner.plan_fft_forward(py)) };
    for row in buf.chunks_mut(px) {
        fx.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); py];
    for i in 0..px {
        for j in 0..py {
            col[j] = buf[j * px + i];
        }
        fy.process(&mut col);
        for j in 0..py {
            buf[j * px + i] = col[j];
        }
    }
}

/// Newtonian potential of `g` on `grid`. The cell of the evaluation node
/// contributes g·∫Γ over the disk of equal area.
pub fn newtonian_potential(g: &SourceField, grid: Grid) -> NewtonianPotential {
    let dom = g.domain().clone();
    let m = g.support().len();
    let h = grid.h;
    let (nx, ny) = (grid.nx, grid.ny);
    let per_node = par::map_range(grid.n_nodes(), |id| {
        let chi = coverage(&dom, &grid, id);
        if chi == 0.0 {
            vec![0.0; m]
        } else {
            g.eval(grid.point(id)).into_iter().map(|v| chi * v * h * h).collect()
        }
    });
    let weights = transpose(&per_node, m);
    let (px, py) = (2 * nx, 2 * ny);
    let mut kernel = vec![Complex::new(0.0, 0.0); px * py];
    let a = h / PI.sqrt();
    for dj in -(ny as i64 - 1)..ny as i64 {
        for di in -(nx as i64 - 1)..nx as i64 {
            let k = if di == 0 && dj == 0 { disk_integral(a) / (h * h) } else { gamma2(Point2::new(di as f64 * h, dj as f64 * h)) };
            let idx = (dj.rem_euclid(py as i64) as usize) * px + di.rem_euclid(px as i64) as usize;
            kernel[idx] = Complex::new(k, 0.0);
        }
    }
    fft2(&mut kernel, px, py, false);
    let norm = (px * py) as f64;
    let nodes = weights
        .iter()
        .map(|wc| {
            let mut buf = vec![Complex::new(0.0, 0.0); px * py];
            for j in 0..ny {
                for i in 0..nx {
                    buf[j * px + i] = Complex::new(wc[grid.id(i, j)], 0.0);
                }
            }
            fft2(&mut buf, px, py, false);
            buf.iter_mut().zip(&kernel).for_each(|(b, k)| *b *= k);
            fft2(&mut buf, px, py, true);
            (0..grid.n_nodes()).map(|id| {
                let (i, j) = grid.ij(id);
                buf[j * px + i].re / norm
            })
            .collect()
        })
        .collect();
    NewtonianPotential { source: g.clone(), grid, weights, nodes }
}

impl NewtonianPotential {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn source(&self) -> &SourceField {
        &self.source
    }

    /// `[c][node]`
    pub fn node_values(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// w(p) for any p in ℝ² by direct summation; cells near p are refined.
    pub fn eval(&self, p: Point2) -> Vec<f64> {
        let g = &self.grid;
        let h = g.h;
        let m = self.weights.len();
        let dom = self.source.domain();
        let mut out = vec![0.0; m];
        for id in 0..g.n_nodes() {
            let c = g.point(id);
            let near = (c.x - p.x).abs() <= 1.5 * h && (c.y - p.y).abs() <= 1.5 * h;
            if !near {
                if self.weights.iter().all(|w| w[id] == 0.0) {
                    continue;
                }
                let k = gamma2(c - p);
                out.iter_mut().zip(&self.weights).for_each(|(o, w)| *o += w[id] * k);
                continue;
            }
            let hs = h / SUB as f64;
            let a = hs / PI.sqrt();
            for b in 0..SUB {
                for s in 0..SUB {
                    let q = Point2::new(c.x + h * ((s as f64 + 0.5) / SUB as f64 - 0.5), c.y + h * ((b as f64 + 0.5) / SUB as f64 - 0.5));
                    if !dom.inside_base(q) {
                        continue;
                    }
                    let d = q - p;
                    let k = if d.x.abs() < hs / 2.0 && d.y.abs() < hs / 2.0 { disk_integral(a) } else { hs * hs * gamma2(d) };
                    out.iter_mut().zip(self.source.eval(q)).for_each(|(o, v)| *o += k * v);
                }
            }
        }
        out
    }
}

/// Dirichlet construction used for the harmonic part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SolverChoice {
    Wiener(WienerConfig),
    Poincare(PoincareConfig),
    Wos(WosConfig),
}

#[derive(Clone, Debug)]
pub struct PoissonSolution {
    /// Grid solution; absent for walk-on-spheres.
    pub field: Option<GridField>,
    pub probe_values: Vec<VecValue>,
    /// Standard errors for walk-on-spheres estimates.
    pub probe_stderr: Option<Vec<Vec<f64>>>,
    pub converged: bool,
}

/// u = w + H_{f − w|∂Ω}.
pub fn solve_poisson(f: &BoundaryData, g: &SourceField, grid: Grid, solver: &SolverChoice, probes: &[Point2]) -> Result<PoissonSolution, PoissonError> {
    let dom = f.domain().clone();
    if g.space() != f.space() {
        return Err(ValueError::SpaceMismatch(g.space().to_string(), f.space().to_string()).into());
    }
    let space = f.space();
    let support = union_support(f.support(), g.support());
    let m = support.len();
    let f = f.clone().with_support(&support);
    let w = newtonian_potential(&SourceField { support: support.clone(), f: { let g = g.clone(); let s = support.clone(); Arc::new(move |p| g.eval_on(p, &s)) }, ..g.clone() }, grid);
    let k_nodes = default_k_nodes(&dom, grid.h);
    // f stays exact; only the smooth trace of w is sampled
    let reduced = f.clone().minus_sampled(k_nodes, |p| w.eval(p))?;
    let (harmonic, converged) = match solver {
        SolverChoice::Wiener(cfg) => {
            let r = wiener_solve(&reduced, grid, cfg)?;
            (r.field, r.converged)
        }
        SolverChoice::Poincare(cfg) => {
            let r = poincare_solve(&reduced, grid, cfg)?;
            (r.field, r.converged)
        }
        SolverChoice::Wos(cfg) => {
            let est = wos_field(&reduced, probes, cfg)?;
            let probe_values = est
                .iter()
                .zip(probes)
                .map(|(e, &p)| {
                    let wv = w.eval(p);
                    VecValue::from_support(space, &support, &e.mean.on_support(&support).iter().zip(&wv).map(|(a, b)| a + b).collect::<Vec<_>>())
                })
                .collect::<Result<_, _>>()?;
            let stderr = est.iter().map(|e| e.stderr.clone()).collect();
            let converged = est.iter().all(|e| !e.cap_heavy);
            return Ok(PoissonSolution { field: None, probe_values, probe_stderr: Some(stderr), converged });
        }
    };
    let disc = full_cached(&dom, grid)?;
    let mut u = GridField::from_fn(disc.clone(), space, support.clone(), |p| f.eval(p))?;
    let hn = harmonic.with_support(&support);
    let nodes = u.nodes_mut();
    for &id in disc.unknowns() {
        let id = id as usize;
        for c in 0..m {
            nodes[c][id] = hn.nodes()[c][id] + w.nodes[c][id];
        }
    }
    let probe_values = probes
        .iter()
        .map(|&p| {
            let hv = hn.interpolate(p).ok_or(PoissonError::ProbeOutside(p.x, p.y))?;
            let wv = w.eval(p);
            Ok(VecValue::from_support(space, &support, &hv.iter().zip(&wv).map(|(a, b)| a + b).collect::<Vec<_>>())?)
        })
        .collect::<Result<_, PoissonError>>()?;
    Ok(PoissonSolution { field: Some(u), probe_values, probe_stderr: None, converged })
}

/// max over interior nodes at distance ≥ `min_dist` from the boundary of
/// ‖Δ_h u − g‖.
pub fn laplacian_residual(u: &GridField, g: &SourceField, min_dist: f64) -> f64 {
    let dom = u.domain().clone();
    let grid = *u.grid();
    let support = u.support().to_vec();
    let e = u.space().exponent();
    par::chunked_max(grid.n_nodes(), |id| {
        let p = grid.point(id);
        if u.class()[id] != NodeClass::Interior || dom.distance_unchecked(p, DistanceMode::RegularOnly) < min_dist {
            return 0.0;
        }
        match u.laplacian_at(id) {
            Some(l) => e.norm(l.iter().zip(g.eval_on(p, &support)).map(|(a, b)| a - b)),
            None => 0.0,
        }
    })
}
