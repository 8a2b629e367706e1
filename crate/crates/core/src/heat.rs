//! Heat flow: the Gaussian semigroup on ℝ² and the Dirichlet Laplacian
//! semigroup on a domain by implicit time stepping.
//!
//! Zero is imposed only on ∂(base). Punctures carry no condition, so the
//! evolution on a punctured domain is the one on the filled-in domain.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constructions::full_cached;
use crate::geometry::{Domain, Point2};
use crate::grid::{Discretization, Grid, GridError, GridField};
use crate::values::{ValueError, ValueSpace, VecValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatError {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("resolvent parameter must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("time step {dt} exceeds the horizon {t}")]
    StepTooLarge { dt: f64, t: f64 },
    #[error("probe ({0}, {1}) is not interior to the grid domain")]
    ProbeOutside(f64, f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

/// Kernel support in standard deviations.
const GAUSS_CUTOFF: f64 = 12.0;

fn kernel_1d(h: f64, t: f64) -> Vec<f64> {
    let sigma = (2.0 * t).sqrt();
    let r = (GAUSS_CUTOFF * sigma / h).ceil() as i64;
    (-r..=r).map(|k| (-(k as f64 * h).powi(2) / (4.0 * t)).exp()).collect()
}

fn convolve_axis(values: &[f64], nx: usize, ny: usize, w: &[f64], along_x: bool) -> Vec<f64> {
    let r = (w.len() / 2) as i64;
    let (n, m) = if along_x { (nx, ny) } else { (ny, nx) };
    let mut out = vec![0.0; values.len()];
    for line in 0..m {
        let at = |k: usize| if along_x { line * nx + k } else { k * nx + line };
        for k in 0..n {
            let lo = (k as i64 - r).max(0) as usize;
            let hi = ((k as i64 + r) as usize).min(n - 1);
            let (mut s, mut mass) = (0.0, 0.0);
            for q in lo..=hi {
                let wq = w[(q as i64 - k as i64 + r) as usize];
                s += wq * values[at(q)];
                mass += wq;
            }
            out[at(k)] = s / mass;
        }
    }
    out
}

/// G(t)f for grid samples `values[c][node]` of f on ℝ². The separable kernel
/// is renormalized to unit mass at every output node, which matters only
/// within a few standard deviations of the grid edge.
pub fn gauss_apply(grid: &Grid, values: &[Vec<f64>], t: f64) -> Result<Vec<Vec<f64>>, HeatError> {
    if !(t > 0.0) {
        return Err(HeatError::NonPositiveTime(t));
    }
    let w = kernel_1d(grid.h, t);
    Ok(values
        .iter()
        .map(|v| {
            let a = convolve_axis(v, grid.nx, grid.ny, &w, true);
            convolve_axis(&a, grid.nx, grid.ny, &w, false)
        })
        .collect())
}

/// (4πt)⁻¹ exp(−|x|²/4t), the heat kernel at time t.
pub fn heat_kernel(x: Point2, t: f64) -> f64 {
    (-x.norm_sq() / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
}

/// u(t, ·) on the full discretization; zero on the boundary trace.
#[derive(Clone, Debug)]
pub struct HeatState {
    pub field: GridField,
    pub t: f64,
}

impl HeatState {
    /// Initial state from `u0`, keeping its unknown values only.
    pub fn new(u0: &GridField) -> Result<Self, HeatError> {
        let disc = u0.disc().clone();
        let vals: Vec<Vec<f64>> = u0.nodes().iter().map(|c| disc.unknowns().iter().map(|&id| c[id as usize]).collect()).collect();
        Ok(Self { field: from_unknowns(&disc, u0.space(), u0.support(), &vals)?, t: 0.0 })
    }

    pub fn from_fn(domain: &Arc<Domain>, grid: Grid, space: ValueSpace, support: Vec<usize>, f: impl Fn(Point2) -> Vec<f64> + Sync) -> Result<Self, HeatError> {
        let disc = full_cached(domain, grid)?;
        Self::new(&GridField::from_fn(disc, space, support, f)?)
    }

    fn unknown_values(&self) -> Vec<Vec<f64>> {
        let u = self.field.disc().unknowns();
        self.field.nodes().iter().map(|c| u.iter().map(|&id| c[id as usize]).collect()).collect()
    }
}

fn from_unknowns(disc: &Arc<Discretization>, space: ValueSpace, support: &[usize], vals: &[Vec<f64>]) -> Result<GridField, HeatError> {
    let n = disc.grid().n_nodes();
    let nodes = vals
        .iter()
        .map(|v| {
            let mut c = vec![0.0; n];
            for (k, &id) in disc.unknowns().iter().enumerate() {
                c[id as usize] = v[k];
            }
            c
        })
        .collect();
    let trace = vec![vec![0.0; disc.stubs().len()]; vals.len()];
    Ok(GridField::from_parts(disc.clone(), space, support.to_vec(), nodes, trace)?)
}

/// One step of u_t = Δu with zero data on ∂(base).
pub fn pd_step(state: &HeatState, dt: f64, scheme: Scheme) -> Result<HeatState, HeatError> {
    if !(dt > 0.0) {
        return Err(HeatError::NonPositiveTime(dt));
    }
    let disc = state.field.disc();
    let u = state.unknown_values();
    let zero = vec![vec![0.0; disc.stubs().len()]; u.len()];
    let next = match scheme {
        Scheme::ImplicitEuler => {
            let s: Vec<Vec<f64>> = u.iter().map(|c| c.iter().map(|x| x / dt).collect()).collect();
            disc.solve(1.0 / dt, Some(&s), &zero)?
        }
        Scheme::CrankNicolson => {
            let h2 = disc.grid().h * disc.grid().h;
            let s: Vec<Vec<f64>> = u
                .iter()
                .map(|c| {
                    let ku = disc.stiffness().matvec(c);
                    c.iter().zip(&ku).map(|(x, k)| 2.0 * x / dt - k / h2).collect()
                })
                .collect();
            disc.solve(2.0 / dt, Some(&s), &zero)?
        }
    };
    Ok(HeatState { field: from_unknowns(disc, state.field.space(), state.field.support(), &next)?, t: state.t + dt })
}

/// R(λ)f = (λ − Δ)⁻¹f with zero data on ∂(base).
pub fn pd_resolvent(lambda: f64, f: &GridField) -> Result<GridField, HeatError> {
    if !(lambda > 0.0) {
        return Err(HeatError::NonPositiveLambda(lambda));
    }
    let st = HeatState::new(f)?;
    let disc = f.disc();
    let zero = vec![vec![0.0; disc.stubs().len()]; f.support().len()];
    let g = disc.solve(lambda, Some(&st.unknown_values()), &zero)?;
    from_unknowns(disc, f.space(), f.support(), &g)
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// `[probe][time]`
    pub probe_series: Vec<Vec<VecValue>>,
    pub snapshots: Vec<HeatState>,
    pub last: HeatState,
}

/// Steps from 0 to `t_end` with ⌈t_end/dt⌉ equal steps, recording sup norms
/// and probe values at every time and a snapshot every `snapshot_every`
/// steps (0 for none).
pub fn pd_evolve(u0: &GridField, t_end: f64, dt: f64, scheme: Scheme, probes: &[Point2], snapshot_every: usize) -> Result<Trajectory, HeatError> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(HeatError::NonPositiveTime(t_end.min(dt)));
    }
    if dt > t_end {
        return Err(HeatError::StepTooLarge { dt, t: t_end });
    }
    let n = (t_end / dt - 1e-9).ceil() as usize;
    let dt = t_end / n as f64;
    let mut state = HeatState::new(u0)?;
    let mut tr = Trajectory { times: Vec::new(), sup_norms: Vec::new(), probe_series: vec![Vec::new(); probes.len()], snapshots: Vec::new(), last: state.clone() };
    for k in 0..=n {
        if k > 0 {
            state = pd_step(&state, dt, scheme)?;
            state.t = k as f64 * dt;
        }
        tr.times.push(state.t);
        tr.sup_norms.push(state.field.sup_norm());
        for (series, &p) in tr.probe_series.iter_mut().zip(probes) {
            let v = state.field.interpolate(p).ok_or(HeatError::ProbeOutside(p.x, p.y))?;
            series.push(VecValue::from_support(state.field.space(), state.field.support(), &v)?);
        }
        if snapshot_every > 0 && k % snapshot_every == 0 {
            tr.snapshots.push(state.clone());
        }
    }
    tr.last = state;
    Ok(tr)
}

/// Bessel J₀ by its power series; accurate to ~1e-15 for |x| ≤ 8.
pub fn bessel_j0(x: f64) -> f64 {
    let q = -x * x / 4.0;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..60 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Bessel J₁ by its power series.
pub fn bessel_j1(x: f64) -> f64 {
    let q = -x * x / 4.0;
    let (mut term, mut sum) = (x / 2.0, x / 2.0);
    for k in 1..60 {
        term *= q / (k * (k + 1)) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// First positive zero of J₀ by Newton's method.
pub fn j0_first_zero() -> f64 {
    let mut x = 2.4;
    for _ in 0..50 {
        let dx = bessel_j0(x) / -bessel_j1(x);
        x -= dx;
        if dx.abs() < 1e-15 {
            break;
        }
    }
    x
}
