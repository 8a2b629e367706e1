//! Poincaré's alternating method: repeated harmonic liftings over a finite
//! family of balls, starting from an extension of the data.
//!
//! The default lifting solves the five-point equations on the grid nodes of
//! the ball, with the current values around it as data. Nodes in the band
//! along ∂Ω that no ball reaches are relaxed together by one more discrete
//! solve that sees the data on ∂Ω, standing in for the balls that accumulate
//! at the boundary. Every lifting then fixes the discrete Dirichlet solution,
//! so sweeps converge to it under any schedule. The Poisson-integral lifting
//! is kept as an option; its interpolated rim values differ from ball to ball
//! at the size of the interpolation error, and sweeps stall at that level.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ball::{Ball, LiftPlan};
use crate::geometry::{DistanceMode, Domain};
use crate::grid::{Discretization, Grid, GridError, GridField, NodeClass};
use crate::sparse::{SpdSolver, SymCsr};

use super::{default_k_nodes, extend, full_cached, BoundaryData, ConstructionError};

/// Interior nodes farther than `COVER_BAND·h` from the boundary must be
/// covered by ball interiors; the band solve relaxes the rest.
pub const COVER_BAND: f64 = 3.0;

/// Ratio of ball radius to the centre's distance from the boundary.
const RADIUS_RATIO: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    RoundRobin,
    /// A fresh permutation of the balls for every sweep.
    Random { seed: u64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftKind {
    /// Discrete Dirichlet solve on the ball's grid nodes.
    #[default]
    Grid,
    /// Poisson integral of the field interpolated onto the rim.
    Poisson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoincareConfig {
    /// Defaults to `default_balls`.
    pub balls: Option<Vec<Ball>>,
    pub schedule: Schedule,
    pub lift: LiftKind,
    pub max_sweeps: usize,
    pub eps: f64,
    pub k_nodes: Option<usize>,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self { balls: None, schedule: Schedule::RoundRobin, lift: LiftKind::Grid, max_sweeps: 500, eps: 1e-6, k_nodes: None }
    }
}

#[derive(Clone, Debug)]
pub struct PoincareResult {
    pub field: GridField,
    /// Largest change of any node during each sweep.
    pub sweep_changes: Vec<f64>,
    pub converged: bool,
    pub n_balls: usize,
}

fn lift_radius(d: f64, h: f64) -> f64 {
    (RADIUS_RATIO * d).min(d - h)
}

/// Greedy cover: repeatedly centres a ball of radius 0.6·dist at the
/// uncovered node farthest from the boundary. Punctures count as boundary,
/// so no ball contains one.
pub fn default_balls(domain: &Domain, grid: &Grid) -> Vec<Ball> {
    let h = grid.h;
    let mut cand: Vec<(usize, f64)> = (0..grid.n_nodes())
        .filter_map(|id| {
            let p = grid.point(id);
            if !domain.contains(p) {
                return None;
            }
            let d = domain.distance_unchecked(p, DistanceMode::Full);
            (d > COVER_BAND * h).then_some((id, d))
        })
        .collect();
    cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut covered = vec![false; grid.n_nodes()];
    let mut balls = Vec::new();
    for &(id, d) in &cand {
        if covered[id] {
            continue;
        }
        let ball = Ball { center: grid.point(id), radius: lift_radius(d, h) };
        mark(grid, &ball, &mut covered);
        balls.push(ball);
    }
    balls
}

fn mark(grid: &Grid, ball: &Ball, covered: &mut [bool]) {
    let inner = ball.radius - std::f64::consts::SQRT_2 * grid.h;
    if inner <= 0.0 {
        return;
    }
    let idx = |v: f64, o: f64| ((v - o) / grid.h).floor().max(0.0) as usize;
    let (i0, i1) = (idx(ball.center.x - inner, grid.origin.x), (idx(ball.center.x + inner, grid.origin.x) + 1).min(grid.nx - 1));
    let (j0, j1) = (idx(ball.center.y - inner, grid.origin.y), (idx(ball.center.y + inner, grid.origin.y) + 1).min(grid.ny - 1));
    for j in j0..=j1 {
        for i in i0..=i1 {
            let id = grid.id(i, j);
            if (grid.point(id) - ball.center).norm() < inner {
                covered[id] = true;
            }
        }
    }
}

/// Checks that every interior node farther than `COVER_BAND·h` from the
/// boundary is updated by some ball.
pub fn check_cover(domain: &Domain, grid: &Grid, balls: &[Ball]) -> Result<(), ConstructionError> {
    let mut covered = vec![false; grid.n_nodes()];
    for b in balls {
        mark(grid, b, &mut covered);
    }
    let missing = (0..grid.n_nodes())
        .filter(|&id| {
            let p = grid.point(id);
            !covered[id] && domain.contains(p) && domain.distance_unchecked(p, DistanceMode::Full) > COVER_BAND * grid.h
        })
        .count();
    if missing > 0 {
        return Err(ConstructionError::BallsDoNotCover(missing));
    }
    Ok(())
}

/// Solves the equations of the full discretization at `targets` with every
/// other node value and the boundary trace held fixed.
#[derive(Debug)]
struct GridLift {
    targets: Vec<u32>,
    /// Off-target neighbours of each target, with their couplings.
    fixed: Vec<Vec<(u32, f64)>>,
    /// Stub indices of each target, with weight 1/θ.
    stubs: Vec<Vec<(u32, f64)>>,
    solver: SpdSolver,
}

impl GridLift {
    fn new(disc: &Discretization, targets: Vec<u32>) -> Result<Self, ConstructionError> {
        let grid = disc.grid();
        let mut local = vec![u32::MAX; grid.n_nodes()];
        for (t, &id) in targets.iter().enumerate() {
            local[id as usize] = t as u32;
        }
        let k_mat = disc.stiffness();
        let mut rows = Vec::with_capacity(targets.len());
        let mut fixed = Vec::with_capacity(targets.len());
        let mut stubs = Vec::with_capacity(targets.len());
        for &id in &targets {
            let k = disc.index_of(id as usize).ok_or_else(|| ConstructionError::InvalidConfig("lifting target is not an unknown".into()))?;
            let mut row = Vec::with_capacity(5);
            let mut fx = Vec::new();
            for (j, v) in k_mat.row(k) {
                let node = disc.unknowns()[j];
                match local[node as usize] {
                    u32::MAX => fx.push((node, -v)),
                    t => row.push((t, v)),
                }
            }
            rows.push(row);
            fixed.push(fx);
            stubs.push(disc.stub_range(k).map(|s| (s as u32, 1.0 / disc.stubs()[s].theta)).collect());
        }
        let coords: Vec<(i32, i32)> = targets
            .iter()
            .map(|&id| {
                let (i, j) = grid.ij(id as usize);
                (i as i32, j as i32)
            })
            .collect();
        let solver = SpdSolver::new(SymCsr::from_rows(rows), &coords).map_err(GridError::from)?;
        Ok(Self { targets, fixed, stubs, solver })
    }

    fn apply(&self, u: &mut GridField) -> Result<f64, ConstructionError> {
        let mut change: f64 = 0.0;
        for c in 0..u.support().len() {
            let (nodes, trace) = (&u.nodes()[c], &u.trace()[c]);
            let b: Vec<f64> = (0..self.targets.len())
                .map(|t| {
                    self.fixed[t].iter().map(|&(q, w)| w * nodes[q as usize]).sum::<f64>()
                        + self.stubs[t].iter().map(|&(s, w)| w * trace[s as usize]).sum::<f64>()
                })
                .collect();
            let x = self.solver.solve(&b).map_err(GridError::from)?;
            let nodes = &mut u.nodes_mut()[c];
            for (&id, v) in self.targets.iter().zip(x) {
                change = change.max((nodes[id as usize] - v).abs());
                nodes[id as usize] = v;
            }
        }
        Ok(change)
    }
}

#[derive(Debug)]
enum Lift {
    Grid(GridLift),
    Poisson(LiftPlan),
}

impl Lift {
    fn apply(&self, u: &mut GridField) -> Result<f64, ConstructionError> {
        match self {
            Lift::Grid(g) => g.apply(u),
            Lift::Poisson(p) => Ok(p.apply(u)),
        }
    }
}

/// Grid nodes strictly inside `ball` that are unknowns of `disc`.
fn ball_nodes(disc: &Discretization, ball: &Ball) -> Vec<u32> {
    let g = disc.grid();
    let r = ball.radius;
    let idx = |v: f64, o: f64| ((v - o) / g.h).floor().max(0.0) as usize;
    let (i0, i1) = (idx(ball.center.x - r, g.origin.x), (idx(ball.center.x + r, g.origin.x) + 1).min(g.nx - 1));
    let (j0, j1) = (idx(ball.center.y - r, g.origin.y), (idx(ball.center.y + r, g.origin.y) + 1).min(g.ny - 1));
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let id = g.id(i, j);
            if disc.index_of(id).is_some() && (g.point(id) - ball.center).norm() < r {
                out.push(id as u32);
            }
        }
    }
    out
}

fn build_lifts(u0: &GridField, balls: &[Ball], kind: LiftKind) -> Result<Vec<Lift>, ConstructionError> {
    let disc = u0.disc().clone();
    let mut touched = vec![false; u0.grid().n_nodes()];
    let mut lifts = Vec::with_capacity(balls.len() + 1);
    for &b in balls {
        // validates that the ball stays a cell away from the boundary
        let plan = LiftPlan::new(u0, b)?;
        match kind {
            LiftKind::Poisson => {
                plan.targets().iter().for_each(|&id| touched[id as usize] = true);
                lifts.push(Lift::Poisson(plan));
            }
            LiftKind::Grid => {
                let targets = ball_nodes(&disc, &b);
                if targets.is_empty() {
                    continue;
                }
                targets.iter().for_each(|&id| touched[id as usize] = true);
                lifts.push(Lift::Grid(GridLift::new(&disc, targets)?));
            }
        }
    }
    let band: Vec<u32> = disc.unknowns().iter().copied().filter(|&id| !touched[id as usize]).collect();
    if !band.is_empty() {
        lifts.push(Lift::Grid(GridLift::new(&disc, band)?));
    }
    Ok(lifts)
}

/// Runs sweeps of liftings from `u0`. `on_sweep(k, u)` sees the iterate
/// after every sweep. A sweep applies every ball and the boundary band once.
///
/// Converged once the sweep change is below `eps` and so is the geometric
/// tail estimate built from the last two changes.
pub fn poincare_iterate(
    u0: GridField,
    balls: &[Ball],
    schedule: Schedule,
    lift: LiftKind,
    max_sweeps: usize,
    eps: f64,
    mut on_sweep: impl FnMut(usize, &GridField),
) -> Result<PoincareResult, ConstructionError> {
    if max_sweeps == 0 {
        return Err(ConstructionError::InvalidConfig("max_sweeps must be at least 1".into()));
    }
    let lifts = build_lifts(&u0, balls, lift)?;
    let mut u = u0;
    let mut order: Vec<usize> = (0..lifts.len()).collect();
    let mut rng = match schedule {
        Schedule::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Schedule::RoundRobin => None,
    };
    let mut sweep_changes = Vec::new();
    let mut converged = false;
    for k in 0..max_sweeps {
        if let Some(r) = rng.as_mut() {
            order.shuffle(r);
        }
        let mut change: f64 = 0.0;
        for &i in &order {
            change = change.max(lifts[i].apply(&mut u)?);
        }
        // the distance left to the limit is about change·ρ/(1 − ρ)
        let rho = sweep_changes.last().map_or(0.5, |&p: &f64| if p > 0.0 { (change / p).min(0.95) } else { 0.0 });
        sweep_changes.push(change);
        on_sweep(k + 1, &u);
        if change < eps && change * rho / (1.0 - rho) < eps {
            converged = true;
            break;
        }
    }
    Ok(PoincareResult { field: u, sweep_changes, converged, n_balls: balls.len() })
}

/// The Perron solution of `f` by Poincaré's method on `grid`, starting from
/// the Shepard extension of f.
pub fn poincare_solve(f: &BoundaryData, grid: Grid, cfg: &PoincareConfig) -> Result<PoincareResult, ConstructionError> {
    let domain = f.domain();
    let balls = match &cfg.balls {
        Some(b) => b.clone(),
        None => default_balls(domain, &grid),
    };
    check_cover(domain, &grid, &balls)?;
    let disc = full_cached(domain, grid)?;
    let ext = extend(f, cfg.k_nodes.unwrap_or_else(|| default_k_nodes(domain, grid.h)))?;
    let mut u0 = GridField::from_fn(disc.clone(), f.space(), f.support().to_vec(), |p| f.eval(p))?;
    let class = disc.class().to_vec();
    let nodes = u0.nodes_mut();
    for &id in disc.unknowns() {
        let id = id as usize;
        debug_assert_eq!(class[id], NodeClass::Interior);
        let v = ext.eval(grid.point(id));
        for (c, x) in v.into_iter().enumerate() {
            nodes[c][id] = x;
        }
    }
    poincare_iterate(u0, &balls, cfg.schedule, cfg.lift, cfg.max_sweeps, cfg.eps, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::BoundaryFn;
    use crate::geometry::{BaseShape, Point2};
    use crate::values::ValueSpace;
    use std::sync::Arc;

    #[test]
    fn constant_is_a_fixed_point() {
        let d = Arc::new(Domain::unit_disk());
        let g = Grid::covering(&d, 1.0 / 16.0).unwrap();
        let f = BoundaryData::scalar(d, BoundaryFn::constant(-2.0));
        let r = poincare_solve(&f, g, &PoincareConfig::default()).unwrap();
        assert_eq!(r.sweep_changes.len(), 1);
        assert!(r.sweep_changes[0] < 1e-13);
    }

    #[test]
    fn default_balls_cover_and_avoid_punctures() {
        let d = Domain::punctured_unit_disk();
        let g = Grid::covering(&d, 1.0 / 32.0).unwrap();
        let balls = default_balls(&d, &g);
        check_cover(&d, &g, &balls).unwrap();
        for b in &balls {
            assert!(b.center.norm() - b.radius >= g.h - 1e-12);
            assert!(1.0 - b.center.norm() - b.radius >= g.h - 1e-12);
        }
        let err = check_cover(&d, &g, &balls[..balls.len() / 2]).unwrap_err();
        assert!(err.to_string().starts_with("balls-do-not-cover"));
    }

    #[test]
    fn disk_cosine_converges_to_the_polynomial() {
        let d = Arc::new(Domain::unit_disk());
        let g = Grid::covering(&d, 1.0 / 32.0).unwrap();
        let f = BoundaryData::scalar(d.clone(), BoundaryFn::fourier_cos(1, Point2::new(0.0, 0.0)));
        let r = poincare_solve(&f, g, &PoincareConfig::default()).unwrap();
        assert!(r.converged, "{:?}", r.sweep_changes);
        for &id in r.field.disc().unknowns() {
            let p = g.point(id as usize);
            if p.norm() < 0.9 {
                assert!((r.field.nodes()[0][id as usize] - p.x).abs() < 1e-3);
            }
        }
        let s = poincare_solve(&f, g, &PoincareConfig { schedule: Schedule::Random { seed: 3 }, ..Default::default() }).unwrap();
        assert!(s.converged);
        assert!(r.field.max_diff(&s.field).unwrap() < 2e-6);
    }

    #[test]
    fn subharmonic_start_increases() {
        let d = Arc::new(Domain::new(BaseShape::unit_square(), vec![]).unwrap());
        let g = Grid::covering(&d, 1.0 / 16.0).unwrap();
        let disc = full_cached(&d, g).unwrap();
        let u0 = GridField::from_fn(disc, ValueSpace::scalar(), vec![0], |p| vec![p.norm_sq()]).unwrap();
        let balls = default_balls(&d, &g);
        let mut prev = u0.clone();
        let mut worst: f64 = 0.0;
        poincare_iterate(u0, &balls, Schedule::RoundRobin, LiftKind::Grid, 40, 1e-9, |_, u| {
            for (a, b) in u.nodes()[0].iter().zip(&prev.nodes()[0]) {
                worst = worst.max(b - a);
            }
            prev = u.clone();
        })
        .unwrap();
        assert!(worst <= 1e-12, "decrease of {worst}");
    }
}
