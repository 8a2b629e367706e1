//! Poisson integrals and harmonic liftings on disks.

use std::f64::consts::{SQRT_2, TAU};
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{DistanceMode, Point2};
use crate::grid::{GridField, NodeClass};
use crate::par;
use crate::values::{ValueError, ValueSpace, VecValue};

/// Relative rim distance below which evaluations are flagged.
pub const DELTA_EVAL: f64 = 1e-3;
/// Default number of rim samples.
pub const DEFAULT_SAMPLES: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BallError {
    #[error("outside-ball: point at relative radius {0}")]
    OutsideBall(f64),
    #[error("ball-escapes-domain: ball at ({x}, {y}) with radius {r} is not strictly interior")]
    EscapesDomain { x: f64, y: f64, r: f64 },
    #[error("circle data needs at least 8 samples, got {0}")]
    TooFewSamples(usize),
    #[error("ball radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Value(#[from] ValueError),
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ball {
    pub center: Point2,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point2, radius: f64) -> Result<Self, BallError> {
        if !(radius.is_finite() && radius > 0.0) || !center.is_finite() {
            return Err(BallError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    /// The `k`-th of `n` equispaced rim points.
    pub fn rim_point(&self, k: usize, n: usize) -> Point2 {
        Point2::from_polar(self.center, self.radius, TAU * k as f64 / n as f64)
    }

    fn escapes(&self) -> BallError {
        BallError::EscapesDomain { x: self.center.x, y: self.center.y, r: self.radius }
    }
}

/// Samples of a vector function at `n` equispaced angles on a circle.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleData {
    ball: Ball,
    space: ValueSpace,
    support: Vec<usize>,
    /// `[sample * m + component]`
    samples: Vec<f64>,
}

impl CircleData {
    pub fn new(ball: Ball, values: &[VecValue]) -> Result<Self, BallError> {
        let space = values.first().ok_or(BallError::TooFewSamples(0))?.space();
        let mut support: Vec<usize> = Vec::new();
        for v in values {
            if v.space() != space {
                return Err(ValueError::SpaceMismatch(v.space().to_string(), space.to_string()).into());
            }
            support.extend(v.support());
        }
        support.sort_unstable();
        support.dedup();
        let samples = values.iter().flat_map(|v| v.on_support(&support)).collect();
        Self::from_samples(ball, space, support, samples)
    }

    pub fn from_fn(ball: Ball, n: usize, space: ValueSpace, support: Vec<usize>, f: impl Fn(Point2) -> Vec<f64>) -> Result<Self, BallError> {
        let samples = (0..n).flat_map(|k| f(ball.rim_point(k, n))).collect();
        Self::from_samples(ball, space, support, samples)
    }

    fn from_samples(ball: Ball, space: ValueSpace, support: Vec<usize>, samples: Vec<f64>) -> Result<Self, BallError> {
        let m = support.len().max(1);
        let n = samples.len() / m;
        if n < 8 {
            return Err(BallError::TooFewSamples(n));
        }
        Ok(Self { ball, space, support, samples })
    }

    pub fn ball(&self) -> Ball {
        self.ball
    }

    pub fn n(&self) -> usize {
        self.samples.len() / self.support.len().max(1)
    }

    pub fn max_sample_norm(&self) -> f64 {
        let m = self.support.len();
        if m == 0 {
            return 0.0;
        }
        self.samples.chunks(m).map(|c| self.space.norm_of(c)).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonEval {
    pub value: VecValue,
    /// The point lies within `DELTA_EVAL·r` of the rim.
    pub near_rim: bool,
}

/// Normalized Poisson quadrature at `x` for rim samples `vals` (sample-major,
/// `m` components). The kernel (r² − |x−x₀|²)/|x − s|² is renormalized to
/// sum to one, so the numerator cancels. Sums run over differences from the
/// first sample, which makes constant data come back bit-exact.
fn poisson_sum(center: Point2, r: f64, rim: &[(f64, f64)], vals: &[f64], m: usize, x: Point2, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let base = &vals[..m];
    let (dx, dy) = (x.x - center.x, x.y - center.y);
    let mut wsum = 0.0;
    for (k, &(c, s)) in rim.iter().enumerate() {
        let ex = r * c - dx;
        let ey = r * s - dy;
        let d2 = ex * ex + ey * ey;
        if d2 == 0.0 {
            out.copy_from_slice(&vals[k * m..(k + 1) * m]);
            return;
        }
        let w = 1.0 / d2;
        wsum += w;
        for ((o, v), b) in out.iter_mut().zip(&vals[k * m..(k + 1) * m]).zip(base) {
            *o += w * (v - b);
        }
    }
    for (o, b) in out.iter_mut().zip(base) {
        *o = b + *o / wsum;
    }
}

fn unit_rim(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let (s, c) = (TAU * k as f64 / n as f64).sin_cos();
            (c, s)
        })
        .collect()
}

/// Poisson integral of circle data at `x`, by trapezoid quadrature.
pub fn poisson_eval(data: &CircleData, x: Point2) -> Result<PoissonEval, BallError> {
    let b = data.ball;
    let rel = (x - b.center).norm() / b.radius;
    if !(rel <= 1.0 + 1e-12) {
        return Err(BallError::OutsideBall(rel));
    }
    let m = data.support.len();
    let mut out = vec![0.0; m];
    if m > 0 {
        poisson_sum(b.center, b.radius, &unit_rim(data.n()), &data.samples, m, x, &mut out);
    }
    Ok(PoissonEval { value: VecValue::from_support(data.space, &data.support, &out)?, near_rim: rel > 1.0 - DELTA_EVAL })
}

/// Rim sample count used for liftings: at least 256, three per cell length
/// of circumference. Updated nodes sit at least √2·h inside the rim, where
/// this keeps the trapezoid error of the Poisson kernel near 1e-12.
pub fn lift_samples(radius: f64, h: f64) -> usize {
    DEFAULT_SAMPLES.max((3.0 * TAU * radius / h).ceil() as usize)
}

/// Precomputed harmonic lifting of one ball on one discretization.
///
/// Rim samples are bilinear in the nodes of their cells; updated nodes are
/// the interior nodes with |p − x₀| < r − √2·h, so no updated node feeds a rim
/// sample and the lifting is exactly idempotent.
#[derive(Clone, Debug)]
pub struct LiftPlan {
    pub ball: Ball,
    rim: Vec<(f64, f64)>,
    stencil: Vec<[(u32, f64); 4]>,
    targets: Vec<u32>,
}

impl LiftPlan {
    pub fn new(u: &GridField, ball: Ball) -> Result<Self, BallError> {
        let g = *u.grid();
        let dom = u.domain();
        let dist = if dom.inside_base(ball.center) && dom.contains(ball.center) {
            dom.distance_unchecked(ball.center, DistanceMode::Full)
        } else {
            -1.0
        };
        if dist - ball.radius < g.h {
            return Err(ball.escapes());
        }
        let class = u.class();
        let n = lift_samples(ball.radius, g.h);
        let rim = unit_rim(n);
        let mut stencil = Vec::with_capacity(n);
        for &(c, s) in &rim {
            let p = Point2::new(ball.center.x + ball.radius * c, ball.center.y + ball.radius * s);
            let (i, j, fx, fy) = g.cell(p).ok_or_else(|| ball.escapes())?;
            let ids = [g.id(i, j), g.id(i + 1, j), g.id(i, j + 1), g.id(i + 1, j + 1)];
            if ids.iter().any(|&id| class[id] == NodeClass::Exterior) {
                return Err(ball.escapes());
            }
            let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            stencil.push(std::array::from_fn(|q| (ids[q] as u32, w[q])));
        }
        let inner = ball.radius - SQRT_2 * g.h;
        let mut targets = Vec::new();
        if inner > 0.0 {
            let lo_i = (((ball.center.x - inner - g.origin.x) / g.h).floor().max(0.0)) as usize;
            let hi_i = ((((ball.center.x + inner - g.origin.x) / g.h).ceil()) as usize).min(g.nx - 1);
            let lo_j = (((ball.center.y - inner - g.origin.y) / g.h).floor().max(0.0)) as usize;
            let hi_j = ((((ball.center.y + inner - g.origin.y) / g.h).ceil()) as usize).min(g.ny - 1);
            for j in lo_j..=hi_j {
                for i in lo_i..=hi_i {
                    let id = g.id(i, j);
                    if class[id] == NodeClass::Interior && (g.point(id) - ball.center).norm() < inner {
                        targets.push(id as u32);
                    }
                }
            }
        }
        Ok(Self { ball, rim, stencil, targets })
    }

    /// Nodes overwritten by the lifting.
    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    /// Replaces the field inside the ball by the Poisson integral of its rim
    /// values. Returns the largest change in any component.
    pub fn apply(&self, u: &mut GridField) -> f64 {
        let m = u.support().len();
        if m == 0 {
            return 0.0;
        }
        let nodes = u.nodes();
        let mut samples = vec![0.0; self.rim.len() * m];
        for (k, st) in self.stencil.iter().enumerate() {
            for c in 0..m {
                samples[k * m + c] = st.iter().map(|&(id, w)| w * nodes[c][id as usize]).sum();
            }
        }
        let g = *u.grid();
        let new: Vec<Vec<f64>> = par::map_range(self.targets.len(), |t| {
            let mut out = vec![0.0; m];
            poisson_sum(self.ball.center, self.ball.radius, &self.rim, &samples, m, g.point(self.targets[t] as usize), &mut out);
            out
        });
        let nodes = u.nodes_mut();
        let mut change: f64 = 0.0;
        for (t, v) in new.iter().enumerate() {
            let id = self.targets[t] as usize;
            for c in 0..m {
                change = change.max((nodes[c][id] - v[c]).abs());
                nodes[c][id] = v[c];
            }
        }
        change
    }
}

/// The harmonic lifting u_B: u outside B, the Poisson integral of u|∂B inside.
pub fn harmonic_lift(u: &GridField, ball: Ball) -> Result<GridField, BallError> {
    let plan = LiftPlan::new(u, ball)?;
    let mut out = u.clone();
    plan.apply(&mut out);
    Ok(out)
}

/// Circle average of `u` on ∂B(ξ, r) minus u(ξ).
pub fn mean_value_defect(u: &GridField, xi: Point2, r: f64) -> Result<VecValue, BallError> {
    let ball = Ball::new(xi, r)?;
    let dom: &Arc<_> = u.domain();
    if !dom.contains(xi) || dom.distance_unchecked(xi, DistanceMode::Full) <= r {
        return Err(ball.escapes());
    }
    let n = lift_samples(r, u.grid().h);
    let m = u.support().len();
    let mut avg = vec![0.0; m];
    for k in 0..n {
        let v = u.interpolate(ball.rim_point(k, n)).ok_or_else(|| ball.escapes())?;
        for c in 0..m {
            avg[c] += v[c];
        }
    }
    let center = u.interpolate(xi).ok_or_else(|| ball.escapes())?;
    let d: Vec<f64> = (0..m).map(|c| avg[c] / n as f64 - center[c]).collect();
    Ok(VecValue::from_support(u.space(), u.support(), &d)?)
}
