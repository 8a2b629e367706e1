//! Planar domains with finitely many punctures.
//!
//! A [`Domain`] is a regular base shape (disk, rectangle, annulus or a union of
//! disks and rectangles) minus a finite puncture set. The base boundary is
//! stored as a list of [`BoundaryPiece`]s (circular arcs and segments), which
//! gives exact distance, projection and ray-crossing queries for every
//! supported shape. Punctures are the irregular boundary points; every point of
//! the base boundary is regular.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for on-boundary tests.
pub const TAU_GEOM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("outside-domain: point ({x}, {y}) is not inside the base shape")]
    OutsideDomain { x: f64, y: f64 },
    #[error("at-puncture: point ({x}, {y}) coincides with a puncture")]
    AtPuncture { x: f64, y: f64 },
    #[error("not-boundary: point ({x}, {y}) is not on the boundary")]
    NotBoundary { x: f64, y: f64 },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid puncture: {0}")]
    InvalidPuncture(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(center: Point2, r: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(center.x + r * c, center.y + r * s)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Base shape of a domain. Unions may only contain disks and rectangles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseShape {
    Disk { center: Point2, radius: f64 },
    Rectangle { lo: Point2, hi: Point2 },
    Annulus { center: Point2, r_in: f64, r_out: f64 },
    Union { members: Vec<BaseShape> },
}

impl BaseShape {
    pub fn unit_disk() -> Self {
        BaseShape::Disk { center: Point2::new(0.0, 0.0), radius: 1.0 }
    }

    pub fn unit_square() -> Self {
        BaseShape::Rectangle { lo: Point2::new(0.0, 0.0), hi: Point2::new(1.0, 1.0) }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidShape(m.to_string()));
        match self {
            BaseShape::Disk { center, radius } => {
                if !center.is_finite() || !(radius.is_finite() && *radius > 0.0) {
                    return bad("disk radius must be positive and finite");
                }
            }
            BaseShape::Rectangle { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || hi.x <= lo.x || hi.y <= lo.y {
                    return bad("rectangle requires hi > lo componentwise");
                }
            }
            BaseShape::Annulus { center, r_in, r_out } => {
                if !center.is_finite() || !(*r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
                    return bad("annulus requires 0 < r_in < r_out");
                }
            }
            BaseShape::Union { members } => {
                if members.is_empty() {
                    return bad("union needs at least one member");
                }
                for m in members {
                    match m {
                        BaseShape::Disk { .. } | BaseShape::Rectangle { .. } => m.validate()?,
                        _ => return bad("union members must be disks or rectangles"),
                    }
                }
            }
        }
        Ok(())
    }

    /// Open-set membership.
    pub fn contains(&self, p: Point2) -> bool {
        match self {
            BaseShape::Disk { center, radius } => (p - *center).norm() < *radius,
            BaseShape::Rectangle { lo, hi } => p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y,
            BaseShape::Annulus { center, r_in, r_out } => {
                let r = (p - *center).norm();
                r > *r_in && r < *r_out
            }
            BaseShape::Union { members } => members.iter().any(|m| m.contains(p)),
        }
    }

    fn bbox(&self) -> (Point2, Point2) {
        match self {
            BaseShape::Disk { center, radius } | BaseShape::Annulus { center, r_out: radius, .. } => (
                Point2::new(center.x - radius, center.y - radius),
                Point2::new(center.x + radius, center.y + radius),
            ),
            BaseShape::Rectangle { lo, hi } => (*lo, *hi),
            BaseShape::Union { members } => {
                let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for m in members {
                    let (a, b) = m.bbox();
                    lo = Point2::new(lo.x.min(a.x), lo.y.min(a.y));
                    hi = Point2::new(hi.x.max(b.x), hi.y.max(b.y));
                }
                (lo, hi)
            }
        }
    }

    fn own_pieces(&self) -> Vec<BoundaryPiece> {
        match self {
            BaseShape::Disk { center, radius } => vec![BoundaryPiece::circle(*center, *radius)],
            BaseShape::Annulus { center, r_in, r_out } => vec![
                BoundaryPiece::circle(*center, *r_out),
                BoundaryPiece::circle(*center, *r_in),
            ],
            BaseShape::Rectangle { lo, hi } => {
                let c = [
                    Point2::new(lo.x, lo.y),
                    Point2::new(hi.x, lo.y),
                    Point2::new(hi.x, hi.y),
                    Point2::new(lo.x, hi.y),
                ];
                (0..4).map(|i| BoundaryPiece::Segment { a: c[i], b: c[(i + 1) % 4] }).collect()
            }
            BaseShape::Union { members } => union_pieces(members),
        }
    }

    fn diameter(&self) -> f64 {
        match self {
            BaseShape::Disk { radius, .. } => 2.0 * radius,
            BaseShape::Annulus { r_out, .. } => 2.0 * r_out,
            BaseShape::Rectangle { lo, hi } => (*hi - *lo).norm(),
            BaseShape::Union { members } => {
                let mut d: f64 = 0.0;
                for a in members {
                    for b in members {
                        d = d.max(max_member_distance(a, b));
                    }
                }
                d
            }
        }
    }
}

fn corners(lo: Point2, hi: Point2) -> [Point2; 4] {
    [lo, Point2::new(hi.x, lo.y), hi, Point2::new(lo.x, hi.y)]
}

fn max_member_distance(a: &BaseShape, b: &BaseShape) -> f64 {
    use BaseShape::*;
    match (a, b) {
        (Disk { center: c1, radius: r1 }, Disk { center: c2, radius: r2 }) => c1.dist(*c2) + r1 + r2,
        (Disk { center, radius }, Rectangle { lo, hi }) | (Rectangle { lo, hi }, Disk { center, radius }) => corners(*lo, *hi)
            .iter()
            .map(|q| q.dist(*center) + radius)
            .fold(0.0, f64::max),
        (Rectangle { lo: l1, hi: h1 }, Rectangle { lo: l2, hi: h2 }) => {
            let mut d: f64 = 0.0;
            for p in corners(*l1, *h1) {
                for q in corners(*l2, *h2) {
                    d = d.max(p.dist(q));
                }
            }
            d
        }
        _ => 0.0,
    }
}

/// A piece of the base boundary: a circular arc (counterclockwise from
/// `start` over `sweep` radians) or a straight segment.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryPiece {
    Arc { center: Point2, radius: f64, start: f64, sweep: f64 },
    Segment { a: Point2, b: Point2 },
}

impl BoundaryPiece {
    fn circle(center: Point2, radius: f64) -> Self {
        BoundaryPiece::Arc { center, radius, start: 0.0, sweep: TAU }
    }

    /// Full circles are closed loops; every other piece has two endpoints.
    pub fn is_closed(&self) -> bool {
        matches!(self, BoundaryPiece::Arc { sweep, .. } if *sweep >= TAU)
    }

    pub fn length(&self) -> f64 {
        match self {
            BoundaryPiece::Arc { radius, sweep, .. } => radius * sweep,
            BoundaryPiece::Segment { a, b } => a.dist(*b),
        }
    }

    /// Point at normalized parameter `t` in [0, 1].
    pub fn point_at(&self, t: f64) -> Point2 {
        match self {
            BoundaryPiece::Arc { center, radius, start, sweep } => Point2::from_polar(*center, *radius, start + t * sweep),
            BoundaryPiece::Segment { a, b } => *a + (*b - *a) * t,
        }
    }

    /// Closest point of the piece to `p`: (parameter, point, distance).
    pub fn project(&self, p: Point2) -> (f64, Point2, f64) {
        match self {
            BoundaryPiece::Segment { a, b } => {
                let d = *b - *a;
                let t = ((p - *a).dot(d) / d.norm_sq()).clamp(0.0, 1.0);
                let q = *a + d * t;
                (t, q, p.dist(q))
            }
            BoundaryPiece::Arc { center, radius, start, sweep } => {
                let v = p - *center;
                let rel = if v.norm_sq() == 0.0 { 0.0 } else { (v.angle() - start).rem_euclid(TAU) };
                if rel <= *sweep {
                    let q = Point2::from_polar(*center, *radius, start + rel);
                    (rel / sweep, q, (v.norm() - radius).abs())
                } else {
                    let qa = self.point_at(0.0);
                    let qb = self.point_at(1.0);
                    if p.dist(qa) <= p.dist(qb) {
                        (0.0, qa, p.dist(qa))
                    } else {
                        (1.0, qb, p.dist(qb))
                    }
                }
            }
        }
    }

    /// Parameters `s` in [0, 1] where the segment `p + s (q - p)` meets the piece.
    fn crossings(&self, p: Point2, q: Point2, out: &mut Vec<f64>) {
        let d = q - p;
        match self {
            BoundaryPiece::Segment { a, b } => {
                let e = *b - *a;
                let den = d.cross(e);
                if den.abs() < 1e-300 {
                    return;
                }
                let w = *a - p;
                let s = w.cross(e) / den;
                let u = w.cross(d) / den;
                if (-1e-12..=1.0 + 1e-12).contains(&s) && (-1e-12..=1.0 + 1e-12).contains(&u) {
                    out.push(s.clamp(0.0, 1.0));
                }
            }
            BoundaryPiece::Arc { center, radius, start, sweep } => {
                let f = p - *center;
                let a2 = d.norm_sq();
                let b2 = 2.0 * f.dot(d);
                let c2 = f.norm_sq() - radius * radius;
                let disc = b2 * b2 - 4.0 * a2 * c2;
                if disc < 0.0 || a2 == 0.0 {
                    return;
                }
                let sq = disc.sqrt();
                // numerically stable roots
                let qq = -0.5 * (b2 + b2.signum() * sq);
                let mut roots = [qq / a2, if qq != 0.0 { c2 / qq } else { qq / a2 }];
                if b2 == 0.0 {
                    roots = [-sq / (2.0 * a2), sq / (2.0 * a2)];
                }
                for s in roots {
                    if (-1e-12..=1.0 + 1e-12).contains(&s) {
                        let x = p + d * s;
                        let rel = ((x - *center).angle() - start).rem_euclid(TAU);
                        if *sweep >= TAU || rel <= *sweep + 1e-12 || rel >= TAU - 1e-12 {
                            out.push(s.clamp(0.0, 1.0));
                        }
                    }
                }
            }
        }
    }
}

fn split_piece(piece: &BoundaryPiece, others: &[BoundaryPiece]) -> Vec<BoundaryPiece> {
    // Breakpoints are collected as normalized parameters along `piece`.
    let mut ts: Vec<f64> = Vec::new();
    match piece {
        BoundaryPiece::Segment { a, b } => {
            let mut s = Vec::new();
            for o in others {
                o.crossings(*a, *b, &mut s);
            }
            ts.extend(s);
        }
        BoundaryPiece::Arc { center, radius, start, sweep } => {
            for o in others {
                match o {
                    BoundaryPiece::Segment { a, b } => {
                        let mut s = Vec::new();
                        piece.crossings(*a, *b, &mut s);
                        for si in s {
                            let x = *a + (*b - *a) * si;
                            let rel = ((x - *center).angle() - start).rem_euclid(TAU);
                            ts.push(rel / sweep);
                        }
                    }
                    BoundaryPiece::Arc { center: c2, radius: r2, .. } => {
                        let dv = *c2 - *center;
                        let dd = dv.norm();
                        if dd == 0.0 || dd > radius + r2 || dd < (radius - r2).abs() {
                            continue;
                        }
                        let a = (radius * radius - r2 * r2 + dd * dd) / (2.0 * dd);
                        let hh = (radius * radius - a * a).max(0.0).sqrt();
                        let base = *center + dv * (a / dd);
                        let perp = Point2::new(-dv.y / dd, dv.x / dd);
                        for x in [base + perp * hh, base - perp * hh] {
                            let rel = ((x - *center).angle() - start).rem_euclid(TAU);
                            if o.project(x).2 < 1e-9 {
                                ts.push(rel / sweep);
                            }
                        }
                    }
                }
            }
        }
    }
    ts.retain(|t| t.is_finite() && *t > 1e-12 && *t < 1.0 - 1e-12);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut parts = Vec::new();
    match piece {
        BoundaryPiece::Segment { .. } => {
            let mut bounds = vec![0.0];
            bounds.extend(ts.iter().copied());
            bounds.push(1.0);
            for w in bounds.windows(2) {
                parts.push(BoundaryPiece::Segment { a: piece.point_at(w[0]), b: piece.point_at(w[1]) });
            }
        }
        BoundaryPiece::Arc { center, radius, start, sweep } => {
            if ts.is_empty() {
                parts.push(piece.clone());
            } else if piece.is_closed() {
                for i in 0..ts.len() {
                    let t0 = ts[i];
                    let t1 = if i + 1 < ts.len() { ts[i + 1] } else { ts[0] + 1.0 };
                    parts.push(BoundaryPiece::Arc { center: *center, radius: *radius, start: start + t0 * sweep, sweep: (t1 - t0) * sweep });
                }
            } else {
                let mut bounds = vec![0.0];
                bounds.extend(ts.iter().copied());
                bounds.push(1.0);
                for w in bounds.windows(2) {
                    parts.push(BoundaryPiece::Arc { center: *center, radius: *radius, start: start + w[0] * sweep, sweep: (w[1] - w[0]) * sweep });
                }
            }
        }
    }
    parts
}

fn union_pieces(members: &[BaseShape]) -> Vec<BoundaryPiece> {
    let own: Vec<Vec<BoundaryPiece>> = members.iter().map(|m| m.own_pieces()).collect();
    let mut out = Vec::new();
    for (i, pieces) in own.iter().enumerate() {
        let others: Vec<BoundaryPiece> = own
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, p)| p.iter().cloned())
            .collect();
        for piece in pieces {
            for part in split_piece(piece, &others) {
                let mid = part.point_at(0.5);
                let covered = members.iter().enumerate().any(|(j, m)| j != i && m.contains(mid));
                // edges shared by two members are kept once
                let duplicate = out.iter().any(|q: &BoundaryPiece| q.project(mid).2 < 1e-12);
                if !covered && !duplicate && part.length() > 1e-14 {
                    out.push(part);
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Distance to the base boundary and every puncture.
    Full,
    /// Distance to the base boundary only (the regular boundary points).
    RegularOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    Regular,
    Irregular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub location: Point2,
    pub regularity: Regularity,
}

/// A quadrature node on the base boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub point: Point2,
    /// Arclength weight.
    pub weight: f64,
    pub piece: usize,
    pub index: usize,
}

/// Serialized form of a domain: `{base: {kind, ...}, punctures: [[x, y], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub base: BaseShape,
    #[serde(default)]
    pub punctures: Vec<Point2>,
}

#[derive(Clone, Debug)]
pub struct Domain {
    base: BaseShape,
    punctures: Vec<Point2>,
    pieces: Vec<BoundaryPiece>,
    perimeter: f64,
    diameter: f64,
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.punctures == other.punctures
    }
}

impl Serialize for Domain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let spec = DomainSpec::deserialize(d)?;
        Domain::new(spec.base, spec.punctures).map_err(serde::de::Error::custom)
    }
}

impl Domain {
    pub fn new(base: BaseShape, punctures: Vec<Point2>) -> Result<Self, GeometryError> {
        base.validate()?;
        let pieces = base.own_pieces();
        if pieces.is_empty() {
            return Err(GeometryError::InvalidShape("shape has an empty boundary".into()));
        }
        let perimeter = pieces.iter().map(BoundaryPiece::length).sum();
        let diameter = base.diameter();
        let dom = Domain { base, punctures: Vec::new(), pieces, perimeter, diameter };
        for (i, z) in punctures.iter().enumerate() {
            if !z.is_finite() || !dom.base.contains(*z) || dom.regular_distance(*z) <= TAU_GEOM {
                return Err(GeometryError::InvalidPuncture(format!(
                    "puncture {i} at ({}, {}) must lie strictly inside the base shape",
                    z.x, z.y
                )));
            }
            if punctures[..i].iter().any(|w| w.dist(*z) <= TAU_GEOM) {
                return Err(GeometryError::InvalidPuncture(format!("puncture {i} duplicates an earlier puncture")));
            }
        }
        Ok(Domain { punctures, ..dom })
    }

    pub fn unit_disk() -> Self {
        Self::new(BaseShape::unit_disk(), Vec::new()).expect("valid shape")
    }

    pub fn punctured_unit_disk() -> Self {
        Self::new(BaseShape::unit_disk(), vec![Point2::new(0.0, 0.0)]).expect("valid shape")
    }

    pub fn unit_square() -> Self {
        Self::new(BaseShape::unit_square(), Vec::new()).expect("valid shape")
    }

    /// Same base shape, no punctures.
    pub fn unpunctured(&self) -> Self {
        Domain { punctures: Vec::new(), ..self.clone() }
    }

    pub fn spec(&self) -> DomainSpec {
        DomainSpec { base: self.base.clone(), punctures: self.punctures.clone() }
    }

    pub fn base(&self) -> &BaseShape {
        &self.base
    }

    pub fn punctures(&self) -> &[Point2] {
        &self.punctures
    }

    pub fn pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        self.base.bbox()
    }

    /// Center used for angular boundary parameterizations.
    pub fn center(&self) -> Point2 {
        match &self.base {
            BaseShape::Disk { center, .. } | BaseShape::Annulus { center, .. } => *center,
            _ => {
                let (lo, hi) = self.bbox();
                (lo + hi) * 0.5
            }
        }
    }

    pub fn inside_base(&self, p: Point2) -> bool {
        self.base.contains(p)
    }

    /// Inside the base shape and not a puncture.
    pub fn contains(&self, p: Point2) -> bool {
        self.base.contains(p) && self.punctures.iter().all(|z| z.dist(p) > TAU_GEOM)
    }

    /// Distance to the base boundary; no validity checks.
    pub fn regular_distance(&self, p: Point2) -> f64 {
        match &self.base {
            BaseShape::Disk { center, radius } => (radius - (p - *center).norm()).abs(),
            BaseShape::Annulus { center, r_in, r_out } => {
                let r = (p - *center).norm();
                (r - r_in).abs().min((r_out - r).abs())
            }
            BaseShape::Rectangle { lo, hi } if self.base.contains(p) => {
                (p.x - lo.x).min(hi.x - p.x).min(p.y - lo.y).min(hi.y - p.y)
            }
            _ => self.pieces.iter().map(|pc| pc.project(p).2).fold(f64::INFINITY, f64::min),
        }
    }

    /// Distance to the nearest puncture (infinite when there are none).
    pub fn puncture_distance(&self, p: Point2) -> f64 {
        self.punctures.iter().map(|z| z.dist(p)).fold(f64::INFINITY, f64::min)
    }

    /// Distance to the boundary, unchecked: callers guarantee `p` is interior.
    pub fn distance_unchecked(&self, p: Point2, mode: DistanceMode) -> f64 {
        let d = self.regular_distance(p);
        match mode {
            DistanceMode::RegularOnly => d,
            DistanceMode::Full => d.min(self.puncture_distance(p)),
        }
    }

    pub fn dist_to_boundary(&self, p: Point2, mode: DistanceMode) -> Result<f64, GeometryError> {
        if !self.base.contains(p) {
            return Err(GeometryError::OutsideDomain { x: p.x, y: p.y });
        }
        if self.punctures.iter().any(|z| z.dist(p) <= TAU_GEOM) {
            return Err(GeometryError::AtPuncture { x: p.x, y: p.y });
        }
        Ok(self.distance_unchecked(p, mode))
    }

    /// Nearest point of the base boundary, with the piece it lies on and its
    /// parameter along that piece.
    pub fn nearest_boundary_point(&self, p: Point2) -> (Point2, usize, f64) {
        match &self.base {
            BaseShape::Disk { center, radius } => {
                let v = p - *center;
                let theta = if v.norm_sq() == 0.0 { 0.0 } else { v.angle() };
                (Point2::from_polar(*center, *radius, theta), 0, theta.rem_euclid(TAU) / TAU)
            }
            _ => {
                let mut best = (Point2::default(), 0, 0.0, f64::INFINITY);
                for (i, pc) in self.pieces.iter().enumerate() {
                    let (t, q, d) = pc.project(p);
                    if d < best.3 {
                        best = (q, i, t, d);
                    }
                }
                (best.0, best.1, best.2)
            }
        }
    }

    pub fn classify_boundary(&self, z: Point2) -> Result<Regularity, GeometryError> {
        if self.punctures.iter().any(|w| w.dist(z) <= TAU_GEOM) {
            return Ok(Regularity::Irregular);
        }
        let d = self.pieces.iter().map(|pc| pc.project(z).2).fold(f64::INFINITY, f64::min);
        if d <= TAU_GEOM {
            Ok(Regularity::Regular)
        } else {
            Err(GeometryError::NotBoundary { x: z.x, y: z.y })
        }
    }

    /// All irregular boundary points (the punctures).
    pub fn irregular_points(&self) -> Vec<BoundaryPoint> {
        self.punctures
            .iter()
            .map(|z| BoundaryPoint { location: *z, regularity: Regularity::Irregular })
            .collect()
    }

    /// Nodes per boundary piece for a total of `n` nodes, proportional to length.
    pub fn nodes_per_piece(&self, n: usize) -> Vec<usize> {
        let k = self.pieces.len();
        let n = n.max(k);
        let lens: Vec<f64> = self.pieces.iter().map(BoundaryPiece::length).collect();
        let spare = (n - k) as f64;
        let ideal: Vec<f64> = lens.iter().map(|l| spare * l / self.perimeter).collect();
        let mut counts: Vec<usize> = ideal.iter().map(|x| 1 + x.floor() as usize).collect();
        let mut left = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let ra = ideal[a] - ideal[a].floor();
            let rb = ideal[b] - ideal[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }

    /// Parameter of the `index`-th of `m` equispaced nodes on a piece.
    pub fn node_parameter(&self, piece: usize, index: usize, m: usize) -> f64 {
        if self.pieces[piece].is_closed() {
            index as f64 / m as f64
        } else {
            (index as f64 + 0.5) / m as f64
        }
    }

    /// Equispaced quadrature nodes on the base boundary. Punctures carry no
    /// harmonic measure and are never included.
    pub fn boundary_nodes(&self, n: usize) -> Vec<BoundaryNode> {
        let counts = self.nodes_per_piece(n);
        let mut out = Vec::with_capacity(counts.iter().sum());
        for (pi, (pc, &m)) in self.pieces.iter().zip(&counts).enumerate() {
            let w = pc.length() / m as f64;
            for i in 0..m {
                let t = self.node_parameter(pi, i, m);
                out.push(BoundaryNode { point: pc.point_at(t), weight: w, piece: pi, index: i });
            }
        }
        out
    }

    /// Fraction `s` in (0, 1] along `p -> q` where the segment first meets the
    /// base boundary, if it does.
    pub fn first_crossing(&self, p: Point2, q: Point2) -> Option<f64> {
        let mut s = Vec::new();
        for pc in &self.pieces {
            pc.crossings(p, q, &mut s);
        }
        s.into_iter().filter(|x| *x > 0.0).fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))))
    }
}

/// Angle of `p` around `center` in [0, 2π).
pub fn polar_angle(p: Point2, center: Point2) -> f64 {
    let v = p - center;
    if v.norm_sq() == 0.0 {
        0.0
    } else {
        v.angle().rem_euclid(TAU)
    }
}
