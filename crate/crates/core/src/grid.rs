//! Finite-difference Laplace and Helmholtz solves on uniform grids.
//!
//! A [`Discretization`] is a set of unknown grid nodes plus "stubs": the links
//! from an unknown node to a neighbour outside the set, each carrying a
//! Dirichlet value at a point on the link. For the full domain the stub point
//! is where the grid line crosses the base boundary (at fraction θ of the
//! link) and the row uses the symmetric cut-cell rule
//!
//! ```text
//! Σ_interior (u_p − u_q) + Σ_stubs (u_p − g)/θ  =  h² s − λ h² u_p
//! ```
//!
//! which keeps the matrix a symmetric M-matrix and is second-order accurate.
//! Exhaustion levels are node sets at positive distance from the boundary and
//! use whole links (θ = 1) whose stub point is the outside node itself.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{DistanceMode, Domain, Point2};
use crate::par;
use crate::sparse::{SparseError, SpdSolver, SymCsr};
use crate::values::{Functional, ValueError, ValueSpace, VecValue};

/// Smallest link fraction used in cut-cell rows.
pub const THETA_MIN: f64 = 1e-3;

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid-too-coarse: {0}")]
    GridTooCoarse(String),
    #[error("disconnected-subdomain: system is singular at node {0}")]
    DisconnectedSubdomain(usize),
    #[error("solver-stalled: relative residual {0:e}")]
    SolverStalled(f64),
    #[error("invalid grid spacing {0}")]
    InvalidSpacing(f64),
    #[error("field mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Value(#[from] ValueError),
}

impl From<SparseError> for GridError {
    fn from(e: SparseError) -> Self {
        match e {
            SparseError::NotPositiveDefinite(k) => GridError::DisconnectedSubdomain(k),
            SparseError::Stalled(r) => GridError::SolverStalled(r),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Point2,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    /// Grid of spacing `h` with nodes at integer multiples of `h`, covering the
    /// bounding box of the domain with a one-cell margin.
    pub fn covering(domain: &Domain, h: f64) -> Result<Self, GridError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(GridError::InvalidSpacing(h));
        }
        let (lo, hi) = domain.bbox();
        let i0 = (lo.x / h).floor() as i64 - 1;
        let j0 = (lo.y / h).floor() as i64 - 1;
        let i1 = (hi.x / h).ceil() as i64 + 1;
        let j1 = (hi.y / h).ceil() as i64 + 1;
        let (nx, ny) = ((i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize);
        if nx.saturating_mul(ny) > 200_000_000 {
            return Err(GridError::InvalidSpacing(h));
        }
        Ok(Self { origin: Point2::new(i0 as f64 * h, j0 as f64 * h), h, nx, ny })
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, id: usize) -> (usize, usize) {
        (id % self.nx, id / self.nx)
    }

    pub fn point(&self, id: usize) -> Point2 {
        let (i, j) = self.ij(id);
        Point2::new(self.origin.x + i as f64 * self.h, self.origin.y + j as f64 * self.h)
    }

    /// Neighbour in direction `dir` (0: +x, 1: −x, 2: +y, 3: −y).
    pub fn neighbor(&self, id: usize, dir: u8) -> Option<usize> {
        let (i, j) = self.ij(id);
        match dir {
            0 if i + 1 < self.nx => Some(id + 1),
            1 if i > 0 => Some(id - 1),
            2 if j + 1 < self.ny => Some(id + self.nx),
            3 if j > 0 => Some(id - self.nx),
            _ => None,
        }
    }

    /// Node at `p` if `p` is within 1e-9·h of one.
    pub fn node_at(&self, p: Point2) -> Option<usize> {
        let fx = (p.x - self.origin.x) / self.h;
        let fy = (p.y - self.origin.y) / self.h;
        let (i, j) = (fx.round(), fy.round());
        if (fx - i).abs() < 1e-9 && (fy - j).abs() < 1e-9 && i >= 0.0 && j >= 0.0 && (i as usize) < self.nx && (j as usize) < self.ny {
            Some(self.id(i as usize, j as usize))
        } else {
            None
        }
    }

    /// Lower-left node of the cell containing `p` and the offsets in [0, 1).
    pub fn cell(&self, p: Point2) -> Option<(usize, usize, f64, f64)> {
        let fx = (p.x - self.origin.x) / self.h;
        let fy = (p.y - self.origin.y) / self.h;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        if i + 1 >= self.nx || j + 1 >= self.ny {
            return None;
        }
        Some((i, j, fx - i as f64, fy - j as f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Boundary => "boundary",
            NodeClass::Exterior => "exterior",
        }
    }
}

/// A link from an unknown node to a point where a Dirichlet value is imposed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stub {
    /// The unknown's grid node.
    pub node: u32,
    pub dir: u8,
    /// Fraction of the link at which the value sits, in (0, 1].
    pub theta: f64,
    pub point: Point2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SubdomainKind {
    /// The whole domain with cut-cell boundary rows; punctures are ignored.
    Full,
    /// Nodes at distance greater than `radius` from the boundary and punctures.
    Level { radius: f64 },
}

/// Unknown nodes, their stubs and the scaled stiffness matrix.
#[derive(Debug)]
pub struct Discretization {
    domain: Arc<Domain>,
    grid: Grid,
    kind: SubdomainKind,
    class: Vec<NodeClass>,
    unknowns: Vec<u32>,
    index: Vec<u32>,
    stubs: Vec<Stub>,
    /// Stub indices grouped by unknown.
    stub_ptr: Vec<u32>,
    stiffness: SymCsr,
    solvers: Mutex<BTreeMap<u64, Arc<SpdSolver>>>,
}

impl Discretization {
    /// The full domain on `grid`. Grid nodes inside the base shape are
    /// unknowns, including any node that coincides with a puncture.
    pub fn full(domain: Arc<Domain>, grid: Grid) -> Result<Arc<Self>, GridError> {
        let h = grid.h;
        let inside: Vec<bool> = par::map_range(grid.n_nodes(), |id| {
            let p = grid.point(id);
            domain.inside_base(p) && domain.regular_distance(p) > 1e-6 * h
        });
        let stub_of = |id: usize, dir: u8, q: usize| -> Stub {
            let p = grid.point(id);
            let qp = grid.point(q);
            let (s, point) = match domain.first_crossing(p, qp) {
                Some(s) => (s, p + (qp - p) * s),
                None => (1.0, domain.nearest_boundary_point(qp).0),
            };
            Stub { node: id as u32, dir, theta: s.max(THETA_MIN), point }
        };
        Self::assemble(domain.clone(), grid, SubdomainKind::Full, inside, &stub_of)
    }

    /// Exhaustion level: full-domain unknowns at distance greater than
    /// `radius` from the base boundary and every puncture.
    pub fn level(domain: Arc<Domain>, grid: Grid, radius: f64) -> Result<Arc<Self>, GridError> {
        let h = grid.h;
        let inside: Vec<bool> = par::map_range(grid.n_nodes(), |id| {
            let p = grid.point(id);
            domain.inside_base(p)
                && domain.regular_distance(p) > 1e-6 * h
                && domain.distance_unchecked(p, DistanceMode::Full) > radius
        });
        let stub_of = |id: usize, dir: u8, q: usize| Stub { node: id as u32, dir, theta: 1.0, point: grid.point(q) };
        Self::assemble(domain.clone(), grid, SubdomainKind::Level { radius }, inside, &stub_of)
    }

    fn assemble(
        domain: Arc<Domain>,
        grid: Grid,
        kind: SubdomainKind,
        inside: Vec<bool>,
        stub_of: &(dyn Fn(usize, u8, usize) -> Stub + Sync),
    ) -> Result<Arc<Self>, GridError> {
        let n = grid.n_nodes();
        let mut index = vec![NONE; n];
        let mut unknowns = Vec::new();
        for id in 0..n {
            if inside[id] {
                index[id] = unknowns.len() as u32;
                unknowns.push(id as u32);
            }
        }
        if unknowns.is_empty() {
            return Err(GridError::GridTooCoarse("subdomain has no grid nodes".into()));
        }
        let mut class = vec![NodeClass::Exterior; n];
        let per_node: Vec<(Vec<(u32, f64)>, Vec<Stub>)> = par::map_range(unknowns.len(), |k| {
            let id = unknowns[k] as usize;
            let mut row = Vec::with_capacity(5);
            let mut stubs = Vec::new();
            let mut diag = 0.0;
            for dir in 0..4u8 {
                let q = grid.neighbor(id, dir).expect("grid margin keeps neighbours in range");
                if inside[q] {
                    row.push((index[q], -1.0));
                    diag += 1.0;
                } else {
                    let s = stub_of(id, dir, q);
                    diag += 1.0 / s.theta;
                    stubs.push(s);
                }
            }
            row.push((k as u32, diag));
            (row, stubs)
        });
        let mut rows = Vec::with_capacity(unknowns.len());
        let mut stubs = Vec::new();
        let mut stub_ptr = vec![0u32];
        for (row, st) in per_node {
            for s in &st {
                class[grid.neighbor(s.node as usize, s.dir).unwrap()] = NodeClass::Boundary;
            }
            stubs.extend(st);
            stub_ptr.push(stubs.len() as u32);
            rows.push(row);
        }
        for &u in &unknowns {
            class[u as usize] = NodeClass::Interior;
        }
        Ok(Arc::new(Self {
            domain,
            grid,
            kind,
            class,
            unknowns,
            index,
            stubs,
            stub_ptr,
            stiffness: SymCsr::from_rows(rows),
            solvers: Mutex::new(BTreeMap::new()),
        }))
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> SubdomainKind {
        self.kind
    }

    pub fn class(&self) -> &[NodeClass] {
        &self.class
    }

    pub fn unknowns(&self) -> &[u32] {
        &self.unknowns
    }

    pub fn n_unknowns(&self) -> usize {
        self.unknowns.len()
    }

    /// Unknown index of a grid node.
    pub fn index_of(&self, node: usize) -> Option<usize> {
        match self.index[node] {
            NONE => None,
            k => Some(k as usize),
        }
    }

    pub fn stubs(&self) -> &[Stub] {
        &self.stubs
    }

    /// Stubs attached to unknown `k`.
    pub fn stubs_of(&self, k: usize) -> &[Stub] {
        &self.stubs[self.stub_range(k)]
    }

    /// Indices into `stubs()` (and a field's trace) of the stubs of unknown `k`.
    pub fn stub_range(&self, k: usize) -> std::ops::Range<usize> {
        self.stub_ptr[k] as usize..self.stub_ptr[k + 1] as usize
    }

    /// Stiffness matrix K: h²·(−Δ_h) restricted to the unknowns.
    pub fn stiffness(&self) -> &SymCsr {
        &self.stiffness
    }

    pub fn coords(&self) -> Vec<(i32, i32)> {
        self.unknowns
            .iter()
            .map(|&u| {
                let (i, j) = self.grid.ij(u as usize);
                (i as i32, j as i32)
            })
            .collect()
    }

    /// Boundary-class nodes (outside the set, adjacent to it).
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.class.len()).filter(|&i| self.class[i] == NodeClass::Boundary).collect()
    }

    fn solver(&self, shift: f64) -> Result<Arc<SpdSolver>, GridError> {
        let key = shift.to_bits();
        if let Some(s) = self.solvers.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let a = if shift == 0.0 { self.stiffness.clone() } else { self.stiffness.shifted(shift) };
        let s = Arc::new(SpdSolver::new(a, &self.coords())?);
        self.solvers.lock().unwrap().insert(key, s.clone());
        Ok(s)
    }

    /// Solves `(λ − Δ_h) u = s` with Dirichlet values at the stubs, one
    /// system per component. `source[c][k]` and `stub_values[c][s]` are
    /// indexed by component, then by unknown or stub. Returns `[c][unknown]`.
    pub fn solve(&self, lambda: f64, source: Option<&[Vec<f64>]>, stub_values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, GridError> {
        let h2 = self.grid.h * self.grid.h;
        let solver = self.solver(lambda * h2)?;
        let rhs: Vec<Vec<f64>> = (0..stub_values.len())
            .map(|c| {
                par::map_range(self.unknowns.len(), |k| {
                    let mut b = source.map_or(0.0, |s| h2 * s[c][k]);
                    for si in self.stub_range(k) {
                        b += stub_values[c][si] / self.stubs[si].theta;
                    }
                    b
                })
            })
            .collect();
        Ok(solver.solve_many(&rhs)?)
    }
}

/// A solution on the unknowns of some discretization.
#[derive(Clone, Debug)]
pub struct SubdomainSolution {
    pub disc: Arc<Discretization>,
    /// `[component][unknown]`
    pub values: Vec<Vec<f64>>,
}

impl SubdomainSolution {
    pub fn at_node(&self, c: usize, node: usize) -> Option<f64> {
        self.disc.index_of(node).map(|k| self.values[c][k])
    }
}

/// Nested exhaustion of a domain by grid subdomains.
#[derive(Debug)]
pub struct Exhaustion {
    pub domain: Arc<Domain>,
    pub grid: Grid,
    pub levels: Vec<Arc<Discretization>>,
}

/// Default number of levels: enough for the drilling radius to reach h.
pub fn default_levels(domain: &Domain, h: f64) -> usize {
    ((domain.diameter() / h).log2().ceil() as usize).max(2)
}

/// Radius of exhaustion level `k` (1-based): diam · 2^−(k+2). The extra
/// factor 1/4 keeps the first level of a centrally punctured disk nonempty.
pub fn level_radius(domain: &Domain, k: usize) -> f64 {
    domain.diameter() * 0.5f64.powi(k as i32 + 2)
}

/// Builds levels ω₁ ⊂ ω₂ ⊂ … . Once the drilling radius reaches the grid
/// spacing the level is the full discretization and the sequence stops.
pub fn build_exhaustion(domain: Arc<Domain>, grid: Grid, n_levels: usize) -> Result<Exhaustion, GridError> {
    if n_levels < 2 {
        return Err(GridError::GridTooCoarse(format!("need at least 2 levels, got {n_levels}")));
    }
    let mut levels = Vec::new();
    for k in 1..=n_levels {
        let r = level_radius(&domain, k);
        if r <= grid.h {
            levels.push(Discretization::full(domain.clone(), grid)?);
            break;
        }
        match Discretization::level(domain.clone(), grid, r) {
            Ok(d) => levels.push(d),
            Err(GridError::GridTooCoarse(_)) if k == 1 => {
                return Err(GridError::GridTooCoarse(format!("first exhaustion level (radius {r}) holds no grid nodes")))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Exhaustion { domain, grid, levels })
}

/// A vector-valued function on the full discretization of a domain.
///
/// Values are stored per component on every grid node (zero on exterior
/// nodes) together with the boundary trace at the full-domain stub points.
#[derive(Clone, Debug)]
pub struct GridField {
    disc: Arc<Discretization>,
    space: ValueSpace,
    support: Vec<usize>,
    nodes: Vec<Vec<f64>>,
    trace: Vec<Vec<f64>>,
}

impl GridField {
    pub fn from_parts(disc: Arc<Discretization>, space: ValueSpace, support: Vec<usize>, nodes: Vec<Vec<f64>>, trace: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if disc.kind != SubdomainKind::Full {
            return Err(GridError::Mismatch("fields live on the full discretization".into()));
        }
        for &k in &support {
            space.check_index(k)?;
        }
        let ok = nodes.len() == support.len()
            && trace.len() == support.len()
            && nodes.iter().all(|v| v.len() == disc.grid.n_nodes())
            && trace.iter().all(|v| v.len() == disc.stubs.len());
        if !ok {
            return Err(GridError::Mismatch("array shapes do not match the discretization".into()));
        }
        Ok(Self { disc, space, support, nodes, trace })
    }

    /// Samples `f` (coordinates on `support`) at interior and boundary nodes
    /// and at the stub points.
    pub fn from_fn(disc: Arc<Discretization>, space: ValueSpace, support: Vec<usize>, f: impl Fn(Point2) -> Vec<f64> + Sync) -> Result<Self, GridError> {
        let grid = disc.grid;
        let m = support.len();
        let at_nodes: Vec<Vec<f64>> = par::map_range(grid.n_nodes(), |id| match disc.class[id] {
            NodeClass::Exterior => vec![0.0; m],
            _ => f(grid.point(id)),
        });
        let at_stubs: Vec<Vec<f64>> = par::map_range(disc.stubs.len(), |s| f(disc.stubs[s].point));
        let nodes = transpose(&at_nodes, m);
        let trace = transpose(&at_stubs, m);
        Self::from_parts(disc, space, support, nodes, trace)
    }

    pub fn constant(disc: Arc<Discretization>, x: &VecValue) -> Result<Self, GridError> {
        let support: Vec<usize> = x.support().collect();
        let v = x.on_support(&support);
        Self::from_fn(disc, x.space(), support, move |_| v.clone())
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn grid(&self) -> &Grid {
        &self.disc.grid
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.disc.domain
    }

    pub fn space(&self) -> ValueSpace {
        self.space
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn class(&self) -> &[NodeClass] {
        &self.disc.class
    }

    /// `[component][node]`
    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.nodes
    }

    /// `[component][stub]`
    pub fn trace(&self) -> &[Vec<f64>] {
        &self.trace
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        self.nodes.iter().map(|c| c[node]).collect()
    }

    pub fn at_node(&self, node: usize) -> VecValue {
        VecValue::from_support(self.space, &self.support, &self.node_coords(node)).expect("field values are finite")
    }

    /// Bilinear interpolation; `None` if a cell corner is exterior.
    pub fn interpolate(&self, p: Point2) -> Option<Vec<f64>> {
        let g = &self.disc.grid;
        if let Some(id) = g.node_at(p) {
            return (self.disc.class[id] != NodeClass::Exterior).then(|| self.node_coords(id));
        }
        let (i, j, fx, fy) = g.cell(p)?;
        let ids = [g.id(i, j), g.id(i + 1, j), g.id(i, j + 1), g.id(i + 1, j + 1)];
        if ids.iter().any(|&id| self.disc.class[id] == NodeClass::Exterior) {
            return None;
        }
        let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        Some(self.nodes.iter().map(|c| (0..4).map(|q| w[q] * c[ids[q]]).sum()).collect())
    }

    pub fn value_at(&self, p: Point2) -> Option<VecValue> {
        self.interpolate(p).map(|v| VecValue::from_support(self.space, &self.support, &v).expect("finite"))
    }

    /// Sup norm over interior nodes and the boundary trace.
    pub fn sup_norm(&self) -> f64 {
        let e = self.space.exponent();
        let m = self.support.len();
        let unk = self.disc.unknowns();
        let a = par::chunked_max(unk.len(), |k| e.norm((0..m).map(|c| self.nodes[c][unk[k] as usize])));
        let b = par::chunked_max(self.disc.stubs.len(), |s| e.norm((0..m).map(|c| self.trace[c][s])));
        a.max(b)
    }

    /// Sup norm over interior nodes only.
    pub fn interior_sup_norm(&self) -> f64 {
        let e = self.space.exponent();
        let unk = self.disc.unknowns();
        par::chunked_max(unk.len(), |k| e.norm(self.nodes.iter().map(|c| c[unk[k] as usize])))
    }

    fn check_compatible(&self, o: &GridField) -> Result<(), GridError> {
        if self.space != o.space || self.disc.grid != o.disc.grid || self.disc.stubs.len() != o.disc.stubs.len() || self.disc.class != o.disc.class {
            return Err(GridError::Mismatch("fields live on different grids or spaces".into()));
        }
        Ok(())
    }

    /// Re-expresses the field on a (larger) coordinate support.
    pub fn with_support(&self, support: &[usize]) -> GridField {
        let zero_n = vec![0.0; self.nodes.first().map_or(self.disc.grid.n_nodes(), Vec::len)];
        let zero_t = vec![0.0; self.disc.stubs.len()];
        let pick = |k: usize, src: &[Vec<f64>], zero: &Vec<f64>| match self.support.iter().position(|&s| s == k) {
            Some(c) => src[c].clone(),
            None => zero.clone(),
        };
        GridField {
            disc: self.disc.clone(),
            space: self.space,
            support: support.to_vec(),
            nodes: support.iter().map(|&k| pick(k, &self.nodes, &zero_n)).collect(),
            trace: support.iter().map(|&k| pick(k, &self.trace, &zero_t)).collect(),
        }
    }

    /// Pointwise combination on nodes and trace.
    pub fn zip_with(&self, o: &GridField, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<GridField, GridError> {
        self.check_compatible(o)?;
        let support = union_support(&self.support, &o.support);
        let a = self.with_support(&support);
        let b = o.with_support(&support);
        let class = &self.disc.class;
        let nodes = (0..support.len())
            .map(|c| par::map_range(class.len(), |i| if class[i] == NodeClass::Exterior { 0.0 } else { f(a.nodes[c][i], b.nodes[c][i]) }))
            .collect();
        let trace = (0..support.len()).map(|c| a.trace[c].iter().zip(&b.trace[c]).map(|(x, y)| f(*x, *y)).collect()).collect();
        Ok(GridField { disc: self.disc.clone(), space: self.space, support, nodes, trace })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> GridField {
        let class = &self.disc.class;
        GridField {
            disc: self.disc.clone(),
            space: self.space,
            support: self.support.clone(),
            nodes: self.nodes.iter().map(|c| par::map_range(c.len(), |i| if class[i] == NodeClass::Exterior { 0.0 } else { f(c[i]) })).collect(),
            trace: self.trace.iter().map(|c| c.iter().map(|x| f(*x)).collect()).collect(),
        }
    }

    pub fn add(&self, o: &GridField) -> Result<GridField, GridError> {
        self.zip_with(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &GridField) -> Result<GridField, GridError> {
        self.zip_with(o, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> GridField {
        self.map(|x| x * s)
    }

    pub fn pointwise_sup(&self, o: &GridField) -> Result<GridField, GridError> {
        self.zip_with(o, f64::max)
    }

    pub fn pointwise_abs(&self) -> GridField {
        self.map(f64::abs)
    }

    /// Adds a constant vector everywhere.
    pub fn shift(&self, x: &VecValue) -> Result<GridField, GridError> {
        let c = GridField::constant(self.disc.clone(), x)?;
        self.add(&c)
    }

    /// Scalar field ⟨u, x'⟩.
    pub fn pair(&self, x: &Functional) -> Result<GridField, GridError> {
        if x.space() != self.space {
            return Err(ValueError::SpaceMismatch(x.space().to_string(), self.space.to_string()).into());
        }
        let w = x.on_support(&self.support);
        let n = self.disc.grid.n_nodes();
        let nodes = vec![par::map_range(n, |i| (0..w.len()).map(|c| w[c] * self.nodes[c][i]).sum())];
        let trace = vec![(0..self.disc.stubs.len()).map(|s| (0..w.len()).map(|c| w[c] * self.trace[c][s]).sum()).collect()];
        Ok(GridField { disc: self.disc.clone(), space: ValueSpace::scalar(), support: vec![0], nodes, trace })
    }

    /// Coordinate `k` as a scalar field.
    pub fn component(&self, k: usize) -> GridField {
        let f = self.with_support(&[k]);
        GridField { space: ValueSpace::scalar(), support: vec![0], ..f }
    }

    /// Embeds a scalar field as coordinate `k` of `space`.
    pub fn embed(&self, space: ValueSpace, k: usize) -> Result<GridField, GridError> {
        space.check_index(k)?;
        Ok(GridField { space, support: vec![k], ..self.component(0) })
    }

    /// Max over interior nodes of the norm of the difference.
    pub fn max_diff(&self, o: &GridField) -> Result<f64, GridError> {
        Ok(self.sub(o)?.interior_sup_norm())
    }

    /// Five-point Laplacian at an interior node whose neighbours are interior.
    pub fn laplacian_at(&self, node: usize) -> Option<Vec<f64>> {
        let g = &self.disc.grid;
        let mut nb = [0usize; 4];
        for d in 0..4u8 {
            let q = g.neighbor(node, d)?;
            if self.disc.class[q] != NodeClass::Interior {
                return None;
            }
            nb[d as usize] = q;
        }
        if self.disc.class[node] != NodeClass::Interior {
            return None;
        }
        let h2 = g.h * g.h;
        Some(self.nodes.iter().map(|c| (nb.iter().map(|&q| c[q]).sum::<f64>() - 4.0 * c[node]) / h2).collect())
    }

    /// CSV rows `x,y,node_class,coord_index,value` for interior and boundary nodes.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "x,y,node_class,coord_index,value")?;
        let g = &self.disc.grid;
        for id in 0..g.n_nodes() {
            let cl = self.disc.class[id];
            if cl == NodeClass::Exterior {
                continue;
            }
            let p = g.point(id);
            for (c, &k) in self.support.iter().enumerate() {
                writeln!(w, "{:.16e},{:.16e},{},{},{:.16e}", p.x, p.y, cl.as_str(), k, self.nodes[c][id])?;
            }
        }
        Ok(())
    }

    pub fn metadata(&self) -> FieldMetadata {
        FieldMetadata { grid: self.disc.grid, space: self.space, support: self.support.clone(), domain_hash: domain_hash(&self.disc.domain) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldMetadata {
    pub grid: Grid,
    pub space: ValueSpace,
    pub support: Vec<usize>,
    pub domain_hash: String,
}

pub fn domain_hash(d: &Domain) -> String {
    let json = serde_json::to_vec(&d.spec()).expect("domain serializes");
    hex::encode(Sha256::digest(&json))
}

pub fn union_support(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut s: Vec<usize> = a.iter().chain(b).copied().collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// `[item][c]` → `[c][item]`
pub fn transpose(rows: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
}

/// Dirichlet solve on the full domain: `g` gives the data at stub points and
/// the values stored at boundary-class nodes.
pub fn solve_laplace(disc: &Arc<Discretization>, space: ValueSpace, support: Vec<usize>, g: impl Fn(Point2) -> Vec<f64> + Sync) -> Result<GridField, GridError> {
    solve_helmholtz(disc, 0.0, None, space, support, g)
}

/// `(λ − Δ_h) u = source` on the full domain with Dirichlet data `g`.
pub fn solve_helmholtz(
    disc: &Arc<Discretization>,
    lambda: f64,
    source: Option<&GridField>,
    space: ValueSpace,
    support: Vec<usize>,
    g: impl Fn(Point2) -> Vec<f64> + Sync,
) -> Result<GridField, GridError> {
    let mut field = GridField::from_fn(disc.clone(), space, support.clone(), &g)?;
    let src: Option<Vec<Vec<f64>>> = source
        .map(|s| {
            let s = s.with_support(&support);
            s.check_compatible(&field).map(|_| s.nodes.iter().map(|c| disc.unknowns.iter().map(|&u| c[u as usize]).collect()).collect())
        })
        .transpose()?;
    let sol = disc.solve(lambda, src.as_deref(), &field.trace)?;
    for (c, vals) in sol.iter().enumerate() {
        for (k, &u) in disc.unknowns.iter().enumerate() {
            field.nodes[c][u as usize] = vals[k];
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BaseShape, Domain};

    fn disk(h: f64) -> Arc<Discretization> {
        let d = Arc::new(Domain::unit_disk());
        let g = Grid::covering(&d, h).unwrap();
        Discretization::full(d, g).unwrap()
    }

    #[test]
    fn grid_nodes_are_aligned() {
        let d = Domain::unit_disk();
        let g = Grid::covering(&d, 1.0 / 8.0).unwrap();
        let o = g.node_at(Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(g.point(o), Point2::new(0.0, 0.0));
        assert!(g.origin.x <= -1.0 - 1.0 / 8.0 + 1e-15);
    }

    #[test]
    fn every_interior_neighbour_has_a_value() {
        let disc = disk(1.0 / 16.0);
        let g = disc.grid();
        for &u in disc.unknowns() {
            for d in 0..4 {
                let q = g.neighbor(u as usize, d).unwrap();
                assert_ne!(disc.class()[q], NodeClass::Exterior);
            }
        }
    }

    #[test]
    fn constants_and_linear_functions_are_exact() {
        let d = Arc::new(Domain::unit_square());
        let g = Grid::covering(&d, 1.0 / 20.0).unwrap();
        let disc = Discretization::full(d, g).unwrap();
        let c = solve_laplace(&disc, ValueSpace::scalar(), vec![0], |_| vec![2.5]).unwrap();
        for &u in disc.unknowns() {
            assert!((c.nodes()[0][u as usize] - 2.5).abs() < 1e-12);
        }
        let x = solve_laplace(&disc, ValueSpace::scalar(), vec![0], |p| vec![p.x]).unwrap();
        let q = solve_laplace(&disc, ValueSpace::scalar(), vec![0], |p| vec![p.x * p.x - p.y * p.y]).unwrap();
        for &u in disc.unknowns() {
            let p = g.point(u as usize);
            assert!((x.nodes()[0][u as usize] - p.x).abs() < 1e-12);
            assert!((q.nodes()[0][u as usize] - (p.x * p.x - p.y * p.y)).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_laplacian_of_saddle_vanishes() {
        // oracle: direct stencil evaluation of x²−y²
        let h = 0.1f64;
        let f = |x: f64, y: f64| x * x - y * y;
        let (x, y) = (0.3, -0.2);
        let lap = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h);
        assert!(lap.abs() < 1e-12);
    }

    #[test]
    fn second_order_on_disk() {
        let err = |h: f64| {
            let disc = disk(h);
            // data cos θ on the circle; exact solution x
            let u = solve_laplace(&disc, ValueSpace::scalar(), vec![0], |p| vec![p.angle().cos()]).unwrap();
            let g = disc.grid();
            disc.unknowns().iter().map(|&n| (u.nodes()[0][n as usize] - g.point(n as usize).x).abs()).fold(0.0, f64::max)
        };
        // the cut-cell rows reproduce linear functions exactly
        assert!(err(1.0 / 32.0) < 1e-12);
        let err2 = |h: f64| {
            let disc = disk(h);
            let u = solve_laplace(&disc, ValueSpace::scalar(), vec![0], |p| {
                let t = p.angle();
                vec![(3.0 * t).cos()]
            })
            .unwrap();
            let g = disc.grid();
            disc.unknowns()
                .iter()
                .map(|&n| {
                    let p = g.point(n as usize);
                    (u.nodes()[0][n as usize] - p.norm().powi(3) * (3.0 * p.angle()).cos()).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err2(1.0 / 32.0), err2(1.0 / 64.0));
        let ratio = e1 / e2;
        assert!((3.0..5.5).contains(&ratio), "errors {e1:e} {e2:e} ratio {ratio}");
    }

    #[test]
    fn helmholtz_bounds() {
        let disc = disk(1.0 / 24.0);
        let one = GridField::from_fn(disc.clone(), ValueSpace::scalar(), vec![0], |_| vec![1.0]).unwrap();
        let lambda = 3.0;
        let u = solve_helmholtz(&disc, lambda, Some(&one), ValueSpace::scalar(), vec![0], |_| vec![0.0]).unwrap();
        for &n in disc.unknowns() {
            let v = u.nodes()[0][n as usize];
            assert!(v >= 0.0 && v <= 1.0 / lambda + 1e-15);
        }
        let lambda = 1e4;
        let f = GridField::from_fn(disc.clone(), ValueSpace::scalar(), vec![0], |p| vec![(p.x + 2.0 * p.y).cos()]).unwrap();
        let u = solve_helmholtz(&disc, lambda, Some(&f), ValueSpace::scalar(), vec![0], |_| vec![0.0]).unwrap();
        let g = disc.grid();
        for &n in disc.unknowns() {
            let p = g.point(n as usize);
            if p.norm() < 0.5 {
                let fv = f.nodes()[0][n as usize];
                assert!((lambda * u.nodes()[0][n as usize] - fv).abs() <= 0.01 * fv.abs().max(0.05));
            }
        }
        let z = solve_helmholtz(&disc, 2.0, None, ValueSpace::scalar(), vec![0], |_| vec![0.0]).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn exhaustion_is_nested() {
        let d = Arc::new(Domain::punctured_unit_disk());
        let g = Grid::covering(&d, 1.0 / 64.0).unwrap();
        let ex = build_exhaustion(d.clone(), g, 3).unwrap();
        assert_eq!(ex.levels.len(), 3);
        for w in ex.levels.windows(2) {
            let a = w[0].unknowns();
            assert!(a.len() < w[1].n_unknowns());
            assert!(a.iter().all(|&u| w[1].index_of(u as usize).is_some()));
        }
        // punctures are drilled out with the level radius
        for (k, lev) in ex.levels.iter().enumerate() {
            let r = level_radius(&d, k + 1);
            assert!(lev.unknowns().iter().all(|&u| g.point(u as usize).norm() > r));
        }
        let full = build_exhaustion(d.clone(), g, default_levels(&d, g.h)).unwrap();
        assert_eq!(full.levels.last().unwrap().kind(), SubdomainKind::Full);
        assert!(build_exhaustion(d, g, 1).is_err());

        let rect = Arc::new(Domain::new(BaseShape::Rectangle { lo: Point2::new(0.0, 0.0), hi: Point2::new(2.0, 1.0) }, vec![]).unwrap());
        let gr = Grid::covering(&rect, 1.0 / 32.0).unwrap();
        let ex = build_exhaustion(rect, gr, 6).unwrap();
        let counts: Vec<usize> = ex.levels.iter().map(|l| l.n_unknowns()).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    }

    #[test]
    fn coarse_grid_error() {
        let d = Arc::new(Domain::new(BaseShape::Disk { center: Point2::new(0.05, 0.05), radius: 0.01 }, vec![]).unwrap());
        let g = Grid::covering(&d, 0.1).unwrap();
        assert!(matches!(Discretization::full(d, g), Err(GridError::GridTooCoarse(_))));
    }

    #[test]
    fn interpolation_and_norms() {
        let disc = disk(1.0 / 16.0);
        let f = GridField::from_fn(disc.clone(), ValueSpace::rn_sup(2), vec![0, 1], |p| vec![p.x, 2.0 * p.y]).unwrap();
        let v = f.interpolate(Point2::new(0.123, -0.321)).unwrap();
        assert!((v[0] - 0.123).abs() < 1e-14 && (v[1] + 0.642).abs() < 1e-14);
        assert!((f.sup_norm() - 2.0).abs() < 1e-12);
        let g = f.pair(&Functional::direction(ValueSpace::rn_sup(2), [(0, 1.0), (1, 1.0)]).unwrap()).unwrap();
        let w = g.interpolate(Point2::new(0.5, 0.25)).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14);
    }
}
