//! Perron's method for lattice-valued data: explicit sub- and supersolutions,
//! brackets around the Perron solution, and the harmonic lattice supremum.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ball::lift_samples;
use crate::constructions::{
    default_k_nodes, exhaustion_cached, stub_values, wiener_core, wiener_solve, BoundaryData, ConstructionError, WienerConfig, WienerResult,
};
use crate::geometry::{DistanceMode, Point2};
use crate::grid::{default_levels, union_support, Discretization, GridError, GridField, NodeClass, SubdomainKind};
use crate::par;
use crate::values::{ValueError, ValueSpace, VecValue};

/// Mean-value defect tolerance, relative to max(1, ‖field‖∞).
pub const TAU_MV: f64 = 1e-6;
/// Bracket tolerance, relative to the data sup norm.
pub const TAU_BRACKET: f64 = 1e-5;
const MV_PROBES: usize = 100;
const MV_SEED: u64 = 0x6d76_6368;
/// Probe circle radii in units of h.
const MV_RADII: [f64; 3] = [2.0, 4.0, 8.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("invalid-order-bound: {0}")]
    InvalidOrderBound(String),
    #[error("bracketing needs a domain with at least one puncture")]
    NoPunctures,
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    Sub,
    Super,
}

impl WitnessKind {
    /// Signed amount by which `a` violates `a ≤ b` (sub) or `a ≥ b` (super).
    fn excess(self, a: f64, b: f64) -> f64 {
        match self {
            WitnessKind::Sub => a - b,
            WitnessKind::Super => b - a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessCheck {
    pub kind: WitnessKind,
    pub n_boundary_points: usize,
    /// Largest amount by which the field crosses f on the boundary.
    pub boundary_violation: f64,
    pub n_probes: usize,
    /// Most negative (sub) or most positive (super) mean-value defect, as
    /// the amount by which it has the wrong sign.
    pub mean_value_violation: f64,
    pub tau_boundary: f64,
    pub tau_mv: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct Witness {
    pub field: GridField,
    pub kind: WitnessKind,
    pub check: WitnessCheck,
}

/// Fourth-order Lagrange interpolation on the 4×4 nodes around `p`.
fn cubic_interpolate(u: &GridField, p: Point2) -> Option<Vec<f64>> {
    let g = u.grid();
    let (i, j, tx, ty) = g.cell(p)?;
    if i == 0 || j == 0 || i + 2 >= g.nx || j + 2 >= g.ny {
        return None;
    }
    let w = |t: f64| [-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0, -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0];
    let (wx, wy) = (w(tx), w(ty));
    let class = u.class();
    let mut out = vec![0.0; u.support().len()];
    for b in 0..4 {
        for a in 0..4 {
            let id = g.id(i + a - 1, j + b - 1);
            if class[id] == NodeClass::Exterior {
                return None;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += wx[a] * wy[b] * u.nodes()[c][id];
            }
        }
    }
    Some(out)
}

/// Circle average minus centre value at each probe and radius, per
/// coordinate. Probes whose circles leave the domain are skipped.
pub fn mean_value_defects(u: &GridField, probes: &[Point2]) -> Vec<Vec<f64>> {
    let h = u.grid().h;
    let rows = par::map_range(probes.len(), |k| {
        let xi = probes[k];
        let center = cubic_interpolate(u, xi)?;
        let mut out = Vec::new();
        for r in MV_RADII.map(|m| m * h) {
            let n = lift_samples(r, h);
            let mut avg = vec![0.0; center.len()];
            for s in 0..n {
                let v = cubic_interpolate(u, Point2::from_polar(xi, r, TAU * s as f64 / n as f64))?;
                avg.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
            }
            out.push(avg.iter().zip(&center).map(|(a, c)| a / n as f64 - c).collect::<Vec<f64>>());
        }
        Some(out)
    });
    rows.into_iter().flatten().flatten().collect()
}

/// `MV_PROBES` seeded points at distance > 11h from the boundary.
pub fn witness_probes(u: &GridField) -> Vec<Point2> {
    let d = u.domain();
    let margin = (MV_RADII[2] + 3.0) * u.grid().h;
    let (lo, hi) = d.bbox();
    let mut rng = ChaCha8Rng::seed_from_u64(MV_SEED);
    let mut out = Vec::with_capacity(MV_PROBES);
    for _ in 0..200 * MV_PROBES {
        if out.len() == MV_PROBES {
            break;
        }
        let p = Point2::new(lo.x + (hi.x - lo.x) * rng.random::<f64>(), lo.y + (hi.y - lo.y) * rng.random::<f64>());
        if d.contains(p) && d.distance_unchecked(p, DistanceMode::Full) > margin {
            out.push(p);
        }
    }
    out
}

/// Boundary comparison with f at the cut points and punctures, plus the
/// mean-value defect sign at seeded probes.
pub fn check_witness(u: &GridField, kind: WitnessKind, f: &BoundaryData) -> WitnessCheck {
    let support = union_support(u.support(), f.support());
    let u = u.with_support(&support);
    let pick = |v: &[f64], k: usize| f.support().iter().position(|&s| s == k).map_or(0.0, |c| v[c]);
    let disc = u.disc().clone();
    let m = support.len();
    let at_stubs = par::chunked_max(disc.stubs().len(), |s| {
        let fv = f.eval(disc.stubs()[s].point);
        (0..m).map(|c| kind.excess(u.trace()[c][s], pick(&fv, support[c]))).fold(f64::MIN, f64::max)
    });
    let mut boundary_violation = at_stubs.max(0.0);
    for (j, &z) in f.domain().punctures().iter().enumerate() {
        if let Some(v) = u.interpolate(z) {
            let fz = f.puncture_value(j);
            for c in 0..m {
                boundary_violation = boundary_violation.max(kind.excess(v[c], pick(fz, support[c])));
            }
        }
    }
    let probes = witness_probes(&u);
    let defects = mean_value_defects(&u, &probes);
    let mean_value_violation = defects
        .iter()
        .flat_map(|d| d.iter().map(|&x| kind.excess(0.0, x)))
        .fold(0.0f64, f64::max);
    let scale = u.sup_norm().max(1.0);
    let data_norm = f.sup_norm(default_k_nodes(f.domain(), u.grid().h));
    let tau_boundary = 1e-9 * data_norm.max(1.0);
    let tau_mv = TAU_MV * scale;
    WitnessCheck {
        kind,
        n_boundary_points: disc.stubs().len() + f.domain().punctures().len(),
        boundary_violation,
        n_probes: probes.len(),
        mean_value_violation,
        tau_boundary,
        tau_mv,
        passed: boundary_violation <= tau_boundary && mean_value_violation <= tau_mv,
    }
}

fn witness(field: GridField, kind: WitnessKind, f: &BoundaryData) -> Witness {
    let check = check_witness(&field, kind, f);
    Witness { field, kind, check }
}

/// Lower and upper fields around a reference Perron solution.
#[derive(Clone, Debug)]
pub struct Bracket {
    pub lower: GridField,
    pub upper: GridField,
    pub reference: GridField,
    /// Σⱼ |H_f(zⱼ) − f(zⱼ)|
    pub shift: VecValue,
    pub reference_converged: bool,
    pub witness_checks: Vec<WitnessCheck>,
    /// Data sup norm, the scale of the bracket tolerance.
    pub data_norm: f64,
}

/// v±(ξ) = H_f(ξ) ± Σⱼ |H_f(zⱼ) − f(zⱼ)| on a punctured domain.
pub fn punctured_bracketing(f: &BoundaryData, grid: crate::grid::Grid, cfg: &WienerConfig) -> Result<Bracket, LatticeError> {
    let dom = f.domain();
    if dom.punctures().is_empty() {
        return Err(LatticeError::NoPunctures);
    }
    let reference = wiener_solve(f, grid, cfg)?;
    let plain = wiener_solve(&f.on_domain(Arc::new(dom.unpunctured()))?, grid, cfg)?;
    let m = f.support().len();
    let mut s = vec![0.0; m];
    for (j, &z) in dom.punctures().iter().enumerate() {
        let hz = plain.field.interpolate(z).ok_or_else(|| GridError::GridTooCoarse("puncture lies outside the grid interior".into()))?;
        for c in 0..m {
            s[c] += (hz[c] - f.puncture_value(j)[c]).abs();
        }
    }
    let shift = VecValue::from_support(f.space(), f.support(), &s)?;
    let lower = reference.field.shift(&shift.scale(-1.0))?;
    let upper = reference.field.shift(&shift)?;
    let witness_checks = vec![check_witness(&lower, WitnessKind::Sub, f), check_witness(&upper, WitnessKind::Super, f)];
    Ok(Bracket {
        lower,
        upper,
        reference: reference.field,
        shift,
        reference_converged: reference.converged,
        witness_checks,
        data_norm: f.sup_norm(default_k_nodes(dom, grid.h)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BracketReport {
    pub max_violation: f64,
    pub tau: f64,
    pub passed: bool,
    /// Per node, the larger of upper − reference and reference − lower.
    pub gap_stats: GapStats,
    pub witness_checks: Vec<WitnessCheck>,
}

/// Checks lower ≤ reference ≤ upper coordinatewise at interior nodes and
/// on the boundary trace.
pub fn verify_bracket(b: &Bracket) -> Result<BracketReport, LatticeError> {
    let support = union_support(&union_support(b.lower.support(), b.upper.support()), b.reference.support());
    let (lo, up, re) = (b.lower.with_support(&support), b.upper.with_support(&support), b.reference.with_support(&support));
    lo.max_diff(&re)?;
    up.max_diff(&re)?;
    let m = support.len();
    let unk = re.disc().unknowns().to_vec();
    let per_node = par::map_range(unk.len(), |k| {
        let id = unk[k] as usize;
        let (mut viol, mut gap) = (0.0f64, f64::MIN);
        for c in 0..m {
            let (l, r, u) = (lo.nodes()[c][id], re.nodes()[c][id], up.nodes()[c][id]);
            viol = viol.max(l - r).max(r - u);
            gap = gap.max(u - r).max(r - l);
        }
        (viol, gap)
    });
    let mut max_violation = par::chunked_max(re.disc().stubs().len(), |s| (0..m).map(|c| (lo.trace()[c][s] - re.trace()[c][s]).max(re.trace()[c][s] - up.trace()[c][s])).fold(0.0, f64::max));
    max_violation = per_node.iter().fold(max_violation.max(0.0), |a, p| a.max(p.0));
    let n = per_node.len().max(1) as f64;
    let gap_stats = GapStats {
        min: per_node.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        max: per_node.iter().map(|p| p.1).fold(f64::MIN, f64::max),
        mean: per_node.iter().map(|p| p.1).sum::<f64>() / n,
    };
    let tau = TAU_BRACKET * b.data_norm;
    Ok(BracketReport { max_violation, tau, passed: max_violation <= tau, gap_stats, witness_checks: b.witness_checks.clone() })
}

/// Vector witness equal to the scalar witness `v` in coordinate `n` and to
/// the order bound `bound` elsewhere. For a subsolution `bound` must be a
/// lower bound of f, for a supersolution an upper bound.
pub fn coordinate_witness(v: &GridField, f: &BoundaryData, bound: &VecValue, n: usize, kind: WitnessKind) -> Result<Witness, LatticeError> {
    let space = f.space();
    space.check_index(n)?;
    if bound.space() != space || v.support().len() != 1 {
        return Err(LatticeError::InvalidOrderBound("bound must lie in the data space and v must be scalar".into()));
    }
    let support = union_support(&union_support(f.support(), &bound.support().collect::<Vec<_>>()), &[n]);
    let check = |vals: &[f64], at: &str| -> Result<(), LatticeError> {
        for (c, &k) in f.support().iter().enumerate() {
            if k != n && kind.excess(bound.get(k), vals[c]) > 1e-12 {
                return Err(LatticeError::InvalidOrderBound(format!("coordinate {k} at {at}")));
            }
        }
        Ok(())
    };
    for b in f.domain().boundary_nodes(default_k_nodes(f.domain(), v.grid().h)) {
        check(&f.eval(b.point), "a boundary node")?;
    }
    for j in 0..f.domain().punctures().len() {
        check(f.puncture_value(j), "a puncture")?;
    }
    // coordinates outside the data support are zero
    for k in bound.support() {
        if k != n && !f.support().contains(&k) && kind.excess(bound.get(k), 0.0) > 1e-12 {
            return Err(LatticeError::InvalidOrderBound(format!("coordinate {k} outside the data support")));
        }
    }
    let g = *v.grid();
    let pos = support.iter().position(|&k| k == n).expect("n is in the support");
    let nodes: Vec<Vec<f64>> = support.iter().enumerate().map(|(c, &k)| if c == pos { v.nodes()[0].clone() } else { vec![bound.get(k); g.n_nodes()] }).collect();
    let trace: Vec<Vec<f64>> = support.iter().enumerate().map(|(c, &k)| if c == pos { v.trace()[0].clone() } else { vec![bound.get(k); v.trace()[0].len()] }).collect();
    let field = GridField::from_parts(v.disc().clone(), space, support, nodes, trace)?;
    Ok(witness(field, kind, f))
}

/// Sub-witness in a sampled C(K) from a scalar sub-witness `v` of the
/// coordinate `a`: (v − ε)·g with g a hat function equal to 1 at `a` and
/// vanishing off U* = {k : f(z)(k) > v(z) − ε on the boundary}.
/// Requires f ≥ 0.
pub fn am_bump_witness(v: &GridField, f: &BoundaryData, a: usize, eps: f64) -> Result<Witness, LatticeError> {
    let space = f.space();
    let ValueSpace::SampledCK { k_nodes } = space else {
        return Err(LatticeError::InvalidOrderBound("the bump construction needs a sampled C(K) space".into()));
    };
    space.check_index(a)?;
    if v.support().len() != 1 || !(eps > 0.0) {
        return Err(LatticeError::InvalidOrderBound("v must be scalar and ε positive".into()));
    }
    let full = f.clone().with_support(&(0..k_nodes).collect::<Vec<_>>());
    let disc = v.disc().clone();
    let mut in_u = vec![true; k_nodes];
    let mut nonneg = true;
    let mut visit = |fv: &[f64], vz: f64| {
        for k in 0..k_nodes {
            nonneg &= fv[k] >= 0.0;
            in_u[k] &= fv[k] > vz - eps;
        }
    };
    for (s, st) in disc.stubs().iter().enumerate() {
        visit(&full.eval(st.point), v.trace()[0][s]);
    }
    for (j, &z) in f.domain().punctures().iter().enumerate() {
        if let Some(vz) = v.interpolate(z) {
            visit(full.puncture_value(j), vz[0]);
        }
    }
    if !nonneg {
        return Err(LatticeError::InvalidOrderBound("data must be nonnegative; shift it by its sup norm first".into()));
    }
    if !in_u[a] {
        return Err(LatticeError::InvalidOrderBound(format!("v is not below coordinate {a} of the data")));
    }
    let width = (0..k_nodes).filter(|&k| !in_u[k]).map(|k| k.abs_diff(a) as f64).fold(k_nodes as f64, f64::min);
    let bump: Vec<f64> = (0..k_nodes).map(|k| (1.0 - k.abs_diff(a) as f64 / width).max(0.0)).collect();
    let support: Vec<usize> = (0..k_nodes).filter(|&k| bump[k] > 0.0).collect();
    let nodes = support.iter().map(|&k| v.nodes()[0].iter().map(|x| (x - eps) * bump[k]).collect()).collect();
    let trace = support.iter().map(|&k| v.trace()[0].iter().map(|x| (x - eps) * bump[k]).collect()).collect();
    let field = GridField::from_parts(disc, space, support, nodes, trace)?;
    Ok(witness(field, WitnessKind::Sub, f))
}

/// u ∨_H v: the limit of Dirichlet solves on an exhaustion with data
/// u ∨ v on the level boundaries.
pub fn lattice_sup_harmonic(u: &GridField, v: &GridField, n_levels: Option<usize>) -> Result<WienerResult, LatticeError> {
    let support = union_support(u.support(), v.support());
    let (u, v) = (u.with_support(&support), v.with_support(&support));
    let base = u.pointwise_sup(&v)?;
    let dom = u.domain().clone();
    let grid = *u.grid();
    let exh = exhaustion_cached(&dom, grid, n_levels.unwrap_or_else(|| default_levels(&dom, grid.h)))?;
    let m = support.len();
    let level_values = |disc: &Discretization| match disc.kind() {
        SubdomainKind::Full => base.trace().to_vec(),
        SubdomainKind::Level { .. } => stub_values(disc, m, |p| base.node_coords(grid.node_at(p).expect("level stubs sit on nodes"))),
    };
    Ok(wiener_core(&exh, base.clone(), &level_values, &|id| base.node_coords(id), crate::constructions::EPS_WIENER)?)
}

/// |u|_H = u ∨_H (−u).
pub fn lattice_abs_harmonic(u: &GridField, n_levels: Option<usize>) -> Result<WienerResult, LatticeError> {
    lattice_sup_harmonic(u, &u.scale(-1.0), n_levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{full_cached, BoundaryFn, TensorTerm};
    use crate::geometry::Domain;
    use crate::grid::Grid;

    fn disk_data(v0: f64) -> BoundaryData {
        let d = Arc::new(Domain::punctured_unit_disk());
        BoundaryData::scalar(d, BoundaryFn::fourier_cos(1, Point2::new(0.0, 0.0))).with_puncture_values(&[VecValue::scalar(v0)]).unwrap()
    }

    #[test]
    fn bracket_with_shift_five() {
        let f = disk_data(5.0);
        let g = Grid::covering(f.domain(), 1.0 / 32.0).unwrap();
        let b = punctured_bracketing(&f, g, &WienerConfig::default()).unwrap();
        assert!((b.shift.get(0) - 5.0).abs() < 1e-12);
        let r = verify_bracket(&b).unwrap();
        assert!(r.passed && r.max_violation == 0.0);
        assert!((r.gap_stats.min - 5.0).abs() < 1e-12 && (r.gap_stats.max - 5.0).abs() < 1e-12);
        assert!(b.witness_checks.iter().all(|c| c.passed), "{:?}", b.witness_checks);
        let mut bad = b.clone();
        bad.lower = b.lower.shift(&b.shift.scale(10.0)).unwrap();
        let r = verify_bracket(&bad).unwrap();
        assert!(!r.passed && (r.max_violation - 45.0).abs() < 1e-9);
    }

    #[test]
    fn compatible_puncture_value_closes_the_gap() {
        let f = disk_data(0.0);
        let g = Grid::covering(f.domain(), 1.0 / 32.0).unwrap();
        let b = punctured_bracketing(&f, g, &WienerConfig::default()).unwrap();
        let r = verify_bracket(&b).unwrap();
        assert!(r.passed && r.gap_stats.max < 1e-12);
    }

    #[test]
    fn vector_shift_uses_the_lattice_absolute_value() {
        let d = Arc::new(Domain::punctured_unit_disk());
        let s = ValueSpace::rn_sup(2);
        let f = BoundaryData::tensor(d, s, vec![TensorTerm { g: BoundaryFn::constant(1.0), x: VecValue::from_slice(s, &[0.0, 0.0]).unwrap() }])
            .unwrap()
            .with_puncture_values(&[VecValue::from_slice(s, &[1.0, -2.0]).unwrap()])
            .unwrap();
        let g = Grid::covering(f.domain(), 1.0 / 16.0).unwrap();
        let b = punctured_bracketing(&f, g, &WienerConfig::default()).unwrap();
        assert_eq!(b.shift.on_support(&[0, 1]), vec![1.0, 2.0]);
    }

    #[test]
    fn sup_of_x_and_minus_x() {
        let d = Arc::new(Domain::unit_disk());
        let g = Grid::covering(&d, 1.0 / 32.0).unwrap();
        let disc = full_cached(&d, g).unwrap();
        let u = GridField::from_fn(disc, ValueSpace::scalar(), vec![0], |p| vec![p.x]).unwrap();
        let r = lattice_abs_harmonic(&u, None).unwrap();
        let o = r.field.interpolate(Point2::new(0.0, 0.0)).unwrap()[0];
        assert!((o - 2.0 / std::f64::consts::PI).abs() < 5e-3, "{o}");
        assert!((r.field.sup_norm() - u.sup_norm()).abs() < 1e-12);
        let floor = u.pointwise_abs();
        for &id in r.field.disc().unknowns() {
            assert!(r.field.nodes()[0][id as usize] >= floor.nodes()[0][id as usize] - 1e-10);
        }
        let c = GridField::constant(u.disc().clone(), &VecValue::scalar(0.25)).unwrap();
        let k = lattice_sup_harmonic(&c, &c.scale(-1.0), None).unwrap();
        assert!(k.field.max_diff(&c).unwrap() < 1e-13);
    }

    #[test]
    fn coordinate_witness_and_bad_bound() {
        let d = Arc::new(Domain::unit_disk());
        let g = Grid::covering(&d, 1.0 / 16.0).unwrap();
        let s = ValueSpace::FinSeq { p: crate::values::Exponent::Finite(2.0) };
        let e0 = VecValue::new(s, [(0, 1.0)]).unwrap();
        let gfun = BoundaryFn::new("1+cos", |p: Point2| 1.0 + p.x / p.norm());
        let f = BoundaryData::tensor(d.clone(), s, vec![TensorTerm { g: gfun.clone(), x: e0 }]).unwrap();
        let hg = wiener_solve(&BoundaryData::scalar(d.clone(), gfun), g, &WienerConfig::default()).unwrap().field;
        let upper = VecValue::new(s, [(0, 2.0)]).unwrap();
        let w = coordinate_witness(&hg, &f, &VecValue::zero(s), 0, WitnessKind::Sub).unwrap();
        assert!(w.check.passed, "{:?}", w.check);
        assert_eq!(w.field.component(0).max_diff(&hg).unwrap(), 0.0);
        let err = coordinate_witness(&hg, &f, &VecValue::new(s, [(1, 0.5)]).unwrap(), 0, WitnessKind::Sub).unwrap_err();
        assert!(err.to_string().starts_with("invalid-order-bound"));
        assert!(coordinate_witness(&hg, &f, &upper, 0, WitnessKind::Super).unwrap().check.passed);
    }

    #[test]
    fn bump_witness_in_sampled_ck() {
        let d = Arc::new(Domain::unit_disk());
        let g = Grid::covering(&d, 1.0 / 16.0).unwrap();
        let s = ValueSpace::SampledCK { k_nodes: 9 };
        let f = BoundaryData::sampled(d.clone(), s, (0..9).collect(), 128, |p| (0..9).map(|k| 1.0 + p.x * (k as f64 / 8.0)).collect()).unwrap();
        let comp = f.component(4);
        let v = wiener_solve(&comp, g, &WienerConfig::default()).unwrap().field;
        let w = am_bump_witness(&v, &f, 4, 0.1).unwrap();
        assert!(w.check.passed, "{:?}", w.check);
        let at = w.field.component(4).max_diff(&v.map(|x| x - 0.1)).unwrap();
        assert!(at < 1e-14);
    }
}
