//! Wiener's construction: Dirichlet solves on an exhaustion with data taken
//! from a continuous extension of f.

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::grid::{default_levels, transpose, Discretization, Exhaustion, Grid, GridField, NodeClass, SubdomainKind};
use crate::par;

use super::{default_k_nodes, exhaustion_cached, extend, full_cached, BoundaryData, ConstructionError};

pub const EPS_WIENER: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WienerConfig {
    /// Defaults to ⌈log₂(diam/h)⌉, which ends on the full domain.
    pub n_levels: Option<usize>,
    /// Extension nodes; defaults to max(256, ⌈4·perimeter/h⌉).
    pub k_nodes: Option<usize>,
    pub eps: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self { n_levels: None, k_nodes: None, eps: EPS_WIENER }
    }
}

#[derive(Clone, Debug)]
pub struct WienerResult {
    pub field: GridField,
    /// d_k = max over ω₁ nodes of ‖H_{k+1} − H_k‖.
    pub diagnostics: Vec<f64>,
    pub converged: bool,
    pub n_levels: usize,
}

/// Stub values `[c][stub]` for one level of an exhaustion.
pub type LevelValues<'a> = dyn Fn(&Discretization) -> Vec<Vec<f64>> + Sync + 'a;

/// Solves on every level of `exh` with stub data from `level_values`.
///
/// `base` lives on the full discretization and supplies the boundary trace
/// and boundary-node values of the result; interior nodes outside the last
/// level take `fill(node)`.
pub fn wiener_core(
    exh: &Exhaustion,
    base: GridField,
    level_values: &LevelValues<'_>,
    fill: &(dyn Fn(usize) -> Vec<f64> + Sync),
    eps: f64,
) -> Result<WienerResult, ConstructionError> {
    let space = base.space();
    let m = base.support().len();
    let inner = &exh.levels[0];
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut diagnostics = Vec::new();
    let mut last = None;
    for disc in &exh.levels {
        let sol = disc.solve(0.0, None, &level_values(disc))?;
        // values on ω₁ nodes, which every later level contains
        let on_inner: Vec<Vec<f64>> = sol
            .iter()
            .map(|c| inner.unknowns().iter().map(|&u| c[disc.index_of(u as usize).expect("levels are nested")]).collect())
            .collect();
        if let Some(p) = &prev {
            let e = space.exponent();
            let d = par::chunked_max(inner.n_unknowns(), |k| e.norm((0..m).map(|c| on_inner[c][k] - p[c][k])));
            diagnostics.push(d);
        }
        prev = Some(on_inner);
        last = Some((disc.clone(), sol));
    }
    let (disc, sol) = last.expect("at least two levels");
    let mut field = base;
    let class = field.class().to_vec();
    let outside: Vec<usize> = (0..class.len()).filter(|&id| class[id] == NodeClass::Interior && disc.index_of(id).is_none()).collect();
    let values = par::map_range(outside.len(), |k| fill(outside[k]));
    let nodes = field.nodes_mut();
    for (&id, v) in outside.iter().zip(values) {
        (0..m).for_each(|c| nodes[c][id] = v[c]);
    }
    for (k, &u) in disc.unknowns().iter().enumerate() {
        (0..m).for_each(|c| nodes[c][u as usize] = sol[c][k]);
    }
    let converged = diagnostics.last().is_some_and(|&d| d < eps);
    Ok(WienerResult { field, diagnostics, converged, n_levels: exh.levels.len() })
}

/// Stub values of a level: `at(point)` for every stub, transposed.
pub fn stub_values(disc: &Discretization, m: usize, at: impl Fn(Point2) -> Vec<f64> + Sync) -> Vec<Vec<f64>> {
    transpose(&par::map_range(disc.stubs().len(), |s| at(disc.stubs()[s].point)), m)
}

/// The Perron solution of `f` by Wiener's construction on `grid`.
///
/// The final level is the full domain with the data f itself on ∂Ω; the
/// extension F feeds the drilled levels.
pub fn wiener_solve(f: &BoundaryData, grid: Grid, cfg: &WienerConfig) -> Result<WienerResult, ConstructionError> {
    let domain = f.domain();
    let n_levels = cfg.n_levels.unwrap_or_else(|| default_levels(domain, grid.h));
    let exh = exhaustion_cached(domain, grid, n_levels)?;
    let ext = extend(f, cfg.k_nodes.unwrap_or_else(|| default_k_nodes(domain, grid.h)))?;
    let m = f.support().len();
    let base = GridField::from_fn(full_cached(domain, grid)?, f.space(), f.support().to_vec(), |p| f.eval(p))?;
    let level_values = |disc: &Discretization| match disc.kind() {
        SubdomainKind::Full => stub_values(disc, m, |p| f.eval(p)),
        SubdomainKind::Level { .. } => stub_values(disc, m, |p| ext.eval(p)),
    };
    wiener_core(&exh, base, &level_values, &|id| ext.eval(grid.point(id)), cfg.eps)
}
