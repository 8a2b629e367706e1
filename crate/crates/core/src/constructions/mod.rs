//! Wiener's and Poincaré's constructions of the Perron solution and the
//! boundary-data extension they start from.

mod data;
mod extension;
mod poincare;
mod tensor;
mod wiener;

use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::ball::BallError;
use crate::geometry::{Domain, GeometryError};
use crate::grid::{build_exhaustion, domain_hash, Discretization, Exhaustion, Grid, GridError};
use crate::values::ValueError;

pub use data::{BoundaryData, BoundaryFn, DataKind, TensorTerm};
pub use extension::{default_k_nodes, extend, Extension};
pub use poincare::{check_cover, default_balls, poincare_iterate, poincare_solve, LiftKind, PoincareConfig, PoincareResult, Schedule, COVER_BAND};
pub use tensor::tensor_superposition;
pub use wiener::{stub_values, wiener_core, wiener_solve, LevelValues, WienerConfig, WienerResult, EPS_WIENER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructionError {
    #[error("balls-do-not-cover: {0} interior nodes are not covered")]
    BallsDoNotCover(usize),
    #[error("invalid boundary data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ball(#[from] BallError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Value(#[from] ValueError),
}

const CACHE_SIZE: usize = 4;

type Cache<T> = Mutex<Vec<(String, Arc<T>)>>;

static FULL: Cache<Discretization> = Mutex::new(Vec::new());
static EXHAUSTIONS: Cache<Exhaustion> = Mutex::new(Vec::new());

fn cache_key(domain: &Domain, grid: &Grid, extra: usize) -> String {
    format!("{}:{:?}:{extra}", domain_hash(domain), grid)
}

fn cached<T>(cache: &Cache<T>, key: String, make: impl FnOnce() -> Result<Arc<T>, GridError>) -> Result<Arc<T>, GridError> {
    {
        let mut c = cache.lock().unwrap();
        if let Some(pos) = c.iter().position(|(k, _)| *k == key) {
            let e = c.remove(pos);
            let v = e.1.clone();
            c.push(e);
            return Ok(v);
        }
    }
    let v = make()?;
    let mut c = cache.lock().unwrap();
    if c.len() == CACHE_SIZE {
        c.remove(0);
    }
    c.push((key, v.clone()));
    Ok(v)
}

/// Full discretization of `domain` on `grid`, shared between calls so that
/// factorizations are reused.
pub fn full_cached(domain: &Arc<Domain>, grid: Grid) -> Result<Arc<Discretization>, GridError> {
    cached(&FULL, cache_key(domain, &grid, 0), || Discretization::full(domain.clone(), grid))
}

pub fn exhaustion_cached(domain: &Arc<Domain>, grid: Grid, n_levels: usize) -> Result<Arc<Exhaustion>, GridError> {
    cached(&EXHAUSTIONS, cache_key(domain, &grid, n_levels), || {
        let mut e = build_exhaustion(domain.clone(), grid, n_levels)?;
        if let Some(last) = e.levels.last_mut() {
            if last.kind() == crate::grid::SubdomainKind::Full {
                *last = full_cached(domain, grid)?;
            }
        }
        Ok(Arc::new(e))
    })
}
