//! H_f = Σ H_{gⱼ} ⊗ xⱼ for tensor data.

use crate::grid::GridField;

use super::{BoundaryData, ConstructionError};

/// Solves each scalar term with `solve` and recombines the results.
pub fn tensor_superposition(
    f: &BoundaryData,
    mut solve: impl FnMut(&BoundaryData) -> Result<GridField, ConstructionError>,
) -> Result<GridField, ConstructionError> {
    let terms = f.scalar_terms().ok_or_else(|| ConstructionError::InvalidData("superposition needs tensor data".into()))?;
    let support = f.support().to_vec();
    let mut acc: Option<GridField> = None;
    for (g, x) in terms {
        let hg = solve(&g)?;
        let coords = x.on_support(&support);
        let term = GridField::from_parts(
            hg.disc().clone(),
            f.space(),
            support.clone(),
            coords.iter().map(|&a| hg.nodes()[0].iter().map(|v| a * v).collect()).collect(),
            coords.iter().map(|&a| hg.trace()[0].iter().map(|v| a * v).collect()).collect(),
        )?;
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    match acc {
        Some(a) => Ok(a),
        None => Err(ConstructionError::InvalidData("tensor data has no terms".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{wiener_solve, BoundaryFn, TensorTerm, WienerConfig};
    use crate::geometry::{Domain, Point2};
    use crate::grid::Grid;
    use crate::values::{ValueSpace, VecValue};
    use std::sync::Arc;

    #[test]
    fn two_term_disk_example() {
        let d = Arc::new(Domain::unit_disk());
        let g = Grid::covering(&d, 1.0 / 32.0).unwrap();
        let s = ValueSpace::rn_sup(2);
        let o = Point2::new(0.0, 0.0);
        let f = BoundaryData::tensor(
            d,
            s,
            vec![
                TensorTerm { g: BoundaryFn::fourier_cos(1, o), x: VecValue::from_slice(s, &[1.0, 0.0]).unwrap() },
                TensorTerm { g: BoundaryFn::fourier_sin(1, o), x: VecValue::from_slice(s, &[0.0, 1.0]).unwrap() },
            ],
        )
        .unwrap();
        let cfg = WienerConfig::default();
        let sup = tensor_superposition(&f, |g| Ok(wiener_solve(g, Grid::covering(g.domain(), 1.0 / 32.0)?, &cfg)?.field)).unwrap();
        let direct = wiener_solve(&f, g, &cfg).unwrap().field;
        assert!(sup.max_diff(&direct).unwrap() < 1e-12);
        for &id in direct.disc().unknowns() {
            let p = g.point(id as usize);
            let v = direct.node_coords(id as usize);
            assert!((v[0] - p.x).abs() < 5e-4 && (v[1] - p.y).abs() < 5e-4);
        }
    }
}
