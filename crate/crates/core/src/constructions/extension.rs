//! Shepard extension of boundary data to the closed domain.

use crate::geometry::{Domain, Point2};
use crate::values::VecValue;

use super::{BoundaryData, ConstructionError};

/// Inverse-distance-squared interpolant of boundary values, weighted by the
/// arclength each node represents. The weights are convex, so F takes values
/// in the convex hull of the node values; on the disk it coincides with the
/// trapezoid rule for the Poisson integral.
#[derive(Clone, Debug)]
pub struct Extension {
    points: Vec<Point2>,
    weights: Vec<f64>,
    /// `[node][c]`
    values: Vec<Vec<f64>>,
    m: usize,
    source: BoundaryData,
}

/// max(256, ⌈4·perimeter/h⌉)
pub fn default_k_nodes(domain: &Domain, h: f64) -> usize {
    256usize.max((4.0 * domain.perimeter() / h).ceil() as usize)
}

pub fn extend(f: &BoundaryData, k_nodes: usize) -> Result<Extension, ConstructionError> {
    if k_nodes < 16 {
        return Err(ConstructionError::InvalidConfig(format!("extension needs at least 16 nodes, got {k_nodes}")));
    }
    let nodes = f.domain().boundary_nodes(k_nodes);
    let values: Vec<Vec<f64>> = nodes.iter().map(|b| f.eval(b.point)).collect();
    Ok(Extension {
        points: nodes.iter().map(|b| b.point).collect(),
        weights: nodes.iter().map(|b| b.weight).collect(),
        values,
        m: f.support().len(),
        source: f.clone(),
    })
}

impl Extension {
    pub fn source(&self) -> &BoundaryData {
        &self.source
    }

    pub fn n_nodes(&self) -> usize {
        self.points.len()
    }

    pub fn node_points(&self) -> &[Point2] {
        &self.points
    }

    pub fn node_values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// F(ξ) on the support of the source data.
    pub fn eval(&self, p: Point2) -> Vec<f64> {
        let mut num = vec![0.0; self.m];
        let mut den = 0.0;
        let v0 = &self.values[0];
        for (i, (&s, &w)) in self.points.iter().zip(&self.weights).enumerate() {
            let d2 = (p - s).norm_sq();
            if d2 < 1e-28 {
                return self.values[i].clone();
            }
            let wi = w / d2;
            den += wi;
            for c in 0..self.m {
                num[c] += wi * (self.values[i][c] - v0[c]);
            }
        }
        (0..self.m).map(|c| v0[c] + num[c] / den).collect()
    }

    pub fn eval_value(&self, p: Point2) -> VecValue {
        VecValue::from_support(self.source.space(), self.source.support(), &self.eval(p)).expect("finite data")
    }
}
