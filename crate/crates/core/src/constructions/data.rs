//! Vector-valued boundary data.

use std::fmt;
use std::sync::Arc;

use crate::geometry::{polar_angle, BoundaryNode, Domain, Point2};
use crate::grid::union_support;
use crate::values::{ValueError, ValueSpace, VecValue};

use super::ConstructionError;

/// A continuous scalar function on the boundary, evaluated lazily.
#[derive(Clone)]
pub struct BoundaryFn {
    name: String,
    f: Arc<dyn Fn(Point2) -> f64 + Send + Sync>,
}

impl fmt::Debug for BoundaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundaryFn({})", self.name)
    }
}

impl BoundaryFn {
    pub fn new(name: impl Into<String>, f: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), move |_| c)
    }

    /// cos(kθ) with θ the polar angle about `center`.
    pub fn fourier_cos(k: u32, center: Point2) -> Self {
        Self::new(format!("cos({k}θ)"), move |p| (k as f64 * polar_angle(p, center)).cos())
    }

    /// sin(kθ) with θ the polar angle about `center`.
    pub fn fourier_sin(k: u32, center: Point2) -> Self {
        Self::new(format!("sin({k}θ)"), move |p| (k as f64 * polar_angle(p, center)).sin())
    }

    /// Indicator of the angular arc [a, b) (radians, measured about `center`).
    pub fn arc_indicator(a: f64, b: f64, center: Point2) -> Self {
        use std::f64::consts::TAU;
        Self::new(format!("arc[{a},{b})"), move |p| {
            let t = polar_angle(p, center);
            let (a0, span) = (a.rem_euclid(TAU), (b - a).clamp(0.0, TAU));
            f64::from(u8::from((t - a0).rem_euclid(TAU) < span))
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, p: Point2) -> f64 {
        (self.f)(p)
    }
}

#[derive(Clone, Debug)]
pub struct TensorTerm {
    pub g: BoundaryFn,
    pub x: VecValue,
}

#[derive(Clone, Debug)]
pub enum DataKind {
    /// f = Σ gⱼ ⊗ xⱼ
    Tensor(Vec<TensorTerm>),
    /// Values at `Domain::boundary_nodes(n)`, interpolated linearly along
    /// each boundary piece. `values[node][c]` on the data's support.
    Sampled { nodes: Vec<BoundaryNode>, counts: Vec<usize>, values: Vec<Vec<f64>> },
    /// `base − minus`, both on the same support; `minus` is usually sampled.
    Difference { base: Box<BoundaryData>, minus: Box<BoundaryData> },
}

/// f ∈ C(∂Ω, X), including its values at the punctures.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    domain: Arc<Domain>,
    space: ValueSpace,
    support: Vec<usize>,
    kind: DataKind,
    /// Values at the punctures, on the support.
    punctures: Vec<Vec<f64>>,
}

impl BoundaryData {
    pub fn tensor(domain: Arc<Domain>, space: ValueSpace, terms: Vec<TensorTerm>) -> Result<Self, ConstructionError> {
        space.validate()?;
        let mut support = Vec::new();
        for t in &terms {
            if t.x.space() != space {
                return Err(ValueError::SpaceMismatch(t.x.space().to_string(), space.to_string()).into());
            }
            support = union_support(&support, &t.x.support().collect::<Vec<_>>());
        }
        let punctures = domain
            .punctures()
            .iter()
            .map(|&z| {
                let mut v = vec![0.0; support.len()];
                for t in &terms {
                    let g = t.g.eval(z);
                    for (c, &k) in support.iter().enumerate() {
                        v[c] += g * t.x.get(k);
                    }
                }
                v
            })
            .collect();
        Ok(Self { domain, space, support, kind: DataKind::Tensor(terms), punctures })
    }

    /// Scalar data g (as g ⊗ 1 in ℝ¹).
    pub fn scalar(domain: Arc<Domain>, g: BoundaryFn) -> Self {
        Self::tensor(domain, ValueSpace::scalar(), vec![TensorTerm { g, x: VecValue::scalar(1.0) }]).expect("scalar space is valid")
    }

    /// Samples `f` at `n` boundary nodes; `f` returns coordinates on `support`.
    pub fn sampled(domain: Arc<Domain>, space: ValueSpace, support: Vec<usize>, n: usize, f: impl Fn(Point2) -> Vec<f64>) -> Result<Self, ConstructionError> {
        space.validate()?;
        for &k in &support {
            space.check_index(k)?;
        }
        let nodes = domain.boundary_nodes(n);
        let counts = domain.nodes_per_piece(n);
        let values: Vec<Vec<f64>> = nodes.iter().map(|b| f(b.point)).collect();
        if values.iter().any(|v| v.len() != support.len() || v.iter().any(|x| !x.is_finite())) {
            return Err(ConstructionError::InvalidData("sampled values must be finite and match the support".into()));
        }
        let punctures = vec![vec![0.0; support.len()]; domain.punctures().len()];
        Ok(Self { domain, space, support, kind: DataKind::Sampled { nodes, counts, values }, punctures })
    }

    /// f − c where c is sampled at `n` boundary nodes; f itself stays exact.
    /// Puncture values are those of f minus `c` evaluated at the punctures.
    pub fn minus_sampled(self, n: usize, c: impl Fn(Point2) -> Vec<f64>) -> Result<Self, ConstructionError> {
        let minus = Self::sampled(self.domain.clone(), self.space, self.support.clone(), n, &c)?;
        let punctures = self.domain.punctures().iter().zip(&self.punctures).map(|(&z, v)| v.iter().zip(c(z)).map(|(a, b)| a - b).collect()).collect();
        Ok(Self { domain: self.domain.clone(), space: self.space, support: self.support.clone(), punctures, kind: DataKind::Difference { base: Box::new(self), minus: Box::new(minus) } })
    }

    /// Replaces the values assigned at the punctures.
    pub fn with_puncture_values(mut self, values: &[VecValue]) -> Result<Self, ConstructionError> {
        if values.len() != self.domain.punctures().len() {
            return Err(ConstructionError::InvalidData(format!(
                "expected {} puncture values, got {}",
                self.domain.punctures().len(),
                values.len()
            )));
        }
        let mut support = self.support.clone();
        for v in values {
            if v.space() != self.space {
                return Err(ValueError::SpaceMismatch(v.space().to_string(), self.space.to_string()).into());
            }
            support = union_support(&support, &v.support().collect::<Vec<_>>());
        }
        self = self.with_support(&support);
        self.punctures = values.iter().map(|v| v.on_support(&support)).collect();
        Ok(self)
    }

    /// Re-expresses the data on a larger coordinate support.
    pub fn with_support(mut self, support: &[usize]) -> Self {
        if support == self.support {
            return self;
        }
        let remap = |v: &Vec<f64>, old: &[usize]| -> Vec<f64> {
            support.iter().map(|k| old.iter().position(|o| o == k).map_or(0.0, |c| v[c])).collect()
        };
        let old = self.support.clone();
        match &mut self.kind {
            DataKind::Sampled { values, .. } => *values = values.iter().map(|v| remap(v, &old)).collect(),
            DataKind::Difference { base, minus } => {
                **base = base.as_ref().clone().with_support(support);
                **minus = minus.as_ref().clone().with_support(support);
            }
            DataKind::Tensor(_) => {}
        }
        self.punctures = self.punctures.iter().map(|v| remap(v, &old)).collect();
        self.support = support.to_vec();
        self
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn space(&self) -> ValueSpace {
        self.space
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn kind(&self) -> &DataKind {
        &self.kind
    }

    /// The same data on another domain with the same base shape (used to
    /// compare punctured and unpunctured problems).
    pub fn on_domain(&self, domain: Arc<Domain>) -> Result<Self, ConstructionError> {
        if domain.base() != self.domain.base() {
            return Err(ConstructionError::InvalidData("base shapes differ".into()));
        }
        let mut out = self.clone();
        out.punctures = match &self.kind {
            DataKind::Tensor(terms) => BoundaryData::tensor(domain.clone(), self.space, terms.clone())?.with_support(&self.support).punctures,
            DataKind::Sampled { .. } | DataKind::Difference { .. } => vec![vec![0.0; self.support.len()]; domain.punctures().len()],
        };
        out.domain = domain;
        Ok(out)
    }

    /// f at a point of the base boundary (points off the boundary are
    /// projected onto it). Coordinates on the support.
    pub fn eval(&self, p: Point2) -> Vec<f64> {
        match &self.kind {
            DataKind::Tensor(terms) => {
                let mut v = vec![0.0; self.support.len()];
                for t in terms {
                    let g = t.g.eval(p);
                    for (c, &k) in self.support.iter().enumerate() {
                        v[c] += g * t.x.get(k);
                    }
                }
                v
            }
            DataKind::Sampled { counts, values, .. } => {
                let (_, piece, t) = self.domain.nearest_boundary_point(p);
                let offset: usize = counts[..piece].iter().sum();
                let m = counts[piece];
                let closed = self.domain.pieces()[piece].is_closed();
                let (i0, i1, w) = if closed {
                    let s = t * m as f64;
                    let i = (s.floor() as usize).min(m - 1);
                    (i, (i + 1) % m, s - i as f64)
                } else {
                    let s = (t * m as f64 - 0.5).clamp(0.0, (m - 1) as f64);
                    let i = (s.floor() as usize).min(m.saturating_sub(2));
                    (i, (i + 1).min(m - 1), s - i as f64)
                };
                let (a, b) = (&values[offset + i0], &values[offset + i1]);
                a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
            }
            DataKind::Difference { base, minus } => base.eval(p).iter().zip(minus.eval(p)).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn eval_value(&self, p: Point2) -> VecValue {
        VecValue::from_support(self.space, &self.support, &self.eval(p)).expect("finite data")
    }

    /// Value assigned at puncture `j`, on the support.
    pub fn puncture_value(&self, j: usize) -> &[f64] {
        &self.punctures[j]
    }

    pub fn puncture_vec_value(&self, j: usize) -> VecValue {
        VecValue::from_support(self.space, &self.support, &self.punctures[j]).expect("finite data")
    }

    /// Max norm over `n` boundary nodes and the puncture values.
    pub fn sup_norm(&self, n: usize) -> f64 {
        let mut m: f64 = match &self.kind {
            DataKind::Sampled { values, .. } => values.iter().map(|v| self.space.norm_of(v)).fold(0.0, f64::max),
            DataKind::Tensor(_) | DataKind::Difference { .. } => 0.0,
        };
        for b in self.domain.boundary_nodes(n) {
            m = m.max(self.space.norm_of(&self.eval(b.point)));
        }
        self.punctures.iter().fold(m, |m, v| m.max(self.space.norm_of(v)))
    }

    /// Tensor terms as scalar problems `gⱼ` with their vectors `xⱼ`.
    pub fn scalar_terms(&self) -> Option<Vec<(BoundaryData, VecValue)>> {
        match &self.kind {
            DataKind::Tensor(terms) => Some(
                terms
                    .iter()
                    .map(|t| (BoundaryData::scalar(self.domain.clone(), t.g.clone()), t.x.clone()))
                    .collect(),
            ),
            DataKind::Sampled { .. } | DataKind::Difference { .. } => None,
        }
    }

    /// ⟨f, x'⟩ for coordinate `k`, as sampled-free tensor data when possible.
    pub fn component(&self, k: usize) -> BoundaryData {
        let c = self.support.iter().position(|&s| s == k);
        let mut out = match &self.kind {
            DataKind::Tensor(terms) => {
                let terms = terms.iter().map(|t| TensorTerm { g: t.g.clone(), x: VecValue::scalar(t.x.get(k)) }).collect();
                BoundaryData::tensor(self.domain.clone(), ValueSpace::scalar(), terms).expect("scalar space").with_support(&[0])
            }
            DataKind::Sampled { nodes, counts, values } => BoundaryData {
                domain: self.domain.clone(),
                space: ValueSpace::scalar(),
                support: vec![0],
                kind: DataKind::Sampled {
                    nodes: nodes.clone(),
                    counts: counts.clone(),
                    values: values.iter().map(|v| vec![c.map_or(0.0, |c| v[c])]).collect(),
                },
                punctures: Vec::new(),
            },
            DataKind::Difference { base, minus } => BoundaryData {
                domain: self.domain.clone(),
                space: ValueSpace::scalar(),
                support: vec![0],
                kind: DataKind::Difference { base: Box::new(base.component(k)), minus: Box::new(minus.component(k)) },
                punctures: Vec::new(),
            },
        };
        out.punctures = self.punctures.iter().map(|v| vec![c.map_or(0.0, |c| v[c])]).collect();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BaseShape;

    #[test]
    fn tensor_evaluation() {
        let d = Arc::new(Domain::punctured_unit_disk());
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
        let p = Point2::from_polar(o, 1.0, 0.7);
        let v = f.eval(p);
        assert!((v[0] - 0.7f64.cos()).abs() < 1e-15 && (v[1] - 0.7f64.sin()).abs() < 1e-15);
        assert_eq!(f.puncture_value(0).len(), 2);
        let f = f.with_puncture_values(&[VecValue::from_slice(s, &[5.0, -1.0]).unwrap()]).unwrap();
        assert_eq!(f.puncture_value(0), &[5.0, -1.0]);
        assert!((f.sup_norm(64) - 5.0).abs() < 1e-15);
        assert!(f.with_puncture_values(&[]).is_err());
    }

    #[test]
    fn sampled_interpolation() {
        let d = Arc::new(Domain::unit_disk());
        let f = BoundaryData::sampled(d.clone(), ValueSpace::scalar(), vec![0], 512, |p| vec![p.x]).unwrap();
        let p = Point2::from_polar(Point2::new(0.0, 0.0), 1.0, 1.234);
        assert!((f.eval(p)[0] - p.x).abs() < 1e-4);
        let sq = Arc::new(Domain::new(BaseShape::unit_square(), vec![]).unwrap());
        let f = BoundaryData::sampled(sq, ValueSpace::scalar(), vec![0], 400, |p| vec![p.x + 2.0 * p.y]).unwrap();
        for p in [Point2::new(0.3, 0.0), Point2::new(1.0, 0.77), Point2::new(0.5, 1.0), Point2::new(0.0, 0.001)] {
            assert!((f.eval(p)[0] - (p.x + 2.0 * p.y)).abs() < 1e-2, "{p:?}");
        }
    }

    #[test]
    fn components_and_arcs() {
        let d = Arc::new(Domain::unit_disk());
        let o = Point2::new(0.0, 0.0);
        let g = BoundaryFn::arc_indicator(0.0, std::f64::consts::PI, o);
        assert_eq!(g.eval(Point2::new(0.0, 1.0)), 1.0);
        assert_eq!(g.eval(Point2::new(0.0, -1.0)), 0.0);
        let s = ValueSpace::rn_sup(3);
        let f = BoundaryData::tensor(d, s, vec![TensorTerm { g, x: VecValue::from_slice(s, &[0.0, 2.0, 0.0]).unwrap() }]).unwrap();
        let c = f.component(1);
        assert_eq!(c.eval(Point2::new(0.0, 1.0)), vec![2.0]);
        assert_eq!(f.component(0).eval(Point2::new(0.0, 1.0)), vec![0.0]);
    }
}
