//! Concrete Banach-lattice value spaces.
//!
//! Three families are supported: `Rn` (with sup or p-norm), finitely supported
//! sequences `FinSeq` in ℓᵖ, and `SampledCK`, the continuous functions on a
//! finite node set K under the sup norm. All lattice operations are
//! componentwise; sparse values keep only the coordinates they touch.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValueError {
    #[error("space mismatch: {0} vs {1}")]
    SpaceMismatch(String, String),
    #[error("coordinate {index} out of range for a space of dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("invalid value space: {0}")]
    InvalidSpace(String),
    #[error("non-finite coordinate {0}")]
    NonFinite(usize),
    #[error("positive functional has a negative coefficient at {0}")]
    NegativeCoefficient(usize),
    #[error("order bounds of an empty list")]
    Empty,
}

/// Norm exponent: a finite p ≥ 1 or ∞ (the sup norm).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Exponent {
    Finite(f64),
    #[default]
    Infinite,
}

impl Exponent {
    pub fn norm(self, xs: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Exponent::Infinite => xs.into_iter().fold(0.0, |m, x| m.max(x.abs())),
            Exponent::Finite(p) if p == 1.0 => xs.into_iter().map(f64::abs).sum(),
            Exponent::Finite(p) if p == 2.0 => xs.into_iter().map(|x| x * x).sum::<f64>().sqrt(),
            Exponent::Finite(p) => {
                // scale by the max to avoid overflow for large p
                let v: Vec<f64> = xs.into_iter().map(f64::abs).collect();
                let m = v.iter().copied().fold(0.0, f64::max);
                if m == 0.0 {
                    return 0.0;
                }
                m * v.iter().map(|x| (x / m).powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
    }

    fn valid(self) -> bool {
        match self {
            Exponent::Infinite => true,
            Exponent::Finite(p) => p.is_finite() && p >= 1.0,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Infinite => write!(f, "inf"),
            Exponent::Finite(p) => write!(f, "{p}"),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Exponent::Infinite => s.serialize_str("inf"),
            Exponent::Finite(p) => s.serialize_f64(*p),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Exponent;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a number p >= 1 or one of \"inf\", \"sup\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Exponent, E> {
                if v.is_infinite() && v > 0.0 {
                    Ok(Exponent::Infinite)
                } else {
                    Ok(Exponent::Finite(v))
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Exponent, E> {
                Ok(Exponent::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Exponent, E> {
                Ok(Exponent::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Exponent, E> {
                match v {
                    "inf" | "sup" | "infinity" => Ok(Exponent::Infinite),
                    _ => v.parse::<f64>().map(Exponent::Finite).map_err(|_| E::custom(format!("bad exponent {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space")]
pub enum ValueSpace {
    Rn {
        n: usize,
        #[serde(default)]
        norm: Exponent,
    },
    FinSeq {
        p: Exponent,
    },
    SampledCK {
        k_nodes: usize,
    },
}

impl fmt::Display for ValueSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueSpace::Rn { n, norm } => write!(f, "Rn(n={n}, norm={norm})"),
            ValueSpace::FinSeq { p } => write!(f, "FinSeq(p={p})"),
            ValueSpace::SampledCK { k_nodes } => write!(f, "SampledCK(k_nodes={k_nodes})"),
        }
    }
}

impl ValueSpace {
    pub fn scalar() -> Self {
        ValueSpace::Rn { n: 1, norm: Exponent::Infinite }
    }

    pub fn rn_sup(n: usize) -> Self {
        ValueSpace::Rn { n, norm: Exponent::Infinite }
    }

    pub fn validate(&self) -> Result<(), ValueError> {
        let ok = match self {
            ValueSpace::Rn { n, norm } => *n >= 1 && norm.valid(),
            ValueSpace::FinSeq { p } => p.valid(),
            ValueSpace::SampledCK { k_nodes } => *k_nodes >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(ValueError::InvalidSpace(self.to_string()))
        }
    }

    /// Number of coordinates, `None` for sequence spaces.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ValueSpace::Rn { n, .. } => Some(*n),
            ValueSpace::FinSeq { .. } => None,
            ValueSpace::SampledCK { k_nodes } => Some(*k_nodes),
        }
    }

    pub fn exponent(&self) -> Exponent {
        match self {
            ValueSpace::Rn { norm, .. } => *norm,
            ValueSpace::FinSeq { p } => *p,
            ValueSpace::SampledCK { .. } => Exponent::Infinite,
        }
    }

    pub fn check_index(&self, index: usize) -> Result<(), ValueError> {
        match self.dim() {
            Some(dim) if index >= dim => Err(ValueError::IndexOutOfRange { index, dim }),
            _ => Ok(()),
        }
    }

    /// Norm of a value given by its coordinates on some support.
    pub fn norm_of(&self, coords: &[f64]) -> f64 {
        self.exponent().norm(coords.iter().copied())
    }

    fn same(&self, other: &ValueSpace) -> Result<(), ValueError> {
        if self == other {
            Ok(())
        } else {
            Err(ValueError::SpaceMismatch(self.to_string(), other.to_string()))
        }
    }
}

/// An element of a value space, stored as a sparse coordinate map.
#[derive(Clone, Debug, PartialEq)]
pub struct VecValue {
    space: ValueSpace,
    coords: BTreeMap<usize, f64>,
}

impl Serialize for VecValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<String, f64> = self.coords.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        m.serialize(s)
    }
}

impl VecValue {
    pub fn zero(space: ValueSpace) -> Self {
        Self { space, coords: BTreeMap::new() }
    }

    pub fn new(space: ValueSpace, coords: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, ValueError> {
        let mut m = BTreeMap::new();
        for (i, v) in coords {
            space.check_index(i)?;
            if !v.is_finite() {
                return Err(ValueError::NonFinite(i));
            }
            if v != 0.0 {
                m.insert(i, v);
            }
        }
        Ok(Self { space, coords: m })
    }

    /// Dense value: coordinate i is `xs[i]`.
    pub fn from_slice(space: ValueSpace, xs: &[f64]) -> Result<Self, ValueError> {
        Self::new(space, xs.iter().copied().enumerate())
    }

    /// Value given on a support: coordinate `support[j]` is `xs[j]`.
    pub fn from_support(space: ValueSpace, support: &[usize], xs: &[f64]) -> Result<Self, ValueError> {
        Self::new(space, support.iter().copied().zip(xs.iter().copied()))
    }

    pub fn scalar(x: f64) -> Self {
        Self::from_slice(ValueSpace::scalar(), &[x]).expect("finite scalar")
    }

    pub fn space(&self) -> ValueSpace {
        self.space
    }

    pub fn get(&self, i: usize) -> f64 {
        self.coords.get(&i).copied().unwrap_or(0.0)
    }

    pub fn coords(&self) -> &BTreeMap<usize, f64> {
        &self.coords
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coords.keys().copied()
    }

    /// Coordinates at the given indices.
    pub fn on_support(&self, support: &[usize]) -> Vec<f64> {
        support.iter().map(|&i| self.get(i)).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.space.dim().unwrap_or_else(|| self.coords.keys().next_back().map_or(0, |k| k + 1));
        (0..n).map(|i| self.get(i)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.space.exponent().norm(self.coords.values().copied())
    }

    fn zip_with(&self, other: &VecValue, f: impl Fn(f64, f64) -> f64) -> Result<VecValue, ValueError> {
        self.space.same(&other.space)?;
        let keys: std::collections::BTreeSet<usize> = self.coords.keys().chain(other.coords.keys()).copied().collect();
        Ok(VecValue {
            space: self.space,
            coords: keys
                .into_iter()
                .map(|k| (k, f(self.get(k), other.get(k))))
                .filter(|(_, v)| *v != 0.0)
                .collect(),
        })
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> VecValue {
        VecValue {
            space: self.space,
            coords: self.coords.iter().map(|(k, v)| (*k, f(*v))).filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn lattice_sup(&self, other: &VecValue) -> Result<VecValue, ValueError> {
        self.zip_with(other, f64::max)
    }

    pub fn lattice_inf(&self, other: &VecValue) -> Result<VecValue, ValueError> {
        self.zip_with(other, f64::min)
    }

    pub fn lattice_abs(&self) -> VecValue {
        self.map(f64::abs)
    }

    pub fn add(&self, other: &VecValue) -> Result<VecValue, ValueError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VecValue) -> Result<VecValue, ValueError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> VecValue {
        self.map(|v| v * s)
    }

    /// Componentwise `self <= other` up to `tol`.
    pub fn le(&self, other: &VecValue, tol: f64) -> Result<bool, ValueError> {
        let d = self.sub(other)?;
        Ok(d.coords.values().all(|v| *v <= tol))
    }

    pub fn pair(&self, x: &Functional) -> Result<f64, ValueError> {
        self.space.same(&x.space)?;
        Ok(match &x.kind {
            FunctionalKind::Coordinate(i) => self.get(*i),
            FunctionalKind::Direction(c) | FunctionalKind::Positive(c) => {
                c.iter().map(|(k, w)| w * self.get(*k)).sum()
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FunctionalKind {
    Coordinate(usize),
    Direction(BTreeMap<usize, f64>),
    Positive(BTreeMap<usize, f64>),
}

/// A continuous linear functional given by explicit coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Functional {
    space: ValueSpace,
    kind: FunctionalKind,
}

impl Functional {
    pub fn coordinate(space: ValueSpace, i: usize) -> Result<Self, ValueError> {
        space.check_index(i)?;
        Ok(Self { space, kind: FunctionalKind::Coordinate(i) })
    }

    pub fn direction(space: ValueSpace, coeffs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, ValueError> {
        let c = collect_coeffs(&space, coeffs)?;
        Ok(Self { space, kind: FunctionalKind::Direction(c) })
    }

    pub fn positive(space: ValueSpace, coeffs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self, ValueError> {
        let c = collect_coeffs(&space, coeffs)?;
        if let Some((k, _)) = c.iter().find(|(_, v)| **v < 0.0) {
            return Err(ValueError::NegativeCoefficient(*k));
        }
        Ok(Self { space, kind: FunctionalKind::Positive(c) })
    }

    /// Uniformly random unit direction over the given coordinates.
    pub fn random_direction<R: Rng + ?Sized>(space: ValueSpace, support: &[usize], rng: &mut R) -> Self {
        let v = random_unit(support.len(), rng);
        Self { space, kind: FunctionalKind::Direction(support.iter().copied().zip(v).collect()) }
    }

    /// Random functional with nonnegative coefficients over the given coordinates.
    pub fn random_positive<R: Rng + ?Sized>(space: ValueSpace, support: &[usize], rng: &mut R) -> Self {
        let c = support.iter().map(|&k| (k, rng.random::<f64>())).collect();
        Self { space, kind: FunctionalKind::Positive(c) }
    }

    pub fn space(&self) -> ValueSpace {
        self.space
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    /// Coefficients on a support, for pairing dense coordinate vectors.
    pub fn on_support(&self, support: &[usize]) -> Vec<f64> {
        support
            .iter()
            .map(|k| match &self.kind {
                FunctionalKind::Coordinate(i) => f64::from(u8::from(i == k)),
                FunctionalKind::Direction(c) | FunctionalKind::Positive(c) => c.get(k).copied().unwrap_or(0.0),
            })
            .collect()
    }
}

fn collect_coeffs(space: &ValueSpace, coeffs: impl IntoIterator<Item = (usize, f64)>) -> Result<BTreeMap<usize, f64>, ValueError> {
    let mut c = BTreeMap::new();
    for (k, v) in coeffs {
        space.check_index(k)?;
        if !v.is_finite() {
            return Err(ValueError::NonFinite(k));
        }
        c.insert(k, v);
    }
    Ok(c)
}

fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        // Box-Muller normals give a rotation-invariant direction
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeFlag {
    DivergingEnvelope,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderBounds {
    pub lower: VecValue,
    pub upper: VecValue,
    /// Set when the upper envelope of a sequence keeps growing in norm like a
    /// divergent series; only meaningful for `FinSeq` spaces.
    pub flag: Option<EnvelopeFlag>,
    /// Norms of the upper envelope over the first 2^k values.
    pub envelope_norms: Vec<f64>,
}

/// Componentwise min/max envelope of a list of values.
pub fn order_bounds(values: &[VecValue]) -> Result<OrderBounds, ValueError> {
    let first = values.first().ok_or(ValueError::Empty)?;
    let mut lower = first.clone();
    let mut upper = first.clone();
    let mut envelope_norms = Vec::new();
    let mut next_mark = 1usize;
    for (i, v) in values.iter().enumerate() {
        lower = lower.lattice_inf(v)?;
        upper = upper.lattice_sup(v)?;
        if i + 1 == next_mark {
            envelope_norms.push(upper.norm());
            next_mark *= 2;
        }
    }
    if !values.len().is_power_of_two() {
        envelope_norms.push(upper.norm());
    }
    let flag = match first.space {
        ValueSpace::FinSeq { .. } if diverging(&envelope_norms) => Some(EnvelopeFlag::DivergingEnvelope),
        _ => None,
    };
    Ok(OrderBounds { lower, upper, flag, envelope_norms })
}

/// Cauchy-doubling heuristic: over the last three dyadic blocks the norm
/// increments stay positive and shrink by less than a factor 3/4 per block.
/// Harmonic-type growth gives ratio ~1; summable tails give ratio <= 1/2.
fn diverging(norms: &[f64]) -> bool {
    if norms.len() < 5 {
        return false;
    }
    let inc: Vec<f64> = norms.windows(2).map(|w| w[1] - w[0]).collect();
    let tail = &inc[inc.len() - 3..];
    tail.iter().all(|d| *d > 0.0) && tail.windows(2).all(|w| w[1] >= 0.75 * w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rn(n: usize, norm: Exponent) -> ValueSpace {
        ValueSpace::Rn { n, norm }
    }

    #[test]
    fn norms() {
        let x = VecValue::from_slice(rn(2, Exponent::Infinite), &[3.0, -4.0]).unwrap();
        assert_eq!(x.norm(), 4.0);
        let x = VecValue::from_slice(rn(2, Exponent::Finite(2.0)), &[3.0, -4.0]).unwrap();
        assert_eq!(x.norm(), 5.0);
        let s = ValueSpace::FinSeq { p: Exponent::Finite(1.0) };
        let x = VecValue::new(s, [(0, 1.0), (5, -2.0)]).unwrap();
        assert_eq!(x.norm(), 3.0);
        let x = VecValue::from_slice(rn(2, Exponent::Finite(3.0)), &[1.0, 1.0]).unwrap();
        assert!((x.norm() - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn lattice_ops() {
        let s = rn(2, Exponent::Infinite);
        let a = VecValue::from_slice(s, &[1.0, -2.0]).unwrap();
        let b = VecValue::from_slice(s, &[0.0, 3.0]).unwrap();
        assert_eq!(a.lattice_sup(&b).unwrap().to_dense(), vec![1.0, 3.0]);
        let c = VecValue::from_slice(s, &[-1.0, 2.0]).unwrap();
        assert_eq!(c.lattice_abs().to_dense(), vec![1.0, 2.0]);
        let f = ValueSpace::FinSeq { p: Exponent::Finite(1.0) };
        let x = VecValue::new(f, [(0, 1.0)]).unwrap();
        let y = VecValue::new(f, [(1, 1.0)]).unwrap();
        let z = x.lattice_sup(&y).unwrap();
        assert_eq!(z.coords().len(), 2);
        assert_eq!((z.get(0), z.get(1)), (1.0, 1.0));
        assert!(a.lattice_sup(&x).is_err());
    }

    #[test]
    fn pairing() {
        let s = rn(2, Exponent::Infinite);
        let x = VecValue::from_slice(s, &[7.0, 1.0]).unwrap();
        assert_eq!(x.pair(&Functional::coordinate(s, 0).unwrap()).unwrap(), 7.0);
        let y = VecValue::from_slice(s, &[2.0, 3.0]).unwrap();
        assert_eq!(y.pair(&Functional::direction(s, [(0, 1.0), (1, 1.0)]).unwrap()).unwrap(), 5.0);
        assert_eq!(y.pair(&Functional::direction(s, []).unwrap()).unwrap(), 0.0);
        assert!(Functional::coordinate(s, 2).is_err());
        assert!(Functional::positive(s, [(0, -1.0)]).is_err());
    }

    #[test]
    fn order_bounds_examples() {
        let s = rn(2, Exponent::Infinite);
        let v = vec![VecValue::from_slice(s, &[1.0, 0.0]).unwrap(), VecValue::from_slice(s, &[0.0, 1.0]).unwrap()];
        let b = order_bounds(&v).unwrap();
        assert_eq!(b.lower.to_dense(), vec![0.0, 0.0]);
        assert_eq!(b.upper.to_dense(), vec![1.0, 1.0]);
        assert!(b.flag.is_none());
        let one = order_bounds(&v[..1]).unwrap();
        assert_eq!(one.lower, v[0]);
        assert_eq!(one.upper, v[0]);
        assert!(order_bounds(&[]).is_err());
    }

    #[test]
    fn l1_harmonic_envelope_is_flagged() {
        let s = ValueSpace::FinSeq { p: Exponent::Finite(1.0) };
        let n = 1024;
        let v: Vec<VecValue> = (1..=n).map(|k| VecValue::new(s, [(k, 1.0 / k as f64)]).unwrap()).collect();
        let b = order_bounds(&v).unwrap();
        assert_eq!(b.upper.coords().len(), n);
        let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        assert!((b.upper.norm() - harmonic).abs() < 1e-12);
        assert_eq!(b.flag, Some(EnvelopeFlag::DivergingEnvelope));

        // summable entries: same support growth, bounded norm
        let w: Vec<VecValue> = (1..=n).map(|k| VecValue::new(s, [(k, 1.0 / (k * k) as f64)]).unwrap()).collect();
        assert!(order_bounds(&w).unwrap().flag.is_none());
        // the same sequence in l2 has a convergent envelope norm
        let s2 = ValueSpace::FinSeq { p: Exponent::Finite(2.0) };
        let v2: Vec<VecValue> = (1..=n).map(|k| VecValue::new(s2, [(k, 1.0 / k as f64)]).unwrap()).collect();
        assert!(order_bounds(&v2).unwrap().flag.is_none());
    }

    #[test]
    fn space_serde_roundtrip() {
        let s: ValueSpace = serde_json::from_str(r#"{"space":"Rn","n":3,"norm":2}"#).unwrap();
        assert_eq!(s, ValueSpace::Rn { n: 3, norm: Exponent::Finite(2.0) });
        let s: ValueSpace = serde_json::from_str(r#"{"space":"FinSeq","p":"inf"}"#).unwrap();
        assert_eq!(s, ValueSpace::FinSeq { p: Exponent::Infinite });
        let s: ValueSpace = serde_json::from_str(r#"{"space":"Rn","n":2}"#).unwrap();
        assert_eq!(s.exponent(), Exponent::Infinite);
        let back: ValueSpace = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let x = VecValue::new(ValueSpace::FinSeq { p: Exponent::Finite(1.0) }, [(0, 1.0), (5, -2.0)]).unwrap();
        assert_eq!(serde_json::to_string(&x).unwrap(), r#"{"0":1.0,"5":-2.0}"#);
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn lattice_norm_compatibility(a in arb_vec(4), b in arb_vec(4), p in prop_oneof![Just(Exponent::Infinite), (1.0f64..4.0).prop_map(Exponent::Finite)]) {
            let s = rn(4, p);
            let x = VecValue::from_slice(s, &a).unwrap();
            let y = VecValue::from_slice(s, &b).unwrap();
            prop_assert!(x.lattice_sup(&y).unwrap().norm() <= x.norm() + y.norm() + 1e-12);
            prop_assert!((x.lattice_abs().norm() - x.norm()).abs() <= 1e-12 * (1.0 + x.norm()));
        }

        #[test]
        fn pairing_is_linear(a in arb_vec(3), b in arb_vec(3), s1 in -5.0f64..5.0, s2 in -5.0f64..5.0, seed in any::<u64>()) {
            let s = rn(3, Exponent::Infinite);
            let x = VecValue::from_slice(s, &a).unwrap();
            let y = VecValue::from_slice(s, &b).unwrap();
            let f = Functional::random_direction(s, &[0, 1, 2], &mut ChaCha8Rng::seed_from_u64(seed));
            let lhs = x.scale(s1).add(&y.scale(s2)).unwrap().pair(&f).unwrap();
            let rhs = s1 * x.pair(&f).unwrap() + s2 * y.pair(&f).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn positive_functionals_preserve_order(a in arb_vec(3), d in prop::collection::vec(0.0f64..5.0, 3), seed in any::<u64>()) {
            let s = rn(3, Exponent::Infinite);
            let x = VecValue::from_slice(s, &a).unwrap();
            let y = x.add(&VecValue::from_slice(s, &d).unwrap()).unwrap();
            let f = Functional::random_positive(s, &[0, 1, 2], &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(x.pair(&f).unwrap() <= y.pair(&f).unwrap() + 1e-12);
        }
    }
}
