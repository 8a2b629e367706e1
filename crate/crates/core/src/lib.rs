//! Perron solutions of vector-valued Dirichlet and Poisson problems on planar
//! domains with irregular boundary points.

pub mod ball;
pub mod constructions;
pub mod geometry;
pub mod grid;
pub mod harmonic_measure;
pub mod harness;
pub mod heat;
pub mod lattice;
pub mod par;
pub mod poisson;
pub mod sparse;
pub mod values;
