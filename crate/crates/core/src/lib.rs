//! Aharonov–Bohm operators with half-integer circulation on the unit disk.

pub mod eigen;
pub mod elliptic;
pub mod gauge;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod nodal;
pub mod partition;
pub mod potential;
pub mod scenario;
pub mod spectrum;
pub mod trace;
pub mod triple;
