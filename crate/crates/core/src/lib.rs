pub mod density;
pub mod embedding;
pub mod error;
pub mod extended;
pub mod field;
pub mod geometry;
pub mod intrinsic;
pub mod measure;
pub mod parallel;
pub mod params;
pub mod potentials;
pub mod quadrature;
pub mod solver;
pub mod verify;
