//! Moment polynomials, Fisher-information spectra, transcendence-degree
//! certificates and landscape experiments for orbit recovery under SO(2),
//! SO(3) and O(3).

pub mod algebra;
pub mod basisgen;
pub mod error;
pub mod group;
pub mod harmonics;
pub mod landscape;
pub mod likelihood;
pub mod models;
pub mod moments;
pub mod quadcheck;

pub use error::{OrbitError, Result};
