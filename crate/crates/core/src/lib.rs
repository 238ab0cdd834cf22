//! Finite-element library for density-driven bone adaptation and fracture
//! assessment of heterogeneous elastic bodies.

pub mod adaptation;
pub mod basis;
pub mod bench;
pub mod error;
pub mod fe;
pub mod fracture;
pub mod io;
pub mod material;
pub mod mechanics;
pub mod mesh;
pub mod mwls;
pub mod solver;

pub use error::{Error, Result};
