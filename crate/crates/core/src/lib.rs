//! Simulation and numerical toolkit for the one-dimensional attractive
//! zero-range process in a site-disordered environment.

pub mod env;
pub mod error;
pub mod experiments;
pub mod flux;
pub mod io;
pub mod kinetics;
pub mod lattice;
pub mod measures;
pub mod pde;
pub mod rng;

pub use error::{Error, Result};
pub use lattice::{Configuration, Occupancy, Site, Window};
