//! Essential-support analysis, interlaced sampling and reconstruction for
//! helical cone-beam CT.

pub mod error;
pub mod filterbank;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod metrics;
mod nufft;
pub mod phantom;
pub mod pipeline;
pub mod recon;
pub mod scan;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{HelixGeometry, PiLineCoords, Ray};
pub use phantom::{Ellipsoid, Phantom};
