//! Recovery of spectrally sparse signals from partial time-domain samples by
//! nuclear-norm completion of their multi-fold Hankel enhanced form.

pub mod array;
pub mod certificate;
pub mod error;
pub mod experiments;
pub mod hankel;
pub mod incoherence;
pub mod io;
pub mod model;
pub mod solver;

pub use array::DataArray;
pub use error::{Error, Result};
pub use num_complex::Complex64;
