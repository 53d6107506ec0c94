//! Amortized inference of dipole fields.
//!
//! An exact superposition oracle computes scalar potentials and fields
//! around collections of circular dipole sources; additive hypernetwork
//! surrogates (Fourier, FC+ILR, FC-INR, Linear) amortize evaluation from
//! O(M x N) to O(M + N); the training, data and bench modules measure the
//! accuracy and scaling properties of the surrogates.

pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod io;
pub mod models;
pub mod numerics;
pub mod oracle;
pub mod training;

pub use error::{FieldError, Result};
