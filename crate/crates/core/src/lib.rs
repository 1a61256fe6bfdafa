//! Multispectral soil texture characterization.
//!
//! A 13-band reflectance cube goes through dark-current correction, a fixed
//! 100x100 crop and tanh contrast normalization, is reduced to 100 block-mean
//! observations, and is then classified or regressed through an LDA
//! projection. See the crate README for the full pipeline.

// NaN must fail the range checks, so they are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod features;
pub mod lda;
pub mod linalg;
pub mod ml;
pub mod msc1;
pub mod pipeline;
pub mod par;
pub mod preprocess;
pub mod seed;
pub mod spectral;
pub mod synthgen;
pub mod table;
pub mod triangle;

pub use error::{Error, Result};
pub use spectral::{
    validate_composition, Composition, DarkFrame, Plane, Provenance, Roi, SpectralCube, TextureClass,
    WavelengthBand, NUM_BANDS, WAVELENGTHS_NM,
};
