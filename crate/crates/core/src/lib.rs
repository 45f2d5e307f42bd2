//! Forward modelling of low-background X-ray spectra and upper-limit
//! extraction for two rare-process searches: the Pauli-forbidden 2p→1s line
//! in copper (bound on β²/2) and the spontaneous emission continuum of
//! continuous spontaneous localization (bound on the collapse rate λ).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod csl;
pub mod error;
pub mod io;
pub mod limits;
pub mod model;
pub mod pep;
pub mod projection;
pub mod spectrum;
pub mod util;

pub use error::{Error, Result};
