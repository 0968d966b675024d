//! Binaural direction-of-arrival estimation for multiple simultaneous
//! speakers.
//!
//! The processing chain is: STFT analysis ([`stft`]), recursive covariance
//! tracking ([`covariance`]), RTF estimation ([`rtf`]), per-bin spatial
//! spectra for MUSIC, SRP and RTF matching ([`spectra`]), CDR-based
//! frequency selection ([`selection`]) and frequency fusion ([`fusion`]).
//! [`pipeline`] runs the chain over a recording, [`scene`] synthesises test
//! scenes with ground truth and [`eval`] scores and sweeps configurations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod linalg;
pub mod peaks;
pub mod pipeline;
pub mod rtf;
pub mod scene;
pub mod selection;
pub mod spectra;
pub mod steering;
pub mod stft;
pub mod wav;

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;

pub use error::{Error, Result};
pub use fusion::{DoaEstimate, Fusion, ItdGrid};
pub use spectra::{Method, SpatialSpectrum};
pub use steering::{HeadModel, HeadModelConfig, SteeringDatabase};
pub use stft::{MultichannelSpectrogram, StftConfig};
