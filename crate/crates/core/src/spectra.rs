//! Frequency-dependent spatial spectra over the candidate directions.
//!
//! MUSIC and SRP spectra are max-normalised per bin so that their values
//! lie in [0, 1]. The RTF-matching spectrum is the negated Hermitian angle
//! and lies in [-π/2, 0]. Bins without usable directional information are
//! marked invalid instead of being filled.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{hermitian_eigen, inner, norm_sqr, quadratic_form, CMatrix};
use crate::rtf::RtfEstimate;
use crate::steering::SteeringDatabase;
use crate::C64;

/// Eigenvalue spread below which MUSIC sees no subspace split.
const MUSIC_SPREAD: f64 = 1e-9;
/// Floor on the noise-subspace projection, relative to `‖ā‖`.
const MUSIC_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Music,
    Srp,
    Rtf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Music, Method::Srp, Method::Rtf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Music => "music",
            Method::Srp => "srp",
            Method::Rtf => "rtf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "music" => Ok(Method::Music),
            "srp" => Ok(Method::Srp),
            "rtf" => Ok(Method::Rtf),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

/// `p(k, l, θ_i)` for one frame and one method.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    pub method: Method,
    directions: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl SpatialSpectrum {
    pub fn new(method: Method, bins: usize, directions: usize) -> Self {
        Self {
            method,
            directions,
            values: vec![0.0; bins * directions],
            valid: vec![false; bins],
        }
    }

    pub fn bins(&self) -> usize {
        self.valid.len()
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.directions..(k + 1) * self.directions]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.directions..(k + 1) * self.directions]
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.valid[k]
    }

    /// Stores a bin result; `None` marks the bin invalid.
    pub fn set(&mut self, k: usize, row: Option<Vec<f64>>) {
        match row {
            Some(r) => {
                self.row_mut(k).copy_from_slice(&r);
                self.valid[k] = true;
            }
            None => {
                self.row_mut(k).fill(0.0);
                self.valid[k] = false;
            }
        }
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }
}

fn max_normalize(mut p: Vec<f64>) -> Option<Vec<f64>> {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return None;
    }
    p.iter_mut().for_each(|v| *v /= max);
    Some(p)
}

/// Normalised MUSIC spectrum for bin `k`, with a noise subspace of
/// dimension `M - 1`.
pub fn music_sps(phi_y: &CMatrix, db: &SteeringDatabase, k: usize) -> Option<Vec<f64>> {
    let m = phi_y.nrows();
    if m < 2 {
        return None;
    }
    let eig = hermitian_eigen(phi_y);
    let (lo, hi) = (eig.values[0], eig.values[m - 1]);
    if !(hi > (1.0 + MUSIC_SPREAD) * lo.max(0.0)) || hi <= 0.0 {
        return None;
    }
    let noise: Vec<Vec<C64>> = (0..m - 1)
        .map(|c| eig.vectors.column(c).iter().copied().collect())
        .collect();
    let raw = (0..db.num_directions())
        .map(|i| {
            let a = db.atf(k, i);
            let proj: f64 = noise.iter().map(|q| inner(q, a).norm_sqr()).sum::<f64>().sqrt();
            1.0 / proj.max(MUSIC_EPS * db.atf_norm_sqr(k, i).sqrt())
        })
        .collect();
    max_normalize(raw)
}

/// Normalised SRP spectrum for bin `k`, with head-shadow and input-power
/// normalisation.
pub fn srp_sps(phi_y: &CMatrix, y: &[C64], db: &SteeringDatabase, k: usize) -> Option<Vec<f64>> {
    let y_pow = norm_sqr(y);
    if !(y_pow > 0.0) {
        return None;
    }
    let raw = (0..db.num_directions())
        .map(|i| (quadratic_form(phi_y, db.atf(k, i)) / (db.atf_norm_sqr(k, i) * y_pow)).max(0.0))
        .collect();
    max_normalize(raw)
}

/// Negated Hermitian angle between `ĝ` and every prototype RTF.
pub fn rtf_match_sps(g_hat: &RtfEstimate, db: &SteeringDatabase, k: usize) -> Option<Vec<f64>> {
    if !g_hat.valid {
        return None;
    }
    let g_norm = norm_sqr(&g_hat.g_hat).sqrt();
    if !(g_norm > 0.0) || !g_norm.is_finite() {
        return None;
    }
    Some(
        (0..db.num_directions())
            .map(|i| {
                let c = inner(db.rtf(k, i), &g_hat.g_hat).norm() / (db.rtf_norm(k, i) * g_norm);
                -c.clamp(0.0, 1.0).acos()
            })
            .collect(),
    )
}

/// Lower bound of the RTF-matching spectrum.
pub const RTF_MIN: f64 = -FRAC_PI_2;
