//! Coherent-to-diffuse ratio per time-frequency bin and the frequency
//! subset it selects.
//!
//! The diffuse-field coherence between a left and a right microphone is
//! modelled as `sinc(ω·d/c)` with `d` the arc length around the head between
//! the two microphones, which inflates the free-field inter-ear distance to
//! account for diffraction. The CDR itself uses the DOA-independent
//! estimator of Schwarz and Kellermann, evaluated per left-right pair and
//! averaged over pairs.

use crate::error::Result;
use crate::steering::{wrap_pi, HeadModelConfig, Side};
use crate::stft::StftConfig;
use crate::C64;

/// Auto-spectra below this are treated as silence.
pub const AUTO_SPECTRUM_FLOOR: f64 = 1e-20;
/// Upper clip of the linear CDR (60 dB).
pub const CDR_MAX: f64 = 1e6;

/// Diffuse-noise coherence `Γ_n(k)` of every left-right microphone pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceModel {
    pub pairs: Vec<(usize, usize)>,
    /// `gamma[p][k]` for pair `p`.
    pub gamma: Vec<Vec<f64>>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

pub fn binaural_coherence_model(head: &HeadModelConfig, cfg: &StftConfig) -> Result<CoherenceModel> {
    head.validate()?;
    cfg.validate()?;
    let mut pairs = Vec::new();
    let mut gamma = Vec::new();
    for (a, ma) in head.mics.iter().enumerate() {
        if ma.side != Side::Left {
            continue;
        }
        for (b, mb) in head.mics.iter().enumerate() {
            if mb.side != Side::Right {
                continue;
            }
            let arc = head.head_radius * wrap_pi((ma.azimuth_deg() - mb.azimuth_deg()).to_radians()).abs();
            pairs.push((a, b));
            gamma.push(
                (0..cfg.bins())
                    .map(|k| sinc(cfg.omega(k) * arc / head.speed_of_sound))
                    .collect(),
            );
        }
    }
    Ok(CoherenceModel { pairs, gamma })
}

/// DOA-independent CDR from the measured complex coherence `coh` and the
/// diffuse coherence `gamma_n`, clipped to `[0, CDR_MAX]`.
pub fn cdr_from_coherence(coh: C64, gamma_n: f64) -> f64 {
    let re = coh.re;
    let mag2 = coh.norm_sqr().min(1.0);
    let denom = mag2 - 1.0;
    if denom > -1e-12 {
        return CDR_MAX;
    }
    let g2 = gamma_n * gamma_n;
    let disc = (g2 * re * re - g2 * mag2 + g2 - 2.0 * gamma_n * re + mag2).max(0.0);
    let cdr = (gamma_n * re - mag2 - disc.sqrt()) / denom;
    if cdr.is_finite() {
        cdr.clamp(0.0, CDR_MAX)
    } else {
        0.0
    }
}

/// Recursively smoothed auto- and cross-spectra feeding the coherence
/// estimate. Smoothing is ungated.
#[derive(Debug, Clone)]
pub struct CoherenceTracker {
    alpha: f64,
    mics: usize,
    pairs: Vec<(usize, usize)>,
    /// `auto[k·M + m]`
    auto: Vec<f64>,
    /// `cross[k·P + p]`
    cross: Vec<C64>,
}

impl CoherenceTracker {
    pub fn new(model: &CoherenceModel, alpha: f64, mics: usize, bins: usize) -> Self {
        Self {
            alpha,
            mics,
            pairs: model.pairs.clone(),
            auto: vec![0.0; bins * mics],
            cross: vec![C64::new(0.0, 0.0); bins * model.pairs.len()],
        }
    }

    pub fn push_frame(&mut self, frame: &[C64]) {
        let (a, b) = (self.alpha, 1.0 - self.alpha);
        let np = self.pairs.len();
        for (k, y) in frame.chunks(self.mics).enumerate() {
            for (m, z) in y.iter().enumerate() {
                let s = &mut self.auto[k * self.mics + m];
                *s = a * *s + b * z.norm_sqr();
            }
            for (p, &(i, j)) in self.pairs.iter().enumerate() {
                let s = &mut self.cross[k * np + p];
                *s = *s * a + y[i] * y[j].conj() * b;
            }
        }
    }

    /// Complex coherence of pair `p` at bin `k`, `None` below the floor.
    pub fn coherence(&self, k: usize, p: usize) -> Option<C64> {
        let (i, j) = self.pairs[p];
        let pi = self.auto[k * self.mics + i];
        let pj = self.auto[k * self.mics + j];
        if pi < AUTO_SPECTRUM_FLOOR || pj < AUTO_SPECTRUM_FLOOR {
            return None;
        }
        Some(self.cross[k * self.pairs.len() + p] / (pi * pj).sqrt())
    }
}

/// CDR estimates of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CdrMap {
    /// Linear CDR per bin; 0 on invalid bins.
    pub cdr: Vec<f64>,
    pub valid: Vec<bool>,
}

impl CdrMap {
    pub fn cdr_db(&self, k: usize) -> f64 {
        10.0 * self.cdr[k].log10()
    }
}

/// Pair-averaged CDR for the current state of `tracker`.
pub fn estimate_cdr(tracker: &CoherenceTracker, model: &CoherenceModel) -> CdrMap {
    let bins = model.gamma.first().map_or(0, Vec::len);
    let mut cdr = vec![0.0; bins];
    let mut valid = vec![false; bins];
    for k in 0..bins {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (p, gamma) in model.gamma.iter().enumerate() {
            if let Some(coh) = tracker.coherence(k, p) {
                sum += cdr_from_coherence(coh, gamma[k]);
                n += 1;
            }
        }
        if n > 0 {
            cdr[k] = sum / n as f64;
            valid[k] = true;
        }
    }
    CdrMap { cdr, valid }
}

/// `K(l) = {k : CDR(k,l) ≥ threshold}` over valid bins, ascending.
/// A threshold of `-∞` keeps every valid bin.
pub fn select_subset(map: &CdrMap, thresh_db: f64) -> Vec<usize> {
    (0..map.cdr.len())
        .filter(|&k| map.valid[k] && (thresh_db == f64::NEG_INFINITY || map.cdr_db(k) >= thresh_db))
        .collect()
}
