//! Recursive per-bin tracking of the noisy and undesired-component
//! covariance matrices, gated by speech activity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::stft::{MultichannelSpectrogram, StftConfig};
use crate::C64;

/// Largest smoothing factor handed out by [`alpha_from_time_constant`].
pub const MAX_ALPHA: f64 = 1.0 - 1e-6;

/// Relative scale of the initial `δ·I` state.
const INIT_LOADING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ActivitySource {
    /// Ground-truth flags supplied by the caller (e.g. the scene simulator).
    #[default]
    Oracle,
    /// Broadband frame energy above the noise floor plus 6 dB.
    EnergyThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha_y: f64,
    pub alpha_u: f64,
    #[serde(default)]
    pub activity_source: ActivitySource,
}

impl SmoothingConfig {
    /// Time constants of 250 ms (noisy) and 500 ms (undesired).
    pub fn for_stft(cfg: &StftConfig) -> Self {
        let hop = cfg.hop_seconds();
        Self {
            alpha_y: alpha_from_time_constant(0.250, hop).expect("positive constants"),
            alpha_u: alpha_from_time_constant(0.500, hop).expect("positive constants"),
            activity_source: ActivitySource::Oracle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_y", self.alpha_y), ("alpha_u", self.alpha_u)] {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::Config(format!("{name} = {a} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self::for_stft(&StftConfig::default())
    }
}

/// `exp(-hop/tau)`, clamped to [`MAX_ALPHA`].
pub fn alpha_from_time_constant(tau: f64, hop_seconds: f64) -> Result<f64> {
    if !(tau > 0.0) || !(hop_seconds > 0.0) || hop_seconds.is_infinite() {
        return Err(Error::Config(format!(
            "time constant {tau} s and hop {hop_seconds} s must be positive"
        )));
    }
    Ok((-hop_seconds / tau).exp().min(MAX_ALPHA))
}

/// Tracked `Φ̂_y` and `Φ̂_u` for one frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub phi_y: CMatrix,
    pub phi_u: CMatrix,
    pub updates_y: u64,
    pub updates_u: u64,
}

impl CovariancePair {
    pub fn new(mics: usize, delta: f64) -> Self {
        let init = CMatrix::identity(mics, mics) * C64::new(delta, 0.0);
        Self {
            phi_y: init.clone(),
            phi_u: init,
            updates_y: 0,
            updates_u: 0,
        }
    }

    /// One recursion step. Active frames update `Φ̂_y`, all others `Φ̂_u`.
    /// A non-finite snapshot is rejected and leaves the state untouched.
    pub fn update(&mut self, y: &[C64], speech_active: bool, cfg: &SmoothingConfig) -> Result<()> {
        if y.len() != self.phi_y.nrows() {
            return Err(Error::InvalidInput(format!(
                "snapshot has {} entries, state is {}×{}",
                y.len(),
                self.phi_y.nrows(),
                self.phi_y.nrows()
            )));
        }
        if y.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidInput("non-finite snapshot".into()));
        }
        if speech_active {
            rank_one_update(&mut self.phi_y, y, cfg.alpha_y);
            self.updates_y += 1;
        } else {
            rank_one_update(&mut self.phi_u, y, cfg.alpha_u);
            self.updates_u += 1;
        }
        Ok(())
    }
}

/// `phi ← α·phi + (1-α)·y yᴴ`, written so the result is exactly Hermitian.
fn rank_one_update(phi: &mut CMatrix, y: &[C64], alpha: f64) {
    let n = y.len();
    let beta = 1.0 - alpha;
    for i in 0..n {
        let d = alpha * phi[(i, i)].re + beta * y[i].norm_sqr();
        phi[(i, i)] = C64::new(d, 0.0);
        for j in (i + 1)..n {
            let v = phi[(i, j)] * alpha + y[i] * y[j].conj() * beta;
            phi[(i, j)] = v;
            phi[(j, i)] = v.conj();
        }
    }
}

/// Covariance state for all bins of a spectrogram.
#[derive(Debug, Clone)]
pub struct CovarianceTracker {
    cfg: SmoothingConfig,
    mics: usize,
    pairs: Vec<CovariancePair>,
}

impl CovarianceTracker {
    pub fn new(cfg: SmoothingConfig, mics: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, mics, pairs: Vec::new() })
    }

    /// Feeds one frame (bin-major snapshots, as
    /// [`MultichannelSpectrogram::frame`]). The first frame also fixes the
    /// `δ·I` initialisation from its mean power.
    pub fn push_frame(&mut self, frame: &[C64], speech_active: bool) -> Result<()> {
        if frame.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidInput("non-finite snapshot".into()));
        }
        let bins = frame.len() / self.mics;
        if self.pairs.is_empty() {
            let power = crate::linalg::norm_sqr(frame) / frame.len().max(1) as f64;
            let delta = (INIT_LOADING * power).max(1e-20);
            self.pairs = (0..bins).map(|_| CovariancePair::new(self.mics, delta)).collect();
        }
        for (pair, y) in self.pairs.iter_mut().zip(frame.chunks(self.mics)) {
            pair.update(y, speech_active, &self.cfg)?;
        }
        Ok(())
    }

    pub fn bin(&self, k: usize) -> &CovariancePair {
        &self.pairs[k]
    }

    pub fn bins(&self) -> usize {
        self.pairs.len()
    }
}

/// Frame-wise activity from broadband energy: a frame is active when its
/// log-energy exceeds the 10th-percentile floor by 6 dB.
pub fn energy_activity(spec: &MultichannelSpectrogram) -> Vec<bool> {
    let energies: Vec<f64> = (0..spec.frames())
        .map(|l| 10.0 * (crate::linalg::norm_sqr(spec.frame(l)) + 1e-30).log10())
        .collect();
    if energies.is_empty() {
        return Vec::new();
    }
    let mut sorted = energies.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 10];
    energies.iter().map(|&e| e >= floor + 6.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_defect, hermitian_eigen};
    use proptest::prelude::*;

    fn cfg(alpha: f64) -> SmoothingConfig {
        SmoothingConfig { alpha_y: alpha, alpha_u: alpha, activity_source: ActivitySource::Oracle }
    }

    #[test]
    fn alpha_values() {
        let a = alpha_from_time_constant(0.25, 0.016).unwrap();
        assert!((a - (-0.064f64).exp()).abs() < 1e-15);
        assert!((a - 0.9380).abs() < 5e-5);
        let b = alpha_from_time_constant(0.5, 0.016).unwrap();
        assert!((b - 0.9685).abs() < 5e-5);
        assert_eq!(alpha_from_time_constant(f64::INFINITY, 0.016).unwrap(), MAX_ALPHA);
        assert!(alpha_from_time_constant(0.0, 0.016).is_err());
        assert!(alpha_from_time_constant(0.25, -1.0).is_err());
    }

    #[test]
    fn zero_alpha_gives_outer_product() {
        let mut p = CovariancePair::new(3, 1.0);
        let y = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        p.update(&y, true, &cfg(0.0)).unwrap();
        let mut expected = CMatrix::zeros(3, 3);
        expected[(0, 0)] = C64::new(1.0, 0.0);
        assert_eq!(p.phi_y, expected);
    }

    #[test]
    fn constant_input_converges_geometrically() {
        let y = [C64::new(0.3, -1.2), C64::new(2.0, 0.5)];
        let mut p = CovariancePair::new(2, 0.0);
        let c = cfg(0.938);
        for _ in 0..500 {
            p.update(&y, true, &c).unwrap();
        }
        let target = CMatrix::from_fn(2, 2, |i, j| y[i] * y[j].conj());
        // closed form: (1 - α^n)·y yᴴ, and α^500 ≈ 1.3e-14
        assert!((&p.phi_y - &target).norm() / target.norm() < 1e-13);
    }

    #[test]
    fn gating_leaves_other_matrix_bitwise_unchanged() {
        let mut p = CovariancePair::new(2, 0.5);
        let y = [C64::new(1.0, 2.0), C64::new(-0.5, 0.1)];
        p.update(&y, true, &cfg(0.9)).unwrap();
        let before = p.phi_y.clone();
        p.update(&y, false, &cfg(0.9)).unwrap();
        assert_eq!(p.phi_y, before);
        assert_eq!((p.updates_y, p.updates_u), (1, 1));
    }

    #[test]
    fn non_finite_snapshot_is_rejected() {
        let mut p = CovariancePair::new(2, 0.5);
        let before = p.clone();
        let y = [C64::new(f64::NAN, 0.0), C64::new(0.0, 0.0)];
        assert!(p.update(&y, true, &cfg(0.9)).is_err());
        assert_eq!(p, before);
    }

    #[test]
    fn trace_approaches_norm_monotonically() {
        let y = [C64::new(1.0, 1.0), C64::new(0.5, 0.0), C64::new(0.0, -2.0)];
        let target: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        let mut p = CovariancePair::new(3, 1e-3);
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            p.update(&y, true, &cfg(0.95)).unwrap();
            let gap = (p.phi_y.trace().re - target).abs();
            assert!(gap <= prev);
            prev = gap;
        }
    }

    #[test]
    fn tracker_initialises_from_first_frame() {
        let frame = vec![C64::new(2.0, 0.0); 2 * 5];
        let mut t = CovarianceTracker::new(cfg(0.5), 2).unwrap();
        t.push_frame(&frame, false).unwrap();
        assert_eq!(t.bins(), 5);
        // δ = 1e-6 · 4 on the untouched matrix
        assert!((t.bin(3).phi_y[(0, 0)].re - 4e-6).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn updates_preserve_hermitian_psd(
            seq in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 8), any::<bool>()), 1..60),
            alpha in 0.0f64..0.999,
        ) {
            let mut p = CovariancePair::new(4, 1e-6);
            let c = cfg(alpha);
            for (raw, active) in seq {
                let y: Vec<C64> = raw.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
                p.update(&y, active, &c).unwrap();
                for m in [&p.phi_y, &p.phi_u] {
                    prop_assert!(hermitian_defect(m) == 0.0);
                    let tr = m.trace().re;
                    let e = hermitian_eigen(m);
                    prop_assert!(e.values[0] >= -1e-10 * tr);
                }
            }
        }
    }
}
