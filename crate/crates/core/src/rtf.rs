//! RTF vector estimation by covariance whitening.

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, hermitian_eigen, symmetrize, CMatrix, CVector};
use crate::steering::SteeringDatabase;
use crate::C64;

/// Relative diagonal loading applied to `Φ̂_u` before taking its square root.
pub const WHITENING_LOADING: f64 = 1e-8;
/// Minimum ratio of the two largest generalized eigenvalues for a valid estimate.
pub const DOMINANCE_RATIO: f64 = 1.0 + 1e-3;
const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RtfEstimate {
    /// Reference entry is exactly 1 when `valid`.
    pub g_hat: Vec<C64>,
    pub valid: bool,
}

impl RtfEstimate {
    pub fn invalid(mics: usize) -> Self {
        Self { g_hat: vec![C64::new(0.0, 0.0); mics], valid: false }
    }
}

/// Hermitian square root of `Φ̂_u` and its inverse.
#[derive(Debug, Clone)]
pub struct Whitener {
    sqrt: CMatrix,
    inv_sqrt: CMatrix,
}

impl Whitener {
    /// `None` when `Φ̂_u` stays singular after loading.
    pub fn new(phi_u: &CMatrix) -> Result<Option<Self>> {
        check_hermitian(phi_u, "phi_u")?;
        let m = phi_u.nrows();
        let trace = phi_u.trace().re;
        if !(trace > 0.0) || !trace.is_finite() {
            return Ok(None);
        }
        let mut loaded = phi_u.clone();
        let load = WHITENING_LOADING * trace / m as f64;
        for i in 0..m {
            loaded[(i, i)] += C64::new(load, 0.0);
        }
        let eig = hermitian_eigen(&loaded);
        if eig.values[0] <= 0.0 {
            return Ok(None);
        }
        let v = &eig.vectors;
        let diag = |f: fn(f64) -> f64| {
            CMatrix::from_diagonal(&CVector::from_iterator(m, eig.values.iter().map(|&x| C64::new(f(x), 0.0))))
        };
        let mut sqrt = v * diag(f64::sqrt) * v.adjoint();
        let mut inv_sqrt = v * diag(|x| 1.0 / x.sqrt()) * v.adjoint();
        symmetrize(&mut sqrt);
        symmetrize(&mut inv_sqrt);
        Ok(Some(Self { sqrt, inv_sqrt }))
    }

    /// Principal generalized eigenvector of `(Φ̂_y, Φ̂_u)`, de-whitened and
    /// normalised to the reference microphone.
    pub fn estimate(&self, phi_y: &CMatrix) -> Result<RtfEstimate> {
        check_hermitian(phi_y, "phi_y")?;
        let m = phi_y.nrows();
        let mut whitened = &self.inv_sqrt * phi_y * &self.inv_sqrt;
        symmetrize(&mut whitened);
        let eig = hermitian_eigen(&whitened);
        let top = eig.values[m - 1];
        let second = eig.values[m - 2];
        let g = &self.sqrt * eig.vectors.column(m - 1);
        let reference = g[0];
        if !(reference.norm() > 1e-12 * g.norm()) || !top.is_finite() {
            return Ok(RtfEstimate::invalid(m));
        }
        let mut g_hat: Vec<C64> = g.iter().map(|z| z / reference).collect();
        g_hat[0] = C64::new(1.0, 0.0);
        let valid = top > 0.0 && top >= DOMINANCE_RATIO * second;
        Ok(RtfEstimate { g_hat, valid })
    }
}

fn check_hermitian(m: &CMatrix, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Contract(format!("{name} is not square")));
    }
    if hermitian_defect(m) > HERMITIAN_TOL {
        return Err(Error::Contract(format!("{name} is not Hermitian")));
    }
    Ok(())
}

/// Covariance-whitening RTF estimate from the noisy and undesired covariances.
pub fn estimate_rtf_cw(phi_y: &CMatrix, phi_u: &CMatrix) -> Result<RtfEstimate> {
    if phi_y.shape() != phi_u.shape() {
        return Err(Error::Contract("covariance shapes differ".into()));
    }
    let m = phi_y.nrows();
    if m == 1 {
        check_hermitian(phi_y, "phi_y")?;
        check_hermitian(phi_u, "phi_u")?;
        return Ok(RtfEstimate { g_hat: vec![C64::new(1.0, 0.0)], valid: true });
    }
    match Whitener::new(phi_u)? {
        Some(w) => w.estimate(phi_y),
        None => Ok(RtfEstimate::invalid(m)),
    }
}

/// Entry relating the two front microphones, `ĝ[contra] / ĝ[ref]`.
/// `None` for an invalid estimate.
pub fn contralateral_entry(est: &RtfEstimate, db: &SteeringDatabase) -> Option<C64> {
    pair_ratio(est, db.itd_pair())
}

pub(crate) fn pair_ratio(est: &RtfEstimate, (r, c): (usize, usize)) -> Option<C64> {
    if !est.valid {
        return None;
    }
    let den = est.g_hat[r];
    if den.norm() == 0.0 {
        return None;
    }
    let v = est.g_hat[c] / den;
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steering::{HeadModelConfig, SteeringDatabase};
    use crate::stft::StftConfig;

    fn outer(g: &[C64]) -> CMatrix {
        CMatrix::from_fn(g.len(), g.len(), |i, j| g[i] * g[j].conj())
    }

    #[test]
    fn rank_one_plus_identity() {
        let g = [C64::new(1.0, 0.0), C64::new(0.0, -1.0)];
        let phi_y = CMatrix::identity(2, 2) + outer(&g);
        let est = estimate_rtf_cw(&phi_y, &CMatrix::identity(2, 2)).unwrap();
        assert!(est.valid);
        for (a, b) in est.g_hat.iter().zip(&g) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mic_is_reference_only() {
        let one = CMatrix::identity(1, 1);
        let est = estimate_rtf_cw(&one, &one).unwrap();
        assert_eq!(est.g_hat, vec![C64::new(1.0, 0.0)]);
    }

    #[test]
    fn no_speech_is_invalid() {
        let phi = CMatrix::from_fn(3, 3, |i, j| if i == j { C64::new(2.0 + i as f64, 0.0) } else { C64::new(0.1, 0.0) });
        assert!(!estimate_rtf_cw(&phi, &phi).unwrap().valid);
    }

    #[test]
    fn singular_undesired_covariance_is_invalid() {
        let z = CMatrix::zeros(2, 2);
        assert!(!estimate_rtf_cw(&CMatrix::identity(2, 2), &z).unwrap().valid);
    }

    #[test]
    fn non_hermitian_is_a_contract_error() {
        let mut bad = CMatrix::identity(2, 2);
        bad[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(estimate_rtf_cw(&bad, &CMatrix::identity(2, 2)), Err(Error::Contract(_))));
    }

    #[test]
    fn scale_of_undesired_covariance_is_absorbed() {
        let g = [C64::new(0.7, 0.2), C64::new(-0.3, 1.1), C64::new(0.5, -0.5)];
        let phi_u = CMatrix::from_fn(3, 3, |i, j| {
            if i == j { C64::new(1.0 + 0.3 * i as f64, 0.0) } else { C64::new(0.1, 0.05 * (j as f64 - i as f64)) }
        });
        let phi_y = &phi_u + outer(&g) * C64::new(4.0, 0.0);
        let a = estimate_rtf_cw(&phi_y, &phi_u).unwrap();
        let b = estimate_rtf_cw(&phi_y, &(&phi_u * C64::new(7.5, 0.0))).unwrap();
        for (x, y) in a.g_hat.iter().zip(&b.g_hat) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn contralateral_entry_reads_front_pair() {
        let db = SteeringDatabase::build_spherical_head(
            &HeadModelConfig::default(),
            &StftConfig::default(),
            &crate::steering::default_directions(),
        )
        .unwrap();
        let e = C64::from_polar(1.0, -0.7);
        let est = RtfEstimate {
            g_hat: vec![C64::new(1.0, 0.0), e, C64::new(0.3, 0.0), C64::new(0.2, 0.1)],
            valid: true,
        };
        assert_eq!(contralateral_entry(&est, &db), Some(e));
        let ratio = pair_ratio(&est, (2, 3)).unwrap();
        assert!((ratio - C64::new(0.2, 0.1) / 0.3).norm() < 1e-15);
        assert_eq!(contralateral_entry(&RtfEstimate::invalid(4), &db), None);
    }
}
