//! Prototype ATF/RTF database over a grid of candidate azimuths.
//!
//! Azimuths are in degrees, counterclockwise seen from above: 0° is the look
//! direction, +90° the left ear, -90° the right ear. The analytic model is a
//! rigid sphere with Woodworth ray-traced delays and a zero-phase
//! single-pole head-shadow shelf, so the phase of every entry is exactly
//! linear in frequency.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::StftConfig;
use crate::C64;

const MAGIC: &[u8; 8] = b"BIDOASDB";
pub const CONTAINER_VERSION: u32 = 1;

/// Minimum shadow-shelf gain, reached around 150° incidence.
const SHADOW_ALPHA_MIN: f64 = 0.1;
const SHADOW_THETA_MIN: f64 = 150.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// A microphone on the surface of the head, given by its side and an
/// angular offset from the ear axis (positive towards the front).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicDescriptor {
    pub side: Side,
    pub offset_deg: f64,
}

impl MicDescriptor {
    pub fn azimuth_deg(&self) -> f64 {
        match self.side {
            Side::Left => 90.0 - self.offset_deg,
            Side::Right => -(90.0 - self.offset_deg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModelConfig {
    pub head_radius: f64,
    pub speed_of_sound: f64,
    /// Microphone 0 is the reference.
    pub mics: Vec<MicDescriptor>,
    /// (reference-side front mic, contralateral front mic) used for ITDs.
    pub itd_pair: (usize, usize),
}

impl Default for HeadModelConfig {
    /// Two microphones per hearing aid: left front, right front, left rear,
    /// right rear.
    fn default() -> Self {
        Self::with_mic_offset(5.0)
    }
}

impl HeadModelConfig {
    pub fn with_mic_offset(offset_deg: f64) -> Self {
        Self {
            head_radius: 0.0875,
            speed_of_sound: 343.0,
            mics: vec![
                MicDescriptor { side: Side::Left, offset_deg },
                MicDescriptor { side: Side::Right, offset_deg },
                MicDescriptor { side: Side::Left, offset_deg: -offset_deg },
                MicDescriptor { side: Side::Right, offset_deg: -offset_deg },
            ],
            itd_pair: (0, 1),
        }
    }

    /// One microphone exactly on each ear axis.
    pub fn two_mic() -> Self {
        Self {
            mics: vec![
                MicDescriptor { side: Side::Left, offset_deg: 0.0 },
                MicDescriptor { side: Side::Right, offset_deg: 0.0 },
            ],
            ..Self::with_mic_offset(0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.head_radius > 0.0) || !self.head_radius.is_finite() {
            return Err(Error::Config(format!("head radius {} must be positive", self.head_radius)));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::Config("speed of sound must be positive".into()));
        }
        if self.mics.len() < 2 {
            return Err(Error::Config("at least two microphones are required".into()));
        }
        validate_pair(&self.mics, self.itd_pair)
    }
}

fn validate_pair(mics: &[MicDescriptor], (a, b): (usize, usize)) -> Result<()> {
    if a >= mics.len() || b >= mics.len() || a == b {
        return Err(Error::Geometry(format!("ITD pair ({a}, {b}) out of range")));
    }
    if mics[a].side == mics[b].side {
        return Err(Error::Geometry("ITD pair must span both sides of the head".into()));
    }
    Ok(())
}

/// Evaluates the analytic spherical-head model at arbitrary frequencies.
#[derive(Debug, Clone)]
pub struct HeadModel {
    cfg: HeadModelConfig,
    mic_az: Vec<f64>,
}

impl HeadModel {
    pub fn new(cfg: HeadModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mic_az = cfg.mics.iter().map(|m| m.azimuth_deg().to_radians()).collect();
        Ok(Self { cfg, mic_az })
    }

    pub fn config(&self) -> &HeadModelConfig {
        &self.cfg
    }

    pub fn mics(&self) -> usize {
        self.mic_az.len()
    }

    /// Great-circle angle in [0, π] between the source direction and mic `m`.
    fn incidence(&self, m: usize, azimuth: f64) -> f64 {
        wrap_pi(azimuth - self.mic_az[m]).abs()
    }

    /// Arrival time at mic `m` relative to the head centre, Woodworth model.
    pub fn delay(&self, m: usize, azimuth_deg: f64) -> f64 {
        let psi = self.incidence(m, azimuth_deg.to_radians());
        let t = self.cfg.head_radius / self.cfg.speed_of_sound;
        if psi <= FRAC_PI_2 {
            -t * psi.cos()
        } else {
            t * (psi - FRAC_PI_2)
        }
    }

    /// Magnitude of the head-shadow shelf for mic `m`.
    pub fn shadow_gain(&self, m: usize, azimuth_deg: f64, omega: f64) -> f64 {
        self.response(m, azimuth_deg).gain(omega)
    }

    pub fn atf_entry(&self, m: usize, azimuth_deg: f64, omega: f64) -> C64 {
        self.response(m, azimuth_deg).at(omega)
    }

    /// Frequency-independent parameters of mic `m`'s response to a plane
    /// wave from `azimuth_deg`.
    pub fn response(&self, m: usize, azimuth_deg: f64) -> MicResponse {
        let psi = self.incidence(m, azimuth_deg.to_radians());
        MicResponse {
            alpha: (1.0 + SHADOW_ALPHA_MIN / 2.0)
                + (1.0 - SHADOW_ALPHA_MIN / 2.0) * (psi / SHADOW_THETA_MIN * PI).cos(),
            shelf_scale: self.cfg.head_radius / (2.0 * self.cfg.speed_of_sound),
            delay: self.delay(m, azimuth_deg),
        }
    }

    pub fn atf(&self, azimuth_deg: f64, omega: f64) -> Vec<C64> {
        (0..self.mics()).map(|m| self.atf_entry(m, azimuth_deg, omega)).collect()
    }

    /// ITD of the designated front pair as seen by the grouping stage: the
    /// slope `τ` in `G(ω) = e^{iωτ}`, where `G` is the contralateral entry
    /// of the RTF. Sources on the left give negative values.
    pub fn itd(&self, azimuth_deg: f64) -> f64 {
        let (r, c) = self.cfg.itd_pair;
        self.delay(r, azimuth_deg) - self.delay(c, azimuth_deg)
    }

    /// Azimuth in [-90°, 90°] whose model ITD equals `itd`, by bisection.
    pub fn azimuth_for_itd(&self, itd: f64) -> Option<f64> {
        let (mut lo, mut hi) = (-90.0, 90.0);
        let (f_lo, f_hi) = (self.itd(lo) - itd, self.itd(hi) - itd);
        if f_lo * f_hi > 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (self.itd(mid) - itd) * f_lo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Zero-phase head-shadow shelf followed by a pure delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicResponse {
    pub alpha: f64,
    shelf_scale: f64,
    pub delay: f64,
}

impl MicResponse {
    pub fn gain(&self, omega: f64) -> f64 {
        let x = omega * self.shelf_scale;
        ((1.0 + (self.alpha * x).powi(2)) / (1.0 + x * x)).sqrt()
    }

    pub fn at(&self, omega: f64) -> C64 {
        C64::from_polar(self.gain(omega), -omega * self.delay)
    }
}

pub(crate) fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// `start + i·step` for `i < count`.
pub fn direction_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start + i as f64 * step).collect()
}

/// The 5° grid from -180° to 175°.
pub fn default_directions() -> Vec<f64> {
    direction_grid(-180.0, 5.0, 72)
}

/// Circular angular distance in degrees.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn validate_directions(dirs: &[f64]) -> Result<()> {
    if dirs.is_empty() {
        return Err(Error::Config("empty direction grid".into()));
    }
    if dirs.iter().any(|d| !d.is_finite() || *d < -180.0 || *d >= 180.0) {
        return Err(Error::Config("directions must lie in [-180°, 180°)".into()));
    }
    if dirs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("directions must be strictly increasing".into()));
    }
    if dirs.len() > 2 {
        let mut gaps: Vec<f64> = dirs.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.push(dirs[0] + 360.0 - dirs[dirs.len() - 1]);
        let max = gaps.iter().copied().fold(0.0, f64::max);
        gaps.sort_by(f64::total_cmp);
        let median = gaps[gaps.len() / 2];
        if max > 2.0 * median + 1e-9 {
            return Err(Error::Config(format!(
                "direction grid does not cover the circle (gap {max}° vs median {median}°)"
            )));
        }
    }
    Ok(())
}

/// `atf / atf[0]`.
pub fn atf_to_rtf(atf: &[C64]) -> Result<Vec<C64>> {
    let reference = *atf.first().ok_or(Error::DegenerateSteering)?;
    if reference.norm() == 0.0 || !reference.is_finite() {
        return Err(Error::DegenerateSteering);
    }
    let mut out: Vec<C64> = atf.iter().map(|z| z / reference).collect();
    out[0] = C64::new(1.0, 0.0);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbHeader {
    pub sample_rate: f64,
    pub window_len: usize,
    pub bins: usize,
    pub mics: Vec<MicDescriptor>,
    pub itd_pair: (usize, usize),
    pub directions_deg: Vec<f64>,
    /// Present when the entries were generated by the analytic model.
    pub model: Option<HeadModelConfig>,
}

/// Anechoic prototype ATF vectors `ā(k, θ_i)` and RTF vectors `ḡ(k, θ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringDatabase {
    header: DbHeader,
    /// Indexed `((k · I) + i) · M + m`.
    atf: Vec<C64>,
    rtf: Vec<C64>,
    atf_norm_sqr: Vec<f64>,
    rtf_norm: Vec<f64>,
}

impl SteeringDatabase {
    /// Samples the spherical-head model on the STFT bin frequencies.
    pub fn build_spherical_head(head: &HeadModelConfig, cfg: &StftConfig, directions: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let model = HeadModel::new(head.clone())?;
        validate_directions(directions)?;
        let bins = cfg.bins();
        let mut atf = Vec::with_capacity(bins * directions.len() * model.mics());
        for k in 0..bins {
            let omega = cfg.omega(k);
            for &d in directions {
                atf.extend(model.atf(d, omega));
            }
        }
        let header = DbHeader {
            sample_rate: cfg.sample_rate,
            window_len: cfg.window_len,
            bins,
            mics: head.mics.clone(),
            itd_pair: head.itd_pair,
            directions_deg: directions.to_vec(),
            model: Some(head.clone()),
        };
        Self::from_atf(header, atf)
    }

    /// Builds a database from externally supplied ATFs (e.g. measured
    /// HRTFs), deriving the RTFs.
    pub fn from_atf(header: DbHeader, atf: Vec<C64>) -> Result<Self> {
        validate_directions(&header.directions_deg)?;
        validate_pair(&header.mics, header.itd_pair)?;
        let m = header.mics.len();
        let expected = header.bins * header.directions_deg.len() * m;
        if atf.len() != expected {
            return Err(Error::Format(format!("expected {expected} ATF entries, got {}", atf.len())));
        }
        let mut rtf = Vec::with_capacity(atf.len());
        for chunk in atf.chunks(m) {
            rtf.extend(atf_to_rtf(chunk)?);
        }
        Ok(Self::assemble(header, atf, rtf))
    }

    fn assemble(header: DbHeader, atf: Vec<C64>, rtf: Vec<C64>) -> Self {
        let m = header.mics.len();
        let atf_norm_sqr = atf.chunks(m).map(crate::linalg::norm_sqr).collect();
        let rtf_norm = rtf.chunks(m).map(|c| crate::linalg::norm_sqr(c).sqrt()).collect();
        Self { header, atf, rtf, atf_norm_sqr, rtf_norm }
    }

    pub fn header(&self) -> &DbHeader {
        &self.header
    }

    pub fn directions(&self) -> &[f64] {
        &self.header.directions_deg
    }

    pub fn num_directions(&self) -> usize {
        self.header.directions_deg.len()
    }

    pub fn mics(&self) -> usize {
        self.header.mics.len()
    }

    pub fn bins(&self) -> usize {
        self.header.bins
    }

    pub fn itd_pair(&self) -> (usize, usize) {
        self.header.itd_pair
    }

    fn offset(&self, k: usize, i: usize) -> usize {
        (k * self.num_directions() + i) * self.mics()
    }

    pub fn atf(&self, k: usize, i: usize) -> &[C64] {
        let o = self.offset(k, i);
        &self.atf[o..o + self.mics()]
    }

    pub fn rtf(&self, k: usize, i: usize) -> &[C64] {
        let o = self.offset(k, i);
        &self.rtf[o..o + self.mics()]
    }

    pub fn atf_norm_sqr(&self, k: usize, i: usize) -> f64 {
        self.atf_norm_sqr[k * self.num_directions() + i]
    }

    pub fn rtf_norm(&self, k: usize, i: usize) -> f64 {
        self.rtf_norm[k * self.num_directions() + i]
    }

    /// The analytic model this database was sampled from, if any.
    pub fn head_model(&self) -> Option<HeadModel> {
        self.header.model.clone().and_then(|c| HeadModel::new(c).ok())
    }

    /// Checks that the database matches an STFT configuration.
    pub fn check_stft(&self, cfg: &StftConfig) -> Result<()> {
        if self.header.sample_rate != cfg.sample_rate || self.header.window_len != cfg.window_len {
            return Err(Error::Config(format!(
                "steering database is for {} Hz / {} samples, analysis uses {} Hz / {} samples",
                self.header.sample_rate, self.header.window_len, cfg.sample_rate, cfg.window_len
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(20 + header.len() + 32 * self.atf.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for z in self.atf.iter().chain(&self.rtf) {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != CONTAINER_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CONTAINER_VERSION });
        }
        let header_len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
        let header_len = usize::try_from(header_len).map_err(|_| Error::Format("header too large".into()))?;
        let header: DbHeader = serde_json::from_slice(cur.take(header_len)?)?;
        validate_directions(&header.directions_deg)?;
        validate_pair(&header.mics, header.itd_pair)?;

        let n = header.bins * header.directions_deg.len() * header.mics.len();
        let read = |cur: &mut Cursor| -> Result<Vec<C64>> {
            let raw = cur.take(16 * n)?;
            Ok(raw
                .chunks_exact(16)
                .map(|c| {
                    C64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect())
        };
        let atf = read(&mut cur)?;
        let rtf = read(&mut cur)?;
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(Self::assemble(header, atf, rtf))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated: need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_db() -> SteeringDatabase {
        SteeringDatabase::build_spherical_head(&HeadModelConfig::default(), &StftConfig::default(), &default_directions())
            .unwrap()
    }

    #[test]
    fn frontal_source_is_symmetric() {
        let model = HeadModel::new(HeadModelConfig::two_mic()).unwrap();
        let a = model.atf(0.0, 2.0 * PI * 1000.0);
        assert!((a[0] - a[1]).norm() < 1e-15);
        assert_eq!(model.itd(0.0), 0.0);
    }

    #[test]
    fn lateral_itd_matches_woodworth() {
        let model = HeadModel::new(HeadModelConfig::two_mic()).unwrap();
        let expected = 0.0875 / 343.0 * (1.0 + FRAC_PI_2);
        assert!((expected - 655.8e-6).abs() < 0.5e-6);
        assert!((model.itd(90.0) + expected).abs() < 1e-15);
        assert!((model.itd(-90.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn itd_is_monotone_over_frontal_half_plane() {
        let model = HeadModel::new(HeadModelConfig::default()).unwrap();
        let itds: Vec<f64> = (-89..=89).map(|d| model.itd(d as f64)).collect();
        assert!(itds.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ipsilateral_louder_near_ears() {
        let model = HeadModel::new(HeadModelConfig::default()).unwrap();
        for f in [500.0, 2000.0, 6000.0] {
            let w = 2.0 * PI * f;
            let left = model.atf(90.0, w);
            assert!(left[0].norm() >= left[1].norm());
            let right = model.atf(-80.0, w);
            assert!(right[1].norm() >= right[0].norm());
        }
    }

    #[test]
    fn itd_inversion() {
        let model = HeadModel::new(HeadModelConfig::default()).unwrap();
        let az = model.azimuth_for_itd(400e-6).unwrap();
        assert!((model.itd(az) - 400e-6).abs() < 1e-12);
        assert!(az < 0.0);
        assert!(model.azimuth_for_itd(2e-3).is_none());
    }

    #[test]
    fn rtf_reference_is_one() {
        assert_eq!(atf_to_rtf(&[C64::new(1.0, 0.0), C64::new(0.0, 2.0)]).unwrap()[1], C64::new(0.0, 2.0));
        let g = atf_to_rtf(&[C64::new(2.0, 0.0), C64::new(0.0, 4.0)]).unwrap();
        assert_eq!(g, vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0)]);
        assert!(matches!(
            atf_to_rtf(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]),
            Err(Error::DegenerateSteering)
        ));
    }

    #[test]
    fn stored_rtf_matches_atf() {
        let db = default_db();
        for k in (0..db.bins()).step_by(16) {
            for i in 0..db.num_directions() {
                let g = atf_to_rtf(db.atf(k, i)).unwrap();
                assert_eq!(g.as_slice(), db.rtf(k, i));
                assert_eq!(db.rtf(k, i)[0], C64::new(1.0, 0.0));
                assert!(db.atf_norm_sqr(k, i) > 0.0);
            }
        }
    }

    #[test]
    fn contralateral_phase_is_linear_with_itd_slope() {
        let db = default_db();
        let cfg = StftConfig::default();
        let model = db.head_model().unwrap();
        for i in (0..db.num_directions()).step_by(7) {
            let mut unwrapped = Vec::new();
            let mut prev = 0.0;
            let mut offset = 0.0;
            for k in 0..db.bins() {
                let p = db.rtf(k, i)[1].arg();
                if k > 0 {
                    let d = p - prev;
                    offset -= (d / (2.0 * PI)).round() * 2.0 * PI;
                }
                prev = p;
                unwrapped.push(p + offset);
            }
            let slope = (unwrapped[db.bins() - 1] - unwrapped[1]) / (cfg.omega(db.bins() - 1) - cfg.omega(1));
            let itd = model.itd(db.directions()[i]);
            assert!((slope - itd).abs() <= 0.01 * itd.abs() + 1e-9, "dir {}", db.directions()[i]);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = StftConfig::default();
        assert!(SteeringDatabase::build_spherical_head(&HeadModelConfig::default(), &cfg, &[]).is_err());
        let head = HeadModelConfig { head_radius: 0.0, ..Default::default() };
        assert!(SteeringDatabase::build_spherical_head(&head, &cfg, &default_directions()).is_err());
        let gappy = [-180.0, -175.0, -170.0, -165.0, -160.0, 0.0];
        assert!(SteeringDatabase::build_spherical_head(&HeadModelConfig::default(), &cfg, &gappy).is_err());
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let db = default_db();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.bin");
        db.save(&path).unwrap();
        let back = SteeringDatabase::load(&path).unwrap();
        assert_eq!(back, db);
        assert!(back.atf.iter().zip(&db.atf).all(|(a, b)| a.re.to_bits() == b.re.to_bits()
            && a.im.to_bits() == b.im.to_bits()));
    }

    #[test]
    fn truncated_container_is_a_format_error() {
        let bytes = default_db().to_bytes().unwrap();
        for cut in [4, 15, 100, bytes.len() - 1] {
            assert!(matches!(SteeringDatabase::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut bytes = default_db().to_bytes().unwrap();
        bytes[8] = 9;
        assert!(matches!(
            SteeringDatabase::from_bytes(&bytes),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn single_direction_database_loads() {
        let db = SteeringDatabase::build_spherical_head(&HeadModelConfig::default(), &StftConfig::default(), &[30.0])
            .unwrap();
        let back = SteeringDatabase::from_bytes(&db.to_bytes().unwrap()).unwrap();
        assert_eq!(back.num_directions(), 1);
    }
}
