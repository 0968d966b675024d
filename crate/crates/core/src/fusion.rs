//! Frequency fusion: narrowband histogram voting, broadband pooling, and
//! speaker-grouped pooling with an ITD-based time-frequency grouping.
//!
//! The grouping compares the phase of the contralateral RTF entry `Ĝ(k)`
//! of every selected bin against `e^{iω_k τ_n}` for a grid of candidate
//! ITDs. Per-bin scores `Ψ(k, τ_n) = ρ(arg Ĝ(k) − ω_k τ_n)` are summed over
//! bins, the `J` highest peaks give one ITD per speaker, and each bin is
//! assigned to the speaker whose ITD scores best at that bin.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::peaks::{find_peaks, Domain};
use crate::spectra::SpatialSpectrum;
use crate::stft::StftConfig;
use crate::C64;

pub const DEFAULT_BETA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    Narrow,
    Broad,
    Grouped,
}

impl Fusion {
    pub const ALL: [Fusion; 3] = [Fusion::Narrow, Fusion::Broad, Fusion::Grouped];

    pub fn name(self) -> &'static str {
        match self {
            Fusion::Narrow => "narrow",
            Fusion::Broad => "broad",
            Fusion::Grouped => "grouped",
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "narrow" => Ok(Fusion::Narrow),
            "broad" => Ok(Fusion::Broad),
            "grouped" => Ok(Fusion::Grouped),
            _ => Err(Error::Config(format!("unknown fusion {s:?}"))),
        }
    }
}

/// `e^{β cos x} / e^β`.
pub fn rho(x: f64, beta: f64) -> f64 {
    (beta * (x.cos() - 1.0)).exp()
}

/// Uniform grid of candidate ITDs in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItdGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl Default for ItdGrid {
    /// -900 µs to 900 µs in 1 µs steps.
    fn default() -> Self {
        Self { start: -900e-6, step: 1e-6, count: 1801 }
    }
}

impl ItdGrid {
    pub fn tau(&self, n: usize) -> f64 {
        self.start + n as f64 * self.step
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.count).map(|n| self.tau(n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || !(self.step > 0.0) {
            return Err(Error::Config("ITD grid needs a positive step and at least one point".into()));
        }
        let end = self.tau(self.count - 1);
        if (end + self.start).abs() > 1e-3 * self.step {
            return Err(Error::Config("ITD grid must be symmetric about zero".into()));
        }
        Ok(())
    }

    /// Parses `us:start,step,stop` (microseconds, inclusive stop).
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("ITD grid {s:?} is not of the form us:start,step,stop"));
        let body = s.strip_prefix("us:").ok_or_else(bad)?;
        let v: Vec<f64> = body
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, step, stop] = v[..] else { return Err(bad()) };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step).round() as usize + 1;
        let grid = Self { start: start * 1e-6, step: step * 1e-6, count };
        grid.validate()?;
        Ok(grid)
    }
}

/// Precomputed `e^{-iω_k τ_n}` for all bins and candidate ITDs.
#[derive(Debug, Clone)]
pub struct ItdScorer {
    grid: ItdGrid,
    beta: f64,
    bins: usize,
    rotations: Vec<C64>,
}

impl ItdScorer {
    pub fn new(cfg: &StftConfig, grid: ItdGrid, beta: f64) -> Result<Self> {
        grid.validate()?;
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::Config(format!("beta {beta} must be non-negative")));
        }
        let bins = cfg.bins();
        let mut rotations = Vec::with_capacity(bins * grid.count);
        for k in 0..bins {
            let w = cfg.omega(k);
            rotations.extend((0..grid.count).map(|n| C64::from_polar(1.0, -w * grid.tau(n))));
        }
        Ok(Self { grid, beta, bins, rotations })
    }

    pub fn grid(&self) -> &ItdGrid {
        &self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Scores every bin that carries a contralateral entry; `g[k]` is
    /// `None` for bins whose RTF estimate is invalid.
    pub fn scores(&self, g: &[Option<C64>]) -> ItdScoreField {
        let n = self.grid.count;
        let mut bins = Vec::new();
        let mut psi = Vec::new();
        for (k, gk) in g.iter().enumerate().take(self.bins) {
            let Some(gk) = gk else { continue };
            let mag = gk.norm();
            if !(mag > 0.0) || !mag.is_finite() {
                continue;
            }
            let u = gk / mag;
            bins.push(k);
            // cos(arg Ĝ − ω τ) = Re{u · e^{-iωτ}}
            psi.extend(
                self.rotations[k * n..(k + 1) * n]
                    .iter()
                    .map(|r| (self.beta * ((u * r).re - 1.0)).exp()),
            );
        }
        ItdScoreField { grid: self.grid, beta: self.beta, bins, psi }
    }
}

/// `Ψ(k, τ_n)` for the scored bins of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ItdScoreField {
    pub grid: ItdGrid,
    pub beta: f64,
    /// Scored bins, ascending.
    pub bins: Vec<usize>,
    psi: Vec<f64>,
}

impl ItdScoreField {
    pub fn row_of(&self, k: usize) -> Option<&[f64]> {
        let n = self.grid.count;
        self.bins.binary_search(&k).ok().map(|r| &self.psi[r * n..(r + 1) * n])
    }

    pub fn psi(&self, k: usize, n: usize) -> Option<f64> {
        self.row_of(k).map(|r| r[n])
    }

    /// Bins of `selected` that carry scores.
    pub fn restrict(&self, selected: &[usize]) -> Vec<usize> {
        selected.iter().copied().filter(|k| self.bins.binary_search(k).is_ok()).collect()
    }

    /// `Σ_{k ∈ selected} Ψ(k, τ_n)` over scored bins.
    pub fn summed(&self, selected: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.count];
        for k in selected {
            if let Some(row) = self.row_of(*k) {
                acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
        }
        acc
    }
}

/// Per-speaker ITDs of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ItdEstimates {
    /// Grid indices, strongest peak first.
    pub indices: Vec<usize>,
    pub taus: Vec<f64>,
    pub heights: Vec<f64>,
    /// Fewer than `J` peaks were found.
    pub shortfall: bool,
}

/// Locations of the `J` highest peaks of the bin-summed score.
pub fn estimate_itds(field: &ItdScoreField, selected: &[usize], speakers: usize) -> ItdEstimates {
    let curve = field.summed(selected);
    let indices = find_peaks(&curve, speakers, Domain::Linear);
    ItdEstimates {
        taus: indices.iter().map(|&n| field.grid.tau(n)).collect(),
        heights: indices.iter().map(|&n| curve[n]).collect(),
        shortfall: indices.len() < speakers,
        indices,
    }
}

/// Hard assignment of the grouping domain's bins to speakers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerIndicator {
    pub speakers: usize,
    /// Bins the partition covers, ascending.
    pub domain: Vec<usize>,
    /// Speaker of `domain[r]`.
    pub assignment: Vec<usize>,
}

impl SpeakerIndicator {
    /// `1_j(k)`.
    pub fn is_assigned(&self, j: usize, k: usize) -> bool {
        self.domain.binary_search(&k).is_ok_and(|r| self.assignment[r] == j)
    }

    pub fn group(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.domain.iter().zip(&self.assignment).filter(move |(_, &s)| s == j).map(|(&k, _)| k)
    }

    /// Same partition with speakers relabelled, `perm[j]` being the new
    /// label of speaker `j`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        Self {
            speakers: self.speakers,
            domain: self.domain.clone(),
            assignment: self.assignment.iter().map(|&j| perm[j]).collect(),
        }
    }

    /// Every speaker trivially owns all of `selected`.
    pub fn single(selected: &[usize]) -> Self {
        Self { speakers: 1, domain: selected.to_vec(), assignment: vec![0; selected.len()] }
    }
}

/// Assigns every scored bin of `selected` to the speaker whose ITD scores
/// highest there; ties go to the lower speaker index. With `J = 1` all of
/// `selected` goes to speaker 0 without consulting the scores.
pub fn speaker_indicator(field: &ItdScoreField, selected: &[usize], itds: &ItdEstimates, speakers: usize) -> SpeakerIndicator {
    if speakers == 1 {
        return SpeakerIndicator::single(selected);
    }
    if itds.indices.is_empty() {
        return SpeakerIndicator { speakers, domain: Vec::new(), assignment: Vec::new() };
    }
    let domain = field.restrict(selected);
    let assignment = domain
        .iter()
        .map(|&k| {
            let row = field.row_of(k).expect("domain bins are scored");
            let mut best = 0;
            for (j, &n) in itds.indices.iter().enumerate() {
                if row[n] > row[itds.indices[best]] {
                    best = j;
                }
            }
            best
        })
        .collect();
    SpeakerIndicator { speakers, domain, assignment }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoaPeak {
    /// Index into the direction grid.
    pub index: usize,
    pub azimuth_deg: f64,
    /// Histogram count or pooled spectrum value at the peak.
    pub height: f64,
}

/// Up to `J` direction estimates for one frame. Missing slots are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    pub fusion: Fusion,
    pub slots: Vec<Option<DoaPeak>>,
}

impl DoaEstimate {
    pub fn none(fusion: Fusion, speakers: usize) -> Self {
        Self { fusion, slots: vec![None; speakers] }
    }

    pub fn azimuths(&self) -> Vec<f64> {
        self.slots.iter().flatten().map(|p| p.azimuth_deg).collect()
    }

    pub fn shortfall(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }

    fn from_peaks(fusion: Fusion, speakers: usize, peaks: &[usize], curve: &[f64], dirs: &[f64]) -> Self {
        let mut slots: Vec<Option<DoaPeak>> = peaks
            .iter()
            .map(|&i| Some(DoaPeak { index: i, azimuth_deg: dirs[i], height: curve[i] }))
            .collect();
        slots.resize(speakers, None);
        Self { fusion, slots }
    }
}

fn valid_bins<'a>(sps: &'a SpatialSpectrum, bins: impl IntoIterator<Item = usize> + 'a) -> impl Iterator<Item = usize> + 'a {
    bins.into_iter().filter(|&k| sps.is_valid(k))
}

fn pool(sps: &SpatialSpectrum, bins: impl IntoIterator<Item = usize>) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; sps.directions()];
    let mut any = false;
    for k in valid_bins(sps, bins) {
        any = true;
        acc.iter_mut().zip(sps.row(k)).for_each(|(a, v)| *a += v);
    }
    any.then_some(acc)
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-bin argmax votes counted in a histogram over the direction grid;
/// the `J` highest histogram peaks.
pub fn fuse_narrowband(sps: &SpatialSpectrum, selected: &[usize], speakers: usize, dirs: &[f64]) -> DoaEstimate {
    let mut hist = vec![0.0; sps.directions()];
    let mut any = false;
    for k in valid_bins(sps, selected.iter().copied()) {
        hist[first_argmax(sps.row(k))] += 1.0;
        any = true;
    }
    if !any {
        return DoaEstimate::none(Fusion::Narrow, speakers);
    }
    let peaks = find_peaks(&hist, speakers, Domain::Circular);
    DoaEstimate::from_peaks(Fusion::Narrow, speakers, &peaks, &hist, dirs)
}

/// The `J` highest peaks of the spectrum summed over selected bins.
pub fn fuse_broadband(sps: &SpatialSpectrum, selected: &[usize], speakers: usize, dirs: &[f64]) -> DoaEstimate {
    match pool(sps, selected.iter().copied()) {
        Some(curve) => {
            let peaks = find_peaks(&curve, speakers, Domain::Circular);
            DoaEstimate::from_peaks(Fusion::Broad, speakers, &peaks, &curve, dirs)
        }
        None => DoaEstimate::none(Fusion::Broad, speakers),
    }
}

/// One estimate per speaker: the highest peak of the spectrum pooled over
/// that speaker's bins. Speakers without bins get no estimate.
pub fn fuse_grouped(sps: &SpatialSpectrum, indicator: &SpeakerIndicator, dirs: &[f64]) -> DoaEstimate {
    let slots = (0..indicator.speakers)
        .map(|j| {
            let curve = pool(sps, indicator.group(j))?;
            let i = *find_peaks(&curve, 1, Domain::Circular).first()?;
            Some(DoaPeak { index: i, azimuth_deg: dirs[i], height: curve[i] })
        })
        .collect();
    DoaEstimate { fusion: Fusion::Grouped, slots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Method;
    use std::f64::consts::PI;

    fn dirs() -> Vec<f64> {
        crate::steering::default_directions()
    }

    fn spectrum_voting(votes: &[usize]) -> SpatialSpectrum {
        let mut s = SpatialSpectrum::new(Method::Srp, votes.len(), 72);
        for (k, &v) in votes.iter().enumerate() {
            let mut row = vec![0.1; 72];
            row[v] = 1.0;
            s.set(k, Some(row));
        }
        s
    }

    #[test]
    fn rho_values() {
        assert_eq!(rho(0.0, 5.0), 1.0);
        assert!((rho(PI, 5.0) - (-10.0f64).exp()).abs() < 1e-18);
        assert!(((-10.0f64).exp() - 4.54e-5).abs() < 1e-7);
        for x in [-2.0, 0.3, 1.7] {
            assert!((rho(x, 5.0) - rho(-x, 5.0)).abs() < 1e-15);
            assert!((rho(x, 5.0) - rho(x + 2.0 * PI, 5.0)).abs() < 1e-14);
            assert!(rho(x, 5.0) > 0.0 && rho(x, 5.0) <= 1.0);
        }
    }

    #[test]
    fn itd_grid_parsing() {
        let g = ItdGrid::parse("us:-900,1,900").unwrap();
        assert_eq!(g, ItdGrid { start: -900e-6, step: 1e-6, count: 1801 });
        assert!(ItdGrid::parse("us:-900,1,800").is_err());
        assert!(ItdGrid::parse("-900,1,900").is_err());
        assert!(ItdGrid::parse("us:1,2").is_err());
    }

    fn field_for(tau: f64, bins: std::ops::Range<usize>) -> ItdScoreField {
        let cfg = StftConfig::default();
        let scorer = ItdScorer::new(&cfg, ItdGrid::default(), DEFAULT_BETA).unwrap();
        let g: Vec<Option<C64>> = (0..cfg.bins())
            .map(|k| bins.contains(&k).then(|| C64::from_polar(1.0, cfg.omega(k) * tau)))
            .collect();
        scorer.scores(&g)
    }

    #[test]
    fn matching_itd_scores_one() {
        let grid = ItdGrid::default();
        let n_star = 1250;
        let field = field_for(grid.tau(n_star), 1..257);
        for &k in &field.bins {
            assert!((field.psi(k, n_star).unwrap() - 1.0).abs() < 1e-12);
        }
        let all: Vec<usize> = field.bins.clone();
        let itd = estimate_itds(&field, &all, 1);
        assert_eq!(itd.indices, vec![n_star]);
        assert!(!itd.shortfall);
    }

    #[test]
    fn single_bin_score_is_periodic_in_itd() {
        let cfg = StftConfig::default();
        let k = 64; // 2 kHz, period 500 µs = 500 grid steps
        let field = field_for(0.0, k..k + 1);
        let period = (2.0 * PI / cfg.omega(k) / 1e-6).round() as usize;
        assert_eq!(period, 500);
        for n in 0..(1801 - period) {
            assert!((field.psi(k, n).unwrap() - field.psi(k, n + period).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_bins_are_skipped_and_flat_field_falls_short() {
        let cfg = StftConfig::default();
        let scorer = ItdScorer::new(&cfg, ItdGrid::default(), DEFAULT_BETA).unwrap();
        let field = scorer.scores(&vec![None; cfg.bins()]);
        assert!(field.bins.is_empty());
        let itd = estimate_itds(&field, &[1, 2, 3], 2);
        assert!(itd.shortfall && itd.indices.is_empty());
    }

    #[test]
    fn indicator_assigns_matching_bins() {
        let cfg = StftConfig::default();
        let grid = ItdGrid::default();
        let scorer = ItdScorer::new(&cfg, grid, DEFAULT_BETA).unwrap();
        let (t1, t2) = (grid.tau(500), grid.tau(1300));
        let g: Vec<Option<C64>> = (0..cfg.bins())
            .map(|k| Some(C64::from_polar(1.0, cfg.omega(k) * if k % 2 == 0 { t1 } else { t2 })))
            .collect();
        let field = scorer.scores(&g);
        let itds = ItdEstimates { indices: vec![500, 1300], taus: vec![t1, t2], heights: vec![0.0; 2], shortfall: false };
        let sel: Vec<usize> = (1..40).collect();
        let ind = speaker_indicator(&field, &sel, &itds, 2);
        for &k in &sel {
            assert!(ind.is_assigned(if k % 2 == 0 { 0 } else { 1 }, k), "bin {k}");
        }
        assert!(!ind.is_assigned(0, 100) && !ind.is_assigned(1, 100));
    }

    #[test]
    fn indicator_ties_go_to_first_speaker() {
        let field = field_for(0.0, 0..1); // DC: every ITD scores 1
        let itds = ItdEstimates { indices: vec![10, 20], taus: vec![0.0; 2], heights: vec![0.0; 2], shortfall: false };
        let ind = speaker_indicator(&field, &[0], &itds, 2);
        assert_eq!(ind.assignment, vec![0]);
    }

    #[test]
    fn single_speaker_owns_everything() {
        let field = field_for(0.0, 5..10);
        let itds = estimate_itds(&field, &[5, 6], 1);
        let ind = speaker_indicator(&field, &[1, 5, 6, 200], &itds, 1);
        assert_eq!(ind.domain, vec![1, 5, 6, 200]);
        assert!(ind.assignment.iter().all(|&j| j == 0));
    }

    #[test]
    fn narrowband_unanimous_vote() {
        let s = spectrum_voting(&[42; 10]);
        let est = fuse_narrowband(&s, &(0..10).collect::<Vec<_>>(), 2, &dirs());
        assert_eq!(est.slots[0].unwrap().azimuth_deg, 30.0);
        assert_eq!(est.shortfall(), 1);
    }

    #[test]
    fn narrowband_split_vote() {
        let mut votes = vec![42; 6];
        votes.extend([24; 4]);
        let est = fuse_narrowband(&spectrum_voting(&votes), &(0..10).collect::<Vec<_>>(), 2, &dirs());
        assert_eq!(est.azimuths(), vec![30.0, -60.0]);
        assert_eq!(est.slots[0].unwrap().height, 6.0);
    }

    #[test]
    fn narrowband_vote_ignores_row_scaling() {
        let mut s = spectrum_voting(&[10, 10, 50]);
        let scaled: Vec<f64> = s.row(2).iter().map(|v| v * 37.0).collect();
        let before = fuse_narrowband(&s, &[0, 1, 2], 2, &dirs());
        s.set(2, Some(scaled));
        assert_eq!(fuse_narrowband(&s, &[0, 1, 2], 2, &dirs()), before);
    }

    #[test]
    fn empty_selection_gives_no_estimate() {
        let s = spectrum_voting(&[3, 4]);
        for est in [
            fuse_narrowband(&s, &[], 2, &dirs()),
            fuse_broadband(&s, &[], 2, &dirs()),
            fuse_grouped(&s, &SpeakerIndicator::single(&[]), &dirs()),
        ] {
            assert!(est.slots.iter().all(Option::is_none));
        }
    }

    #[test]
    fn broadband_constant_pool_falls_short() {
        let mut s = SpatialSpectrum::new(Method::Music, 3, 72);
        for k in 0..3 {
            s.set(k, Some(vec![1.0; 72]));
        }
        assert_eq!(fuse_broadband(&s, &[0, 1, 2], 1, &dirs()).shortfall(), 1);
    }

    #[test]
    fn broadband_single_speaker_is_argmax() {
        let s = spectrum_voting(&[7, 7, 30]);
        let est = fuse_broadband(&s, &[0, 1, 2], 1, &dirs());
        assert_eq!(est.slots[0].unwrap().index, 7);
    }

    #[test]
    fn grouped_reduces_to_broadband_and_is_equivariant() {
        let s = spectrum_voting(&[7, 7, 30, 30, 30, 61]);
        let sel = [0, 1, 2, 3, 4, 5];
        let g = fuse_grouped(&s, &SpeakerIndicator::single(&sel), &dirs());
        assert_eq!(g.slots, fuse_broadband(&s, &sel, 1, &dirs()).slots);

        let ind = SpeakerIndicator { speakers: 2, domain: sel.to_vec(), assignment: vec![0, 0, 1, 1, 1, 0] };
        let a = fuse_grouped(&s, &ind, &dirs());
        assert_eq!(a.slots[0].unwrap().index, 7);
        assert_eq!(a.slots[1].unwrap().index, 30);
        let b = fuse_grouped(&s, &ind.relabel(&[1, 0]), &dirs());
        assert_eq!(a.slots[0], b.slots[1]);
        assert_eq!(a.slots[1], b.slots[0]);
    }

    #[test]
    fn grouped_empty_group_has_no_estimate() {
        let s = spectrum_voting(&[7, 7]);
        let ind = SpeakerIndicator { speakers: 2, domain: vec![0, 1], assignment: vec![0, 0] };
        let est = fuse_grouped(&s, &ind, &dirs());
        assert!(est.slots[0].is_some() && est.slots[1].is_none());
    }
}
