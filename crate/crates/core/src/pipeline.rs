//! Frame-by-frame localization.
//!
//! [`FrameProcessor`] owns the sequential state (covariances, smoothed
//! coherence, cached whitening per bin) and turns every active frame into
//! [`FrameFeatures`]: the spatial spectra of the requested methods, the CDR
//! map, the contralateral RTF entries and their ITD scores. Selection and
//! fusion are cheap and run on top of the features, so one pass can serve
//! many estimator configurations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{energy_activity, ActivitySource, CovarianceTracker, SmoothingConfig};
use crate::error::{Error, Result};
use crate::fusion::{
    estimate_itds, fuse_broadband, fuse_grouped, fuse_narrowband, speaker_indicator, DoaEstimate, Fusion,
    ItdEstimates, ItdGrid, ItdScoreField, ItdScorer, SpeakerIndicator, DEFAULT_BETA,
};
use crate::rtf::{contralateral_entry, RtfEstimate, Whitener};
use crate::selection::{binaural_coherence_model, estimate_cdr, select_subset, CdrMap, CoherenceModel, CoherenceTracker};
use crate::spectra::{music_sps, rtf_match_sps, srp_sps, Method, SpatialSpectrum};
use crate::steering::{HeadModelConfig, SteeringDatabase};
use crate::stft::{stft_analyze, MultichannelSpectrogram, StftConfig};
use crate::C64;

/// Settings shared by every estimator fed from one feature pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    pub smoothing: SmoothingConfig,
    pub itd_grid: ItdGrid,
    pub beta: f64,
    pub methods: Vec<Method>,
}

impl FeatureConfig {
    pub fn new(methods: Vec<Method>) -> Self {
        let stft = StftConfig::default();
        Self {
            smoothing: SmoothingConfig::for_stft(&stft),
            stft,
            itd_grid: ItdGrid::default(),
            beta: DEFAULT_BETA,
            methods,
        }
    }
}

/// Everything the fusion stage needs from one active frame.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub frame: usize,
    /// One per configured method, same order.
    pub spectra: Vec<SpatialSpectrum>,
    pub cdr: CdrMap,
    /// `Ĝ(k)` from the ITD pair; `None` where the RTF estimate is invalid.
    pub g: Vec<Option<C64>>,
    pub itd: ItdScoreField,
}

impl FrameFeatures {
    pub fn spectrum(&self, method: Method) -> Option<&SpatialSpectrum> {
        self.spectra.iter().find(|s| s.method == method)
    }

    /// Frequency selection followed by ITD estimation and bin grouping.
    pub fn grouping(&self, cdr_thresh_db: f64, speakers: usize) -> Grouping {
        let selected = select_subset(&self.cdr, cdr_thresh_db);
        let itds = estimate_itds(&self.itd, &selected, speakers);
        let indicator = speaker_indicator(&self.itd, &selected, &itds, speakers);
        Grouping { selected, itds, indicator }
    }
}

/// Selected bins `K(l)`, ITD estimates and the speaker indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub selected: Vec<usize>,
    pub itds: ItdEstimates,
    /// Partition of the selected bins that carry a valid `Ĝ` (all selected
    /// bins when `J = 1`).
    pub indicator: SpeakerIndicator,
}

/// Fuses one spectrum with the chosen mechanism.
pub fn fuse(sps: &SpatialSpectrum, fusion: Fusion, grouping: &Grouping, speakers: usize, dirs: &[f64]) -> DoaEstimate {
    match fusion {
        Fusion::Narrow => fuse_narrowband(sps, &grouping.selected, speakers, dirs),
        Fusion::Broad => fuse_broadband(sps, &grouping.selected, speakers, dirs),
        Fusion::Grouped => fuse_grouped(sps, &grouping.indicator, dirs),
    }
}

/// Head geometry used for the diffuse coherence model: the model stored in
/// the database, or default dimensions around the stored microphones.
fn coherence_head(db: &SteeringDatabase) -> HeadModelConfig {
    db.header().model.clone().unwrap_or_else(|| HeadModelConfig {
        mics: db.header().mics.clone(),
        itd_pair: db.itd_pair(),
        ..HeadModelConfig::default()
    })
}

struct CachedWhitener {
    updates_u: u64,
    whitener: Option<Whitener>,
}

pub struct FrameProcessor<'a> {
    db: &'a SteeringDatabase,
    cfg: FeatureConfig,
    cov: CovarianceTracker,
    coherence_model: CoherenceModel,
    coherence: CoherenceTracker,
    scorer: ItdScorer,
    whiteners: Vec<Option<CachedWhitener>>,
    next_frame: usize,
}

struct BinOutput {
    rows: Vec<Option<Vec<f64>>>,
    g: Option<C64>,
}

impl<'a> FrameProcessor<'a> {
    pub fn new(db: &'a SteeringDatabase, cfg: FeatureConfig) -> Result<Self> {
        cfg.stft.validate()?;
        db.check_stft(&cfg.stft)?;
        if db.mics() < 2 {
            return Err(Error::Geometry("localization needs at least two microphones".into()));
        }
        if !(cfg.beta.is_finite() && cfg.beta >= 0.0) {
            return Err(Error::Config(format!("beta {} must be non-negative", cfg.beta)));
        }
        let bins = cfg.stft.bins();
        let coherence_model = binaural_coherence_model(&coherence_head(db), &cfg.stft)?;
        if coherence_model.pairs.is_empty() {
            return Err(Error::Geometry("no left-right microphone pair".into()));
        }
        let coherence = CoherenceTracker::new(&coherence_model, cfg.smoothing.alpha_y, db.mics(), bins);
        let scorer = ItdScorer::new(&cfg.stft, cfg.itd_grid, cfg.beta)?;
        let cov = CovarianceTracker::new(cfg.smoothing, db.mics())?;
        Ok(Self {
            db,
            cfg,
            cov,
            coherence_model,
            coherence,
            scorer,
            whiteners: (0..bins).map(|_| None).collect(),
            next_frame: 0,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Feeds one frame of bin-major snapshots. Returns features for active
    /// frames; inactive frames only update the undesired covariance and
    /// the coherence estimate.
    pub fn process(&mut self, snapshots: &[C64], active: bool) -> Result<Option<FrameFeatures>> {
        let mics = self.db.mics();
        let bins = self.cfg.stft.bins();
        if snapshots.len() != mics * bins {
            return Err(Error::Geometry(format!(
                "frame has {} coefficients, expected {bins} bins × {mics} microphones",
                snapshots.len()
            )));
        }
        self.cov.push_frame(snapshots, active)?;
        self.coherence.push_frame(snapshots);
        let frame = self.next_frame;
        self.next_frame += 1;
        if !active {
            return Ok(None);
        }

        let cov = &self.cov;
        self.whiteners.par_iter_mut().enumerate().try_for_each(|(k, slot)| -> Result<()> {
            let pair = cov.bin(k);
            if slot.as_ref().is_none_or(|c| c.updates_u != pair.updates_u) {
                *slot = Some(CachedWhitener { updates_u: pair.updates_u, whitener: Whitener::new(&pair.phi_u)? });
            }
            Ok(())
        })?;

        let db = self.db;
        let methods = &self.cfg.methods;
        let whiteners = &self.whiteners;
        let outputs: Vec<BinOutput> = (0..bins)
            .into_par_iter()
            .map(|k| -> Result<BinOutput> {
                let pair = cov.bin(k);
                let est = match whiteners[k].as_ref().and_then(|c| c.whitener.as_ref()) {
                    Some(w) => w.estimate(&pair.phi_y)?,
                    None => RtfEstimate::invalid(mics),
                };
                let rows = methods
                    .iter()
                    .map(|m| match m {
                        Method::Music => music_sps(&pair.phi_y, db, k),
                        Method::Srp => srp_sps(&pair.phi_y, &snapshots[k * mics..(k + 1) * mics], db, k),
                        Method::Rtf => rtf_match_sps(&est, db, k),
                    })
                    .collect();
                Ok(BinOutput { rows, g: contralateral_entry(&est, db) })
            })
            .collect::<Result<_>>()?;

        let directions = db.num_directions();
        let mut spectra: Vec<SpatialSpectrum> =
            methods.iter().map(|&m| SpatialSpectrum::new(m, bins, directions)).collect();
        let mut g = Vec::with_capacity(bins);
        for (k, out) in outputs.into_iter().enumerate() {
            for (s, row) in spectra.iter_mut().zip(out.rows) {
                s.set(k, row);
            }
            g.push(out.g);
        }
        let itd = self.scorer.scores(&g);
        let cdr = estimate_cdr(&self.coherence, &self.coherence_model);
        Ok(Some(FrameFeatures { frame, spectra, cdr, g, itd }))
    }
}

/// Frame activity: the supplied oracle flags, or the energy detector when
/// the smoothing config asks for it or no oracle is given.
pub fn frame_activity(spec: &MultichannelSpectrogram, smoothing: &SmoothingConfig, oracle: Option<&[bool]>) -> Result<Vec<bool>> {
    match (smoothing.activity_source, oracle) {
        (ActivitySource::Oracle, Some(vad)) => {
            if vad.len() != spec.frames() {
                return Err(Error::InvalidInput(format!(
                    "activity has {} frames, spectrogram has {}",
                    vad.len(),
                    spec.frames()
                )));
            }
            Ok(vad.to_vec())
        }
        _ => Ok(energy_activity(spec)),
    }
}

/// Runs the feature pass over a whole spectrogram, calling `f` on every
/// active frame in order.
pub fn for_each_frame<F>(
    spec: &MultichannelSpectrogram,
    activity: &[bool],
    db: &SteeringDatabase,
    cfg: FeatureConfig,
    mut f: F,
) -> Result<()>
where
    F: FnMut(&FrameFeatures) -> Result<()>,
{
    if spec.channels() != db.mics() {
        return Err(Error::Geometry(format!(
            "recording has {} channels, steering database has {} microphones",
            spec.channels(),
            db.mics()
        )));
    }
    if activity.len() != spec.frames() {
        return Err(Error::InvalidInput("activity length differs from frame count".into()));
    }
    let mut proc = FrameProcessor::new(db, cfg)?;
    for (l, &active) in activity.iter().enumerate() {
        if let Some(features) = proc.process(spec.frame(l), active)? {
            f(&features)?;
        }
    }
    Ok(())
}

/// A single estimator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeConfig {
    pub features: FeatureConfig,
    pub method: Method,
    pub fusion: Fusion,
    pub speakers: usize,
    pub cdr_thresh_db: f64,
}

impl LocalizeConfig {
    pub fn new(method: Method, fusion: Fusion, speakers: usize) -> Self {
        Self { features: FeatureConfig::new(vec![method]), method, fusion, speakers, cdr_thresh_db: f64::NEG_INFINITY }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speakers == 0 {
            return Err(Error::Config("number of speakers must be at least 1".into()));
        }
        if self.cdr_thresh_db.is_nan() {
            return Err(Error::Config("CDR threshold is NaN".into()));
        }
        if !self.features.methods.contains(&self.method) {
            return Err(Error::Config(format!("method {} is not computed", self.method)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: usize,
    pub time_s: f64,
    /// Estimated DOAs; `null` marks a missing slot.
    pub doas_deg: Vec<Option<f64>>,
    pub heights: Vec<Option<f64>>,
    pub itds_us: Vec<f64>,
    pub selected_bins: usize,
}

impl FrameResult {
    fn new(features: &FrameFeatures, grouping: &Grouping, est: &DoaEstimate, stft: &StftConfig) -> Self {
        Self {
            frame: features.frame,
            time_s: (features.frame * stft.hop + stft.window_len / 2) as f64 / stft.sample_rate,
            doas_deg: est.slots.iter().map(|s| s.map(|p| p.azimuth_deg)).collect(),
            heights: est.slots.iter().map(|s| s.map(|p| p.height)).collect(),
            itds_us: grouping.itds.taus.iter().map(|t| t * 1e6).collect(),
            selected_bins: grouping.selected.len(),
        }
    }
}

/// Localizes a multichannel recording, one result per active frame.
pub fn localize(audio: &[Vec<f64>], db: &SteeringDatabase, cfg: &LocalizeConfig, oracle: Option<&[bool]>) -> Result<Vec<FrameResult>> {
    cfg.validate()?;
    if audio.len() != db.mics() {
        return Err(Error::Geometry(format!(
            "recording has {} channels, steering database has {} microphones",
            audio.len(),
            db.mics()
        )));
    }
    let spec = stft_analyze(audio, &cfg.features.stft)?;
    let activity = frame_activity(&spec, &cfg.features.smoothing, oracle)?;
    let mut out = Vec::new();
    for_each_frame(&spec, &activity, db, cfg.features.clone(), |features| {
        let grouping = features.grouping(cfg.cdr_thresh_db, cfg.speakers);
        let sps = features.spectrum(cfg.method).expect("validated method");
        let est = fuse(sps, cfg.fusion, &grouping, cfg.speakers, db.directions());
        out.push(FrameResult::new(features, &grouping, &est, &cfg.features.stft));
        Ok(())
    })?;
    Ok(out)
}
