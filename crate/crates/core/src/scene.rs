//! Synthetic binaural scenes with ground truth.
//!
//! Every component is rendered in the time domain by filtering with the
//! analytic head model through one long FFT per signal (linear convolution,
//! zero padded), so the component images add up to the mixture exactly.
//!
//! * Direct path: the dry source filtered by the model response at the
//!   speaker DOA.
//! * Reverberation: the source convolved with independent exponentially
//!   decaying noise tails arriving from 72 directions around the head. The
//!   tail decays by 60 dB over the preset T60 and is scaled to a
//!   direct-to-reverberant ratio that follows the critical-distance law for
//!   a fixed room volume and source distance.
//! * Noise: 72 uncorrelated plane waves around the head.
//!
//! Speech starts after a noise-only lead-in, which gives the undesired
//! covariance something to learn from.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::steering::{angular_distance, HeadModel, MicResponse, SteeringDatabase};
use crate::stft::{stft_analyze, StftConfig};
use crate::C64;

/// Number of plane waves used for diffuse noise and reverberation.
pub const DIFFUSE_DIRECTIONS: usize = 72;
const ROOM_VOLUME_M3: f64 = 150.0;
const SOURCE_DISTANCE_M: f64 = 1.0;
/// Gap between direct path and onset of the reverberant tail.
const TAIL_PREDELAY_S: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Reverb {
    #[default]
    Anechoic,
    Low,
    Medium,
    High,
}

impl Reverb {
    pub fn name(self) -> &'static str {
        match self {
            Reverb::Anechoic => "anechoic",
            Reverb::Low => "low",
            Reverb::Medium => "medium",
            Reverb::High => "high",
        }
    }

    /// Decay time in seconds.
    pub fn t60(self) -> Option<f64> {
        match self {
            Reverb::Anechoic => None,
            Reverb::Low => Some(0.240),
            Reverb::Medium => Some(0.485),
            Reverb::High => Some(1.170),
        }
    }

    /// Direct-to-reverberant ratio in dB, `20·log10(r_c / r)` with critical
    /// distance `r_c = 0.057·sqrt(V / T60)`.
    pub fn drr_db(self) -> Option<f64> {
        self.t60().map(|t60| {
            let critical = 0.057 * (ROOM_VOLUME_M3 / t60).sqrt();
            20.0 * (critical / SOURCE_DISTANCE_M).log10()
        })
    }
}

impl std::str::FromStr for Reverb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anechoic" | "off" => Ok(Reverb::Anechoic),
            "low" => Ok(Reverb::Low),
            "medium" => Ok(Reverb::Medium),
            "high" => Ok(Reverb::High),
            _ => Err(Error::Config(format!("unknown reverb preset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Speech-like surrogates from every direction.
    #[default]
    IsotropicBabbleSurrogate,
    WhiteDiffuse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "path")]
pub enum SourceKind {
    SpeechLike,
    WavFile(PathBuf),
}

fn default_duration() -> f64 {
    5.0
}

fn default_lead_in() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub doas_deg: Vec<f64>,
    /// `None` renders no noise.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub reverb: Reverb,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Noise-only segment before the speakers start.
    #[serde(default = "default_lead_in")]
    pub lead_in_s: f64,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub seed: u64,
    /// Optional per-speaker WAV sources; speech-like surrogates otherwise.
    #[serde(default)]
    pub sources: Vec<PathBuf>,
}

impl SceneConfig {
    pub fn new(doas_deg: Vec<f64>) -> Self {
        Self {
            doas_deg,
            snr_db: None,
            reverb: Reverb::Anechoic,
            duration_s: default_duration(),
            lead_in_s: default_lead_in(),
            noise: NoiseKind::default(),
            seed: 0,
            sources: Vec::new(),
        }
    }

    pub fn speakers(&self) -> usize {
        self.doas_deg.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.doas_deg.is_empty() {
            return Err(Error::Config("a scene needs at least one speaker".into()));
        }
        if self.doas_deg.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("DOAs must be finite".into()));
        }
        for (i, a) in self.doas_deg.iter().enumerate() {
            for b in &self.doas_deg[i + 1..] {
                if angular_distance(*a, *b) < 1e-9 {
                    return Err(Error::Config(format!("co-located speakers at {a}°")));
                }
            }
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() {
                return Err(Error::Config("SNR is NaN".into()));
            }
        }
        if !(self.duration_s > 0.0) || !(self.lead_in_s >= 0.0) || self.lead_in_s >= self.duration_s {
            return Err(Error::Config("need 0 <= lead-in < duration".into()));
        }
        if !self.sources.is_empty() && self.sources.len() != self.doas_deg.len() {
            return Err(Error::Config("one source file per speaker".into()));
        }
        Ok(())
    }
}

/// Ground truth of a synthesised scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub doas_deg: Vec<f64>,
    /// Model ITD of every speaker, in seconds.
    pub itds_s: Vec<f64>,
    pub sample_rate: f64,
    pub onset_sample: usize,
    /// Per-frame speech activity.
    pub vad: Vec<bool>,
    pub bins: usize,
    /// Dominant speaker per `(l, k)`, stored `l·K + k`: the speaker whose
    /// image carries the most energy across microphones.
    pub dominant: Vec<u8>,
}

impl GroundTruth {
    pub fn frames(&self) -> usize {
        self.vad.len()
    }

    pub fn dominant_at(&self, k: usize, l: usize) -> usize {
        usize::from(self.dominant[l * self.bins + k])
    }

    pub fn first_active_frame(&self) -> Option<usize> {
        self.vad.iter().position(|&v| v)
    }
}

/// Retained signal components, all `[channel][sample]` unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneComponents {
    /// `[speaker][channel][sample]`
    pub direct: Vec<Vec<Vec<f64>>>,
    /// `[speaker][channel][sample]`
    pub reverb: Vec<Vec<Vec<f64>>>,
    pub noise: Vec<Vec<f64>>,
    /// Scaled dry sources, `[speaker][sample]`; the direct path is the
    /// head model applied to these.
    pub sources: Vec<Vec<f64>>,
}

impl SceneComponents {
    /// Direct path plus reverberation of speaker `j`.
    pub fn image(&self, j: usize) -> Vec<Vec<f64>> {
        self.direct[j]
            .iter()
            .zip(&self.reverb[j])
            .map(|(d, r)| d.iter().zip(r).map(|(a, b)| a + b).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub mixture: Vec<Vec<f64>>,
    pub components: SceneComponents,
    pub truth: GroundTruth,
}

/// Long-FFT filtering engine.
struct Renderer {
    nfft: usize,
    fs: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Renderer {
    fn new(min_len: usize, fs: f64) -> Self {
        let nfft = min_len.next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            nfft,
            fs,
            forward: planner.plan_fft_forward(nfft),
            inverse: planner.plan_fft_inverse(nfft),
        }
    }

    fn spectrum(&self, x: &[f64], offset: usize) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.nfft];
        for (b, &v) in buf[offset..].iter_mut().zip(x) {
            *b = C64::new(v, 0.0);
        }
        self.forward.process(&mut buf);
        buf
    }

    fn omega(&self, f: usize) -> f64 {
        2.0 * PI * f as f64 * self.fs / self.nfft as f64
    }

    /// `acc += H·src` on the non-negative frequencies.
    fn steer_add(&self, acc: &mut [C64], src: &[C64], resp: &MicResponse) {
        for f in 0..=self.nfft / 2 {
            acc[f] += resp.at(self.omega(f)) * src[f];
        }
    }

    fn to_time(&self, mut spec: Vec<C64>, len: usize) -> Vec<f64> {
        let n = self.nfft;
        spec[0].im = 0.0;
        spec[n / 2].im = 0.0;
        for f in 1..n / 2 {
            spec[n - f] = spec[f].conj();
        }
        self.inverse.process(&mut spec);
        spec.iter().take(len).map(|z| z.re / n as f64).collect()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize_rms(x: &mut [f64]) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}

/// Random formant-like spectral envelope: three log-frequency bumps over a
/// low floor.
fn formant_envelope(rng: &mut ChaCha8Rng) -> impl Fn(f64) -> f64 {
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let centre = 250.0 * (16.0f64).powf(rng.random::<f64>());
            let gain = 10f64.powf(rng.random::<f64>() * 12.0 / 20.0);
            let width = 0.15 + 0.3 * rng.random::<f64>();
            (centre, gain, width)
        })
        .collect();
    move |hz: f64| {
        0.05 + bumps
            .iter()
            .map(|(c, g, w)| g * (-0.5 * ((hz.max(1.0) / c).log2() / w).powi(2)).exp())
            .sum::<f64>()
    }
}

/// Pink noise amplitude modulated at a syllabic rate near 4 Hz. Every
/// syllable (one modulation period, cut at the envelope troughs) gets its
/// own random formant-like spectral envelope. Never silent. Unit RMS.
fn speech_like(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let rate = 4.0 * (1.0 + 0.1 * (2.0 * rng.random::<f64>() - 1.0));
    let phase = rng.random::<f64>();
    let period = fs / rate;
    // troughs of the modulation sit where rate·t + phase is an integer
    let mut cuts = vec![0usize];
    let mut n = 1.0;
    loop {
        let t = ((n - phase) * period).round();
        if t >= len as f64 {
            break;
        }
        if t > 0.0 {
            cuts.push(t as usize);
        }
        n += 1.0;
    }
    cuts.push(len);

    let mut planner = FftPlanner::new();
    let mut out = Vec::with_capacity(len);
    for w in cuts.windows(2) {
        let seg = w[1] - w[0];
        if seg == 0 {
            continue;
        }
        let nfft = seg.next_power_of_two();
        let envelope = formant_envelope(rng);
        let mut buf: Vec<C64> = gaussian(rng, nfft).into_iter().map(|v| C64::new(v, 0.0)).collect();
        planner.plan_fft_forward(nfft).process(&mut buf);
        for f in 0..=nfft / 2 {
            let hz = f as f64 * fs / nfft as f64;
            let pink = 1.0 / hz.max(50.0).sqrt();
            let highpass = 1.0 / (1.0 + (80.0 / hz.max(1e-3)).powi(4));
            let shape = pink * highpass * envelope(hz);
            buf[f] *= shape;
            if f > 0 && f < nfft / 2 {
                buf[nfft - f] *= shape;
            }
        }
        planner.plan_fft_inverse(nfft).process(&mut buf);
        out.extend(buf.iter().take(seg).map(|z| z.re));
    }
    for (i, v) in out.iter_mut().enumerate() {
        let m = 0.5 - 0.5 * (2.0 * PI * (rate * i as f64 / fs + phase)).cos();
        *v *= 0.05 + m * m;
    }
    normalize_rms(&mut out);
    out
}

/// A mono source of `len` samples.
///
/// The speech-like surrogate is deterministic in `seed`. WAV sources must
/// be sampled at `fs`; they are looped or cut to length and normalised to
/// unit RMS.
pub fn source_signal(kind: &SourceKind, len: usize, fs: f64, seed: u64) -> Result<Vec<f64>> {
    match kind {
        SourceKind::SpeechLike => Ok(speech_like(&mut rng_for(seed, 0), len, fs)),
        SourceKind::WavFile(path) => wav_source(path, len, fs),
    }
}

fn wav_source(path: &Path, len: usize, fs: f64) -> Result<Vec<f64>> {
    let audio = crate::wav::read_wav(path)?;
    if audio.sample_rate != fs {
        return Err(Error::InvalidInput(format!(
            "{} is sampled at {} Hz, expected {fs} Hz",
            path.display(),
            audio.sample_rate
        )));
    }
    let chan = audio.channels.first().filter(|c| !c.is_empty()).ok_or_else(|| {
        Error::InvalidInput(format!("{} has no samples", path.display()))
    })?;
    let mut out: Vec<f64> = chan.iter().copied().cycle().take(len).collect();
    normalize_rms(&mut out);
    Ok(out)
}

fn mean_power(chans: &[Vec<f64>], from: usize) -> f64 {
    let n: usize = chans.iter().map(|c| c.len().saturating_sub(from)).sum();
    let e: f64 = chans.iter().flat_map(|c| c[from.min(c.len())..].iter()).map(|v| v * v).sum();
    e / n.max(1) as f64
}

fn scale(chans: &mut [Vec<f64>], g: f64) {
    chans.iter_mut().flatten().for_each(|v| *v *= g);
}

/// Renders a scene through the analytic model stored in `db`.
pub fn synthesize(scene: &SceneConfig, db: &SteeringDatabase, cfg: &StftConfig) -> Result<Scene> {
    let model = db
        .head_model()
        .ok_or_else(|| Error::Config("scene synthesis needs a model-based steering database".into()))?;
    db.check_stft(cfg)?;
    synthesize_with_model(scene, &model, cfg)
}

pub fn synthesize_with_model(scene: &SceneConfig, model: &HeadModel, cfg: &StftConfig) -> Result<Scene> {
    scene.validate()?;
    cfg.validate()?;
    let fs = cfg.sample_rate;
    let len = (scene.duration_s * fs).round() as usize;
    let onset = (scene.lead_in_s * fs).round() as usize;
    if len < cfg.window_len {
        return Err(Error::Config("scene shorter than one analysis window".into()));
    }
    let mics = model.mics();
    let speakers = scene.speakers();
    let tail_len = scene.reverb.t60().map_or(0, |t| (t * fs).round() as usize);
    let renderer = Renderer::new(len + tail_len + 64, fs);
    let diffuse_dirs: Vec<f64> = (0..DIFFUSE_DIRECTIONS)
        .map(|p| -180.0 + (p as f64 + 0.5) * 360.0 / DIFFUSE_DIRECTIONS as f64)
        .collect();

    let mut direct = Vec::with_capacity(speakers);
    let mut reverb = Vec::with_capacity(speakers);
    let mut sources = Vec::with_capacity(speakers);
    for (j, &doa) in scene.doas_deg.iter().enumerate() {
        let kind = scene.sources.get(j).map_or(SourceKind::SpeechLike, |p| SourceKind::WavFile(p.clone()));
        let src = match kind {
            SourceKind::SpeechLike => speech_like(&mut rng_for(scene.seed, 1 + j as u64), len - onset, fs),
            SourceKind::WavFile(ref p) => wav_source(p, len - onset, fs)?,
        };
        let spec = renderer.spectrum(&src, onset);

        let mut dp: Vec<Vec<f64>> = (0..mics)
            .map(|m| {
                let mut acc = vec![C64::new(0.0, 0.0); renderer.nfft];
                renderer.steer_add(&mut acc, &spec, &model.response(m, doa));
                renderer.to_time(acc, len)
            })
            .collect();

        let mut rev = vec![vec![0.0; len]; mics];
        if let (Some(t60), Some(drr)) = (scene.reverb.t60(), scene.reverb.drr_db()) {
            let mut rng = rng_for(scene.seed, 100 + j as u64);
            let predelay = (TAIL_PREDELAY_S * fs).round() as usize;
            let mut acc = vec![vec![C64::new(0.0, 0.0); renderer.nfft]; mics];
            for &dir in &diffuse_dirs {
                let tail: Vec<f64> = (predelay..tail_len)
                    .map(|t| rng.sample::<f64, _>(StandardNormal) * (-3.0 * 10f64.ln() * t as f64 / (t60 * fs)).exp())
                    .collect();
                let tail_spec = renderer.spectrum(&tail, predelay);
                let wet: Vec<C64> = tail_spec.iter().zip(&spec).map(|(a, b)| a * b).collect();
                for (m, a) in acc.iter_mut().enumerate() {
                    renderer.steer_add(a, &wet, &model.response(m, dir));
                }
            }
            rev = acc.into_iter().map(|a| renderer.to_time(a, len)).collect();
            let e_dp = mean_power(&dp, 0);
            let e_rev = mean_power(&rev, 0);
            if e_rev > 0.0 {
                scale(&mut rev, (e_dp / (e_rev * 10f64.powf(drr / 10.0))).sqrt());
            }
        }

        // equal broadband power per speaker image over the active segment
        let image_power = {
            let img: Vec<Vec<f64>> = dp.iter().zip(&rev).map(|(d, r)| d.iter().zip(r).map(|(a, b)| a + b).collect()).collect();
            mean_power(&img, onset)
        };
        let g = if image_power > 0.0 { 1.0 / image_power.sqrt() } else { 1.0 };
        scale(&mut dp, g);
        scale(&mut rev, g);
        let mut dry = vec![0.0; len];
        dry[onset..].iter_mut().zip(&src).for_each(|(d, s)| *d = s * g);
        direct.push(dp);
        reverb.push(rev);
        sources.push(dry);
    }

    let mut noise = vec![vec![0.0; len]; mics];
    if let Some(snr) = scene.snr_db.filter(|s| s.is_finite()) {
        let mut acc = vec![vec![C64::new(0.0, 0.0); renderer.nfft]; mics];
        for (p, &dir) in diffuse_dirs.iter().enumerate() {
            let mut rng = rng_for(scene.seed, 1000 + p as u64);
            let wave = match scene.noise {
                NoiseKind::IsotropicBabbleSurrogate => speech_like(&mut rng, len, fs),
                NoiseKind::WhiteDiffuse => gaussian(&mut rng, len),
            };
            let spec = renderer.spectrum(&wave, 0);
            for (m, a) in acc.iter_mut().enumerate() {
                renderer.steer_add(a, &spec, &model.response(m, dir));
            }
        }
        noise = acc.into_iter().map(|a| renderer.to_time(a, len)).collect();
        let p = mean_power(&noise, onset);
        if p > 0.0 {
            scale(&mut noise, (10f64.powf(-snr / 10.0) / p).sqrt());
        }
    }

    let mut mixture = noise.clone();
    for j in 0..speakers {
        for m in 0..mics {
            for (t, y) in mixture[m].iter_mut().enumerate() {
                *y += direct[j][m][t] + reverb[j][m][t];
            }
        }
    }

    let components = SceneComponents { direct, reverb, noise, sources };
    let truth = ground_truth(scene, model, cfg, &components, len, onset)?;
    Ok(Scene { config: scene.clone(), mixture, components, truth })
}

fn ground_truth(
    scene: &SceneConfig,
    model: &HeadModel,
    cfg: &StftConfig,
    components: &SceneComponents,
    len: usize,
    onset: usize,
) -> Result<GroundTruth> {
    let frames = cfg.frame_count(len);
    let bins = cfg.bins();
    let vad = (0..frames).map(|l| l * cfg.hop + cfg.window_len > onset).collect();
    let mut best = vec![f64::NEG_INFINITY; frames * bins];
    let mut dominant = vec![0u8; frames * bins];
    for j in 0..scene.speakers() {
        let spec = stft_analyze(&components.image(j), cfg)?;
        for l in 0..frames {
            for k in 0..bins {
                let e = crate::linalg::norm_sqr(spec.snapshot(k, l));
                let o = l * bins + k;
                if e > best[o] {
                    best[o] = e;
                    dominant[o] = j as u8;
                }
            }
        }
    }
    Ok(GroundTruth {
        doas_deg: scene.doas_deg.clone(),
        itds_s: scene.doas_deg.iter().map(|&d| model.itd(d)).collect(),
        sample_rate: cfg.sample_rate,
        onset_sample: onset,
        vad,
        bins,
        dominant,
    })
}
