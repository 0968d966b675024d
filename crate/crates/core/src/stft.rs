//! Framing and short-time Fourier analysis of multichannel signals.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    #[default]
    SqrtHann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: f64,
    pub window_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000.0,
            window_len: 512,
            hop: 256,
            window: WindowKind::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::Config(format!("sample rate {} must be positive", self.sample_rate)));
        }
        if self.window_len == 0 || !self.window_len.is_multiple_of(2) {
            return Err(Error::Config(format!("window length {} must be even", self.window_len)));
        }
        if self.hop == 0 || !self.window_len.is_multiple_of(self.hop) {
            return Err(Error::Config(format!(
                "hop {} must divide window length {}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    /// Number of one-sided frequency bins.
    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.window_len as f64
    }

    /// Discrete angular frequency of bin `k` in rad/s.
    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * self.bin_hz(k)
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        match self.window {
            WindowKind::SqrtHann => (0..self.window_len)
                .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos()).sqrt())
                .collect(),
        }
    }
}

/// Complex STFT coefficients of an M-channel signal.
///
/// Stored frame-major so that the snapshot vector `y(k, l)` across
/// microphones is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSpectrogram {
    channels: usize,
    bins: usize,
    frames: usize,
    data: Vec<C64>,
}

impl MultichannelSpectrogram {
    pub fn zeros(channels: usize, bins: usize, frames: usize) -> Self {
        Self {
            channels,
            bins,
            frames,
            data: vec![C64::new(0.0, 0.0); channels * bins * frames],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    fn offset(&self, m: usize, k: usize, l: usize) -> usize {
        (l * self.bins + k) * self.channels + m
    }

    pub fn get(&self, m: usize, k: usize, l: usize) -> C64 {
        self.data[self.offset(m, k, l)]
    }

    pub fn get_mut(&mut self, m: usize, k: usize, l: usize) -> &mut C64 {
        let o = self.offset(m, k, l);
        &mut self.data[o]
    }

    /// Microphone vector `y(k, l)`.
    pub fn snapshot(&self, k: usize, l: usize) -> &[C64] {
        let o = self.offset(0, k, l);
        &self.data[o..o + self.channels]
    }

    /// All snapshots of frame `l`, bin-major.
    pub fn frame(&self, l: usize) -> &[C64] {
        let n = self.bins * self.channels;
        &self.data[l * n..(l + 1) * n]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }
}

/// One-sided STFT of every channel.
///
/// Frames start at sample 0 with no padding, so frame `l` covers samples
/// `[l·hop, l·hop + window_len)`.
pub fn stft_analyze<S: AsRef<[f64]>>(signal: &[S], cfg: &StftConfig) -> Result<MultichannelSpectrogram> {
    cfg.validate()?;
    let channels = signal.len();
    if channels == 0 {
        return Err(Error::EmptyInput("no channels".into()));
    }
    let len = signal[0].as_ref().len();
    if signal.iter().any(|c| c.as_ref().len() != len) {
        return Err(Error::InvalidInput("channels differ in length".into()));
    }
    if len < cfg.window_len {
        return Err(Error::EmptyInput(format!(
            "{len} samples is shorter than one {}-sample window",
            cfg.window_len
        )));
    }
    if signal.iter().any(|c| c.as_ref().iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }

    let frames = cfg.frame_count(len);
    let bins = cfg.bins();
    let n = cfg.window_len;
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut out = MultichannelSpectrogram::zeros(channels, bins, frames);

    for (m, chan) in signal.iter().enumerate() {
        let chan = chan.as_ref();
        for l in 0..frames {
            let start = l * cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = C64::new(chan[start + i] * window[i], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, &v) in buf.iter().take(bins).enumerate() {
                *out.get_mut(m, k, l) = v;
            }
        }
    }
    Ok(out)
}
