//! Multichannel WAV input and output.
//!
//! Channel order is microphone order; channel 0 is the reference.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Deinterleaved audio with samples scaled to [-1, 1) for integer formats.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: f64,
    pub channels: Vec<Vec<f64>>,
}

impl Audio {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads 16/24-bit integer PCM or 32-bit float WAV files.
pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let nch = usize::from(spec.channels);
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = f64::from(1u32 << (bits - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::InvalidInput(format!("unsupported WAV format {fmt:?}/{bits} bit")));
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch.max(1)); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    Ok(Audio { sample_rate: f64::from(spec.sample_rate), channels })
}

/// Writes 32-bit float WAV.
pub fn write_wav(path: &Path, sample_rate: f64, channels: &[Vec<f64>]) -> Result<()> {
    if channels.is_empty() || channels.iter().any(|c| c.len() != channels[0].len()) {
        return Err(Error::InvalidInput("channels must be non-empty and of equal length".into()));
    }
    let spec = WavSpec {
        channels: u16::try_from(channels.len()).map_err(|_| Error::InvalidInput("too many channels".into()))?,
        sample_rate: sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for i in 0..channels[0].len() {
        for c in channels {
            w.write_sample(c[i] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}
