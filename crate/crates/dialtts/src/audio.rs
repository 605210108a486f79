//! Mono 16-bit PCM buffers and WAV file I/O.
//!
//! Samples are held as `f64` at raw 16-bit scale (-32768..=32767) so that an
//! unprocessed write-then-read round trip is bit exact.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("io: {0}")]
    Io(String),
    #[error("unsupported wav format: {0}")]
    Format(String),
    #[error("sample rate must be positive")]
    BadSampleRate,
    #[error("samples must be finite")]
    NonFiniteSample,
}

/// A mono audio buffer at raw 16-bit PCM scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::BadSampleRate);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// A pure sine test tone at raw 16-bit amplitude.
    pub fn sine(freq_hz: f64, duration_secs: f64, sample_rate: u32, amplitude: f64) -> Self {
        let n = (duration_secs * sample_rate as f64).round() as usize;
        let samples = (0..n)
            .map(|i| {
                amplitude
                    * (2.0 * std::f64::consts::PI * freq_hz * i as f64 / sample_rate as f64).sin()
            })
            .collect();
        Self {
            samples,
            sample_rate,
        }
    }

    /// Reads a mono 16-bit PCM RIFF/WAV file.
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self, AudioError> {
        let mut reader = hound::WavReader::open(path.as_ref())
            .map_err(|e| AudioError::Io(format!("{}: {e}", path.as_ref().display())))?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(AudioError::Format(format!(
                "expected mono, got {} channels",
                spec.channels
            )));
        }
        if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(AudioError::Format(format!(
                "expected 16-bit integer PCM, got {}-bit {:?}",
                spec.bits_per_sample, spec.sample_format
            )));
        }
        let samples: Result<Vec<i16>, _> = reader.samples::<i16>().collect();
        let samples = samples.map_err(|e| AudioError::Format(e.to_string()))?;
        Ok(Self {
            samples: samples.into_iter().map(f64::from).collect(),
            sample_rate: spec.sample_rate,
        })
    }

    /// Writes a mono 16-bit PCM RIFF/WAV file, rounding and clamping samples
    /// to the 16-bit range.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<(), AudioError> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path.as_ref(), spec)
            .map_err(|e| AudioError::Io(format!("{}: {e}", path.as_ref().display())))?;
        for &s in &self.samples {
            let v = s.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
            writer
                .write_sample(v)
                .map_err(|e| AudioError::Io(e.to_string()))?;
        }
        writer.finalize().map_err(|e| AudioError::Io(e.to_string()))
    }
}

/// Duration in seconds read from the WAV header, falling back to scanning
/// the data chunk to end of file when the header's length field is unusable
/// (streamed files often leave it zero).
pub fn wav_duration_secs(path: impl AsRef<Path>) -> Result<f64, AudioError> {
    let reader = hound::WavReader::open(path.as_ref())
        .map_err(|e| AudioError::Io(format!("{}: {e}", path.as_ref().display())))?;
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err(AudioError::Format("zero sample rate".into()));
    }
    let frames = reader.duration() as f64;
    if frames > 0.0 {
        return Ok(frames / spec.sample_rate as f64);
    }
    drop(reader);
    let bytes = std::fs::read(path.as_ref())
        .map_err(|e| AudioError::Io(format!("{}: {e}", path.as_ref().display())))?;
    let data_start = bytes
        .windows(4)
        .position(|w| w == b"data")
        .ok_or_else(|| AudioError::Format("no data chunk".into()))?
        + 8; // chunk id + declared size
    if data_start > bytes.len() {
        return Err(AudioError::Format("truncated data chunk".into()));
    }
    let payload = (bytes.len() - data_start) as f64;
    let bytes_per_frame = f64::from(spec.channels) * f64::from(spec.bits_per_sample / 8).max(1.0);
    Ok(payload / bytes_per_frame / f64::from(spec.sample_rate))
}
