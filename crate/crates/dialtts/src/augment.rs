//! Waveform augmentation: WSOLA time stretching, pitch shifting, and
//! manifest expansion at the standard factor set
//! {0.85, 0.9, 0.95, 1.05, 1.1, 1.15}.
//!
//! Factor semantics: a time-scale factor multiplies duration (pitch
//! preserved); a pitch factor multiplies frequency (duration preserved).
//! Pitch shifting is resampling by `1/f` followed by a time stretch by `f`.

use std::path::Path;

use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};
use crate::manifest::ManifestRecord;

/// The augmentation factors used for low-resource expansion.
pub const DEFAULT_FACTORS: [f64; 6] = [0.85, 0.9, 0.95, 1.05, 1.1, 1.15];

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("factor {0} outside the supported range 0.5..=2.0")]
    BadFactor(f64),
    #[error("input too short: {samples} samples, need at least one frame of {frame}")]
    TooShort { samples: usize, frame: usize },
    #[error("record {0:?}: audio file missing or unreadable")]
    MissingAudio(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("io: {0}")]
    Io(String),
}

/// WSOLA analysis parameters: frame 512, hop 128, search radius 64 at
/// 16 kHz, scaled proportionally for other rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WsolaParams {
    pub frame: usize,
    pub hop: usize,
    pub search: usize,
}

impl WsolaParams {
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let scale = sample_rate as f64 / 16_000.0;
        let frame = ((512.0 * scale).round() as usize).max(8);
        Self {
            frame,
            hop: (frame / 4).max(1),
            search: (frame / 8).max(1),
        }
    }
}

fn check_factor(f: f64) -> Result<(), AugmentError> {
    if !(0.5..=2.0).contains(&f) || !f.is_finite() {
        return Err(AugmentError::BadFactor(f));
    }
    Ok(())
}

/// Changes duration by `factor` without changing pitch (WSOLA).
///
/// Output length is exactly `round(factor * input length)`; the spectral
/// content follows the input because every output frame is a windowed copy
/// of an input segment chosen by waveform-similarity search.
pub fn time_stretch(a: &AudioBuffer, factor: f64) -> Result<AudioBuffer, AugmentError> {
    check_factor(factor)?;
    let params = WsolaParams::for_sample_rate(a.sample_rate);
    wsola(a, factor, params)
}

fn wsola(a: &AudioBuffer, factor: f64, params: WsolaParams) -> Result<AudioBuffer, AugmentError> {
    let n = params.frame;
    let input = &a.samples;
    if input.len() < n {
        return Err(AugmentError::TooShort {
            samples: input.len(),
            frame: n,
        });
    }
    let out_len = (factor * input.len() as f64).round() as usize;
    if out_len == 0 {
        return Ok(AudioBuffer {
            samples: vec![],
            sample_rate: a.sample_rate,
        });
    }
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let max_src = input.len() - n;
    let mut out = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];
    let mut prev_src: Option<usize> = None;

    let mut o = 0usize;
    while o < out_len {
        let ideal = ((o as f64 / factor).round() as usize).min(max_src);
        let src = match prev_src {
            None => ideal,
            Some(prev) => {
                // the natural continuation of the previous copy
                let natural = (prev + params.hop).min(max_src);
                let lo = ideal.saturating_sub(params.search);
                let hi = (ideal + params.search).min(max_src);
                let mut best = ideal;
                let mut best_score = f64::NEG_INFINITY;
                for cand in lo..=hi {
                    let mut dot = 0.0;
                    let mut energy = 0.0;
                    for i in 0..n {
                        let c = input[cand + i];
                        dot += input[natural + i] * c;
                        energy += c * c;
                    }
                    let score = dot / (energy.sqrt() + 1e-9);
                    if score > best_score {
                        best_score = score;
                        best = cand;
                    }
                }
                best
            }
        };
        for i in 0..n {
            let j = o + i;
            if j >= out_len {
                break;
            }
            out[j] += window[i] * input[src + i];
            wsum[j] += window[i];
        }
        prev_src = Some(src);
        o += params.hop;
    }

    for (s, &w) in out.iter_mut().zip(&wsum) {
        if w > 1e-9 {
            *s /= w;
        }
    }
    Ok(AudioBuffer {
        samples: out,
        sample_rate: a.sample_rate,
    })
}

/// Linear-interpolation resample to `round(len * length_ratio)` samples.
/// Reading position advances by `1 / length_ratio` per output sample, so a
/// ratio below one raises pitch and shortens the signal.
pub fn resample_linear(samples: &[f64], length_ratio: f64) -> Vec<f64> {
    let out_len = (samples.len() as f64 * length_ratio).round() as usize;
    if out_len == 0 || samples.is_empty() {
        return vec![];
    }
    let step = 1.0 / length_ratio;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let j = pos.floor() as usize;
            if j + 1 >= samples.len() {
                samples[samples.len() - 1]
            } else {
                let frac = pos - j as f64;
                samples[j] * (1.0 - frac) + samples[j + 1] * frac
            }
        })
        .collect()
}

/// Scales the fundamental frequency by `factor` while preserving duration
/// within rounding: resample by `1/factor` (frequency scales by `factor`,
/// duration by `1/factor`), then WSOLA time stretch by `factor`.
pub fn pitch_shift(a: &AudioBuffer, factor: f64) -> Result<AudioBuffer, AugmentError> {
    check_factor(factor)?;
    let resampled = AudioBuffer {
        samples: resample_linear(&a.samples, 1.0 / factor),
        sample_rate: a.sample_rate,
    };
    time_stretch(&resampled, factor)
}

/// Which variants to emit per factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    TimeStretch,
    PitchShift,
}

impl AugmentMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "ts" => Some(Self::TimeStretch),
            "ps" => Some(Self::PitchShift),
            _ => None,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Self::TimeStretch => "ts",
            Self::PitchShift => "ps",
        }
    }
}

/// Expands a manifest: for every record with audio, the original is copied
/// to `out_dir` and one time-stretched plus one pitch-shifted variant per
/// factor (subject to `modes`) is synthesized next to it. New records keep
/// the source's text, IPA, and dialect; ids gain `_ts{f}` / `_ps{f}`
/// suffixes. Records without audio pass through unchanged. Output order
/// follows input order.
pub fn augment_manifest(
    records: &[ManifestRecord],
    manifest_dir: &Path,
    out_dir: &Path,
    factors: &[f64],
    modes: &[AugmentMode],
) -> Result<Vec<ManifestRecord>, AugmentError> {
    for &f in factors {
        check_factor(f)?;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| AugmentError::Io(e.to_string()))?;
    let mut out = Vec::new();
    for record in records {
        let Some(audio_rel) = &record.audio else {
            out.push(record.clone());
            continue;
        };
        let src_path = manifest_dir.join(audio_rel);
        let buffer = AudioBuffer::read_wav(&src_path)
            .map_err(|_| AugmentError::MissingAudio(record.id.clone()))?;

        let base_name = format!("{}.wav", record.id);
        buffer.write_wav(out_dir.join(&base_name))?;
        let mut original = record.clone();
        original.audio = Some(base_name);
        out.push(original);

        for &factor in factors {
            for mode in modes {
                let processed = match mode {
                    AugmentMode::TimeStretch => time_stretch(&buffer, factor)?,
                    AugmentMode::PitchShift => pitch_shift(&buffer, factor)?,
                };
                let id = format!("{}_{}{}", record.id, mode.suffix(), factor);
                let name = format!("{id}.wav");
                processed.write_wav(out_dir.join(&name))?;
                out.push(ManifestRecord {
                    id,
                    text: record.text.clone(),
                    dialect: record.dialect,
                    ipa: record.ipa.clone(),
                    audio: Some(name),
                    duration: Some(processed.duration_secs()),
                });
            }
        }
    }
    Ok(out)
}
