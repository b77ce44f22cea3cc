//! WAV decoding, rate conversion, and sampling-rate routing.

mod resample;
mod route;
mod wav;

pub use resample::{resample, KAISER_BETA, TAPS_PER_PHASE};
pub use route::{route, routing_table, CaseConfig, CaseId, Stage2Tap, CASE_ANCHORS};
pub use wav::{decode_wav, encode_wav_f32, encode_wav_i16};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AudioError {
    #[error("malformed WAV container: {0}")]
    MalformedContainer(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("invalid sample rate {0}")]
    InvalidRate(u32),
    #[error("audio clip has no samples")]
    Empty,
}

/// A decoded mono waveform.
///
/// Samples are finite and lie in `[-1, 1]`; the constructor clamps and
/// rejects non-finite values so every downstream stage can rely on it.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    source_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f32>,
        sample_rate: u32,
        source_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        let samples = samples
            .into_iter()
            .map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 })
            .collect();
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Repeats the waveform cyclically until it holds at least `min_len` samples.
    pub fn repeat_padded(&self, min_len: usize) -> AudioClip {
        if self.samples.len() >= min_len {
            return self.clone();
        }
        let samples = self.samples.iter().copied().cycle().take(min_len).collect();
        AudioClip {
            samples,
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }
}
