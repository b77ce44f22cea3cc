//! STFT, mel filterbanks, log-mel maps and SpecAugment masking.

mod augment;
mod logmel;
mod mel;
mod stft;

pub use augment::{apply_masks, draw_masks, spec_augment, Mask, MaskAxis, SpecAugmentPolicy};
pub use logmel::{log_mel, LogMelSpectrogram, DB_FLOOR, DEFAULT_FMIN, POWER_EPS};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use stft::{hann, stft, Spectrum, StftConfig};

use thiserror::Error;

use crate::audio_io::{resample, AudioClip, AudioError, CaseConfig};

/// Clips shorter than this are repeat-padded before featurization.
pub const MIN_CLIP_SECS: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("invalid mel band: {0}")]
    InvalidBand(String),
    #[error("clip of {len} samples is shorter than n_fft {n_fft}")]
    ClipTooShort { len: usize, n_fft: usize },
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// Both stages' inputs for one clip under its routed case.
#[derive(Debug, Clone)]
pub struct CaseFeatures {
    pub stage1: LogMelSpectrogram,
    pub stage2: LogMelSpectrogram,
    /// Stage-2 rate waveform for the wavegram branch, when the case uses one.
    pub stage2_wave: Option<AudioClip>,
}

fn prepare(clip: &AudioClip, rate: u32) -> Result<AudioClip, FeatureError> {
    let at_rate = resample(clip, rate)?;
    let min_len = (MIN_CLIP_SECS * f64::from(rate)).ceil() as usize;
    Ok(at_rate.repeat_padded(min_len))
}

impl CaseFeatures {
    /// Resamples the clip to each stage's rate, repeat-pads it to
    /// [`MIN_CLIP_SECS`], and computes both log-mel maps. This is the only
    /// path used for evaluation and serving; it never augments.
    pub fn extract(clip: &AudioClip, case: &CaseConfig) -> Result<Self, FeatureError> {
        let s1 = prepare(clip, case.stage1_rate)?;
        let stage1 = log_mel(&s1, case.stage1_mel_bins, &StftConfig::for_rate(case.stage1_rate))?;
        let s2 = if case.stage2_rate == case.stage1_rate {
            s1
        } else {
            prepare(clip, case.stage2_rate)?
        };
        let stage2 = log_mel(&s2, case.stage2_mel_bins, &StftConfig::for_rate(case.stage2_rate))?;
        Ok(Self {
            stage1,
            stage2,
            stage2_wave: case.stage2_wavegram.then_some(s2),
        })
    }
}
