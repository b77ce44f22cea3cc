use super::mel::mel_filterbank;
use super::stft::{stft_samples, StftConfig};
use super::FeatureError;
use crate::audio_io::AudioClip;

pub const DB_FLOOR: f64 = -100.0;
pub const POWER_EPS: f64 = 1e-10;
pub const DEFAULT_FMIN: f64 = 50.0;

/// Log-mel map, mel bins × frames, row-major, in dB re 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    values: Vec<f64>,
    mel_bins: usize,
    n_frames: usize,
    frame_rate: f64,
    source_rate: u32,
}

impl LogMelSpectrogram {
    pub fn from_values(
        values: Vec<f64>,
        mel_bins: usize,
        n_frames: usize,
        frame_rate: f64,
        source_rate: u32,
    ) -> Result<Self, FeatureError> {
        if values.len() != mel_bins * n_frames {
            return Err(FeatureError::InvalidConfig(format!(
                "{} values for a {mel_bins}x{n_frames} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidConfig("non-finite log-mel value".into()));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v.max(DB_FLOOR)).collect(),
            mel_bins,
            n_frames,
            frame_rate,
            source_rate,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn source_rate(&self) -> u32 {
        self.source_rate
    }

    pub fn get(&self, mel: usize, frame: usize) -> f64 {
        self.values[mel * self.n_frames + frame]
    }

    /// Writes the map into `dst` as `mel_bins × width`, repeating frames
    /// cyclically when `width` exceeds the frame count and cropping otherwise.
    pub fn tile_into(&self, width: usize, dst: &mut [f32]) {
        assert_eq!(dst.len(), self.mel_bins * width);
        for m in 0..self.mel_bins {
            let src = &self.values[m * self.n_frames..(m + 1) * self.n_frames];
            let row = &mut dst[m * width..(m + 1) * width];
            for (t, d) in row.iter_mut().enumerate() {
                *d = src[t % self.n_frames] as f32;
            }
        }
    }
}

/// Power spectrogram → mel projection → `10·log10(max(S, 1e-10))`, floored
/// at −100 dB. The band is `[50 Hz, rate/2]`.
pub fn log_mel(
    clip: &AudioClip,
    n_mels: usize,
    cfg: &StftConfig,
) -> Result<LogMelSpectrogram, FeatureError> {
    let rate = clip.sample_rate();
    let bank = mel_filterbank(rate, cfg.n_fft, n_mels, DEFAULT_FMIN, f64::from(rate) / 2.0)?;
    let spectrum = stft_samples(clip.samples(), cfg)?;
    let mel = bank.apply(&spectrum.power(), spectrum.n_frames);
    let values = mel
        .into_iter()
        .map(|s| (10.0 * s.max(POWER_EPS).log10()).max(DB_FLOOR))
        .collect();
    Ok(LogMelSpectrogram {
        values,
        mel_bins: n_mels,
        n_frames: spectrum.n_frames,
        frame_rate: f64::from(rate) / cfg.hop as f64,
        source_rate: rate,
    })
}
