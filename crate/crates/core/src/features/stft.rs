use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::FeatureError;
use crate::audio_io::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    /// Reflect-pad `n_fft / 2` samples on both sides so frame `t` is centred
    /// on sample `t * hop`.
    pub center: bool,
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, center: bool) -> Result<Self, FeatureError> {
        if n_fft == 0 || !n_fft.is_power_of_two() {
            return Err(FeatureError::InvalidConfig(format!(
                "n_fft {n_fft} is not a power of two"
            )));
        }
        if hop == 0 || hop > n_fft {
            return Err(FeatureError::InvalidConfig(format!(
                "hop {hop} outside 1..={n_fft}"
            )));
        }
        Ok(Self { n_fft, hop, center })
    }

    /// Default analysis parameters for a sampling rate: 1024/256 up to
    /// 16 kHz, 2048/512 above.
    pub fn for_rate(sample_rate: u32) -> Self {
        if sample_rate <= 16_000 {
            Self { n_fft: 1024, hop: 256, center: true }
        } else {
            Self { n_fft: 2048, hop: 512, center: true }
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> Result<usize, FeatureError> {
        if self.center {
            Ok(1 + len / self.hop)
        } else if len < self.n_fft {
            Err(FeatureError::ClipTooShort { len, n_fft: self.n_fft })
        } else {
            Ok(1 + (len - self.n_fft) / self.hop)
        }
    }
}

/// One-sided complex spectrum, bins × frames, row-major.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub n_bins: usize,
    pub n_frames: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[bin * self.n_frames + frame]
    }

    pub fn power(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Maps any integer index into `[0, len)` by repeated mirror reflection
/// (no edge repeat), so padding works even when `len < n_fft / 2`.
fn reflect_index(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let m = i.rem_euclid(period);
    if m < len as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<Spectrum, FeatureError> {
    stft_samples(clip.samples(), cfg)
}

pub(crate) fn stft_samples(samples: &[f32], cfg: &StftConfig) -> Result<Spectrum, FeatureError> {
    if samples.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let n_frames = cfg.n_frames(samples.len())?;
    let n_bins = cfg.n_bins();
    let window = hann(cfg.n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let offset = if cfg.center { (cfg.n_fft / 2) as i64 } else { 0 };

    let mut data = vec![Complex64::new(0.0, 0.0); n_bins * n_frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..n_frames {
        let start = (t * cfg.hop) as i64 - offset;
        for (j, slot) in buf.iter_mut().enumerate() {
            let idx = start + j as i64;
            let idx = if idx >= 0 && (idx as usize) < samples.len() {
                idx as usize
            } else {
                reflect_index(idx, samples.len())
            };
            *slot = Complex64::new(f64::from(samples[idx]) * window[j], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, v) in buf.iter().take(n_bins).enumerate() {
            data[k * n_frames + t] = *v;
        }
    }
    Ok(Spectrum { n_bins, n_frames, data })
}
