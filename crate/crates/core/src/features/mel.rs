use super::FeatureError;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `n_mels × (n_fft/2 + 1)`, peak weight 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    /// Per-filter `[first, last)` column range holding the non-zero weights.
    support: Vec<(usize, usize)>,
    n_mels: usize,
    n_bins: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
}

impl MelFilterbank {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn band(&self) -> (f64, f64) {
        (self.fmin, self.fmax)
    }

    /// Projects a bins × frames power matrix onto the mel axis.
    pub fn apply(&self, power: &[f64], n_frames: usize) -> Vec<f64> {
        assert_eq!(power.len(), self.n_bins * n_frames);
        let mut out = vec![0.0; self.n_mels * n_frames];
        for m in 0..self.n_mels {
            let (lo, hi) = self.support[m];
            let row = self.row(m);
            let dst = &mut out[m * n_frames..(m + 1) * n_frames];
            for k in lo..hi {
                let w = row[k];
                let src = &power[k * n_frames..(k + 1) * n_frames];
                for (d, &p) in dst.iter_mut().zip(src) {
                    *d += w * p;
                }
            }
        }
        out
    }
}

pub fn mel_filterbank(
    sample_rate: u32,
    n_fft: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank, FeatureError> {
    let nyquist = f64::from(sample_rate) / 2.0;
    let n_bins = n_fft / 2 + 1;
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(FeatureError::InvalidBand(format!(
            "need 0 <= fmin < fmax <= {nyquist}, got fmin={fmin} fmax={fmax}"
        )));
    }
    if n_mels == 0 || n_mels > n_bins {
        return Err(FeatureError::InvalidBand(format!(
            "n_mels {n_mels} outside 1..={n_bins}"
        )));
    }

    let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / n_fft as f64;

    let mut weights = vec![0.0; n_mels * n_bins];
    let mut support = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        let mut first = usize::MAX;
        let mut last = 0;
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rise = (f - left) / (centre - left);
            let fall = (right - f) / (right - centre);
            let v = rise.min(fall);
            if v > 0.0 {
                *w = v;
                first = first.min(k);
                last = k + 1;
            }
        }
        if first == usize::MAX {
            return Err(FeatureError::InvalidBand(format!(
                "mel filter {m} ({left:.2}..{right:.2} Hz) covers no FFT bin; use fewer mel bins or a larger n_fft"
            )));
        }
        support.push((first, last));
    }

    Ok(MelFilterbank {
        weights,
        support,
        n_mels,
        n_bins,
        sample_rate,
        fmin,
        fmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_formula_values() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        // 2595 * log10(17/7) evaluated independently.
        let expected = 2595.0 * (17.0f64 / 7.0).ln() / std::f64::consts::LN_10;
        assert!((hz_to_mel(1000.0) - expected).abs() < 1e-9);
        assert!((hz_to_mel(1000.0) - 1000.1).abs() < 0.5);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn four_khz_256_mel_bank_shape() {
        let bank = mel_filterbank(4000, 1024, 256, 50.0, 2000.0).unwrap();
        assert_eq!(bank.weights().len(), 256 * 513);
        assert_eq!((bank.n_mels(), bank.n_bins()), (256, 513));
    }

    #[test]
    fn invalid_bands() {
        assert!(mel_filterbank(8000, 1024, 128, 100.0, 50.0).is_err());
        assert!(mel_filterbank(8000, 1024, 128, 0.0, 4001.0).is_err());
        assert!(mel_filterbank(8000, 1024, 600, 0.0, 4000.0).is_err());
        assert!(mel_filterbank(8000, 1024, 0, 0.0, 4000.0).is_err());
        // 500 filters squeezed into 40 Hz leave most filters without a bin.
        assert!(mel_filterbank(8000, 1024, 500, 50.0, 90.0).is_err());
    }

    #[test]
    fn rows_are_unimodal_and_cover_band() {
        for (rate, n_fft, n_mels) in [(4000, 1024, 256), (8000, 1024, 128), (32000, 2048, 128), (48000, 2048, 128)] {
            let fmax = f64::from(rate) / 2.0;
            let bank = mel_filterbank(rate, n_fft, n_mels, 50.0, fmax).unwrap();
            for m in 0..n_mels {
                let row = bank.row(m);
                assert!(row.iter().all(|&w| w >= 0.0));
                assert!(row.iter().any(|&w| w > 0.0));
                let peak = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                assert!(row[..=peak].windows(2).all(|w| w[0] <= w[1]));
                assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
            }
            let bin_hz = f64::from(rate) / n_fft as f64;
            for k in 0..bank.n_bins() {
                let f = k as f64 * bin_hz;
                if f > 50.0 && f < fmax {
                    let total: f64 = (0..n_mels).map(|m| bank.row(m)[k]).sum();
                    assert!(total > 0.0, "bin {k} ({f} Hz) uncovered at {rate}");
                }
            }
        }
    }
}
