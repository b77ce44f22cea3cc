//! Deterministic synthetic corpora: a two-class burst corpus whose classes
//! differ only in passband, and a four-tag proxy corpus for pretraining the
//! stage-2 backbone.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetManifest, ManifestRow, PipelineError};
use crate::audio_io::{encode_wav_i16, AudioClip, CaseId};
use crate::models::NUM_PROXY_TAGS;

pub const POSITIVE_BAND: (f64, f64) = (300.0, 800.0);
pub const NEGATIVE_BAND: (f64, f64) = (1200.0, 1800.0);
const DURATION_SECS: (f64, f64) = (0.5, 0.8);
const GAIN: (f64, f64) = (0.1, 0.9);
const BACKGROUND: f64 = 0.002;
const PARTIALS: usize = 8;

/// Source rates used for each case's synthetic clips, cycled per clip.
pub fn synthetic_rates(case: CaseId) -> &'static [u32] {
    match case {
        CaseId::Case4k => &[4000],
        CaseId::Case8k => &[8000, 16000],
        CaseId::Case48k => &[48000, 44100],
    }
}

fn background<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-BACKGROUND..BACKGROUND)).collect()
}

fn to_clip(x: Vec<f64>, rate: u32, id: &str) -> AudioClip {
    AudioClip::new(x.into_iter().map(|v| v as f32).collect(), rate, id).expect("non-empty clip")
}

/// One to three decaying bursts, each a sum of random-phase partials drawn
/// from the class passband, over faint broadband noise. Nuisance variation:
/// duration, gain, burst count, onset and decay.
pub fn synthetic_clip<R: Rng + ?Sized>(label: u8, rate: u32, rng: &mut R) -> AudioClip {
    let (lo, hi) = if label == 1 { POSITIVE_BAND } else { NEGATIVE_BAND };
    let sr = f64::from(rate);
    let n = (rng.random_range(DURATION_SECS.0..DURATION_SECS.1) * sr) as usize;
    let gain = rng.random_range(GAIN.0..GAIN.1);
    let mut x = background(n, rng);
    let bursts = rng.random_range(1..=3);
    for _ in 0..bursts {
        let len = ((rng.random_range(0.08..0.25) * sr) as usize).min(n);
        let start = rng.random_range(0..=n - len);
        let decay = rng.random_range(8.0..30.0);
        let partials: Vec<(f64, f64)> = (0..PARTIALS)
            .map(|_| (rng.random_range(lo..hi), rng.random_range(0.0..2.0 * PI)))
            .collect();
        for i in 0..len {
            let t = i as f64 / sr;
            let env = (-decay * t).exp() * (1.0 - (-400.0 * t).exp());
            let s: f64 = partials.iter().map(|&(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
            x[start + i] += gain * env * s / PARTIALS as f64;
        }
    }
    to_clip(x, rate, "")
}

/// `n` clips alternating positive/negative, with source rates cycling
/// through [`synthetic_rates`]. Returns `(uuid, label, clip)`.
pub fn synthetic_corpus(case: CaseId, n: usize, seed: u64) -> Vec<(String, u8, AudioClip)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case as u64);
    let rates = synthetic_rates(case);
    (0..n)
        .map(|i| {
            let label = u8::from(i % 2 == 0);
            let rate = rates[(i / 2) % rates.len()];
            let uuid = format!("{}-{i:04}", case.as_str().to_ascii_lowercase());
            let clip = synthetic_clip(label, rate, &mut rng);
            (uuid.clone(), label, AudioClip::new(clip.samples().to_vec(), rate, uuid).expect("clip"))
        })
        .collect()
}

/// Writes a case's corpus as 16-bit WAVs plus `manifest.csv` under `dir`.
pub fn write_synthetic_corpus(dir: &Path, case: CaseId, n: usize, seed: u64) -> Result<DatasetManifest, PipelineError> {
    let io = |e: std::io::Error| PipelineError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut rows = Vec::with_capacity(n);
    for (uuid, label, clip) in synthetic_corpus(case, n, seed) {
        let path = dir.join(format!("{uuid}.wav"));
        std::fs::write(&path, encode_wav_i16(&clip)).map_err(io)?;
        rows.push(ManifestRow {
            uuid,
            path,
            label,
            fold: None,
        });
    }
    let m = DatasetManifest::new(rows)?;
    m.save(&dir.join("manifest.csv"))?;
    Ok(m)
}

pub const PROXY_TAGS: [&str; NUM_PROXY_TAGS] = ["sine", "chirp", "noise-burst", "click-train"];
pub const PROXY_CLIP_SECS: f64 = 0.5;

/// A proxy clip and its multi-label tag vector (each tag present with
/// probability ½).
pub fn proxy_clip<R: Rng + ?Sized>(rate: u32, rng: &mut R) -> (AudioClip, [bool; NUM_PROXY_TAGS]) {
    let sr = f64::from(rate);
    let n = (PROXY_CLIP_SECS * sr) as usize;
    let nyq = sr / 2.0;
    let mut x = background(n, rng);
    let tags: [bool; NUM_PROXY_TAGS] = std::array::from_fn(|_| rng.random_bool(0.5));
    if tags[0] {
        let f = rng.random_range(150.0..0.6 * nyq);
        let a = rng.random_range(0.1..0.3);
        let ph = rng.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            *v += a * (2.0 * PI * f * i as f64 / sr + ph).sin();
        }
    }
    if tags[1] {
        let (mut f0, mut f1) = (rng.random_range(150.0..0.3 * nyq), rng.random_range(0.5 * nyq..0.9 * nyq));
        if rng.random_bool(0.5) {
            std::mem::swap(&mut f0, &mut f1);
        }
        let a = rng.random_range(0.1..0.3);
        let dur = n as f64 / sr;
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / sr;
            *v += a * (2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)).sin();
        }
    }
    if tags[2] {
        let len = (rng.random_range(0.08..0.15) * sr) as usize;
        let start = rng.random_range(0..=n - len);
        let a = rng.random_range(0.1..0.3);
        for v in &mut x[start..start + len] {
            *v += a * rng.random_range(-1.0..1.0);
        }
    }
    if tags[3] {
        let period = (sr / rng.random_range(12.0..30.0)) as usize;
        let click = ((0.002 * sr) as usize).max(2);
        let a = rng.random_range(0.4..0.8);
        let mut p = rng.random_range(0..period);
        while p < n {
            for j in 0..click.min(n - p) {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                x[p + j] += a * sign * (-(j as f64) / click as f64 * 4.0).exp();
            }
            p += period;
        }
    }
    (to_clip(x, rate, ""), tags)
}

pub fn proxy_corpus(rate: u32, n: usize, seed: u64) -> Vec<(AudioClip, [bool; NUM_PROXY_TAGS])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(rate));
    (0..n).map(|_| proxy_clip(rate, &mut rng)).collect()
}
