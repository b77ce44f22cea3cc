//! Stage-1 and stage-2 backbones, the fusion head, per-case model bundles
//! and checkpoint persistence.

mod bundle;
mod checkpoint;
mod cnn14;
mod effnet;
mod fusion;
mod wavegram;

pub use bundle::CaseModel;
pub use checkpoint::{
    load_checkpoint, load_checkpoint_file, load_stage2, read_checkpoint, save_checkpoint,
    save_checkpoint_file, save_stage2, CheckpointConfig, TensorRecord, FORMAT_VERSION, MAGIC,
};
pub use cnn14::{MiniCNN14, CNN14_WIDTHS, NUM_PROXY_TAGS};
pub use effnet::{MiniEffNetV2, EMBEDDING1_DIM, MIN_FRAMES};
pub use fusion::FusionHead;
pub use wavegram::{bin_for_row, stack_with_logmel, WavegramFrontEnd, WAVEGRAM_BINS};

use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::features::{FeatureError, LogMelSpectrogram};
use crate::nn::{NnError, Real, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("input too small: {0}")]
    InputTooSmall(String),
    #[error("tap mismatch: {0}")]
    TapMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("tensor shape mismatch: {0}")]
    TensorShapeMismatch(String),
    #[error("invalid checkpoint config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Stacks spectrograms with equal mel counts into `[N, 1, mels, width]`,
/// tiling each along time to `width = max(min_frames, longest)`.
pub fn spec_batch<T: Real>(specs: &[&LogMelSpectrogram], min_frames: usize) -> Result<Tensor<T>, ModelError> {
    let first = specs
        .first()
        .ok_or_else(|| ModelError::InputTooSmall("empty batch".into()))?;
    let m = first.mel_bins();
    let mut width = min_frames.max(1);
    for s in specs {
        if s.mel_bins() != m {
            return Err(ModelError::DimMismatch {
                expected: m,
                got: s.mel_bins(),
            });
        }
        if m == 0 || s.n_frames() == 0 {
            return Err(ModelError::InputTooSmall(format!("{}x{} spectrogram", m, s.n_frames())));
        }
        width = width.max(s.n_frames());
    }
    let mut out = Vec::with_capacity(specs.len() * m * width);
    for s in specs {
        let (v, t) = (s.values(), s.n_frames());
        for r in 0..m {
            let row = &v[r * t..(r + 1) * t];
            out.extend((0..width).map(|j| T::c(row[j % t])));
        }
    }
    Ok(Tensor::from_vec(&[specs.len(), 1, m, width], out)?)
}

/// Stacks waveforms into `[N, 1, len]`, tiling each to the longest.
pub fn wave_batch<T: Real>(waves: &[&AudioClip]) -> Result<Tensor<T>, ModelError> {
    let len = waves
        .iter()
        .map(|w| w.len())
        .max()
        .ok_or_else(|| ModelError::InputTooSmall("empty batch".into()))?;
    let mut out = Vec::with_capacity(waves.len() * len);
    for w in waves {
        let s = w.samples();
        out.extend((0..len).map(|i| T::c(f64::from(s[i % s.len()]))));
    }
    Ok(Tensor::from_vec(&[waves.len(), 1, len], out)?)
}
