//! Two-stage cough-audio screening.
//!
//! Audio is routed by sampling rate to one of three processing cases, turned
//! into log-mel maps, embedded by a visual backbone (stage 1) and an
//! audio-pattern backbone (stage 2), and scored by a linear classifier over
//! the concatenated embeddings.

pub mod audio_io;
pub mod features;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod scoring;

pub use audio_io::{decode_wav, resample, route, AudioClip, AudioError, CaseConfig, CaseId, Stage2Tap};
pub use features::{log_mel, CaseFeatures, LogMelSpectrogram, SpecAugmentPolicy, StftConfig};
pub use nn::{Tensor, TrainConfig};
