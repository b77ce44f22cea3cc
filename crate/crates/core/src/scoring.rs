//! One-shot scoring shared by the CLI and the HTTP service, so both produce
//! the same numbers for the same bytes.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{decode_wav, route, AudioClip, AudioError, CaseId};
use crate::features::CaseFeatures;
use crate::models::{load_checkpoint, CaseModel, ModelError};
use crate::nn::sigmoid;

/// Probability at or above which a clip is labelled positive.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probability: f64,
    pub label: String,
    pub case_id: String,
    pub model_version: String,
    pub latency_ms: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("no model loaded for {0}")]
    ModelNotLoaded(CaseId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ScoreError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ScoreError::Audio(AudioError::MalformedContainer(_)) => "MalformedContainer",
            ScoreError::Audio(AudioError::UnsupportedEncoding(_)) => "UnsupportedEncoding",
            ScoreError::Audio(AudioError::InvalidRate(_)) => "InvalidRate",
            ScoreError::Audio(AudioError::Empty) => "EmptyAudio",
            ScoreError::ModelNotLoaded(_) => "ModelNotLoaded",
            ScoreError::Model(_) => "ModelError",
        }
    }

    /// True when the request itself was bad, as opposed to the server.
    pub fn is_client_error(&self) -> bool {
        matches!(self, ScoreError::Audio(_))
    }
}

/// Loaded models keyed by routing case, each with a version string.
#[derive(Debug, Clone)]
pub struct ModelSet {
    models: BTreeMap<CaseId, (CaseModel, String)>,
    threshold: f64,
}

impl Default for ModelSet {
    fn default() -> Self {
        Self::new(DEFAULT_THRESHOLD)
    }
}

/// `{case}-{crc}` where `crc` is the checkpoint's stored CRC32.
pub fn model_version(case: CaseId, checkpoint: &[u8]) -> String {
    let crc = checkpoint
        .len()
        .checked_sub(4)
        .map(|at| u32::from_le_bytes(checkpoint[at..].try_into().expect("4 bytes")))
        .unwrap_or(0);
    format!("{}-{crc:08x}", case.as_str())
}

impl ModelSet {
    pub fn new(threshold: f64) -> Self {
        Self {
            models: BTreeMap::new(),
            threshold,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Adds or replaces the model for its case.
    pub fn insert(&mut self, model: CaseModel, version: String) {
        self.models.insert(model.case(), (model, version));
    }

    /// Loads a checkpoint from bytes; returns the case it serves.
    pub fn insert_checkpoint(&mut self, bytes: &[u8]) -> Result<CaseId, ModelError> {
        let model = load_checkpoint(bytes)?;
        let case = model.case();
        self.insert(model, model_version(case, bytes));
        Ok(case)
    }

    pub fn insert_file(&mut self, path: &Path) -> Result<CaseId, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        self.insert_checkpoint(&bytes)
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn cases(&self) -> Vec<CaseId> {
        self.models.keys().copied().collect()
    }

    pub fn get(&self, case: CaseId) -> Option<&CaseModel> {
        self.models.get(&case).map(|(m, _)| m)
    }

    /// Positive-class probability and model version for a decoded clip.
    pub fn probability(&self, clip: &AudioClip) -> Result<(CaseId, f64, &str), ScoreError> {
        let case = route(clip.sample_rate());
        let (model, version) = self
            .models
            .get(&case.case_id)
            .ok_or(ScoreError::ModelNotLoaded(case.case_id))?;
        let features = CaseFeatures::extract(clip, &case).map_err(ModelError::from)?;
        let p = sigmoid(f64::from(model.logit(&features)?));
        Ok((case.case_id, p, version))
    }

    pub fn score_clip(&self, clip: &AudioClip) -> Result<ScoreResponse, ScoreError> {
        let started = Instant::now();
        let (case, probability, version) = self.probability(clip)?;
        Ok(self.response(case, probability, version, started))
    }

    /// Decode, route, featurize, forward.
    pub fn score_wav(&self, bytes: &[u8]) -> Result<ScoreResponse, ScoreError> {
        let started = Instant::now();
        let clip = decode_wav(bytes)?;
        let (case, probability, version) = self.probability(&clip)?;
        Ok(self.response(case, probability, version, started))
    }

    fn response(&self, case: CaseId, probability: f64, version: &str, started: Instant) -> ScoreResponse {
        let label = if probability >= self.threshold { "positive" } else { "negative" };
        ScoreResponse {
            probability,
            label: label.to_string(),
            case_id: case.as_str().to_string(),
            model_version: version.to_string(),
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::encode_wav_i16;
    use crate::models::save_checkpoint;

    fn clip(rate: u32) -> AudioClip {
        let s = (0..rate as usize / 2).map(|i| ((i as f32) * 0.05).sin() * 0.3).collect();
        AudioClip::new(s, rate, "t").unwrap()
    }

    #[test]
    fn routes_to_the_matching_model() {
        let mut set = ModelSet::default();
        let bytes = save_checkpoint(&CaseModel::new(CaseId::Case8k, 1));
        assert_eq!(set.insert_checkpoint(&bytes).unwrap(), CaseId::Case8k);
        let r = set.score_wav(&encode_wav_i16(&clip(16000))).unwrap();
        assert_eq!(r.case_id, "CASE_8K");
        assert!(r.model_version.starts_with("CASE_8K-"));
        assert!((0.0..=1.0).contains(&r.probability));
        assert_eq!(r.label == "positive", r.probability >= 0.5);

        let err = set.score_wav(&encode_wav_i16(&clip(4000))).unwrap_err();
        assert_eq!(err, ScoreError::ModelNotLoaded(CaseId::Case4k));
        assert_eq!(err.code(), "ModelNotLoaded");
        assert_eq!(set.score_wav(b"").unwrap_err().code(), "MalformedContainer");
    }

    #[test]
    fn threshold_sets_label() {
        let mut set = ModelSet::new(0.0);
        set.insert(CaseModel::new(CaseId::Case4k, 2), "v".into());
        assert_eq!(set.score_clip(&clip(4000)).unwrap().label, "positive");
        let mut set = ModelSet::new(1.1);
        set.insert(CaseModel::new(CaseId::Case4k, 2), "v".into());
        assert_eq!(set.score_clip(&clip(4000)).unwrap().label, "negative");
    }

    #[test]
    fn version_uses_stored_crc() {
        assert_eq!(model_version(CaseId::Case48k, &[0, 0, 0, 0, 0x78, 0x56, 0x34, 0x12]), "CASE_48K-12345678");
    }
}
