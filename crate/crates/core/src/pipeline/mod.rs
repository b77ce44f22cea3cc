//! Training orchestration: manifests, synthetic corpora, stratified folds,
//! proxy pretraining, two-stage training, cross-validation and AUC.

mod cv;
mod folds;
mod manifest;
mod metrics;
mod pretrain;
mod synthetic;
mod train;

pub use cv::{cross_validate, fit_case_model, fold_seed, shuffle_labels, CvOptions, CvReport, FoldReport, Prediction};
pub use folds::{kfold_indices, kfold_split, FoldPlan, DEFAULT_FOLDS};
pub use manifest::{DatasetManifest, ManifestRow};
pub use metrics::{auc, mean_std};
pub use pretrain::{pretrain_proxy, pretrain_stage2, DEFAULT_PROXY_CLIPS, proxy_examples, proxy_tag_aucs, proxy_train_config, ProxyExample};
pub use synthetic::{
    proxy_clip, proxy_corpus, synthetic_clip, synthetic_corpus, synthetic_rates, write_synthetic_corpus,
    NEGATIVE_BAND, POSITIVE_BAND, PROXY_CLIP_SECS, PROXY_TAGS,
};
pub use train::{
    eval_batch, extract_embeddings, init_effnet, load_samples, samples_from_clips, stage1_embeddings,
    stage1_logits, stage1_loss, stage2_embeddings, train_effnet_epochs, train_fusion, train_stage1,
    training_batch, FusionConfig, Sample, Stage1Outcome,
};

use thiserror::Error;

use crate::audio_io::AudioError;
use crate::features::FeatureError;
use crate::models::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("io: {0}")]
    Io(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("duplicate uuid {0}")]
    DuplicateUuid(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("class {class} has {got} rows, need at least {needed}")]
    TooFewSamples { class: u8, got: usize, needed: usize },
    #[error("AUC needs at least one positive and one negative")]
    SingleClass,
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("empty training set")]
    EmptyTrainSet,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
