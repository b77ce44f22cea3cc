use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    auc, kfold_split, mean_std, stage1_embeddings, stage2_embeddings, train_fusion, train_stage1, FoldPlan,
    FusionConfig, PipelineError, Sample, DEFAULT_FOLDS,
};
use crate::audio_io::{CaseConfig, CaseId};
use crate::features::SpecAugmentPolicy;
use crate::models::{save_checkpoint, CaseModel, MiniCNN14};
use crate::nn::{sigmoid, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub augment: SpecAugmentPolicy,
    pub fusion: FusionConfig,
    /// When set, each fold's checkpoint is written here.
    pub out_dir: Option<PathBuf>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_FOLDS,
            seed: 42,
            train: TrainConfig::default(),
            augment: SpecAugmentPolicy::default(),
            fusion: FusionConfig::default(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub uuid: String,
    pub probability: f64,
    pub label: u8,
    pub case_id: CaseId,
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub auc: f64,
    pub n_test: usize,
    pub checkpoint_crc: u32,
    pub stage1_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub case_id: CaseId,
    pub plan: FoldPlan,
    pub folds: Vec<FoldReport>,
    /// Held-out predictions in sample order.
    pub predictions: Vec<Prediction>,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub n: usize,
}

impl CvReport {
    /// `{"per_fold": [...], "mean_auc": r, "std_auc": r, "n": int}`.
    pub fn metrics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "per_fold": self.folds.iter().map(|f| f.auc).collect::<Vec<_>>(),
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "n": self.n,
        })
    }
}

/// Fold-specific seed so folds are independent yet reproducible.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(fold as u64)
}

/// Copy of `samples` with labels permuted (the permutation-null control).
pub fn shuffle_labels(samples: &[Sample], seed: u64) -> Vec<Sample> {
    let mut labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    samples
        .iter()
        .zip(labels)
        .map(|(s, label)| Sample { label, ..s.clone() })
        .collect()
}

struct FoldOutput {
    report: FoldReport,
    predictions: Vec<(usize, f64)>,
}

/// Trains stage 1 and the fusion head on `train` against a frozen stage-2
/// backbone. Returns the assembled model and the stage-1 epoch losses.
pub fn fit_case_model(
    train: &[&Sample],
    case: &CaseConfig,
    cnn14: &MiniCNN14<f32>,
    opts: &CvOptions,
    seed: u64,
) -> Result<(CaseModel, Vec<f64>), PipelineError> {
    let stage1 = train_stage1(train, &TrainConfig { seed, ..opts.train }, &opts.augment)?;
    let e1 = stage1_embeddings(&stage1.effnet, train)?;
    let e2 = stage2_embeddings(cnn14, train, case)?;
    let table: Vec<(Vec<f32>, Vec<f32>)> = e1.into_iter().zip(e2).collect();
    let labels: Vec<u8> = train.iter().map(|s| s.label).collect();
    let fusion = train_fusion(&table, &labels, &FusionConfig { seed, ..opts.fusion })?;
    let model = CaseModel::from_parts(*case, seed, stage1.effnet, cnn14.clone(), fusion)?;
    Ok((model, stage1.epoch_losses))
}

fn run_fold(
    fold: usize,
    samples: &[Sample],
    plan: &FoldPlan,
    case: &CaseConfig,
    cnn14: &MiniCNN14<f32>,
    e2: &[Vec<f32>],
    opts: &CvOptions,
) -> Result<FoldOutput, PipelineError> {
    let train_rows = plan.train_rows(fold);
    let test_rows = plan.test_rows(fold);
    let seed = fold_seed(opts.seed, fold);
    let train: Vec<&Sample> = train_rows.iter().map(|&i| &samples[i]).collect();
    let cfg = TrainConfig { seed, ..opts.train };
    let stage1 = train_stage1(&train, &cfg, &opts.augment)?;

    let e1 = stage1_embeddings(&stage1.effnet, &train)?;
    let table: Vec<(Vec<f32>, Vec<f32>)> = e1.into_iter().zip(train_rows.iter().map(|&i| e2[i].clone())).collect();
    let labels: Vec<u8> = train.iter().map(|s| s.label).collect();
    let fusion = train_fusion(&table, &labels, &FusionConfig { seed, ..opts.fusion })?;

    let model = CaseModel::from_parts(*case, seed, stage1.effnet, cnn14.clone(), fusion)?;
    let bytes = save_checkpoint(&model);
    let checkpoint_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    if let Some(dir) = &opts.out_dir {
        let path = dir.join(format!("{}_fold{fold}.fcv", case.case_id.as_str().to_ascii_lowercase()));
        std::fs::write(&path, &bytes).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    }

    let predictions = test_rows
        .iter()
        .map(|&i| Ok((i, sigmoid(f64::from(model.logit(&samples[i].features)?)))))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let pairs: Vec<(f64, u8)> = predictions.iter().map(|&(i, p)| (p, samples[i].label)).collect();
    Ok(FoldOutput {
        report: FoldReport {
            fold,
            auc: auc(&pairs)?,
            n_test: test_rows.len(),
            checkpoint_crc,
            stage1_losses: stage1.epoch_losses,
        },
        predictions,
    })
}

/// k-fold cross-validation of the full two-stage model for one case. The
/// frozen stage-2 backbone is shared by all folds; each fold trains its own
/// stage-1 backbone and fusion head. Folds run in parallel and results are
/// merged in fold order.
pub fn cross_validate(
    samples: &[Sample],
    case: &CaseConfig,
    cnn14: &MiniCNN14<f32>,
    opts: &CvOptions,
) -> Result<CvReport, PipelineError> {
    if !cnn14.is_frozen() {
        return Err(PipelineError::Manifest("stage-2 backbone must be pretrained and frozen".into()));
    }
    let rows: Vec<(String, u8)> = samples.iter().map(|s| (s.uuid.clone(), s.label)).collect();
    let plan = kfold_split(&rows, opts.k, opts.seed)?;
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    }
    let all: Vec<&Sample> = samples.iter().collect();
    let e2 = stage2_embeddings(cnn14, &all, case)?;
    let outputs = (0..opts.k)
        .into_par_iter()
        .map(|fold| run_fold(fold, samples, &plan, case, cnn14, &e2, opts))
        .collect::<Result<Vec<_>, _>>()?;

    let mut probability = vec![None; samples.len()];
    let mut folds = Vec::with_capacity(outputs.len());
    for out in outputs {
        for (i, p) in out.predictions {
            probability[i] = Some((p, out.report.fold));
        }
        folds.push(out.report);
    }
    let predictions = samples
        .iter()
        .zip(probability)
        .map(|(s, p)| {
            let (probability, fold) = p.expect("every sample is held out once");
            Prediction {
                uuid: s.uuid.clone(),
                probability,
                label: s.label,
                case_id: case.case_id,
                fold: Some(fold),
            }
        })
        .collect();
    let aucs: Vec<f64> = folds.iter().map(|f| f.auc).collect();
    let (mean_auc, std_auc) = mean_std(&aucs);
    Ok(CvReport {
        case_id: case.case_id,
        plan,
        folds,
        predictions,
        mean_auc,
        std_auc,
        n: samples.len(),
    })
}
