use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, PipelineError};
use crate::audio_io::{decode_wav, route, CaseConfig, CaseId};
use crate::features::{spec_augment, CaseFeatures, LogMelSpectrogram, SpecAugmentPolicy};
use crate::models::{spec_batch, FusionHead, MiniCNN14, MiniEffNetV2, ModelError, EMBEDDING1_DIM, MIN_FRAMES};
use crate::nn::{bce_with_logits, cosine_lr, Adam, AdamHyper, Module, Optimizer, Tensor, TrainConfig};

/// A labelled clip with both stages' features already extracted.
#[derive(Debug, Clone)]
pub struct Sample {
    pub uuid: String,
    pub label: u8,
    pub features: CaseFeatures,
}

/// Decodes, routes and featurizes every manifest row. Rows are grouped by
/// routed case, keeping manifest order within each case.
pub fn load_samples(manifest: &DatasetManifest) -> Result<Vec<(CaseId, Sample)>, PipelineError> {
    manifest
        .rows
        .par_iter()
        .map(|row| {
            let bytes = std::fs::read(&row.path).map_err(|e| PipelineError::Io(format!("{}: {e}", row.path.display())))?;
            let clip = decode_wav(&bytes)?;
            let case = route(clip.sample_rate());
            let features = CaseFeatures::extract(&clip, &case)?;
            Ok((
                case.case_id,
                Sample {
                    uuid: row.uuid.clone(),
                    label: row.label,
                    features,
                },
            ))
        })
        .collect()
}

/// Featurizes in-memory clips under one case.
pub fn samples_from_clips(
    clips: &[(String, u8, crate::audio_io::AudioClip)],
    case: &CaseConfig,
) -> Result<Vec<Sample>, PipelineError> {
    clips
        .par_iter()
        .map(|(uuid, label, clip)| {
            Ok(Sample {
                uuid: uuid.clone(),
                label: *label,
                features: CaseFeatures::extract(clip, case)?,
            })
        })
        .collect()
}

fn targets(samples: &[&Sample]) -> Vec<f32> {
    samples.iter().map(|s| f32::from(s.label)).collect()
}

/// Stage-1 batch with SpecAugment applied to each spectrogram.
pub fn training_batch<R: Rng + ?Sized>(
    samples: &[&Sample],
    policy: &SpecAugmentPolicy,
    rng: &mut R,
) -> Result<Tensor<f32>, PipelineError> {
    let augmented: Vec<LogMelSpectrogram> = samples
        .iter()
        .map(|s| spec_augment(&s.features.stage1, policy, rng))
        .collect();
    let refs: Vec<&LogMelSpectrogram> = augmented.iter().collect();
    Ok(spec_batch(&refs, MIN_FRAMES)?)
}

/// Stage-1 batch for evaluation: never augmented.
pub fn eval_batch(samples: &[&Sample]) -> Result<Tensor<f32>, PipelineError> {
    let refs: Vec<&LogMelSpectrogram> = samples.iter().map(|s| &s.features.stage1).collect();
    Ok(spec_batch(&refs, MIN_FRAMES)?)
}

#[derive(Debug, Clone)]
pub struct Stage1Outcome {
    pub effnet: MiniEffNetV2<f32>,
    /// Mean training-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fresh stage-1 backbone initialized from `seed`.
pub fn init_effnet(seed: u64) -> MiniEffNetV2<f32> {
    MiniEffNetV2::new(&mut stream_rng(seed, 0))
}

/// Continues training `effnet` for `cfg.epochs` epochs of shuffled
/// mini-batches with BCE-with-logits, Adam and the cosine schedule.
pub fn train_effnet_epochs(
    effnet: &mut MiniEffNetV2<f32>,
    samples: &[&Sample],
    cfg: &TrainConfig,
    policy: &SpecAugmentPolicy,
) -> Result<Vec<f64>, PipelineError> {
    cfg.validate().map_err(ModelError::from)?;
    if samples.is_empty() {
        return Err(PipelineError::EmptyTrainSet);
    }
    let mut rng = stream_rng(cfg.seed, 1);
    let mut opt = Adam::<f32>::new(AdamHyper::default());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| samples[i]).collect();
            let x = training_batch(&batch, policy, &mut rng)?;
            let (logits, _) = effnet.forward_train(&x).map_err(ModelError::from)?;
            let (loss, grad) = bce_with_logits(logits.data(), &targets(&batch)).map_err(ModelError::from)?;
            let g = Tensor::from_vec(&[batch.len(), 1], grad).map_err(ModelError::from)?;
            effnet.backward(&g).map_err(ModelError::from)?;
            opt.step(effnet, lr);
            total += f64::from(loss) * batch.len() as f64;
        }
        losses.push(total / samples.len() as f64);
    }
    Ok(losses)
}

pub fn train_stage1(
    samples: &[&Sample],
    cfg: &TrainConfig,
    policy: &SpecAugmentPolicy,
) -> Result<Stage1Outcome, PipelineError> {
    let mut effnet = init_effnet(cfg.seed);
    let epoch_losses = train_effnet_epochs(&mut effnet, samples, cfg, policy)?;
    Ok(Stage1Outcome { effnet, epoch_losses })
}

/// Eval-mode stage-1 logits, one clip at a time (the serving path).
pub fn stage1_logits(effnet: &MiniEffNetV2<f32>, samples: &[&Sample]) -> Result<Vec<f32>, PipelineError> {
    samples
        .iter()
        .map(|s| Ok(effnet.effnet_forward(&s.features.stage1)?.0))
        .collect()
}

/// Mean eval-mode BCE of the stage-1 head.
pub fn stage1_loss(effnet: &MiniEffNetV2<f32>, samples: &[&Sample]) -> Result<f64, PipelineError> {
    let logits: Vec<f64> = stage1_logits(effnet, samples)?.into_iter().map(f64::from).collect();
    let y: Vec<f64> = samples.iter().map(|s| f64::from(s.label)).collect();
    Ok(bce_with_logits(&logits, &y).map_err(ModelError::from)?.0)
}

/// Embedding 1 per sample, eval mode, one clip at a time.
pub fn stage1_embeddings(effnet: &MiniEffNetV2<f32>, samples: &[&Sample]) -> Result<Vec<Vec<f32>>, PipelineError> {
    samples
        .iter()
        .map(|s| Ok(effnet.effnet_forward(&s.features.stage1)?.1))
        .collect()
}

/// Embedding 2 per sample from the frozen stage-2 backbone.
pub fn stage2_embeddings(
    cnn14: &MiniCNN14<f32>,
    samples: &[&Sample],
    case: &CaseConfig,
) -> Result<Vec<Vec<f32>>, PipelineError> {
    samples
        .par_iter()
        .map(|s| {
            Ok(cnn14.cnn14_forward(&s.features.stage2, s.features.stage2_wave.as_ref(), case.stage2_tap)?)
        })
        .collect()
}

/// `(e1, e2)` per sample.
pub fn extract_embeddings(
    samples: &[&Sample],
    effnet: &MiniEffNetV2<f32>,
    cnn14: &MiniCNN14<f32>,
    case: &CaseConfig,
) -> Result<Vec<(Vec<f32>, Vec<f32>)>, PipelineError> {
    let e1 = stage1_embeddings(effnet, samples)?;
    let e2 = stage2_embeddings(cnn14, samples, case)?;
    Ok(e1.into_iter().zip(e2).collect())
}

/// Logistic-regression settings for the fusion head. It is trained
/// full-batch on standardized features in double precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub steps: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            steps: 400,
            lr_max: 0.05,
            lr_min: 1e-4,
            weight_decay: 1e-3,
            seed: 42,
        }
    }
}

/// Trains the fusion head on `(e1, e2)` rows. Features are standardized
/// with training-set statistics, and the scaling is folded back into the
/// returned weights so the head applies to raw embeddings.
pub fn train_fusion(
    table: &[(Vec<f32>, Vec<f32>)],
    labels: &[u8],
    cfg: &FusionConfig,
) -> Result<FusionHead<f32>, PipelineError> {
    let (e1_0, e2_0) = table.first().ok_or(PipelineError::EmptyTrainSet)?;
    if e1_0.len() != EMBEDDING1_DIM {
        return Err(ModelError::DimMismatch {
            expected: EMBEDDING1_DIM,
            got: e1_0.len(),
        }
        .into());
    }
    let d2 = e2_0.len();
    let d = EMBEDDING1_DIM + d2;
    if labels.len() != table.len() {
        return Err(ModelError::DimMismatch {
            expected: table.len(),
            got: labels.len(),
        }
        .into());
    }
    let n = table.len();
    let mut x = Vec::with_capacity(n * d);
    for (e1, e2) in table {
        if e1.len() != EMBEDDING1_DIM || e2.len() != d2 {
            return Err(ModelError::DimMismatch {
                expected: d,
                got: e1.len() + e2.len(),
            }
            .into());
        }
        x.extend(e1.iter().chain(e2).map(|&v| f64::from(v)));
    }
    let mut mean = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in x.chunks_exact(d) {
        for j in 0..d {
            scale[j] += (row[j] - mean[j]).powi(2);
        }
    }
    for s in &mut scale {
        let sd = (*s / n as f64).sqrt();
        *s = if sd > 1e-12 { sd } else { 1.0 };
    }
    for row in x.chunks_exact_mut(d) {
        for j in 0..d {
            row[j] = (row[j] - mean[j]) / scale[j];
        }
    }
    let xs = Tensor::from_vec(&[n, d], x).map_err(ModelError::from)?;
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();

    let mut head = FusionHead::<f64>::zeros(d2);
    let mut opt = Adam::<f64>::new(AdamHyper::default());
    let sched = TrainConfig {
        lr_max: cfg.lr_max,
        lr_min: cfg.lr_min,
        batch_size: n,
        epochs: cfg.steps.max(1),
        seed: cfg.seed,
    };
    for step in 0..cfg.steps {
        let logits = head.forward_train(&xs).map_err(ModelError::from)?;
        let (_, grad) = bce_with_logits(logits.data(), &y).map_err(ModelError::from)?;
        head.backward(&Tensor::from_vec(&[n, 1], grad).map_err(ModelError::from)?)
            .map_err(ModelError::from)?;
        let wd = cfg.weight_decay;
        let w = &mut head.linear.weight;
        let (wv, wg) = w.value_and_grad_mut();
        for (g, &v) in wg.iter_mut().zip(wv.iter()) {
            *g += wd * v;
        }
        opt.step(&mut head, cosine_lr(step, &sched));
    }

    // Fold the standardization into the affine map: w'ⱼ = wⱼ/σⱼ and
    // b' = b − Σ wⱼ μⱼ/σⱼ.
    let w = head.linear.weight.data();
    let mut out = FusionHead::<f32>::zeros(d2);
    let mut bias = head.linear.bias.data()[0];
    for j in 0..d {
        let wj = w[j] / scale[j];
        out.linear.weight.data_mut()[j] = wj as f32;
        bias -= wj * mean[j];
    }
    out.linear.bias.data_mut()[0] = bias as f32;
    out.zero_grad();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logits(head: &FusionHead<f32>, table: &[(Vec<f32>, Vec<f32>)]) -> Vec<f32> {
        table.iter().map(|(a, b)| head.fuse_forward(a, b).unwrap()).collect()
    }

    #[test]
    fn separable_embeddings_reach_full_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut table = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let y = (i % 2) as u8;
            let mut e1: Vec<f32> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
            // Class is the sign of a weighted feature combination with a margin.
            let s = if y == 1 { 1.0 } else { -1.0 };
            e1[3] = s * rng.random_range(0.2..1.0) + 0.5 * e1[7];
            let e2: Vec<f32> = (0..128).map(|_| rng.random_range(0.0..5.0)).collect();
            table.push((e1, e2));
            labels.push(y);
        }
        let head = train_fusion(&table, &labels, &FusionConfig::default()).unwrap();
        let correct = logits(&head, &table)
            .iter()
            .zip(&labels)
            .filter(|(z, &y)| (**z > 0.0) == (y == 1))
            .count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn uninformative_embeddings_give_even_odds() {
        let table = vec![(vec![0.3f32; 64], vec![1.5f32; 64]); 40];
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let head = train_fusion(&table, &labels, &FusionConfig::default()).unwrap();
        for z in logits(&head, &table) {
            assert!(z.abs() < 1e-3, "{z}");
        }
    }

    #[test]
    fn dim_checks() {
        let table = vec![(vec![0.0f32; 64], vec![0.0f32; 64]), (vec![0.0f32; 64], vec![0.0f32; 128])];
        assert!(matches!(
            train_fusion(&table, &[0, 1], &FusionConfig::default()),
            Err(PipelineError::Model(ModelError::DimMismatch { .. }))
        ));
        assert_eq!(
            train_fusion(&[], &[], &FusionConfig::default()).err(),
            Some(PipelineError::EmptyTrainSet)
        );
    }
}
