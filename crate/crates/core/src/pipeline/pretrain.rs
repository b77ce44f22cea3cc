use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{auc, proxy_corpus, PipelineError};
use crate::audio_io::{AudioClip, CaseConfig};
use crate::features::{log_mel, LogMelSpectrogram, StftConfig};
use crate::models::{spec_batch, wave_batch, MiniCNN14, ModelError, NUM_PROXY_TAGS};
use crate::nn::{bce_with_logits, cosine_lr, Adam, AdamHyper, Optimizer, Tensor, TrainConfig};

/// A featurized proxy clip at the stage-2 rate.
#[derive(Debug, Clone)]
pub struct ProxyExample {
    pub spec: LogMelSpectrogram,
    pub wave: Option<AudioClip>,
    pub tags: [bool; NUM_PROXY_TAGS],
}

/// Proxy pretraining defaults: the reference optimizer settings over
/// 10 epochs.
pub fn proxy_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 10,
        seed,
        ..TrainConfig::default()
    }
}

/// Proxy clips and seed stream used by [`pretrain_stage2`].
pub const DEFAULT_PROXY_CLIPS: usize = 512;

/// Builds a stage-2 backbone for `case` and pretrains it on `clips` fresh
/// proxy clips. The returned backbone is frozen.
pub fn pretrain_stage2(
    case: &CaseConfig,
    clips: usize,
    seed: u64,
) -> Result<(MiniCNN14<f32>, Vec<f64>), PipelineError> {
    let examples = proxy_examples(case, clips, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut cnn14 = MiniCNN14::new(case.stage2_wavegram, &mut rng);
    let losses = pretrain_proxy(&mut cnn14, &examples, &proxy_train_config(seed))?;
    Ok((cnn14, losses))
}

/// Generates and featurizes `n` proxy clips for a case's stage-2 input.
pub fn proxy_examples(case: &CaseConfig, n: usize, seed: u64) -> Result<Vec<ProxyExample>, PipelineError> {
    let stft = StftConfig::for_rate(case.stage2_rate);
    proxy_corpus(case.stage2_rate, n, seed)
        .into_par_iter()
        .map(|(clip, tags)| {
            Ok(ProxyExample {
                spec: log_mel(&clip, case.stage2_mel_bins, &stft)?,
                wave: case.stage2_wavegram.then_some(clip),
                tags,
            })
        })
        .collect()
}

fn batch(examples: &[&ProxyExample]) -> Result<(Tensor<f32>, Option<Tensor<f32>>), ModelError> {
    let specs: Vec<&LogMelSpectrogram> = examples.iter().map(|e| &e.spec).collect();
    let x = spec_batch(&specs, 1)?;
    let waves: Option<Vec<&AudioClip>> = examples.iter().map(|e| e.wave.as_ref()).collect();
    let w = waves.map(|w| wave_batch(&w)).transpose()?;
    Ok((x, w))
}

/// Multi-label training of the proxy head; freezes the backbone when done.
/// Returns the mean training loss per epoch.
pub fn pretrain_proxy(
    cnn14: &mut MiniCNN14<f32>,
    examples: &[ProxyExample],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, PipelineError> {
    cfg.validate().map_err(ModelError::from)?;
    if examples.is_empty() {
        return Err(PipelineError::EmptyTrainSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut opt = Adam::<f32>::new(AdamHyper::default());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let b: Vec<&ProxyExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (x, w) = batch(&b)?;
            let logits = cnn14.forward_train(&x, w.as_ref())?;
            let y: Vec<f32> = b.iter().flat_map(|e| e.tags.map(f32::from)).collect();
            let (loss, grad) = bce_with_logits(logits.data(), &y).map_err(ModelError::from)?;
            cnn14.backward(&Tensor::from_vec(logits.shape(), grad).map_err(ModelError::from)?)?;
            opt.step(cnn14, lr);
            total += f64::from(loss) * b.len() as f64;
        }
        losses.push(total / examples.len() as f64);
    }
    cnn14.freeze();
    Ok(losses)
}

/// Per-tag AUC of the proxy head on `examples`.
pub fn proxy_tag_aucs(cnn14: &MiniCNN14<f32>, examples: &[ProxyExample]) -> Result<Vec<f64>, PipelineError> {
    let logits: Vec<Vec<f32>> = examples
        .par_iter()
        .map(|e| {
            let (x, w) = batch(&[e])?;
            Ok(cnn14.proxy_logits(&x, w.as_ref())?.into_data())
        })
        .collect::<Result<_, PipelineError>>()?;
    (0..NUM_PROXY_TAGS)
        .map(|k| {
            let pairs: Vec<(f64, u8)> = logits
                .iter()
                .zip(examples)
                .map(|(z, e)| (f64::from(z[k]), u8::from(e.tags[k])))
                .collect();
            auc(&pairs)
        })
        .collect()
}
