use rand::Rng;

use super::{spec_batch, ModelError};
use crate::features::LogMelSpectrogram;
use crate::nn::{join, ConvBnRelu, Gem, Linear, Module, NnError, ParamKind, Real, Tensor};

pub const EMBEDDING1_DIM: usize = 64;
/// Stage-1 inputs narrower than this are tiled along time.
pub const MIN_FRAMES: usize = 32;
const STEM_WIDTH: usize = 16;
const BLOCK_WIDTHS: [usize; 3] = [16, 32, 64];

/// Fused-conv block: strided 3×3 conv then a 3×3 conv, both with BN + ReLU.
#[derive(Debug, Clone)]
struct FusedBlock<T> {
    reduce: ConvBnRelu<T>,
    refine: ConvBnRelu<T>,
}

impl<T: Real> FusedBlock<T> {
    fn new<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> Self {
        Self {
            reduce: ConvBnRelu::new(cin, cout, 2, rng),
            refine: ConvBnRelu::new(cout, cout, 1, rng),
        }
    }
}

/// Stage-1 visual backbone: stem → three fused-conv blocks → GeM →
/// 64-d embedding → one logit.
#[derive(Debug, Clone)]
pub struct MiniEffNetV2<T> {
    stem: ConvBnRelu<T>,
    blocks: Vec<FusedBlock<T>>,
    gem: Gem<T>,
    head: Linear<T>,
}

impl<T: Real> MiniEffNetV2<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let stem = ConvBnRelu::new(1, STEM_WIDTH, 2, rng);
        let mut cin = STEM_WIDTH;
        let blocks = BLOCK_WIDTHS
            .iter()
            .map(|&cout| {
                let b = FusedBlock::new(cin, cout, rng);
                cin = cout;
                b
            })
            .collect();
        Self {
            stem,
            blocks,
            gem: Gem::new(true),
            head: Linear::new(EMBEDDING1_DIM, 1, rng),
        }
    }

    pub fn gem_exponent(&self) -> T {
        self.gem.exponent()
    }

    /// Eval-mode embeddings `[N, 64]` for a `[N, 1, mels, frames]` batch.
    pub fn embed_batch(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut h = self.stem.forward(x)?;
        for b in &self.blocks {
            h = b.refine.forward(&b.reduce.forward(&h)?)?;
        }
        self.gem.forward(&h)
    }

    /// Eval-mode `(logits [N, 1], embeddings [N, 64])`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), NnError> {
        let emb = self.embed_batch(x)?;
        Ok((self.head.forward(&emb)?, emb))
    }

    /// Train-mode forward (batch statistics, caches for `backward`).
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), NnError> {
        let mut h = self.stem.forward_train(x)?;
        for b in &mut self.blocks {
            h = b.reduce.forward_train(&h)?;
            h = b.refine.forward_train(&h)?;
        }
        let emb = self.gem.forward_train(&h)?;
        Ok((self.head.forward_train(&emb)?, emb))
    }

    /// Accumulates parameter gradients from `dL/dlogits [N, 1]`.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<(), NnError> {
        let demb = self.head.backward(dlogits)?;
        let mut d = self.gem.backward(&demb)?;
        for b in self.blocks.iter_mut().rev() {
            d = b.refine.backward(&d, true)?.expect("dx requested");
            d = b.reduce.backward(&d, true)?.expect("dx requested");
        }
        self.stem.backward(&d, false)?;
        Ok(())
    }

    /// Single-spectrogram eval path: `(logit, embedding1)`.
    pub fn effnet_forward(&self, spec: &LogMelSpectrogram) -> Result<(T, Vec<T>), ModelError> {
        if spec.mel_bins() == 0 || spec.n_frames() == 0 {
            return Err(ModelError::InputTooSmall(format!(
                "{}x{} spectrogram",
                spec.mel_bins(),
                spec.n_frames()
            )));
        }
        let x = spec_batch(&[spec], MIN_FRAMES)?;
        let (logits, emb) = self.forward(&x)?;
        Ok((logits.data()[0], emb.into_data()))
    }
}

impl<T: Real> Module<T> for MiniEffNetV2<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.reduce.visit(&join(&p, "reduce"), f);
            b.refine.visit(&join(&p, "refine"), f);
        }
        self.gem.visit(&join(prefix, "gem"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.reduce.visit_mut(&join(&p, "reduce"), f);
            b.refine.visit_mut(&join(&p, "refine"), f);
        }
        self.gem.visit_mut(&join(prefix, "gem"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
