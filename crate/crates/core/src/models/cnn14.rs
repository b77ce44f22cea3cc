use rand::Rng;

use super::wavegram::{stack_backward_wavegram, stack_with_logmel};
use super::{spec_batch, wave_batch, ModelError, WavegramFrontEnd};
use crate::audio_io::{AudioClip, Stage2Tap};
use crate::features::LogMelSpectrogram;
use crate::nn::ops::{
    avg_pool2, avg_pool2_backward, global_avg_pool, global_avg_pool_backward, relu, relu_backward,
};
use crate::nn::{join, ConvBnRelu, Gem, Linear, Module, NnError, ParamKind, Real, Tensor};

pub const CNN14_WIDTHS: [usize; 6] = [16, 32, 64, 128, 128, 128];
pub const NUM_PROXY_TAGS: usize = 4;
const EMBEDDING_DIM: usize = 64;

#[derive(Debug, Clone)]
struct Cnn14Block<T> {
    a: ConvBnRelu<T>,
    b: ConvBnRelu<T>,
    pre_pool: Option<Vec<usize>>,
}

impl<T: Real> Cnn14Block<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        avg_pool2(&self.b.forward(&self.a.forward(x)?)?)
    }

    fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let h = self.b.forward_train(&self.a.forward_train(x)?)?;
        self.pre_pool = Some(h.shape().to_vec());
        avg_pool2(&h)
    }

    fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>, NnError> {
        let shape = self
            .pre_pool
            .take()
            .ok_or_else(|| NnError::InvalidArgument("cnn14 block: backward without forward_train".into()))?;
        let d = self.b.backward(&avg_pool2_backward(&shape, dy), true)?.expect("dx requested");
        self.a.backward(&d, need_dx)
    }
}

/// Block-6 map shape, cached embedding, and whether a waveform was used.
type TrainCache<T> = (Vec<usize>, Tensor<T>, bool);

/// Stage-2 audio-pattern backbone: optional wavegram channel, six conv
/// blocks, and two read-out taps. The proxy head is only used while
/// pretraining.
#[derive(Debug, Clone)]
pub struct MiniCNN14<T> {
    wavegram: Option<WavegramFrontEnd<T>>,
    blocks: Vec<Cnn14Block<T>>,
    block6_gem: Gem<T>,
    fc: Linear<T>,
    proxy_head: Linear<T>,
    frozen: bool,
    cache: Option<TrainCache<T>>,
}

impl<T: Real> MiniCNN14<T> {
    pub fn new<R: Rng + ?Sized>(with_wavegram: bool, rng: &mut R) -> Self {
        let wavegram = with_wavegram.then(|| WavegramFrontEnd::new(rng));
        let mut cin = if with_wavegram { 2 } else { 1 };
        let blocks = CNN14_WIDTHS
            .iter()
            .map(|&w| {
                let b = Cnn14Block {
                    a: ConvBnRelu::new(cin, w, 1, rng),
                    b: ConvBnRelu::new(w, w, 1, rng),
                    pre_pool: None,
                };
                cin = w;
                b
            })
            .collect();
        Self {
            wavegram,
            blocks,
            block6_gem: Gem::new(false),
            fc: Linear::new(CNN14_WIDTHS[5], EMBEDDING_DIM, rng),
            proxy_head: Linear::new(EMBEDDING_DIM, NUM_PROXY_TAGS, rng),
            frozen: false,
            cache: None,
        }
    }

    pub fn has_wavegram(&self) -> bool {
        self.wavegram.is_some()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn check_wave(&self, wave: Option<&Tensor<T>>) -> Result<(), ModelError> {
        match (self.has_wavegram(), wave.is_some()) {
            (true, false) => Err(ModelError::TapMismatch("this backbone needs a wavegram waveform".into())),
            (false, true) => Err(ModelError::TapMismatch("this backbone takes no waveform".into())),
            _ => Ok(()),
        }
    }

    fn input(&self, spec: &Tensor<T>, wave: Option<&Tensor<T>>) -> Result<Tensor<T>, ModelError> {
        self.check_wave(wave)?;
        match (&self.wavegram, wave) {
            (Some(fe), Some(w)) => {
                let wg = fe.forward(w, spec.dim(3))?;
                Ok(stack_with_logmel(spec, &wg)?)
            }
            _ => Ok(spec.clone()),
        }
    }

    fn trunk(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        Ok(h)
    }

    fn embedding(&self, block6: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(relu(&self.fc.forward(&global_avg_pool(block6)?)?))
    }

    /// Eval-mode tap read-out for `[N, 1, mels, frames]` spectrograms and,
    /// when the backbone has a wavegram branch, `[N, 1, samples]` waveforms.
    pub fn embed_batch(
        &self,
        spec: &Tensor<T>,
        wave: Option<&Tensor<T>>,
        tap: Stage2Tap,
    ) -> Result<Tensor<T>, ModelError> {
        let h = self.trunk(&self.input(spec, wave)?)?;
        Ok(match tap {
            Stage2Tap::ConvBlock6Gem => self.block6_gem.forward(&h)?,
            Stage2Tap::EmbeddingLayer => self.embedding(&h)?,
        })
    }

    /// Single-clip tap read-out.
    pub fn cnn14_forward(
        &self,
        spec: &LogMelSpectrogram,
        wave: Option<&AudioClip>,
        tap: Stage2Tap,
    ) -> Result<Vec<T>, ModelError> {
        let x = spec_batch(&[spec], 1)?;
        let w = wave.map(|c| wave_batch(&[c])).transpose()?;
        Ok(self.embed_batch(&x, w.as_ref(), tap)?.into_data())
    }

    /// Eval-mode proxy-tag logits `[N, tags]`.
    pub fn proxy_logits(&self, spec: &Tensor<T>, wave: Option<&Tensor<T>>) -> Result<Tensor<T>, ModelError> {
        let h = self.trunk(&self.input(spec, wave)?)?;
        Ok(self.proxy_head.forward(&self.embedding(&h)?)?)
    }

    /// Train-mode proxy-tag logits. Fails once the backbone is frozen.
    pub fn forward_train(&mut self, spec: &Tensor<T>, wave: Option<&Tensor<T>>) -> Result<Tensor<T>, ModelError> {
        if self.frozen {
            return Err(ModelError::Nn(NnError::InvalidArgument("backbone is frozen".into())));
        }
        self.check_wave(wave)?;
        let frames = spec.dim(3);
        let x = match (&mut self.wavegram, wave) {
            (Some(fe), Some(w)) => stack_with_logmel(spec, &fe.forward_train(w, frames)?)?,
            _ => spec.clone(),
        };
        let mut h = x;
        for b in &mut self.blocks {
            h = b.forward_train(&h)?;
        }
        let block6_shape = h.shape().to_vec();
        let emb = relu(&self.fc.forward_train(&global_avg_pool(&h)?)?);
        let logits = self.proxy_head.forward_train(&emb)?;
        self.cache = Some((block6_shape, emb, wave.is_some()));
        Ok(logits)
    }

    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<(), ModelError> {
        let (block6_shape, emb, with_wave) = self
            .cache
            .take()
            .ok_or_else(|| NnError::InvalidArgument("cnn14: backward without forward_train".into()))?;
        let demb = self.proxy_head.backward(dlogits)?;
        let dgap = self.fc.backward(&relu_backward(&emb, &demb))?;
        let mut d = global_avg_pool_backward(&block6_shape, &dgap);
        for (i, b) in self.blocks.iter_mut().enumerate().rev() {
            if let Some(dx) = b.backward(&d, i > 0 || with_wave)? {
                d = dx;
            }
        }
        if let (true, Some(fe)) = (with_wave, self.wavegram.as_mut()) {
            fe.backward(&stack_backward_wavegram(&d))?;
        }
        Ok(())
    }
}

impl<T: Real> Module<T> for MiniCNN14<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        let frozen = self.frozen;
        let mut g = |n: &str, t: &Tensor<T>, k: ParamKind| {
            f(n, t, if frozen { ParamKind::Buffer } else { k })
        };
        if let Some(fe) = &self.wavegram {
            fe.visit(&join(prefix, "wavegram"), &mut g);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.a.visit(&join(&p, "a"), &mut g);
            b.b.visit(&join(&p, "b"), &mut g);
        }
        self.block6_gem.visit(&join(prefix, "block6_gem"), &mut g);
        self.fc.visit(&join(prefix, "fc"), &mut g);
        self.proxy_head.visit(&join(prefix, "proxy_head"), &mut g);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        let frozen = self.frozen;
        let mut g = |n: &str, t: &mut Tensor<T>, k: ParamKind| {
            f(n, t, if frozen { ParamKind::Buffer } else { k })
        };
        if let Some(fe) = &mut self.wavegram {
            fe.visit_mut(&join(prefix, "wavegram"), &mut g);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.a.visit_mut(&join(&p, "a"), &mut g);
            b.b.visit_mut(&join(&p, "b"), &mut g);
        }
        self.block6_gem.visit_mut(&join(prefix, "block6_gem"), &mut g);
        self.fc.visit_mut(&join(prefix, "fc"), &mut g);
        self.proxy_head.visit_mut(&join(prefix, "proxy_head"), &mut g);
    }
}
