use rand::Rng;

use crate::nn::ops::{adaptive_avg_pool1d, adaptive_avg_pool1d_backward, relu, relu_backward};
use crate::nn::{join, BatchNorm, Conv1d, Module, NnError, ParamKind, Real, Tensor};

pub const WAVEGRAM_BINS: usize = 32;
const PRE_KERNEL: usize = 11;
const PRE_STRIDE: usize = 5;
const BLOCK_STRIDE: usize = 4;
const N_BLOCKS: usize = 3;

#[derive(Debug, Clone)]
struct WaveBlock<T> {
    conv: Conv1d<T>,
    bn: BatchNorm<T>,
    out_cache: Option<Tensor<T>>,
}

/// Learned 1-D front end over the raw stage-2 waveform. Produces a
/// `[N, 32, frames]` map aligned to the log-mel frame grid.
#[derive(Debug, Clone)]
pub struct WavegramFrontEnd<T> {
    pre: Conv1d<T>,
    blocks: Vec<WaveBlock<T>>,
    raw_shape: Option<Vec<usize>>,
}

impl<T: Real> WavegramFrontEnd<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let pre = Conv1d::new(1, WAVEGRAM_BINS, PRE_KERNEL, PRE_STRIDE, PRE_KERNEL / 2, true, rng);
        let blocks = (0..N_BLOCKS)
            .map(|_| WaveBlock {
                conv: Conv1d::new(WAVEGRAM_BINS, WAVEGRAM_BINS, 3, BLOCK_STRIDE, 1, false, rng),
                bn: BatchNorm::new(WAVEGRAM_BINS),
                out_cache: None,
            })
            .collect();
        Self {
            pre,
            blocks,
            raw_shape: None,
        }
    }

    /// Native (unaligned) length of the front-end output for `len` samples.
    pub fn native_frames(len: usize) -> usize {
        let mut l = (len + 2 * (PRE_KERNEL / 2) - PRE_KERNEL) / PRE_STRIDE + 1;
        for _ in 0..N_BLOCKS {
            l = (l + 2 - 3) / BLOCK_STRIDE + 1;
        }
        l
    }

    fn check(wave: &Tensor<T>) -> Result<(), NnError> {
        if wave.ndim() != 3 || wave.dim(1) != 1 || wave.dim(2) < PRE_KERNEL / 2 + 1 {
            return Err(NnError::ShapeMismatch(format!(
                "wavegram wants [N, 1, L >= {}], got {:?}",
                PRE_KERNEL / 2 + 1,
                wave.shape()
            )));
        }
        Ok(())
    }

    /// `[N, 1, L]` waveform → `[N, 32, frames]`.
    pub fn forward(&self, wave: &Tensor<T>, frames: usize) -> Result<Tensor<T>, NnError> {
        Self::check(wave)?;
        let mut h = self.pre.forward(wave)?;
        for b in &self.blocks {
            h = relu(&b.bn.forward(&b.conv.forward(&h)?)?);
        }
        adaptive_avg_pool1d(&h, frames)
    }

    pub fn forward_train(&mut self, wave: &Tensor<T>, frames: usize) -> Result<Tensor<T>, NnError> {
        Self::check(wave)?;
        let mut h = self.pre.forward_train(wave)?;
        for b in &mut self.blocks {
            h = relu(&b.bn.forward_train(&b.conv.forward_train(&h)?)?);
            b.out_cache = Some(h.clone());
        }
        self.raw_shape = Some(h.shape().to_vec());
        adaptive_avg_pool1d(&h, frames)
    }

    /// Parameter gradients from `dL/d(aligned map)`; the waveform gradient
    /// is not needed.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<(), NnError> {
        let shape = self
            .raw_shape
            .take()
            .ok_or_else(|| NnError::InvalidArgument("wavegram: backward without forward_train".into()))?;
        let mut d = adaptive_avg_pool1d_backward(&shape, dy);
        for b in self.blocks.iter_mut().rev() {
            let y = b
                .out_cache
                .take()
                .ok_or_else(|| NnError::InvalidArgument("wavegram block cache".into()))?;
            d = b.bn.backward(&relu_backward(&y, &d))?;
            d = b.conv.backward(&d, true)?.expect("dx requested");
        }
        self.pre.backward(&d, false)?;
        Ok(())
    }
}

impl<T: Real> Module<T> for WavegramFrontEnd<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        self.pre.visit(&join(prefix, "pre"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.conv.visit(&join(&p, "conv"), f);
            b.bn.visit(&join(&p, "bn"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.pre.visit_mut(&join(prefix, "pre"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.conv.visit_mut(&join(&p, "conv"), f);
            b.bn.visit_mut(&join(&p, "bn"), f);
        }
    }
}

/// Row `r` of an `m`-row map draws from pseudo-bin `⌊r·32/m⌋`.
pub fn bin_for_row(r: usize, mel_bins: usize) -> usize {
    r * WAVEGRAM_BINS / mel_bins
}

/// Stacks a `[N, 1, M, T]` log-mel batch with a `[N, 32, T]` wavegram into
/// `[N, 2, M, T]`, spreading each pseudo-bin over its mel rows.
pub fn stack_with_logmel<T: Real>(logmel: &Tensor<T>, wg: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, m, t) = (logmel.dim(0), logmel.dim(2), logmel.dim(3));
    if logmel.dim(1) != 1 || wg.shape() != [n, WAVEGRAM_BINS, t] {
        return Err(NnError::ShapeMismatch(format!(
            "cannot stack log-mel {:?} with wavegram {:?}",
            logmel.shape(),
            wg.shape()
        )));
    }
    let mut out = vec![T::zero(); n * 2 * m * t];
    let (lm, w) = (logmel.data(), wg.data());
    for b in 0..n {
        let dst = &mut out[b * 2 * m * t..(b + 1) * 2 * m * t];
        dst[..m * t].copy_from_slice(&lm[b * m * t..(b + 1) * m * t]);
        for r in 0..m {
            let c = bin_for_row(r, m);
            let src = &w[(b * WAVEGRAM_BINS + c) * t..(b * WAVEGRAM_BINS + c + 1) * t];
            dst[m * t + r * t..m * t + (r + 1) * t].copy_from_slice(src);
        }
    }
    Tensor::from_vec(&[n, 2, m, t], out)
}

/// Gradient of [`stack_with_logmel`] with respect to the wavegram input.
pub fn stack_backward_wavegram<T: Real>(dx: &Tensor<T>) -> Tensor<T> {
    let (n, m, t) = (dx.dim(0), dx.dim(2), dx.dim(3));
    let mut g = vec![T::zero(); n * WAVEGRAM_BINS * t];
    let d = dx.data();
    for b in 0..n {
        for r in 0..m {
            let c = bin_for_row(r, m);
            let src = &d[((b * 2 + 1) * m + r) * t..((b * 2 + 1) * m + r + 1) * t];
            let dst = &mut g[(b * WAVEGRAM_BINS + c) * t..(b * WAVEGRAM_BINS + c + 1) * t];
            for (o, &v) in dst.iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    Tensor::from_vec(&[n, WAVEGRAM_BINS, t], g).expect("consistent shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn native_frames_matches_forward() {
        let fe = WavegramFrontEnd::<f32>::new(&mut ChaCha8Rng::seed_from_u64(0));
        for len in [6, 100, 3200, 16000] {
            let x = Tensor::full(&[1, 1, len], 0.1f32);
            let mut h = fe.pre.forward(&x).unwrap();
            for b in &fe.blocks {
                h = b.conv.forward(&h).unwrap();
            }
            assert_eq!(h.dim(2), WavegramFrontEnd::<f32>::native_frames(len), "len {len}");
        }
    }

    #[test]
    fn aligned_to_requested_frames() {
        let fe = WavegramFrontEnd::<f32>::new(&mut ChaCha8Rng::seed_from_u64(0));
        let x = Tensor::full(&[2, 1, 16000], 0.1f32);
        let y = fe.forward(&x, 32).unwrap();
        assert_eq!(y.shape(), &[2, WAVEGRAM_BINS, 32]);
    }

    #[test]
    fn row_mapping_covers_every_bin() {
        for m in [32, 64, 128, 256] {
            let mut seen = [false; WAVEGRAM_BINS];
            for r in 0..m {
                seen[bin_for_row(r, m)] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }
}
