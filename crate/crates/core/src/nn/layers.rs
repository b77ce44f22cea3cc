//! Stateful layers: parameters with gradients plus the activations cached
//! by a training forward pass. `forward` is the side-effect-free eval path;
//! `forward_train` caches inputs for `backward`.

use rand::Rng;

use super::ops::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, conv1d, conv1d_backward, conv2d,
    conv2d_backward, gem_pool, gem_pool_backward, linear, linear_backward, relu, relu_backward,
    update_running_stats, BnCache, ConvGeom, BN_EPS,
};
use super::{NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Persisted but not optimized (running statistics, frozen exponents).
    Buffer,
}

/// Anything that owns named tensors.
pub trait Module<T: Real> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, t, _| t.zero_grad());
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t, k| {
            if k == ParamKind::Trainable {
                n += t.numel()
            }
        });
        n
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn uniform<T: Real, R: Rng + ?Sized>(n: usize, bound: f64, rng: &mut R) -> Vec<T> {
    (0..n).map(|_| T::c(rng.random_range(-bound..bound))).collect()
}

fn take_cache<C>(slot: &mut Option<C>, layer: &str) -> Result<C, NnError> {
    slot.take()
        .ok_or_else(|| NnError::InvalidArgument(format!("{layer}: backward without forward_train")))
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub geom: ConvGeom,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    /// Kaiming-uniform weights for a ReLU network.
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        Self {
            weight: Tensor::param(&[out_ch, in_ch, kernel, kernel], uniform(out_ch * fan_in, bound, rng)),
            bias: with_bias.then(|| Tensor::param(&[out_ch], vec![T::zero(); out_ch])),
            geom: ConvGeom::square(stride, pad),
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        conv2d(x, &self.weight, self.bias.as_ref(), self.geom)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.forward(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>, NnError> {
        let x = take_cache(&mut self.cache, "conv2d")?;
        let g = conv2d_backward(&x, &self.weight, dy, self.geom, need_dx)?;
        accumulate(self.weight.grad_mut(), &g.dkernel);
        if let Some(b) = self.bias.as_mut() {
            accumulate(b.grad_mut(), &g.dbias);
        }
        Ok(g.dx)
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        f(&join(prefix, "weight"), &self.weight, ParamKind::Trainable);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b, ParamKind::Trainable);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        f(&join(prefix, "weight"), &mut self.weight, ParamKind::Trainable);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b, ParamKind::Trainable);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub pad: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv1d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        Self {
            weight: Tensor::param(&[out_ch, in_ch, kernel], uniform(out_ch * fan_in, bound, rng)),
            bias: with_bias.then(|| Tensor::param(&[out_ch], vec![T::zero(); out_ch])),
            stride,
            pad,
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        conv1d(x, &self.weight, self.bias.as_ref(), self.stride, self.pad)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.forward(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>, NnError> {
        let x = take_cache(&mut self.cache, "conv1d")?;
        let g = conv1d_backward(&x, &self.weight, dy, self.stride, self.pad, need_dx)?;
        accumulate(self.weight.grad_mut(), &g.dkernel);
        if let Some(b) = self.bias.as_mut() {
            accumulate(b.grad_mut(), &g.dbias);
        }
        Ok(g.dx)
    }
}

impl<T: Real> Module<T> for Conv1d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        f(&join(prefix, "weight"), &self.weight, ParamKind::Trainable);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b, ParamKind::Trainable);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        f(&join(prefix, "weight"), &mut self.weight, ParamKind::Trainable);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b, ParamKind::Trainable);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::param(&[channels], vec![T::one(); channels]),
            beta: Tensor::param(&[channels], vec![T::zero(); channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        batchnorm_eval(x, &self.gamma, &self.beta, &self.running_mean, &self.running_var, BN_EPS)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (y, cache) = batchnorm_train(x, &self.gamma, &self.beta, BN_EPS)?;
        let count = x.numel() / x.dim(1);
        update_running_stats(
            self.running_mean.data_mut(),
            self.running_var.data_mut(),
            &cache,
            count,
        );
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = take_cache(&mut self.cache, "batchnorm")?;
        let (dx, dg, db) = batchnorm_backward(dy, &cache, &self.gamma)?;
        accumulate(self.gamma.grad_mut(), &dg);
        accumulate(self.beta.grad_mut(), &db);
        Ok(dx)
    }
}

impl<T: Real> Module<T> for BatchNorm<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        f(&join(prefix, "gamma"), &self.gamma, ParamKind::Trainable);
        f(&join(prefix, "beta"), &self.beta, ParamKind::Trainable);
        f(&join(prefix, "running_mean"), &self.running_mean, ParamKind::Buffer);
        f(&join(prefix, "running_var"), &self.running_var, ParamKind::Buffer);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        f(&join(prefix, "gamma"), &mut self.gamma, ParamKind::Trainable);
        f(&join(prefix, "beta"), &mut self.beta, ParamKind::Trainable);
        f(&join(prefix, "running_mean"), &mut self.running_mean, ParamKind::Buffer);
        f(&join(prefix, "running_var"), &mut self.running_var, ParamKind::Buffer);
    }
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    /// Uniform `±1/√fan_in` weights, zero bias.
    pub fn new<R: Rng + ?Sized>(din: usize, dout: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (din as f64).sqrt();
        Self {
            weight: Tensor::param(&[dout, din], uniform(din * dout, bound, rng)),
            bias: Tensor::param(&[dout], vec![T::zero(); dout]),
            cache: None,
        }
    }

    pub fn zeros(din: usize, dout: usize) -> Self {
        Self {
            weight: Tensor::param(&[dout, din], vec![T::zero(); din * dout]),
            bias: Tensor::param(&[dout], vec![T::zero(); dout]),
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        linear(x, &self.weight, &self.bias)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.forward(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = take_cache(&mut self.cache, "linear")?;
        let (dx, dw, db) = linear_backward(&x, &self.weight, dy)?;
        accumulate(self.weight.grad_mut(), &dw);
        accumulate(self.bias.grad_mut(), &db);
        Ok(dx)
    }
}

impl<T: Real> Module<T> for Linear<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        f(&join(prefix, "weight"), &self.weight, ParamKind::Trainable);
        f(&join(prefix, "bias"), &self.bias, ParamKind::Trainable);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        f(&join(prefix, "weight"), &mut self.weight, ParamKind::Trainable);
        f(&join(prefix, "bias"), &mut self.bias, ParamKind::Trainable);
    }
}

/// GeM pooling with a single exponent shared across channels.
#[derive(Debug, Clone)]
pub struct Gem<T> {
    pub p: Tensor<T>,
    pub learnable: bool,
    cache: Option<Tensor<T>>,
}

pub const GEM_INIT_P: f64 = 3.0;

impl<T: Real> Gem<T> {
    pub fn new(learnable: bool) -> Self {
        Self {
            p: Tensor::param(&[1], vec![T::c(GEM_INIT_P)]),
            learnable,
            cache: None,
        }
    }

    pub fn exponent(&self) -> T {
        self.p.data()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        gem_pool(x, self.exponent())
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.forward(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = take_cache(&mut self.cache, "gem")?;
        let (dx, dp) = gem_pool_backward(&x, self.exponent(), dy)?;
        if self.learnable {
            self.p.grad_mut()[0] += dp;
        }
        Ok(dx)
    }
}

impl<T: Real> Module<T> for Gem<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        let kind = if self.learnable { ParamKind::Trainable } else { ParamKind::Buffer };
        f(&join(prefix, "p"), &self.p, kind);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        let kind = if self.learnable { ParamKind::Trainable } else { ParamKind::Buffer };
        f(&join(prefix, "p"), &mut self.p, kind);
    }
}

/// conv → batch norm → ReLU, the unit both backbones are built from.
#[derive(Debug, Clone)]
pub struct ConvBnRelu<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
    out_cache: Option<Tensor<T>>,
}

impl<T: Real> ConvBnRelu<T> {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, stride: usize, rng: &mut R) -> Self {
        Self {
            conv: Conv2d::new(in_ch, out_ch, 3, stride, 1, false, rng),
            bn: BatchNorm::new(out_ch),
            out_cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(relu(&self.bn.forward(&self.conv.forward(x)?)?))
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = relu(&self.bn.forward_train(&self.conv.forward_train(x)?)?);
        self.out_cache = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>, NnError> {
        let y = take_cache(&mut self.out_cache, "conv_bn_relu")?;
        let d = self.bn.backward(&relu_backward(&y, dy))?;
        self.conv.backward(&d, need_dx)
    }
}

impl<T: Real> Module<T> for ConvBnRelu<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}

fn accumulate<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
