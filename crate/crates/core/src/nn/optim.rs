use super::{Module, ParamKind, Real};

/// Applies one update to every trainable tensor of a module, then clears
/// the gradients. Implementations keep per-parameter state in visit order.
pub trait Optimizer<T: Real> {
    fn step(&mut self, model: &mut dyn Module<T>, lr: f64);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
pub fn adam_update<T: Real>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    lr: f64,
    hp: &AdamHyper,
) {
    let (b1, b2) = (T::c(hp.beta1), T::c(hp.beta2));
    let c1 = T::c(1.0 - hp.beta1.powi(t as i32));
    let c2 = T::c(1.0 - hp.beta2.powi(t as i32));
    let (lr, eps) = (T::c(lr), T::c(hp.eps));
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        param[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub hyper: AdamHyper,
    t: u64,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(hyper: AdamHyper) -> Self {
        Self {
            hyper,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl<T: Real> Default for Adam<T> {
    fn default() -> Self {
        Self::new(AdamHyper::default())
    }
}

impl<T: Real> Optimizer<T> for Adam<T> {
    fn step(&mut self, model: &mut dyn Module<T>, lr: f64) {
        self.t += 1;
        let t = self.t;
        let hyper = self.hyper;
        let moments = &mut self.moments;
        let mut idx = 0;
        model.visit_mut("", &mut |_, tensor, kind| {
            if kind != ParamKind::Trainable {
                return;
            }
            let n = tensor.numel();
            if moments.len() <= idx {
                moments.push((vec![T::zero(); n], vec![T::zero(); n]));
            }
            let (m, v) = &mut moments[idx];
            assert_eq!(m.len(), n, "parameter {idx} changed size between steps");
            let (value, grad) = tensor.value_and_grad_mut();
            adam_update(value, grad, m, v, t, lr, &hyper);
            grad.fill(T::zero());
            idx += 1;
        });
    }
}
