use rand::Rng;

use super::{ModelError, EMBEDDING1_DIM};
use crate::nn::{join, Linear, Module, NnError, ParamKind, Real, Tensor};

/// Single affine layer over `concat(e1, e2)`.
#[derive(Debug, Clone)]
pub struct FusionHead<T> {
    pub linear: Linear<T>,
}

impl<T: Real> FusionHead<T> {
    pub fn new<R: Rng + ?Sized>(e2_dim: usize, rng: &mut R) -> Self {
        Self {
            linear: Linear::new(EMBEDDING1_DIM + e2_dim, 1, rng),
        }
    }

    pub fn zeros(e2_dim: usize) -> Self {
        Self {
            linear: Linear::zeros(EMBEDDING1_DIM + e2_dim, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.linear.in_dim()
    }

    pub fn e2_dim(&self) -> usize {
        self.input_dim() - EMBEDDING1_DIM
    }

    /// Concatenates one pair of embeddings into a `[1, 64 + d2]` row.
    pub fn concat(&self, e1: &[T], e2: &[T]) -> Result<Tensor<T>, ModelError> {
        if e1.len() != EMBEDDING1_DIM {
            return Err(ModelError::DimMismatch {
                expected: EMBEDDING1_DIM,
                got: e1.len(),
            });
        }
        if e2.len() != self.e2_dim() {
            return Err(ModelError::DimMismatch {
                expected: self.e2_dim(),
                got: e2.len(),
            });
        }
        let row = e1.iter().chain(e2).copied().collect();
        Ok(Tensor::from_vec(&[1, self.input_dim()], row)?)
    }

    pub fn fuse_forward(&self, e1: &[T], e2: &[T]) -> Result<T, ModelError> {
        let x = self.concat(e1, e2)?;
        Ok(self.linear.forward(&x)?.data()[0])
    }

    /// Logits `[N, 1]` for a `[N, 64 + d2]` batch.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.linear.forward(x)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.linear.forward_train(x)
    }

    /// Returns the gradient with respect to the fused input.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.linear.backward(dlogits)
    }
}

impl<T: Real> Module<T> for FusionHead<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>, ParamKind)) {
        self.linear.visit(&join(prefix, "linear"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>, ParamKind)) {
        self.linear.visit_mut(&join(prefix, "linear"), f);
    }
}
