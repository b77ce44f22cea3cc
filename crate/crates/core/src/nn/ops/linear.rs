use crate::nn::{gemm, NnError, Real, Tensor};

/// `y[N, out] = x[N, in] · wᵀ + b` with `w` stored `[out, in]`.
pub fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1) || b.numel() != w.dim(0) {
        return Err(NnError::ShapeMismatch(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let (n, din, dout) = (x.dim(0), x.dim(1), w.dim(0));
    let mut y = vec![T::zero(); n * dout];
    for row in y.chunks_exact_mut(dout) {
        row.copy_from_slice(b.data());
    }
    gemm(n, din, dout, x.data(), false, w.data(), true, T::one(), &mut y);
    Tensor::from_vec(&[n, dout], y)
}

/// Returns `(dx, dw, db)`.
pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>), NnError> {
    let (n, din, dout) = (x.dim(0), x.dim(1), w.dim(0));
    if dy.shape() != [n, dout] {
        return Err(NnError::ShapeMismatch("linear upstream gradient shape".into()));
    }
    let mut dw = vec![T::zero(); dout * din];
    gemm(dout, n, din, dy.data(), true, x.data(), false, T::zero(), &mut dw);
    let mut db = vec![T::zero(); dout];
    for row in dy.data().chunks_exact(dout) {
        for (d, &g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dx = vec![T::zero(); n * din];
    gemm(n, dout, din, dy.data(), false, w.data(), false, T::zero(), &mut dx);
    Ok((Tensor::from_vec(x.shape(), dx)?, dw, db))
}
