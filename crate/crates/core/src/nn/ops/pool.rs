use crate::nn::{NnError, Real, Tensor};

/// Activations are clamped to this floor before GeM exponentiation.
pub const GEM_CLAMP: f64 = 1e-6;

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU with respect to its input, given the forward *output*.
pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(dy.shape(), data).expect("same shape")
}

fn split_nc<T: Real>(x: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
    if x.ndim() < 3 {
        return Err(NnError::ShapeMismatch(format!(
            "pooling wants [N, C, ...], got {:?}",
            x.shape()
        )));
    }
    let s: usize = x.shape()[2..].iter().product();
    if s == 0 {
        return Err(NnError::ShapeMismatch("pooling over an empty map".into()));
    }
    Ok((x.dim(0), x.dim(1), s))
}

/// Generalized-mean pooling over all trailing axes:
/// `out[n,c] = (mean(max(x, 1e-6)^p))^(1/p)`.
///
/// Evaluated as `max · (mean((x/max)^p))^(1/p)` so large `p` cannot
/// overflow or underflow.
pub fn gem_pool<T: Real>(x: &Tensor<T>, p: T) -> Result<Tensor<T>, NnError> {
    let (n, c, s) = split_nc(x)?;
    if p <= T::zero() {
        return Err(NnError::InvalidArgument(format!("GeM exponent {p:?} must be positive")));
    }
    let floor = T::c(GEM_CLAMP);
    let inv_s = T::one() / T::c(s as f64);
    let out: Vec<T> = x
        .data()
        .chunks_exact(s)
        .map(|cell| {
            let mx = cell.iter().fold(floor, |m, &v| m.max(v));
            let a = cell.iter().map(|&v| (v.max(floor) / mx).powf(p)).sum::<T>() * inv_s;
            mx * a.powf(T::one() / p)
        })
        .collect();
    Tensor::from_vec(&[n, c], out)
}

/// Returns `(dx, dp)` for [`gem_pool`].
pub fn gem_pool_backward<T: Real>(
    x: &Tensor<T>,
    p: T,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, T), NnError> {
    let (n, c, s) = split_nc(x)?;
    if dy.shape() != [n, c] {
        return Err(NnError::ShapeMismatch("GeM upstream gradient shape".into()));
    }
    let floor = T::c(GEM_CLAMP);
    let inv_s = T::one() / T::c(s as f64);
    let mut dx = vec![T::zero(); x.numel()];
    let mut dp = T::zero();
    for (idx, (cell, dcell)) in x.data().chunks_exact(s).zip(dx.chunks_exact_mut(s)).enumerate() {
        let g = dy.data()[idx];
        let mx = cell.iter().fold(floor, |m, &v| m.max(v));
        let mut a = T::zero();
        let mut wlog = T::zero();
        for &v in cell {
            let xc = v.max(floor);
            let r = (xc / mx).powf(p);
            a += r;
            wlog += r * xc.ln();
        }
        a *= inv_s;
        wlog *= inv_s;
        let out = mx * a.powf(T::one() / p);
        // d out / d x_i = A^(1/p - 1) (x_i/max)^(p-1) / S
        let k = a.powf(T::one() / p - T::one()) * inv_s;
        for (d, &v) in dcell.iter_mut().zip(cell) {
            if v >= floor {
                *d = g * k * (v / mx).powf(p - T::one());
            }
        }
        let ln_a_raw = p * mx.ln() + a.ln();
        dp += g * out * (wlog / (a * p) - ln_a_raw / (p * p));
    }
    Ok((Tensor::from_vec(x.shape(), dx)?, dp))
}

/// Mean over all trailing axes: `[N, C, ...] → [N, C]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, c, s) = split_nc(x)?;
    let inv = T::one() / T::c(s as f64);
    let out = x.data().chunks_exact(s).map(|cell| cell.iter().copied().sum::<T>() * inv).collect();
    Tensor::from_vec(&[n, c], out)
}

pub fn global_avg_pool_backward<T: Real>(x_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let s: usize = x_shape[2..].iter().product();
    let inv = T::one() / T::c(s as f64);
    let data = dy.data().iter().flat_map(|&g| std::iter::repeat_n(g * inv, s)).collect();
    Tensor::from_vec(x_shape, data).expect("pool shape")
}

fn pool_kernel(d: usize) -> usize {
    if d >= 2 {
        2
    } else {
        1
    }
}

/// 2×2 average pooling with stride 2 on `[N, C, H, W]`; an axis of length 1
/// is left as is.
pub fn avg_pool2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if x.ndim() != 4 {
        return Err(NnError::ShapeMismatch(format!("avg_pool2 wants 4-d, got {:?}", x.shape())));
    }
    let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (kh, kw) = (pool_kernel(h), pool_kernel(w));
    let (ho, wo) = (h / kh, w / kw);
    let inv = T::one() / T::c((kh * kw) as f64);
    let mut out = vec![T::zero(); n * c * ho * wo];
    for (plane, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(ho * wo)) {
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = T::zero();
                for i in 0..kh {
                    for j in 0..kw {
                        acc += plane[(oh * kh + i) * w + ow * kw + j];
                    }
                }
                dst[oh * wo + ow] = acc * inv;
            }
        }
    }
    Tensor::from_vec(&[n, c, ho, wo], out)
}

pub fn avg_pool2_backward<T: Real>(x_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x_shape[2], x_shape[3]);
    let (kh, kw) = (pool_kernel(h), pool_kernel(w));
    let (ho, wo) = (h / kh, w / kw);
    let inv = T::one() / T::c((kh * kw) as f64);
    let mut dx = vec![T::zero(); x_shape.iter().product()];
    for (plane, src) in dx.chunks_exact_mut(h * w).zip(dy.data().chunks_exact(ho * wo)) {
        for oh in 0..ho {
            for ow in 0..wo {
                let g = src[oh * wo + ow] * inv;
                for i in 0..kh {
                    for j in 0..kw {
                        plane[(oh * kh + i) * w + ow * kw + j] += g;
                    }
                }
            }
        }
    }
    Tensor::from_vec(x_shape, dx).expect("pool shape")
}

/// Index range averaged into output step `j` of an adaptive pool from
/// `len` inputs to `out` outputs.
pub fn adaptive_window(j: usize, len: usize, out: usize) -> (usize, usize) {
    let start = j * len / out;
    let end = ((j + 1) * len).div_ceil(out);
    (start, end.max(start + 1).min(len))
}

/// Adaptive average pooling along the last axis of `[N, C, L] → [N, C, out]`.
pub fn adaptive_avg_pool1d<T: Real>(x: &Tensor<T>, out: usize) -> Result<Tensor<T>, NnError> {
    if x.ndim() != 3 || x.dim(2) == 0 || out == 0 {
        return Err(NnError::ShapeMismatch(format!(
            "adaptive pool wants non-empty [N, C, L] and out > 0, got {:?} -> {out}",
            x.shape()
        )));
    }
    let len = x.dim(2);
    let mut y = vec![T::zero(); x.dim(0) * x.dim(1) * out];
    for (row, dst) in x.data().chunks_exact(len).zip(y.chunks_exact_mut(out)) {
        for (j, d) in dst.iter_mut().enumerate() {
            let (a, b) = adaptive_window(j, len, out);
            *d = row[a..b].iter().copied().sum::<T>() / T::c((b - a) as f64);
        }
    }
    Tensor::from_vec(&[x.dim(0), x.dim(1), out], y)
}

pub fn adaptive_avg_pool1d_backward<T: Real>(x_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let len = x_shape[2];
    let out = dy.dim(2);
    let mut dx = vec![T::zero(); x_shape.iter().product()];
    for (row, src) in dx.chunks_exact_mut(len).zip(dy.data().chunks_exact(out)) {
        for (j, &g) in src.iter().enumerate() {
            let (a, b) = adaptive_window(j, len, out);
            let share = g / T::c((b - a) as f64);
            row[a..b].iter_mut().for_each(|v| *v += share);
        }
    }
    Tensor::from_vec(x_shape, dx).expect("pool shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gem_p1_is_mean() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![0.5, 1.5, 2.0, 4.0]).unwrap();
        assert!((gem_pool(&x, 1.0).unwrap().data()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gem_hand_value() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let v = gem_pool(&x, 3.0).unwrap().data()[0];
        assert!((v - 4.5f64.cbrt()).abs() < 1e-12);
        assert!((v - 1.6510).abs() < 1e-4);
    }

    #[test]
    fn gem_clamps_negatives() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 1, 2], vec![-5.0, -1.0]).unwrap();
        let v = gem_pool(&x, 3.0).unwrap().data()[0];
        assert!((v - GEM_CLAMP).abs() < 1e-15);
        assert!(gem_pool(&x, 0.0).is_err());
    }

    #[test]
    fn avg_pool_keeps_unit_axes() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3, 1], vec![1.0, 3.0, 9.0]).unwrap();
        let y = avg_pool2(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[2.0]);
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(avg_pool2(&x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn adaptive_windows_cover_input() {
        for len in 1..40 {
            for out in 1..25 {
                let mut covered = vec![false; len];
                for j in 0..out {
                    let (a, b) = adaptive_window(j, len, out);
                    assert!(a < b && b <= len);
                    covered[a..b].iter_mut().for_each(|c| *c = true);
                }
                assert!(covered.iter().all(|&c| c));
            }
        }
    }
}
