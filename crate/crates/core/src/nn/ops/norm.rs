use crate::nn::{NnError, Real, Tensor};

pub const BN_EPS: f64 = 1e-5;
/// Running statistics keep this fraction of their previous value each step.
pub const BN_MOMENTUM: f64 = 0.9;

/// Saved forward quantities for the batch-norm backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn layout<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
    if x.ndim() < 2 {
        return Err(NnError::ShapeMismatch(format!(
            "batchnorm wants [N, C, ...], got {:?}",
            x.shape()
        )));
    }
    let (n, c) = (x.dim(0), x.dim(1));
    let s: usize = x.shape()[2..].iter().product();
    if gamma.numel() != c || beta.numel() != c {
        return Err(NnError::ShapeMismatch(format!(
            "batchnorm affine params have {}/{} entries for {c} channels",
            gamma.numel(),
            beta.numel()
        )));
    }
    Ok((n, c, s))
}

/// Train-mode normalization with batch statistics (biased variance).
pub fn batchnorm_train<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BnCache<T>), NnError> {
    let (n, c, s) = layout(x, gamma, beta)?;
    let count = T::c((n * s) as f64);
    let xd = x.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * s;
            mean[ch] += xd[base..base + s].iter().copied().sum::<T>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * s;
            let mu = mean[ch];
            var[ch] += xd[base..base + s].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    let eps = T::c(eps);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); xd.len()];
    let mut y = vec![T::zero(); xd.len()];
    let (g, bt) = (gamma.data(), beta.data());
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * s;
            for i in base..base + s {
                let h = (xd[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                y[i] = g[ch] * h + bt[ch];
            }
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), y)?,
        BnCache { xhat, inv_std, mean, var },
    ))
}

/// Eval-mode normalization with stored running statistics.
pub fn batchnorm_eval<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>, NnError> {
    let (n, c, s) = layout(x, gamma, beta)?;
    let eps = T::c(eps);
    let (g, bt, rm, rv) = (gamma.data(), beta.data(), running_mean.data(), running_var.data());
    let scale: Vec<T> = (0..c).map(|ch| g[ch] / (rv[ch] + eps).sqrt()).collect();
    let shift: Vec<T> = (0..c).map(|ch| bt[ch] - rm[ch] * scale[ch]).collect();
    let mut y = x.data().to_vec();
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * s;
            y[base..base + s]
                .iter_mut()
                .for_each(|v| *v = *v * scale[ch] + shift[ch]);
        }
    }
    Tensor::from_vec(x.shape(), y)
}

/// Blends batch statistics into running ones; the running variance uses
/// the unbiased estimate.
pub fn update_running_stats<T: Real>(
    running_mean: &mut [T],
    running_var: &mut [T],
    cache: &BnCache<T>,
    count: usize,
) {
    let keep = T::c(BN_MOMENTUM);
    let take = T::one() - keep;
    let unbias = if count > 1 {
        T::c(count as f64 / (count - 1) as f64)
    } else {
        T::one()
    };
    for ch in 0..running_mean.len() {
        running_mean[ch] = keep * running_mean[ch] + take * cache.mean[ch];
        running_var[ch] = keep * running_var[ch] + take * cache.var[ch] * unbias;
    }
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batchnorm_backward<T: Real>(
    dy: &Tensor<T>,
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>), NnError> {
    let (n, c) = (dy.dim(0), dy.dim(1));
    let s: usize = dy.shape()[2..].iter().product();
    if cache.xhat.len() != dy.numel() || gamma.numel() != c {
        return Err(NnError::ShapeMismatch("batchnorm backward shapes".into()));
    }
    let m = T::c((n * s) as f64);
    let dyd = dy.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * s;
            for i in base..base + s {
                dbeta[ch] += dyd[i];
                dgamma[ch] += dyd[i] * cache.xhat[i];
            }
        }
    }
    let g = gamma.data();
    let mut dx = vec![T::zero(); dyd.len()];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * s;
            let k = g[ch] * cache.inv_std[ch] / m;
            for i in base..base + s {
                dx[i] = k * (m * dyd[i] - dbeta[ch] - cache.xhat[i] * dgamma[ch]);
            }
        }
    }
    Ok((Tensor::from_vec(dy.shape(), dx)?, dgamma, dbeta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_batch_passes_through() {
        // Two samples per channel: {−1, +1} has mean 0 and biased variance 1.
        let x = Tensor::<f64>::from_vec(&[2, 1, 1], vec![-1.0, 1.0]).unwrap();
        let g = Tensor::full(&[1], 1.0);
        let b = Tensor::zeros(&[1]);
        let (y, _) = batchnorm_train(&x, &g, &b, BN_EPS).unwrap();
        for (a, e) in y.data().iter().zip(x.data()) {
            assert!((a - e).abs() < 1e-5);
        }
        let (y, _) = batchnorm_train(&x, &g, &b, 1e-12).unwrap();
        for (a, e) in y.data().iter().zip(x.data()) {
            assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_channel_outputs_beta() {
        let x = Tensor::<f64>::full(&[3, 2, 4], 7.5);
        let g = Tensor::from_vec(&[2], vec![2.0, -1.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.25, -3.0]).unwrap();
        let (y, _) = batchnorm_train(&x, &g, &b, BN_EPS).unwrap();
        for bi in 0..3 {
            for ch in 0..2 {
                for i in 0..4 {
                    assert_eq!(y.data()[(bi * 2 + ch) * 4 + i], b.data()[ch]);
                }
            }
        }
    }

    #[test]
    fn running_stats_momentum() {
        let x = Tensor::<f64>::from_vec(&[2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, cache) = batchnorm_train(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), BN_EPS).unwrap();
        let (mut rm, mut rv) = (vec![0.0], vec![1.0]);
        update_running_stats(&mut rm, &mut rv, &cache, 4);
        assert!((rm[0] - 0.1 * 2.5).abs() < 1e-12);
        // Unbiased variance of {1,2,3,4} is 5/3.
        assert!((rv[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_uses_running_stats() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2], vec![3.0, 5.0]).unwrap();
        let y = batchnorm_eval(
            &x,
            &Tensor::full(&[1], 4.0),
            &Tensor::full(&[1], 1.0),
            &Tensor::full(&[1], 1.0),
            &Tensor::full(&[1], 4.0),
            0.0,
        )
        .unwrap();
        // (x − 1)/2 · 4 + 1
        assert_eq!(y.data(), &[5.0, 9.0]);
    }
}
