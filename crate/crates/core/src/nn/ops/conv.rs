use crate::nn::{gemm, NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvGeom {
    pub fn square(stride: usize, pad: usize) -> Self {
        Self {
            stride_h: stride,
            stride_w: stride,
            pad_h: pad,
            pad_w: pad,
        }
    }

    pub fn line(stride: usize, pad: usize) -> Self {
        Self {
            stride_h: 1,
            stride_w: stride,
            pad_h: 0,
            pad_w: pad,
        }
    }

    pub fn out_dims(&self, h: usize, w: usize, kh: usize, kw: usize) -> Result<(usize, usize), NnError> {
        if self.stride_h == 0 || self.stride_w == 0 {
            return Err(NnError::ShapeMismatch("stride must be at least 1".into()));
        }
        let (hp, wp) = (h + 2 * self.pad_h, w + 2 * self.pad_w);
        if hp < kh || wp < kw {
            return Err(NnError::ShapeMismatch(format!(
                "kernel {kh}x{kw} larger than padded input {hp}x{wp}"
            )));
        }
        Ok(((hp - kh) / self.stride_h + 1, (wp - kw) / self.stride_w + 1))
    }
}

struct Dims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

impl Dims {
    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn p(&self) -> usize {
        self.ho * self.wo
    }
}

fn dims4<T: Real>(x: &Tensor<T>, k: &Tensor<T>, g: &ConvGeom) -> Result<Dims, NnError> {
    if x.ndim() != 4 || k.ndim() != 4 {
        return Err(NnError::ShapeMismatch(format!(
            "conv2d wants 4-d input and kernel, got {:?} and {:?}",
            x.shape(),
            k.shape()
        )));
    }
    let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (f, kc, kh, kw) = (k.dim(0), k.dim(1), k.dim(2), k.dim(3));
    if kc != c {
        return Err(NnError::ShapeMismatch(format!(
            "input has {c} channels, kernel expects {kc}"
        )));
    }
    let (ho, wo) = g.out_dims(h, w, kh, kw)?;
    Ok(Dims { n, c, h, w, f, kh, kw, ho, wo })
}

/// Output columns `ow` whose input column `ow·stride + kj − pad` lies in
/// `[0, w)`.
fn valid_cols(wo: usize, w: usize, stride: usize, kj: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kj).div_ceil(stride).min(wo);
    // ow·stride + kj − pad ≤ w − 1  ⇔  ow ≤ (w − 1 + pad − kj) / stride
    let hi = if w + pad > kj {
        ((w - 1 + pad - kj) / stride + 1).min(wo)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col<T: Real>(x: &[T], d: &Dims, g: &ConvGeom, col: &mut [T]) {
    let p = d.p();
    for ci in 0..d.c {
        let plane = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ci * d.kh + ki) * d.kw + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(d.wo, d.w, g.stride_w, kj, g.pad_w);
                for oh in 0..d.ho {
                    let ih = (oh * g.stride_h + ki) as isize - g.pad_h as isize;
                    let out_row = &mut dst[oh * d.wo..(oh + 1) * d.wo];
                    if ih < 0 || ih as usize >= d.h {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * d.w..(ih as usize + 1) * d.w];
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    if lo < hi {
                        let first = lo * g.stride_w + kj - g.pad_w;
                        if g.stride_w == 1 {
                            out_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (o, &v) in out_row[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride_w)) {
                                *o = v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], d: &Dims, g: &ConvGeom, dx: &mut [T]) {
    let p = d.p();
    for ci in 0..d.c {
        let plane = &mut dx[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ci * d.kh + ki) * d.kw + kj;
                let src = &col[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(d.wo, d.w, g.stride_w, kj, g.pad_w);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride_w + kj - g.pad_w;
                for oh in 0..d.ho {
                    let ih = (oh * g.stride_h + ki) as isize - g.pad_h as isize;
                    if ih < 0 || ih as usize >= d.h {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * d.w..(ih as usize + 1) * d.w];
                    let s = &src[oh * d.wo + lo..oh * d.wo + hi];
                    for (o, &v) in dst[first..].iter_mut().step_by(g.stride_w).zip(s) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// 2-d cross-correlation: `x[N,C,H,W] ⋆ k[F,C,kh,kw] → [N,F,H',W']`.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    geom: ConvGeom,
) -> Result<Tensor<T>, NnError> {
    let d = dims4(x, kernel, &geom)?;
    if let Some(b) = bias {
        if b.numel() != d.f {
            return Err(NnError::ShapeMismatch(format!(
                "bias has {} entries for {} filters",
                b.numel(),
                d.f
            )));
        }
    }
    let (ckk, p) = (d.ckk(), d.p());
    let in_stride = d.c * d.h * d.w;
    let mut out = vec![T::zero(); d.n * d.f * p];
    let mut col = vec![T::zero(); ckk * p];
    for s in 0..d.n {
        im2col(&x.data()[s * in_stride..(s + 1) * in_stride], &d, &geom, &mut col);
        let y = &mut out[s * d.f * p..(s + 1) * d.f * p];
        gemm(d.f, ckk, p, kernel.data(), false, &col, false, T::zero(), y);
        if let Some(b) = bias {
            for (f, &bv) in b.data().iter().enumerate() {
                y[f * p..(f + 1) * p].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::from_vec(&[d.n, d.f, d.ho, d.wo], out)
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dkernel: Vec<T>,
    pub dbias: Vec<T>,
}

/// Gradients of [`conv2d`] given the upstream gradient `dy`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dy: &Tensor<T>,
    geom: ConvGeom,
    need_dx: bool,
) -> Result<ConvGrads<T>, NnError> {
    let d = dims4(x, kernel, &geom)?;
    if dy.shape() != [d.n, d.f, d.ho, d.wo] {
        return Err(NnError::ShapeMismatch(format!(
            "upstream gradient {:?} does not match output [{}, {}, {}, {}]",
            dy.shape(),
            d.n,
            d.f,
            d.ho,
            d.wo
        )));
    }
    let (ckk, p) = (d.ckk(), d.p());
    let in_stride = d.c * d.h * d.w;
    let mut dkernel = vec![T::zero(); d.f * ckk];
    let mut dbias = vec![T::zero(); d.f];
    let mut dx = need_dx.then(|| vec![T::zero(); x.numel()]);
    let mut col = vec![T::zero(); ckk * p];
    let mut dcol = vec![T::zero(); ckk * p];
    for s in 0..d.n {
        let dys = &dy.data()[s * d.f * p..(s + 1) * d.f * p];
        im2col(&x.data()[s * in_stride..(s + 1) * in_stride], &d, &geom, &mut col);
        gemm(d.f, p, ckk, dys, false, &col, true, T::one(), &mut dkernel);
        for (f, db) in dbias.iter_mut().enumerate() {
            *db += dys[f * p..(f + 1) * p].iter().copied().sum::<T>();
        }
        if let Some(dx) = dx.as_mut() {
            gemm(ckk, d.f, p, kernel.data(), true, dys, false, T::zero(), &mut dcol);
            col2im(&dcol, &d, &geom, &mut dx[s * in_stride..(s + 1) * in_stride]);
        }
    }
    Ok(ConvGrads {
        dx: dx.map(|v| Tensor::from_vec(x.shape(), v)).transpose()?,
        dkernel,
        dbias,
    })
}

fn lift1d<T: Real>(x: &Tensor<T>, k: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), NnError> {
    if x.ndim() != 3 || k.ndim() != 3 {
        return Err(NnError::ShapeMismatch(format!(
            "conv1d wants 3-d input and kernel, got {:?} and {:?}",
            x.shape(),
            k.shape()
        )));
    }
    let xs = [x.dim(0), x.dim(1), 1, x.dim(2)];
    let ks = [k.dim(0), k.dim(1), 1, k.dim(2)];
    Ok((
        Tensor::from_vec(&xs, x.data().to_vec())?,
        Tensor::from_vec(&ks, k.data().to_vec())?,
    ))
}

/// 1-d cross-correlation: `x[N,C,L] ⋆ k[F,C,kl] → [N,F,L']`.
pub fn conv1d<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, NnError> {
    let (x4, k4) = lift1d(x, kernel)?;
    let y = conv2d(&x4, &k4, bias, ConvGeom::line(stride, pad))?;
    let s = [y.dim(0), y.dim(1), y.dim(3)];
    y.reshape(&s)
}

pub fn conv1d_backward<T: Real>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> Result<ConvGrads<T>, NnError> {
    let (x4, k4) = lift1d(x, kernel)?;
    if dy.ndim() != 3 {
        return Err(NnError::ShapeMismatch("conv1d gradient must be 3-d".into()));
    }
    let dy4 = Tensor::from_vec(&[dy.dim(0), dy.dim(1), 1, dy.dim(2)], dy.data().to_vec())?;
    let g = conv2d_backward(&x4, &k4, &dy4, ConvGeom::line(stride, pad), need_dx)?;
    Ok(ConvGrads {
        dx: g.dx.map(|t| t.reshape(x.shape())).transpose()?,
        dkernel: g.dkernel,
        dbias: g.dbias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(x: &Tensor<f64>, k: &Tensor<f64>, g: ConvGeom) -> Tensor<f64> {
        let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let (f, kh, kw) = (k.dim(0), k.dim(2), k.dim(3));
        let (ho, wo) = g.out_dims(h, w, kh, kw).unwrap();
        let mut y = Tensor::zeros(&[n, f, ho, wo]);
        for b in 0..n {
            for fi in 0..f {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let ih = (oh * g.stride_h + i) as isize - g.pad_h as isize;
                                    let iw = (ow * g.stride_w + j) as isize - g.pad_w as isize;
                                    if ih >= 0 && iw >= 0 && (ih as usize) < h && (iw as usize) < w {
                                        acc += x.data()[((b * c + ci) * h + ih as usize) * w + iw as usize]
                                            * k.data()[((fi * c + ci) * kh + i) * kw + j];
                                    }
                                }
                            }
                        }
                        y.data_mut()[((b * f + fi) * ho + oh) * wo + ow] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (n, c, f) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
            let (kh, kw) = (rng.random_range(1..4), rng.random_range(1..6));
            let (h, w) = (rng.random_range(1..9), rng.random_range(1..12));
            let g = ConvGeom {
                stride_h: rng.random_range(1..4),
                stride_w: rng.random_range(1..6),
                pad_h: rng.random_range(0..3),
                pad_w: rng.random_range(0..4),
            };
            if g.out_dims(h, w, kh, kw).is_err() {
                continue;
            }
            let x = Tensor::from_vec(&[n, c, h, w], (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let k = Tensor::from_vec(&[f, c, kh, kw], (0..f * c * kh * kw).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let y = conv2d(&x, &k, None, g).unwrap();
            let e = direct(&x, &k, g);
            assert_eq!(y.shape(), e.shape());
            for (a, b) in y.data().iter().zip(e.data()) {
                assert!((a - b).abs() < 1e-12, "{g:?}");
            }
            // dx through col2im against the adjoint identity <conv(x), dy> = <x, dx>.
            let dy = Tensor::from_vec(y.shape(), (0..y.numel()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let gr = conv2d_backward(&x, &k, &dy, g, true).unwrap();
            let lhs: f64 = y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(gr.dx.unwrap().data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::<f64>::from_vec(&[1, 2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        let mut k = Tensor::<f64>::zeros(&[2, 2, 1, 1]);
        k.data_mut()[0] = 1.0; // f0 <- c0
        k.data_mut()[3] = 1.0; // f1 <- c1
        let y = conv2d(&x, &k, None, ConvGeom::square(1, 0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_computed_valid_conv() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = conv2d(&x, &k, None, ConvGeom::square(1, 0)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn output_size_formula() {
        let x = Tensor::<f64>::zeros(&[2, 3, 9, 8]);
        let k = Tensor::<f64>::zeros(&[4, 3, 3, 3]);
        let y = conv2d(&x, &k, None, ConvGeom::square(2, 1)).unwrap();
        assert_eq!(y.shape(), &[2, 4, (9 + 2 - 3) / 2 + 1, (8 + 2 - 3) / 2 + 1]);
    }

    #[test]
    fn conv1d_hand_computed() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let k = Tensor::<f64>::from_vec(&[1, 1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(conv1d(&x, &k, None, 1, 0).unwrap().data(), &[3.0, 5.0]);
        let one = Tensor::<f64>::from_vec(&[1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv1d(&x, &one, None, 1, 0).unwrap().data(), x.data());
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let k = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
        assert!(conv2d(&x, &k, None, ConvGeom::square(1, 1)).is_err());
        let k = Tensor::<f64>::zeros(&[1, 2, 5, 5]);
        assert!(conv2d(&x, &k, None, ConvGeom::square(1, 0)).is_err());
        assert!(conv2d(&x, &k, None, ConvGeom::square(0, 2)).is_err());
    }
}
