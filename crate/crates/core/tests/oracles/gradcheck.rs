//! Central finite-difference gradient checks in f64.
//!
//! Each check builds a random case, forms the scalar `L = Σ r ⊙ f(θ)` with a
//! random probe `r`, and compares the analytic gradient of every input with
//! a central finite difference. The error of one tensor is
//! `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖)`.

use coughscreen_core::models::{FusionHead, MiniCNN14, MiniEffNetV2};
use coughscreen_core::nn::{Module, ParamKind};
use coughscreen_core::nn::ops::*;
use coughscreen_core::nn::{bce_with_logits, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step for the smooth single-op checks.
pub const OP_STEP: f64 = 1e-4;
/// Step for whole-network checks, kept small so ReLU kinks are rarely crossed.
pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Numerical gradient of `f` at `x` from the fourth-order central stencil
/// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`. Its roundoff floor sits
/// well below the second-order one, which matters where the true gradient is
/// tiny (batchnorm over two elements has gradients of order ε).
pub fn numeric(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = OP_STEP;
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            let mut at = |d: f64| {
                p[i] = orig + d;
                f(&p)
            };
            let v = -at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h);
            p[i] = orig;
            v / (12.0 * h)
        })
        .collect()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn t(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, v).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst error over `cases` random cases of one op.
pub struct Check {
    pub op: &'static str,
    pub cases: usize,
    pub worst: f64,
}

fn run(op: &'static str, cases: usize, seed: u64, mut case: impl FnMut(&mut ChaCha8Rng) -> f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..cases).map(|_| case(&mut rng)).fold(0.0, f64::max);
    Check { op, cases, worst }
}

pub fn conv2d_check(cases: usize, seed: u64) -> Check {
    run("conv2d", cases, seed, |rng| {
        let (n, c, f) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
        let k = rng.random_range(1..4);
        let g = ConvGeom {
            stride_h: rng.random_range(1..3),
            stride_w: rng.random_range(1..3),
            pad_h: rng.random_range(0..k),
            pad_w: rng.random_range(0..k),
        };
        let (h, w) = (rng.random_range(k..k + 5), rng.random_range(k..k + 5));
        let xs = [n, c, h, w];
        let ks = [f, c, k, k];
        let x = rand_vec(rng, xs.iter().product(), -1.0, 1.0);
        let kv = rand_vec(rng, ks.iter().product(), -1.0, 1.0);
        let b = rand_vec(rng, f, -1.0, 1.0);
        let y = conv2d(&t(&xs, x.clone()), &t(&ks, kv.clone()), Some(&t(&[f], b.clone())), g).unwrap();
        let r = rand_vec(rng, y.numel(), -1.0, 1.0);
        let grads = conv2d_backward(&t(&xs, x.clone()), &t(&ks, kv.clone()), &t(y.shape(), r.clone()), g, true).unwrap();
        let loss = |x: &[f64], kv: &[f64], b: &[f64]| {
            dot(conv2d(&t(&xs, x.to_vec()), &t(&ks, kv.to_vec()), Some(&t(&[f], b.to_vec())), g).unwrap().data(), &r)
        };
        let nx = numeric(&x, |p| loss(p, &kv, &b));
        let nk = numeric(&kv, |p| loss(&x, p, &b));
        let nb = numeric(&b, |p| loss(&x, &kv, p));
        rel_err(grads.dx.unwrap().data(), &nx)
            .max(rel_err(&grads.dkernel, &nk))
            .max(rel_err(&grads.dbias, &nb))
    })
}

pub fn conv1d_check(cases: usize, seed: u64) -> Check {
    run("conv1d", cases, seed, |rng| {
        let (n, c, f) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
        let k = rng.random_range(1..12);
        let (stride, pad) = (rng.random_range(1..6), rng.random_range(0..=k / 2));
        let l = rng.random_range(k..k + 30);
        let (xs, ks) = ([n, c, l], [f, c, k]);
        let x = rand_vec(rng, n * c * l, -1.0, 1.0);
        let kv = rand_vec(rng, f * c * k, -1.0, 1.0);
        let b = rand_vec(rng, f, -1.0, 1.0);
        let y = conv1d(&t(&xs, x.clone()), &t(&ks, kv.clone()), Some(&t(&[f], b.clone())), stride, pad).unwrap();
        let r = rand_vec(rng, y.numel(), -1.0, 1.0);
        let grads = conv1d_backward(&t(&xs, x.clone()), &t(&ks, kv.clone()), &t(y.shape(), r.clone()), stride, pad, true).unwrap();
        let loss = |x: &[f64], kv: &[f64], b: &[f64]| {
            dot(conv1d(&t(&xs, x.to_vec()), &t(&ks, kv.to_vec()), Some(&t(&[f], b.to_vec())), stride, pad).unwrap().data(), &r)
        };
        let nx = numeric(&x, |p| loss(p, &kv, &b));
        let nk = numeric(&kv, |p| loss(&x, p, &b));
        let nb = numeric(&b, |p| loss(&x, &kv, p));
        rel_err(grads.dx.unwrap().data(), &nx)
            .max(rel_err(&grads.dkernel, &nk))
            .max(rel_err(&grads.dbias, &nb))
    })
}

pub fn batchnorm_check(cases: usize, seed: u64) -> Check {
    run("batchnorm", cases, seed, |rng| {
        let (n, c) = (rng.random_range(1..4), rng.random_range(1..4));
        let s = rng.random_range(2..7);
        let xs = [n, c, s];
        let x = rand_vec(rng, n * c * s, -2.0, 2.0);
        let gamma = rand_vec(rng, c, 0.5, 1.5);
        let beta = rand_vec(rng, c, -0.5, 0.5);
        let r = rand_vec(rng, n * c * s, -1.0, 1.0);
        let loss = |x: &[f64], g: &[f64], b: &[f64]| {
            let (y, _) = batchnorm_train(&t(&xs, x.to_vec()), &t(&[c], g.to_vec()), &t(&[c], b.to_vec()), BN_EPS).unwrap();
            dot(y.data(), &r)
        };
        let (_, cache) = batchnorm_train(&t(&xs, x.clone()), &t(&[c], gamma.clone()), &t(&[c], beta.clone()), BN_EPS).unwrap();
        let (dx, dg, db) = batchnorm_backward(&t(&xs, r.clone()), &cache, &t(&[c], gamma.clone())).unwrap();
        let nx = numeric(&x, |p| loss(p, &gamma, &beta));
        let ng = numeric(&gamma, |p| loss(&x, p, &beta));
        let nb = numeric(&beta, |p| loss(&x, &gamma, p));
        rel_err(dx.data(), &nx).max(rel_err(&dg, &ng)).max(rel_err(&db, &nb))
    })
}

pub fn gem_check(cases: usize, seed: u64) -> Check {
    run("gem_pool (x and p)", cases, seed, |rng| {
        let (n, c) = (rng.random_range(1..3), rng.random_range(1..4));
        let (h, w) = (rng.random_range(1..4), rng.random_range(1..5));
        let xs = [n, c, h, w];
        // Cells stay clear of the clamp floor so the map is smooth.
        let x = rand_vec(rng, n * c * h * w, 0.05, 2.0);
        let p = rng.random_range(1.0..6.0);
        let y = gem_pool(&t(&xs, x.clone()), p).unwrap();
        let r = rand_vec(rng, y.numel(), -1.0, 1.0);
        let (dx, dp) = gem_pool_backward(&t(&xs, x.clone()), p, &t(y.shape(), r.clone())).unwrap();
        let loss = |x: &[f64], p: f64| dot(gem_pool(&t(&xs, x.to_vec()), p).unwrap().data(), &r);
        let nx = numeric(&x, |v| loss(v, p));
        let np = numeric(&[p], |v| loss(&x, v[0]));
        rel_err(dx.data(), &nx).max(rel_err(&[dp], &np))
    })
}

pub fn linear_check(cases: usize, seed: u64) -> Check {
    run("linear", cases, seed, |rng| {
        let (n, din, dout) = (rng.random_range(1..5), rng.random_range(1..8), rng.random_range(1..5));
        let x = rand_vec(rng, n * din, -1.0, 1.0);
        let w = rand_vec(rng, dout * din, -1.0, 1.0);
        let b = rand_vec(rng, dout, -1.0, 1.0);
        let r = rand_vec(rng, n * dout, -1.0, 1.0);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| {
            dot(linear(&t(&[n, din], x.to_vec()), &t(&[dout, din], w.to_vec()), &t(&[dout], b.to_vec())).unwrap().data(), &r)
        };
        let (dx, dw, db) = linear_backward(&t(&[n, din], x.clone()), &t(&[dout, din], w.clone()), &t(&[n, dout], r.clone())).unwrap();
        let nx = numeric(&x, |p| loss(p, &w, &b));
        let nw = numeric(&w, |p| loss(&x, p, &b));
        let nb = numeric(&b, |p| loss(&x, &w, p));
        rel_err(dx.data(), &nx).max(rel_err(&dw, &nw)).max(rel_err(&db, &nb))
    })
}

pub fn bce_check(cases: usize, seed: u64) -> Check {
    run("bce_with_logits", cases, seed, |rng| {
        let n = rng.random_range(1..10);
        let z = rand_vec(rng, n, -8.0, 8.0);
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let (_, g) = bce_with_logits(&z, &y).unwrap();
        let nz = numeric(&z, |p| bce_with_logits(p, &y).unwrap().0);
        rel_err(&g, &nz)
    })
}

pub fn fusion_check(cases: usize, seed: u64) -> Check {
    run("fusion head", cases, seed, |rng| {
        let d2 = if rng.random_bool(0.5) { 128 } else { 64 };
        let n = rng.random_range(1..4);
        let d = 64 + d2;
        let mut head = FusionHead::<f64>::new(d2, rng);
        head.linear.bias.data_mut()[0] = rng.random_range(-1.0..1.0);
        let x = rand_vec(rng, n * d, -1.0, 1.0);
        let w = head.linear.weight.data().to_vec();
        let b = head.linear.bias.data().to_vec();
        let r = rand_vec(rng, n, -1.0, 1.0);
        let y = head.forward_train(&t(&[n, d], x.clone())).unwrap();
        assert_eq!(y.shape(), &[n, 1]);
        let dx = head.backward(&t(&[n, 1], r.clone())).unwrap();
        let loss = |x: &[f64], w: &[f64], b: &[f64]| {
            let mut h = FusionHead::<f64>::zeros(d2);
            h.linear.weight.data_mut().copy_from_slice(w);
            h.linear.bias.data_mut().copy_from_slice(b);
            // Row-wise through the single-pair path.
            x.chunks_exact(d)
                .zip(&r)
                .map(|(row, ri)| ri * h.fuse_forward(&row[..64], &row[64..]).unwrap())
                .sum::<f64>()
        };
        let nx = numeric(&x, |p| loss(p, &w, &b));
        let nw = numeric(&w, |p| loss(&x, p, &b));
        let nb = numeric(&b, |p| loss(&x, &w, p));
        rel_err(dx.data(), &nx)
            .max(rel_err(head.linear.weight.grad().unwrap(), &nw))
            .max(rel_err(head.linear.bias.grad().unwrap(), &nb))
    })
}

pub fn pooling_check(cases: usize, seed: u64) -> Check {
    run("avg/adaptive pooling", cases, seed, |rng| {
        let (n, c) = (rng.random_range(1..3), rng.random_range(1..3));
        let (h, w) = (rng.random_range(1..6), rng.random_range(1..7));
        let xs = [n, c, h, w];
        let x = rand_vec(rng, n * c * h * w, -1.0, 1.0);
        let y = avg_pool2(&t(&xs, x.clone())).unwrap();
        let r = rand_vec(rng, y.numel(), -1.0, 1.0);
        let dx = avg_pool2_backward(&xs, &t(y.shape(), r.clone()));
        let e1 = rel_err(dx.data(), &numeric(&x, |p| dot(avg_pool2(&t(&xs, p.to_vec())).unwrap().data(), &r)));

        let l = rng.random_range(1..30);
        let out = rng.random_range(1..20);
        let x = rand_vec(rng, n * c * l, -1.0, 1.0);
        let r = rand_vec(rng, n * c * out, -1.0, 1.0);
        let s = [n, c, l];
        let dx = adaptive_avg_pool1d_backward(&s, &t(&[n, c, out], r.clone()));
        let e2 = rel_err(
            dx.data(),
            &numeric(&x, |p| dot(adaptive_avg_pool1d(&t(&s, p.to_vec()), out).unwrap().data(), &r)),
        );

        let r = rand_vec(rng, n * c, -1.0, 1.0);
        let dx = global_avg_pool_backward(&s, &t(&[n, c], r.clone()));
        let e3 = rel_err(dx.data(), &numeric(&x, |p| dot(global_avg_pool(&t(&s, p.to_vec())).unwrap().data(), &r)));
        e1.max(e2).max(e3)
    })
}

/// Checks sampled parameter coordinates of a whole network. `eval` runs a
/// train-mode forward and returns the probed scalar; `back` runs backward
/// for the same probe.
fn params_check<M: Module<f64>>(
    m: &mut M,
    rng: &mut ChaCha8Rng,
    per_tensor: usize,
    mut eval: impl FnMut(&mut M) -> f64,
    mut back: impl FnMut(&mut M),
) -> f64 {
    m.zero_grad();
    eval(m);
    back(m);
    let mut picks: Vec<(String, usize, f64)> = Vec::new();
    m.visit("", &mut |name, t, kind| {
        if kind == ParamKind::Trainable {
            let g = t.grad().expect("gradient after backward");
            for _ in 0..per_tensor.min(t.numel()) {
                let i = rng.random_range(0..t.numel());
                picks.push((name.to_string(), i, g[i]));
            }
        }
    });
    let nudge = |m: &mut M, name: &str, i: usize, delta: f64| {
        m.visit_mut("", &mut |n, t, _| {
            if n == name {
                t.data_mut()[i] += delta;
            }
        });
    };
    let mut analytic = Vec::new();
    let mut num = Vec::new();
    for (name, i, g) in picks {
        nudge(m, &name, i, STEP);
        let up = eval(m);
        nudge(m, &name, i, -2.0 * STEP);
        let down = eval(m);
        nudge(m, &name, i, STEP);
        analytic.push(g);
        num.push((up - down) / (2.0 * STEP));
    }
    rel_err(&analytic, &num)
}

pub fn effnet_check(cases: usize, seed: u64) -> Check {
    run("stage-1 network", cases, seed, |rng| {
        let mut net = MiniEffNetV2::<f64>::new(rng);
        let n = 2;
        let shape = [n, 1, 16, 32];
        let x = t(&shape, rand_vec(rng, n * 16 * 32, -1.0, 1.0));
        let r = rand_vec(rng, n, -1.0, 1.0);
        let rt = t(&[n, 1], r.clone());
        params_check(
            &mut net,
            rng,
            3,
            |m| dot(m.forward_train(&x).unwrap().0.data(), &r),
            |m| m.backward(&rt).unwrap(),
        )
    })
}

pub fn cnn14_check(cases: usize, seed: u64) -> Check {
    run("stage-2 network with wavegram", cases, seed, |rng| {
        let mut net = MiniCNN14::<f64>::new(true, rng);
        let n = 2;
        let spec = t(&[n, 1, 32, 32], rand_vec(rng, n * 32 * 32, -1.0, 1.0));
        let wave = t(&[n, 1, 2000], rand_vec(rng, n * 2000, -0.5, 0.5));
        let r = rand_vec(rng, n * 4, -1.0, 1.0);
        let rt = t(&[n, 4], r.clone());
        params_check(
            &mut net,
            rng,
            2,
            |m| dot(m.forward_train(&spec, Some(&wave)).unwrap().data(), &r),
            |m| m.backward(&rt).unwrap(),
        )
    })
}

/// Every differentiable op with `cases` random cases each.
pub fn suite(cases: usize, seed: u64) -> Vec<Check> {
    vec![
        conv1d_check(cases, seed),
        conv2d_check(cases, seed + 1),
        batchnorm_check(cases, seed + 2),
        gem_check(cases, seed + 3),
        linear_check(cases, seed + 4),
        bce_check(cases, seed + 5),
        fusion_check(cases, seed + 6),
        pooling_check(cases, seed + 7),
    ]
}
