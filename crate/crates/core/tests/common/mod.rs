//! Straight-line f64 reference implementations, written independently of the
//! library's kernels. Each reads tensors element by element through `at`.
#![allow(dead_code, clippy::needless_range_loop)]

use gra_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Rotation of one `k×k` kernel (row-major) by `theta`, using the tent-function
/// form of bilinear interpolation: source cell `q` contributes
/// `max(0, 1 − |xs − xq|)·max(0, 1 − |ys − yq|)`. Points outside the closed
/// support square read zero; coordinates within 1e-12 of an integer are
/// treated as that integer.
pub fn rotate_ref(w: &[f64], k: usize, theta: f64) -> Vec<f64> {
    let h = (k as f64 - 1.0) / 2.0;
    let snap = |v: f64| {
        if (v - v.round()).abs() < 1e-12 {
            v.round()
        } else {
            v
        }
    };
    let mut out = vec![0.0; k * k];
    for r in 0..k {
        for c in 0..k {
            let u = c as f64 - h;
            let v = h - r as f64;
            // R(−θ)·(u, v)
            let xs = snap(theta.cos() * u + theta.sin() * v);
            let ys = snap(-theta.sin() * u + theta.cos() * v);
            if xs.abs() > h || ys.abs() > h {
                continue;
            }
            let mut acc = 0.0;
            for rq in 0..k {
                for cq in 0..k {
                    let xq = cq as f64 - h;
                    let yq = h - rq as f64;
                    let wx = (1.0 - (xs - xq).abs()).max(0.0);
                    let wy = (1.0 - (ys - yq).abs()).max(0.0);
                    acc += wx * wy * w[rq * k + cq];
                }
            }
            out[r * k + c] = acc;
        }
    }
    out
}

/// Operator matrix assembled by probing [`rotate_ref`] with basis kernels.
pub fn rotation_matrix_ref(theta: f64, k: usize) -> Vec<f64> {
    let kk = k * k;
    let mut m = vec![0.0; kk * kk];
    for q in 0..kk {
        let mut e = vec![0.0; kk];
        e[q] = 1.0;
        for (p, v) in rotate_ref(&e, k, theta).into_iter().enumerate() {
            m[p * kk + q] = v;
        }
    }
    m
}

/// Rotates every `[.., k, k]` kernel of a tensor with [`rotate_ref`].
pub fn rotate_tensor_ref(w: &Tensor<f64>, theta: f64) -> Tensor<f64> {
    let k = *w.shape().last().unwrap();
    let kk = k * k;
    let data: Vec<f64> = w
        .data()
        .chunks_exact(kk)
        .flat_map(|c| rotate_ref(c, k, theta))
        .collect();
    Tensor::new(w.shape(), data).unwrap()
}

/// Grouped cross-correlation by nested loops.
pub fn conv_ref(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> Tensor<f64> {
    let (b, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let (cin_g, cout_g) = (cin / groups, cout / groups);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[b, cout, ho, wo]);
    for n in 0..b {
        for o in 0..cout {
            let g = o / cout_g;
            for i in 0..ho {
                for j in 0..wo {
                    let mut s = 0.0;
                    for c in 0..cin_g {
                        for dy in 0..k {
                            for dx in 0..k {
                                let iy = (i * stride + dy) as i64 - pad as i64;
                                let ix = (j * stride + dx) as i64 - pad as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                                    continue;
                                }
                                s += w.at(&[o, c, dy, dx])
                                    * x.at(&[n, g * cin_g + c, iy as usize, ix as usize]);
                            }
                        }
                    }
                    out.set(&[n, o, i, j], s);
                }
            }
        }
    }
    out
}

/// Generator parameters as plain f64 tensors.
pub struct GenRef {
    pub dw_kernel: Tensor<f64>,
    pub dw_bias: Tensor<f64>,
    pub ln_gamma: Tensor<f64>,
    pub ln_beta: Tensor<f64>,
    pub w_theta: Tensor<f64>,
    pub b_theta: Tensor<f64>,
    pub w_lambda: Tensor<f64>,
    pub b_lambda: Tensor<f64>,
}

/// Returns `(thetas, lambdas)`, each `[B][n]`.
pub fn generator_ref(x: &Tensor<f64>, p: &GenRef) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let n = p.w_theta.shape()[0];
    let mut thetas = Vec::new();
    let mut lambdas = Vec::new();
    for s in 0..b {
        // depthwise 3×3, padding 1, then ReLU
        let mut act = vec![vec![vec![0.0; w]; h]; c];
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let mut v = p.dw_bias.at(&[ch]);
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let iy = i as i64 + dy as i64 - 1;
                            let ix = j as i64 + dx as i64 - 1;
                            if iy >= 0 && ix >= 0 && iy < h as i64 && ix < w as i64 {
                                v += p.dw_kernel.at(&[ch, 0, dy, dx])
                                    * x.at(&[s, ch, iy as usize, ix as usize]);
                            }
                        }
                    }
                    act[ch][i][j] = v.max(0.0);
                }
            }
        }
        // LayerNorm across channels at each position, then average pool
        let mut pooled = vec![0.0; c];
        for i in 0..h {
            for j in 0..w {
                let mean = (0..c).map(|ch| act[ch][i][j]).sum::<f64>() / c as f64;
                let var = (0..c).map(|ch| (act[ch][i][j] - mean).powi(2)).sum::<f64>() / c as f64;
                for ch in 0..c {
                    let z = (act[ch][i][j] - mean) / (var + 1e-5).sqrt();
                    pooled[ch] += p.ln_gamma.at(&[ch]) * z + p.ln_beta.at(&[ch]);
                }
            }
        }
        pooled.iter_mut().for_each(|v| *v /= (h * w) as f64);
        let head = |wt: &Tensor<f64>, bias: &Tensor<f64>, o: usize| {
            bias.at(&[o]) + (0..c).map(|ch| wt.at(&[o, ch]) * pooled[ch]).sum::<f64>()
        };
        thetas.push((0..n).map(|o| head(&p.w_theta, &p.b_theta, o)).collect());
        lambdas.push(
            (0..n)
                .map(|o| sigmoid(head(&p.w_lambda, &p.b_lambda, o)))
                .collect(),
        );
    }
    (thetas, lambdas)
}

/// Group-wise spatial attention by explicit loops; `f_weight: [1,2,ka,ka]`.
pub fn attention_ref(
    y: &Tensor<f64>,
    n: usize,
    f_weight: &Tensor<f64>,
    f_bias: f64,
) -> Tensor<f64> {
    let (b, cout, h, w) = (y.shape()[0], y.shape()[1], y.shape()[2], y.shape()[3]);
    let cg = cout / n;
    let ka = f_weight.shape()[2];
    let pad = (ka / 2) as i64;
    let mut out = y.clone();
    for s in 0..b {
        for j in 0..n {
            let chans = j * cg..(j + 1) * cg;
            let avg = |i: usize, q: usize| {
                chans.clone().map(|c| y.at(&[s, c, i, q])).sum::<f64>() / cg as f64
            };
            let max = |i: usize, q: usize| {
                chans
                    .clone()
                    .map(|c| y.at(&[s, c, i, q]))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            for i in 0..h {
                for q in 0..w {
                    let mut logit = f_bias;
                    for dy in 0..ka {
                        for dx in 0..ka {
                            let iy = i as i64 + dy as i64 - pad;
                            let ix = q as i64 + dx as i64 - pad;
                            if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                continue;
                            }
                            let (iy, ix) = (iy as usize, ix as usize);
                            logit += f_weight.at(&[0, 0, dy, dx]) * avg(iy, ix)
                                + f_weight.at(&[0, 1, dy, dx]) * max(iy, ix);
                        }
                    }
                    let gate = sigmoid(logit);
                    for c in chans.clone() {
                        out.set(&[s, c, i, q], y.at(&[s, c, i, q]) * gate);
                    }
                }
            }
        }
    }
    out
}

/// Per-sample, per-group rotated and scaled kernels, then a per-sample
/// convolution; the rotating stage of GRA without attention.
pub fn rotating_stage_ref(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    n: usize,
    thetas: &[Vec<f64>],
    lambdas: &[Vec<f64>],
    pad: usize,
) -> Tensor<f64> {
    let (b, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let cg = cout / n;
    let mut samples = Vec::new();
    for s in 0..b {
        let rotated = Tensor::from_fn(&[cout, cin, k, k], |i| {
            let j = i[0] / cg;
            let kernel: Vec<f64> = (0..k * k)
                .map(|t| w.at(&[i[0], i[1], t / k, t % k]))
                .collect();
            lambdas[s][j] * rotate_ref(&kernel, k, thetas[s][j])[i[2] * k + i[3]]
        });
        let xs = Tensor::from_fn(&[1, cin, h, wd], |i| x.at(&[s, i[1], i[2], i[3]]));
        samples.push(conv_ref(&xs, &rotated, 1, pad, 1).index_outer(0));
    }
    Tensor::stack(&samples).unwrap()
}
