//! Routing network predicting per-sample rotation angles and group scales.
//!
//! depthwise 3×3 conv → ReLU → LayerNorm over channels → global average pool
//! → two linear heads (`θ` unbounded, `λ` through a sigmoid).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{conv2d, expect_extent, Element, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct AngleGenParams<T = f32> {
    /// `[Cin, 1, 3, 3]`
    pub dw_kernel: Tensor<T>,
    /// `[Cin]`
    pub dw_bias: Tensor<T>,
    pub ln_gamma: Tensor<T>,
    pub ln_beta: Tensor<T>,
    /// `[n, Cin]`
    pub w_theta: Tensor<T>,
    /// `[n]`
    pub b_theta: Tensor<T>,
    pub w_lambda: Tensor<T>,
    pub b_lambda: Tensor<T>,
}

/// Predicted angles (radians) and scales in `(0, 1)`, both `[B, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSet<T = f32> {
    pub thetas: Tensor<T>,
    pub lambdas: Tensor<T>,
}

impl<T: Element> AngleSet<T> {
    pub fn new(thetas: Tensor<T>, lambdas: Tensor<T>) -> Result<Self> {
        thetas.expect_rank("AngleSet::new", 2)?;
        if thetas.shape() != lambdas.shape() {
            return Err(Error::invalid(
                "AngleSet::new",
                format!(
                    "thetas {:?} and lambdas {:?} differ in shape",
                    thetas.shape(),
                    lambdas.shape()
                ),
            ));
        }
        Ok(Self { thetas, lambdas })
    }

    /// Every sample and group shares `theta` and `lambda`.
    pub fn uniform(batch: usize, n: usize, theta: f64, lambda: f64) -> Self {
        Self {
            thetas: Tensor::full(&[batch, n], T::from_f64(theta)),
            lambdas: Tensor::full(&[batch, n], T::from_f64(lambda)),
        }
    }

    pub fn batch(&self) -> usize {
        self.thetas.shape()[0]
    }

    pub fn groups(&self) -> usize {
        self.thetas.shape()[1]
    }

    pub fn theta(&self, b: usize, j: usize) -> T {
        self.thetas.at(&[b, j])
    }

    pub fn lambda(&self, b: usize, j: usize) -> T {
        self.lambdas.at(&[b, j])
    }
}

impl<T: Element> AngleGenParams<T> {
    pub fn in_channels(&self) -> usize {
        self.dw_kernel.shape()[0]
    }

    pub fn heads(&self) -> usize {
        self.w_theta.shape()[0]
    }

    /// All-zero weights with identity LayerNorm affine: `θ = 0`, `λ = 0.5`.
    pub fn zeroed(cin: usize, n: usize) -> Self {
        Self {
            dw_kernel: Tensor::zeros(&[cin, 1, 3, 3]),
            dw_bias: Tensor::zeros(&[cin]),
            ln_gamma: Tensor::full(&[cin], T::one()),
            ln_beta: Tensor::zeros(&[cin]),
            w_theta: Tensor::zeros(&[n, cin]),
            b_theta: Tensor::zeros(&[n]),
            w_lambda: Tensor::zeros(&[n, cin]),
            b_lambda: Tensor::zeros(&[n]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "AngleGenParams";
        self.dw_kernel.expect_rank(OP, 4)?;
        let cin = self.in_channels();
        expect_extent(OP, "dw_kernel in-channels", 1, self.dw_kernel.shape()[1])?;
        expect_extent(OP, "dw_kernel height", 3, self.dw_kernel.shape()[2])?;
        expect_extent(OP, "dw_kernel width", 3, self.dw_kernel.shape()[3])?;
        for (axis, t) in [
            ("dw_bias", &self.dw_bias),
            ("ln_gamma", &self.ln_gamma),
            ("ln_beta", &self.ln_beta),
        ] {
            t.expect_rank(OP, 1)?;
            expect_extent(OP, axis, cin, t.shape()[0])?;
        }
        self.w_theta.expect_rank(OP, 2)?;
        self.w_lambda.expect_rank(OP, 2)?;
        let n = self.heads();
        if n == 0 {
            return Err(Error::invalid(OP, "at least one output head is required"));
        }
        expect_extent(OP, "w_theta in-features", cin, self.w_theta.shape()[1])?;
        expect_extent(OP, "w_lambda out-features", n, self.w_lambda.shape()[0])?;
        expect_extent(OP, "w_lambda in-features", cin, self.w_lambda.shape()[1])?;
        for (axis, t) in [("b_theta", &self.b_theta), ("b_lambda", &self.b_lambda)] {
            t.expect_rank(OP, 1)?;
            expect_extent(OP, axis, n, t.shape()[0])?;
        }
        Ok(())
    }
}

/// Deterministic initialisation: weights uniform in `±1/√fan_in`, biases 0,
/// `γ = 1`, `β = 0`.
pub fn generator_init(cin: usize, n: usize, seed: u64) -> Result<AngleGenParams<f32>> {
    if cin == 0 || n == 0 {
        return Err(Error::invalid(
            "generator_init",
            format!("Cin = {cin} and n = {n} must be positive"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |shape: &[usize], fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound) as f32)
    };
    let dw_kernel = uniform(&[cin, 1, 3, 3], 9);
    let w_theta = uniform(&[n, cin], cin);
    let w_lambda = uniform(&[n, cin], cin);
    Ok(AngleGenParams {
        dw_kernel,
        w_theta,
        w_lambda,
        ..AngleGenParams::zeroed(cin, n)
    })
}

pub(crate) fn sigmoid<T: Element>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// `out[b, o] = bias[o] + Σ_c w[o, c]·v[b, c]`
fn linear<T: Element>(v: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Tensor<T> {
    let (batch, cin) = (v.shape()[0], v.shape()[1]);
    let n = w.shape()[0];
    Tensor::from_fn(&[batch, n], |i| {
        let row = &v.data()[i[0] * cin..(i[0] + 1) * cin];
        let wr = &w.data()[i[1] * cin..(i[1] + 1) * cin];
        row.iter()
            .zip(wr)
            .fold(bias.data()[i[1]], |acc, (&a, &b)| acc + a * b)
    })
}

/// Runs the generator over `x: [B, Cin, H, W]`.
pub fn generator_forward<T: Element>(x: &Tensor<T>, p: &AngleGenParams<T>) -> Result<AngleSet<T>> {
    const OP: &str = "generator_forward";
    p.validate()?;
    x.expect_rank(OP, 4)?;
    let cin = p.in_channels();
    expect_extent(OP, "input channels", cin, x.shape()[1])?;
    let (batch, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let hw = h * w;

    let mut feat = conv2d(x, &p.dw_kernel, 1, 1, cin)?;
    {
        let bias = p.dw_bias.data();
        for (i, v) in feat.data_mut().iter_mut().enumerate() {
            let c = (i / hw) % cin;
            *v = (*v + bias[c]).max(T::zero());
        }
    }

    let eps = T::from_f64(LAYER_NORM_EPS);
    let inv_c = T::from_f64(1.0 / cin as f64);
    let inv_hw = T::from_f64(1.0 / hw as f64);
    let (gamma, beta) = (p.ln_gamma.data(), p.ln_beta.data());
    let f = feat.data();
    let mut pooled = vec![T::zero(); batch * cin];
    for b in 0..batch {
        let sample = &f[b * cin * hw..(b + 1) * cin * hw];
        let acc = &mut pooled[b * cin..(b + 1) * cin];
        for s in 0..hw {
            let mean = (0..cin).fold(T::zero(), |a, c| a + sample[c * hw + s]) * inv_c;
            let var = (0..cin).fold(T::zero(), |a, c| {
                let d = sample[c * hw + s] - mean;
                a + d * d
            }) * inv_c;
            let inv_std = T::one() / (var + eps).sqrt();
            for c in 0..cin {
                acc[c] = acc[c] + ((sample[c * hw + s] - mean) * inv_std * gamma[c] + beta[c]);
            }
        }
        for v in acc.iter_mut() {
            *v = *v * inv_hw;
        }
    }
    let pooled = Tensor::new(&[batch, cin], pooled)?;

    let thetas = linear(&pooled, &p.w_theta, &p.b_theta);
    let lambdas = linear(&pooled, &p.w_lambda, &p.b_lambda).map(sigmoid);
    Ok(AngleSet { thetas, lambdas })
}
