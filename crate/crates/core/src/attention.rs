//! Group-wise spatial attention.
//!
//! Each feature group is reduced over its channels to an `[avg, max]` pair of
//! maps, run through one shared `2 → 1` convolution and a sigmoid, and the
//! resulting map gates every channel of the group.

use crate::angle_generator::sigmoid;
use crate::error::{Error, Result};
use crate::tensor::{conv2d, expect_divisible, expect_extent, Element, Tensor};

pub const DEFAULT_ATTENTION_KERNEL: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T = f32> {
    /// `[1, 2, ka, ka]`, channel 0 reads the average map, channel 1 the max map.
    pub f_weight: Tensor<T>,
    /// `[1]`
    pub f_bias: Tensor<T>,
}

impl<T: Element> AttentionParams<T> {
    pub fn zeroed(ka: usize) -> Self {
        Self {
            f_weight: Tensor::zeros(&[1, 2, ka, ka]),
            f_bias: Tensor::zeros(&[1]),
        }
    }

    pub fn kernel(&self) -> usize {
        self.f_weight.shape()[2]
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "AttentionParams";
        self.f_weight.expect_rank(OP, 4)?;
        let s = self.f_weight.shape();
        expect_extent(OP, "f_weight out-channels", 1, s[0])?;
        expect_extent(OP, "f_weight in-channels", 2, s[1])?;
        expect_extent(OP, "f_weight width", s[2], s[3])?;
        if s[2].is_multiple_of(2) {
            return Err(Error::invalid(
                OP,
                format!("attention kernel {} is not odd", s[2]),
            ));
        }
        self.f_bias.expect_rank(OP, 1)?;
        expect_extent(OP, "f_bias", 1, self.f_bias.shape()[0])
    }
}

/// Channel-pooled descriptors `[B·n, 2, H, W]`: mean then max over each group.
fn pool_groups<T: Element>(y: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    let (batch, cout, h, w) = (y.shape()[0], y.shape()[1], y.shape()[2], y.shape()[3]);
    let cg = cout / n;
    let hw = h * w;
    let inv = T::from_f64(1.0 / cg as f64);
    let yd = y.data();
    let mut out = vec![T::zero(); batch * n * 2 * hw];
    for (bj, dst) in out.chunks_exact_mut(2 * hw).enumerate() {
        let group = &yd[bj * cg * hw..(bj + 1) * cg * hw];
        let (avg, max) = dst.split_at_mut(hw);
        avg.copy_from_slice(&group[..hw]);
        max.copy_from_slice(&group[..hw]);
        for ch in group.chunks_exact(hw).skip(1) {
            for s in 0..hw {
                avg[s] = avg[s] + ch[s];
                max[s] = max[s].max(ch[s]);
            }
        }
        for v in avg.iter_mut() {
            *v = *v * inv;
        }
    }
    Tensor::new(&[batch * n, 2, h, w], out)
}

/// Attention maps `S̃_j`, shape `[B, n, H, W]`, each in `(0, 1)`.
pub fn attention_maps<T: Element>(
    y: &Tensor<T>,
    n: usize,
    p: &AttentionParams<T>,
) -> Result<Tensor<T>> {
    const OP: &str = "attention_forward";
    p.validate()?;
    y.expect_rank(OP, 4)?;
    if n == 0 {
        return Err(Error::invalid(OP, "group count must be at least 1"));
    }
    expect_divisible(OP, "output channels", y.shape()[1], n)?;
    let (batch, h, w) = (y.shape()[0], y.shape()[2], y.shape()[3]);
    let pooled = pool_groups(y, n)?;
    let bias = p.f_bias.data()[0];
    let logits = conv2d(&pooled, &p.f_weight, 1, p.kernel() / 2, 1)?;
    logits.map(|v| sigmoid(v + bias)).reshape(&[batch, n, h, w])
}

/// Gates each group of `y: [B, Cout, H, W]` with its own spatial attention map.
pub fn attention_forward<T: Element>(
    y: &Tensor<T>,
    n: usize,
    p: &AttentionParams<T>,
) -> Result<Tensor<T>> {
    let maps = attention_maps(y, n, p)?;
    let (cout, h, w) = (y.shape()[1], y.shape()[2], y.shape()[3]);
    let (cg, hw) = (cout / n, h * w);
    let md = maps.data();
    let mut out = y.clone();
    for (bc, plane) in out.data_mut().chunks_exact_mut(hw).enumerate() {
        let (b, c) = (bc / cout, bc % cout);
        let map = &md[(b * n + c / cg) * hw..(b * n + c / cg + 1) * hw];
        for (v, &m) in plane.iter_mut().zip(map) {
            *v = *v * m;
        }
    }
    Ok(out)
}
