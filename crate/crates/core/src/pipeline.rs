//! Full GRA forward pass and the ARC baseline it is compared against.

use crate::angle_generator::{generator_forward, AngleGenParams, AngleSet};
use crate::attention::{attention_forward, AttentionParams};
use crate::error::{Error, Result};
use crate::grouped_rotation::{rotate_groups_batched, KernelBank};
use crate::sample_conv::{conv_per_sample, same_padding};
use crate::tensor::{expect_extent, Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GraParams<T = f32> {
    pub bank: KernelBank<T>,
    pub gen: AngleGenParams<T>,
    pub attn: AttentionParams<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Element> GraParams<T> {
    /// Stride 1 and shape-preserving padding.
    pub fn new(
        bank: KernelBank<T>,
        gen: AngleGenParams<T>,
        attn: AttentionParams<T>,
    ) -> Result<Self> {
        let padding = same_padding(bank.k());
        let p = Self {
            bank,
            gen,
            attn,
            stride: 1,
            padding,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "GraParams";
        self.gen.validate()?;
        self.attn.validate()?;
        expect_extent(OP, "generator heads", self.bank.groups(), self.gen.heads())?;
        expect_extent(
            OP,
            "generator in-channels",
            self.bank.in_channels(),
            self.gen.in_channels(),
        )?;
        if self.stride == 0 {
            return Err(Error::invalid(OP, "stride must be at least 1"));
        }
        Ok(())
    }
}

/// Output of a forward pass together with the angles that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T = f32> {
    pub output: Tensor<T>,
    pub angles: AngleSet<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(not(feature = "test-hooks"), allow(dead_code))]
enum Gate {
    Spatial,
    Identity,
}

fn gra_run<T: Element>(
    x: &Tensor<T>,
    p: &GraParams<T>,
    angles: Option<&AngleSet<T>>,
    gate: Gate,
) -> Result<ForwardOutput<T>> {
    p.validate()?;
    let angles = match angles {
        Some(a) => a.clone(),
        None => generator_forward(x, &p.gen)?,
    };
    expect_extent("gra_forward", "angle batch", x.shape()[0], angles.batch())?;
    let w_rot = rotate_groups_batched(&p.bank, &angles)?;
    let y = conv_per_sample(x, &w_rot, p.stride, p.padding)?;
    let output = match gate {
        Gate::Spatial => attention_forward(&y, p.bank.groups(), &p.attn)?,
        Gate::Identity => y,
    };
    Ok(ForwardOutput { output, angles })
}

/// `x: [B, Cin, H, W]` → `[B, Cout, H', W']`.
pub fn gra_forward<T: Element>(x: &Tensor<T>, p: &GraParams<T>) -> Result<Tensor<T>> {
    Ok(gra_run(x, p, None, Gate::Spatial)?.output)
}

/// Like [`gra_forward`], also returning the predicted angles and scales.
pub fn gra_forward_traced<T: Element>(x: &Tensor<T>, p: &GraParams<T>) -> Result<ForwardOutput<T>> {
    gra_run(x, p, None, Gate::Spatial)
}

/// Runs GRA with externally supplied angles in place of the generator.
pub fn gra_forward_with_angles<T: Element>(
    x: &Tensor<T>,
    p: &GraParams<T>,
    angles: &AngleSet<T>,
) -> Result<Tensor<T>> {
    Ok(gra_run(x, p, Some(angles), Gate::Spatial)?.output)
}

/// Test-only entry points that bypass the attention gate.
#[cfg(feature = "test-hooks")]
pub mod hooks {
    use super::*;

    /// GRA with the attention stage replaced by the identity; `angles`
    /// overrides the generator when given.
    pub fn gra_forward_ungated<T: Element>(
        x: &Tensor<T>,
        p: &GraParams<T>,
        angles: Option<&AngleSet<T>>,
    ) -> Result<ForwardOutput<T>> {
        gra_run(x, p, angles, Gate::Identity)
    }
}

/// `m` full kernel copies and an `m`-headed routing network.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcParams<T = f32> {
    /// `[m, Cout, Cin, k, k]`
    pub banks: Tensor<T>,
    pub routing: AngleGenParams<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Element> ArcParams<T> {
    pub fn new(banks: Tensor<T>, routing: AngleGenParams<T>) -> Result<Self> {
        banks.expect_rank("ArcParams", 5)?;
        let padding = same_padding(banks.shape()[3]);
        let p = Self {
            banks,
            routing,
            stride: 1,
            padding,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn branches(&self) -> usize {
        self.banks.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "ArcParams";
        self.banks.expect_rank(OP, 5)?;
        self.routing.validate()?;
        expect_extent(OP, "routing heads", self.branches(), self.routing.heads())?;
        expect_extent(
            OP,
            "routing in-channels",
            self.banks.shape()[2],
            self.routing.in_channels(),
        )?;
        if self.stride == 0 {
            return Err(Error::invalid(OP, "stride must be at least 1"));
        }
        Ok(())
    }
}

pub fn arc_forward<T: Element>(x: &Tensor<T>, p: &ArcParams<T>) -> Result<Tensor<T>> {
    Ok(arc_forward_traced(x, p)?.output)
}

pub fn arc_forward_traced<T: Element>(x: &Tensor<T>, p: &ArcParams<T>) -> Result<ForwardOutput<T>> {
    p.validate()?;
    let angles = generator_forward(x, &p.routing)?;
    let output = arc_forward_with_angles(x, p, &angles)?;
    Ok(ForwardOutput { output, angles })
}

/// `y = Σ_i λ_i · Conv(x, Rotate(W_i, θ_i))` with per-sample `θ`, `λ` of shape `[B, m]`.
pub fn arc_forward_with_angles<T: Element>(
    x: &Tensor<T>,
    p: &ArcParams<T>,
    angles: &AngleSet<T>,
) -> Result<Tensor<T>> {
    const OP: &str = "arc_forward";
    p.validate()?;
    let m = p.branches();
    let batch = x.shape().first().copied().unwrap_or(0);
    expect_extent(OP, "angle batch", batch, angles.batch())?;
    expect_extent(OP, "angle branches", m, angles.groups())?;

    let mut acc: Option<Tensor<T>> = None;
    for i in 0..m {
        let bank = KernelBank::new(p.banks.index_outer(i), 1)?;
        let thetas = Tensor::from_fn(&[batch, 1], |ix| angles.theta(ix[0], i));
        let branch_angles = AngleSet::new(thetas, Tensor::full(&[batch, 1], T::one()))?;
        let w_rot = rotate_groups_batched(&bank, &branch_angles)?;
        let y = conv_per_sample(x, &w_rot, p.stride, p.padding)?;
        let per_sample = y.numel() / batch;
        let acc = acc.get_or_insert_with(|| Tensor::zeros(y.shape()));
        for (idx, (a, &v)) in acc.data_mut().iter_mut().zip(y.data()).enumerate() {
            *a = *a + angles.lambda(idx / per_sample, i) * v;
        }
    }
    acc.ok_or_else(|| Error::invalid(OP, "at least one branch is required"))
}
