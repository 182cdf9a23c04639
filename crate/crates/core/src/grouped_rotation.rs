//! Group-wise kernel rotation.
//!
//! The `Cout` filters of a kernel bank are split into `n` contiguous groups;
//! for each sample `b`, group `j` is rotated by `θ[b, j]` and scaled by
//! `λ[b, j]`. [`rotate_groups_batched`] does all of it with one batched
//! matrix product, [`rotate_groups_naive`] loops filter by filter.

use crate::angle_generator::AngleSet;
use crate::error::{Error, Result};
use crate::rotation::{rotate_kernel_direct, rotation_matrix};
use crate::tensor::{bmm, expect_divisible, expect_extent, Element, Tensor};

/// Convolution weights `[Cout, Cin, k, k]` partitioned into `n` groups.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank<T = f32> {
    w: Tensor<T>,
    n: usize,
}

impl<T: Element> KernelBank<T> {
    pub fn new(w: Tensor<T>, n: usize) -> Result<Self> {
        const OP: &str = "KernelBank::new";
        w.expect_rank(OP, 4)?;
        let s = w.shape();
        expect_extent(OP, "kernel width", s[2], s[3])?;
        if s[2].is_multiple_of(2) {
            return Err(Error::invalid(
                OP,
                format!("kernel extent {} is not odd", s[2]),
            ));
        }
        if n == 0 {
            return Err(Error::invalid(OP, "group count must be at least 1"));
        }
        expect_divisible(OP, "output channels", s[0], n)?;
        Ok(Self { w, n })
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.w
    }

    pub fn groups(&self) -> usize {
        self.n
    }

    pub fn out_channels(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn k(&self) -> usize {
        self.w.shape()[2]
    }

    pub fn group_size(&self) -> usize {
        self.out_channels() / self.n
    }
}

/// `[n, Cout/n, Cin, k, k]`; group `j` holds filters `j·Cout/n .. (j+1)·Cout/n`.
pub fn group_view<T: Element>(bank: &KernelBank<T>) -> Result<Tensor<T>> {
    let (n, cg, cin, k) = (bank.n, bank.group_size(), bank.in_channels(), bank.k());
    bank.w.clone().reshape(&[n, cg, cin, k, k])
}

fn check_angles<T: Element>(
    op: &'static str,
    bank: &KernelBank<T>,
    angles: &AngleSet<T>,
) -> Result<()> {
    expect_extent(op, "angle groups", bank.n, angles.groups())?;
    expect_extent(
        op,
        "lambda batch",
        angles.batch(),
        angles.lambdas.shape()[0],
    )?;
    expect_extent(op, "lambda groups", bank.n, angles.lambdas.shape()[1])
}

/// Reference loop: every filter of every group rotated by direct sampling.
pub fn rotate_groups_naive<T: Element>(
    bank: &KernelBank<T>,
    angles: &AngleSet<T>,
) -> Result<Tensor<T>> {
    check_angles("rotate_groups_naive", bank, angles)?;
    let grouped = group_view(bank)?;
    let mut samples = Vec::with_capacity(angles.batch());
    for b in 0..angles.batch() {
        let mut data = Vec::with_capacity(bank.w.numel());
        for j in 0..bank.n {
            let rotated =
                rotate_kernel_direct(&grouped.index_outer(j), angles.theta(b, j).as_f64())?;
            let lambda = angles.lambda(b, j);
            data.extend(rotated.data().iter().map(|&v| v * lambda));
        }
        samples.push(Tensor::new(bank.w.shape(), data)?);
    }
    Tensor::stack(&samples)
}

/// The two operands of the single batched product:
/// rotation matrices `[n, B·k², k²]` and grouped weights `[n, k², (Cout/n)·Cin]`.
pub fn batched_operands<T: Element>(
    bank: &KernelBank<T>,
    angles: &AngleSet<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_angles("batched_operands", bank, angles)?;
    let (n, cg, cin, k) = (bank.n, bank.group_size(), bank.in_channels(), bank.k());
    let batch = angles.batch();
    let kk = k * k;

    // [B, n, k², k²] -> [n, B, k², k²] -> [n, B·k², k²]
    let mut mats = Vec::with_capacity(batch * n * kk * kk);
    for b in 0..batch {
        for j in 0..n {
            let op = rotation_matrix::<T>(angles.theta(b, j).as_f64(), k)?;
            mats.extend_from_slice(op.matrix().data());
        }
    }
    let rot = Tensor::new(&[batch, n, kk, kk], mats)?
        .permute(&[1, 0, 2, 3])?
        .reshape(&[n, batch * kk, kk])?;

    // [Cout, Cin, k, k] -> [n, Cout/n, Cin, k²] -> [n, k², Cout/n, Cin] -> [n, k², Cout/n·Cin]
    let w = bank
        .w
        .clone()
        .reshape(&[n, cg, cin, kk])?
        .permute(&[0, 3, 1, 2])?
        .reshape(&[n, kk, cg * cin])?;
    Ok((rot, w))
}

/// Group-wise rotation through one batched matrix product.
pub fn rotate_groups_batched<T: Element>(
    bank: &KernelBank<T>,
    angles: &AngleSet<T>,
) -> Result<Tensor<T>> {
    let (rot, w) = batched_operands(bank, angles)?;
    let (n, cg, cin, k) = (bank.n, bank.group_size(), bank.in_channels(), bank.k());
    let batch = angles.batch();
    let kk = k * k;

    // [n, B·k², Cout/n·Cin] -> [n, B, k², Cout/n, Cin] -> [B, n, Cout/n, Cin, k²]
    let mut out = bmm(&rot, &w)?
        .reshape(&[n, batch, kk, cg, cin])?
        .permute(&[1, 0, 3, 4, 2])?
        .reshape(&[batch, bank.out_channels(), cin, k, k])?;

    let per_group = cg * cin * kk;
    for (chunk, idx) in out.data_mut().chunks_exact_mut(per_group).zip(0..) {
        let lambda = angles.lambda(idx / n, idx % n);
        for v in chunk {
            *v = *v * lambda;
        }
    }
    Ok(out)
}
