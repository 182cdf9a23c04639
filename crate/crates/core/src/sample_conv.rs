//! Per-sample convolution: sample `b` of `x` is convolved with its own kernel
//! set `w_rot[b]`, folded into a single grouped convolution with `groups = B`.

use crate::error::Result;
use crate::tensor::{conv2d, expect_extent, Element, Tensor};

/// Shape-preserving padding for an odd kernel.
pub fn same_padding(k: usize) -> usize {
    k / 2
}

pub fn conv_per_sample<T: Element>(
    x: &Tensor<T>,
    w_rot: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    const OP: &str = "conv_per_sample";
    x.expect_rank(OP, 4)?;
    w_rot.expect_rank(OP, 5)?;
    let (batch, cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (wb, cout, wcin, k, kw) = (
        w_rot.shape()[0],
        w_rot.shape()[1],
        w_rot.shape()[2],
        w_rot.shape()[3],
        w_rot.shape()[4],
    );
    expect_extent(OP, "batch", batch, wb)?;
    expect_extent(OP, "input channels", cin, wcin)?;

    let xs = x.clone().reshape(&[1, batch * cin, h, w])?;
    let ws = w_rot.clone().reshape(&[batch * cout, cin, k, kw])?;
    let y = conv2d(&xs, &ws, stride, padding, batch)?;
    let (ho, wo) = (y.shape()[2], y.shape()[3]);
    y.reshape(&[batch, cout, ho, wo])
}
