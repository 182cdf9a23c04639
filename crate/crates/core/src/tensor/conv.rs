use super::{expect_divisible, expect_extent, Element, Tensor};
use crate::error::{Error, Result};

// Register tile: MR output channels by NR output pixels.
const MR: usize = 4;
const NR: usize = 8;

/// `(extent + 2·padding − k) / stride + 1`, or `None` when the window never fits.
pub fn conv_output_extent(extent: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 {
        return None;
    }
    let padded = extent + 2 * padding;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

/// Grouped 2-D cross-correlation.
///
/// `x` is `[B, Cin, H, W]` and `w` is `[Cout, Cin/groups, k, k]` with `k` odd.
/// Filters of group `g` read only the input channels of group `g`. Every
/// output element is accumulated from zero over `(channel, row, column)` of
/// its receptive field in that order, one product at a time.
pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<Tensor<T>> {
    const OP: &str = "conv2d";
    x.expect_rank(OP, 4)?;
    w.expect_rank(OP, 4)?;
    if groups == 0 {
        return Err(Error::invalid(OP, "groups must be at least 1"));
    }
    if stride == 0 {
        return Err(Error::invalid(OP, "stride must be at least 1"));
    }
    let (batch, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, cin_g, k, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    expect_divisible(OP, "input channels", cin, groups)?;
    expect_divisible(OP, "output channels", cout, groups)?;
    expect_extent(OP, "weight in-channels per group", cin / groups, cin_g)?;
    expect_extent(OP, "kernel width", k, kw)?;
    if k % 2 == 0 {
        return Err(Error::invalid(OP, format!("kernel extent {k} is not odd")));
    }
    let ho = conv_output_extent(h, k, stride, padding).ok_or_else(|| {
        Error::invalid(
            OP,
            format!("kernel {k} does not fit height {h} with padding {padding}"),
        )
    })?;
    let wo = conv_output_extent(wd, k, stride, padding).ok_or_else(|| {
        Error::invalid(
            OP,
            format!("kernel {k} does not fit width {wd} with padding {padding}"),
        )
    })?;

    let cout_g = cout / groups;
    let depth = cin_g * k * k;
    let npix = ho * wo;
    let blocks = cout_g.div_ceil(MR);

    // Weights packed per group as [block][depth][MR], zero rows past cout_g.
    let wdata = w.data();
    let mut packed = vec![T::zero(); groups * blocks * depth * MR];
    for g in 0..groups {
        for o in 0..cout_g {
            let (blk, lane) = (o / MR, o % MR);
            let src = &wdata[(g * cout_g + o) * depth..(g * cout_g + o + 1) * depth];
            let base = (g * blocks + blk) * depth * MR;
            for (d, &v) in src.iter().enumerate() {
                packed[base + d * MR + lane] = v;
            }
        }
    }

    // Per-depth-index offsets into a channel block of x.
    let taps: Vec<(usize, isize, isize)> = (0..depth)
        .map(|d| {
            let c = d / (k * k);
            let dy = (d / k) % k;
            let dx = d % k;
            (
                c,
                dy as isize - padding as isize,
                dx as isize - padding as isize,
            )
        })
        .collect();

    let xdata = x.data();
    let mut out = vec![T::zero(); batch * cout * npix];
    let mut col = vec![T::zero(); depth * NR];
    let mut rows = [0isize; NR];
    let mut cols = [0isize; NR];

    for b in 0..batch {
        for g in 0..groups {
            let xg = &xdata[(b * cin + g * cin_g) * h * wd..(b * cin + (g + 1) * cin_g) * h * wd];
            for p0 in (0..npix).step_by(NR) {
                let width = NR.min(npix - p0);
                for t in 0..NR {
                    let p = p0 + t.min(width - 1);
                    rows[t] = ((p / wo) * stride) as isize;
                    cols[t] = ((p % wo) * stride) as isize;
                }
                for (d, &(c, oy, ox)) in taps.iter().enumerate() {
                    let plane = &xg[c * h * wd..(c + 1) * h * wd];
                    let dst = &mut col[d * NR..(d + 1) * NR];
                    for t in 0..NR {
                        let iy = rows[t] + oy;
                        let ix = cols[t] + ox;
                        dst[t] = if t < width
                            && iy >= 0
                            && ix >= 0
                            && (iy as usize) < h
                            && (ix as usize) < wd
                        {
                            plane[iy as usize * wd + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
                for blk in 0..blocks {
                    let wp = &packed
                        [(g * blocks + blk) * depth * MR..(g * blocks + blk + 1) * depth * MR];
                    let acc = microkernel(wp, &col, depth);
                    for (lane, row) in acc.iter().enumerate() {
                        let o = blk * MR + lane;
                        if o >= cout_g {
                            break;
                        }
                        let base = (b * cout + g * cout_g + o) * npix + p0;
                        out[base..base + width].copy_from_slice(&row[..width]);
                    }
                }
            }
        }
    }
    Tensor::new(&[batch, cout, ho, wo], out)
}

#[inline(always)]
fn microkernel<T: Element>(wp: &[T], col: &[T], depth: usize) -> [[T; NR]; MR] {
    let mut acc = [[T::zero(); NR]; MR];
    for d in 0..depth {
        let wv: &[T; MR] = wp[d * MR..(d + 1) * MR].try_into().unwrap();
        let cv: &[T; NR] = col[d * NR..(d + 1) * NR].try_into().unwrap();
        for q in 0..MR {
            for t in 0..NR {
                acc[q][t] = acc[q][t] + wv[q] * cv[t];
            }
        }
    }
    acc
}
