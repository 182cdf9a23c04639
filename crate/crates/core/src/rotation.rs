//! Kernel rotation as a linear operator on flattened `k×k` kernels.
//!
//! Cell `(r, c)` sits at centred coordinates `(c − h, h − r)` with
//! `h = (k − 1)/2`, x pointing right and y pointing up. Rotating by `θ`
//! fills target cell `p` with the kernel value at `R(−θ)·p`, so positive
//! angles turn the kernel pattern counter-clockwise. Values between cells
//! are bilinear; sample points outside the closed square `[−h, h]²` read
//! zero.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Coordinates this close to an integer are snapped onto it, so that
/// quarter turns land exactly on grid cells despite `cos(π/2) ≠ 0`.
const SNAP: f64 = 1e-12;

/// Minimum angular distance from a seam accepted by [`rotation_matrix_dtheta`].
pub const SEAM_DELTA: f64 = 1e-6;

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

fn check_k(op: &'static str, k: usize) -> Result<()> {
    if k % 2 == 1 {
        Ok(())
    } else {
        Err(Error::invalid(
            op,
            format!("kernel extent {k} must be odd and positive"),
        ))
    }
}

/// Centred coordinates `(u, v)` of cell `(r, c)`.
pub(crate) fn cell_coords(r: usize, c: usize, k: usize) -> (f64, f64) {
    let h = ((k - 1) / 2) as f64;
    (c as f64 - h, h - r as f64)
}

/// Where target cell `(r, c)` samples the unrotated kernel, in centred coordinates.
pub(crate) fn source_point(r: usize, c: usize, k: usize, cos: f64, sin: f64) -> (f64, f64) {
    let (u, v) = cell_coords(r, c, k);
    (snap(cos * u + sin * v), snap(-sin * u + cos * v))
}

/// Bilinear cell weights for one sample point: `(cell, weight, d weight / d θ)`.
///
/// Returns nothing for points outside the support.
fn bilinear_taps(k: usize, xs: f64, ys: f64) -> Vec<(usize, f64, f64)> {
    let h = ((k - 1) / 2) as f64;
    if xs.abs() > h || ys.abs() > h {
        return Vec::new();
    }
    if k == 1 {
        return vec![(0, 1.0, 0.0)];
    }
    let col = xs + h;
    let row = h - ys;
    let c0 = (col.floor() as usize).min(k - 2);
    let r0 = (row.floor() as usize).min(k - 2);
    let fc = col - c0 as f64;
    let fr = row - r0 as f64;
    // d col / dθ = ys and d row / dθ = xs.
    let (dfc, dfr) = (ys, xs);
    vec![
        (
            r0 * k + c0,
            (1.0 - fr) * (1.0 - fc),
            -dfr * (1.0 - fc) - (1.0 - fr) * dfc,
        ),
        (
            r0 * k + c0 + 1,
            (1.0 - fr) * fc,
            -dfr * fc + (1.0 - fr) * dfc,
        ),
        (
            (r0 + 1) * k + c0,
            fr * (1.0 - fc),
            dfr * (1.0 - fc) - fr * dfc,
        ),
        ((r0 + 1) * k + c0 + 1, fr * fc, dfr * fc + fr * dfc),
    ]
}

/// The `k²×k²` matrix realising `Rotate(·, θ)`; entry `[p, q]` is the weight of
/// source cell `q` in target cell `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationOperator<T = f32> {
    k: usize,
    theta: f64,
    matrix: Tensor<T>,
}

impl<T: Element> RotationOperator<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Tensor<T> {
        self.matrix
    }

    /// Applies the operator to every trailing `k×k` kernel of `w`.
    pub fn apply(&self, w: &Tensor<T>) -> Result<Tensor<T>> {
        let kk = self.k * self.k;
        check_square_trailing("RotationOperator::apply", w, self.k)?;
        let m = self.matrix.data();
        let mut out = vec![T::zero(); w.numel()];
        for (src, dst) in w.data().chunks_exact(kk).zip(out.chunks_exact_mut(kk)) {
            for (p, d) in dst.iter_mut().enumerate() {
                *d = m[p * kk..(p + 1) * kk]
                    .iter()
                    .zip(src)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            }
        }
        Tensor::new(w.shape(), out)
    }
}

fn check_square_trailing<T: Element>(op: &'static str, w: &Tensor<T>, k: usize) -> Result<()> {
    let s = w.shape();
    if s.len() < 2 || s[s.len() - 1] != k || s[s.len() - 2] != k {
        return Err(Error::invalid(
            op,
            format!("expected trailing {k}x{k} kernels, got shape {s:?}"),
        ));
    }
    Ok(())
}

/// Builds the bilinear rotation operator for angle `theta` (radians).
pub fn rotation_matrix<T: Element>(theta: f64, k: usize) -> Result<RotationOperator<T>> {
    check_k("rotation_matrix", k)?;
    if !theta.is_finite() {
        return Err(Error::invalid(
            "rotation_matrix",
            format!("theta {theta} is not finite"),
        ));
    }
    let (sin, cos) = theta.sin_cos();
    let kk = k * k;
    let mut m = vec![T::zero(); kk * kk];
    for r in 0..k {
        for c in 0..k {
            let p = r * k + c;
            let (xs, ys) = source_point(r, c, k, cos, sin);
            for (q, w, _) in bilinear_taps(k, xs, ys) {
                m[p * kk + q] = m[p * kk + q] + T::from_f64(w);
            }
        }
    }
    Ok(RotationOperator {
        k,
        theta,
        matrix: Tensor::new(&[kk, kk], m)?,
    })
}

fn wrap_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Angular distance from `theta` to the nearest angle at which some sample
/// point crosses a grid line (the support boundary included), and the target
/// cell that owns it. `None` when no cell has a seam (`k = 1`).
pub fn nearest_seam(theta: f64, k: usize) -> Result<Option<(f64, usize)>> {
    check_k("nearest_seam", k)?;
    let mut best: Option<(f64, usize)> = None;
    for r in 0..k {
        for c in 0..k {
            let (u, v) = cell_coords(r, c, k);
            let radius = u.hypot(v);
            if radius == 0.0 {
                continue;
            }
            let phi = v.atan2(u);
            let m_max = radius.floor() as i64;
            for m in -m_max..=m_max {
                let ratio = (m as f64 / radius).clamp(-1.0, 1.0);
                let (ac, asn) = (ratio.acos(), ratio.asin());
                // xs = ρ·cos(θ − φ), ys = ρ·sin(φ − θ)
                for seam in [phi + ac, phi - ac, phi - asn, phi - PI + asn] {
                    let d = wrap_angle(theta - seam).abs();
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, r * k + c));
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Entrywise derivative of [`rotation_matrix`] with respect to `theta`.
///
/// Bilinear weights are only piecewise smooth in `θ`; angles within
/// [`SEAM_DELTA`] of a seam are rejected.
pub fn rotation_matrix_dtheta<T: Element>(theta: f64, k: usize) -> Result<Tensor<T>> {
    check_k("rotation_matrix_dtheta", k)?;
    if !theta.is_finite() {
        return Err(Error::invalid(
            "rotation_matrix_dtheta",
            format!("theta {theta} is not finite"),
        ));
    }
    if let Some((d, cell)) = nearest_seam(theta, k)? {
        if d < SEAM_DELTA {
            return Err(Error::NearSeam {
                theta,
                delta: SEAM_DELTA,
                cell,
            });
        }
    }
    let (sin, cos) = theta.sin_cos();
    let kk = k * k;
    let mut m = vec![T::zero(); kk * kk];
    for r in 0..k {
        for c in 0..k {
            let p = r * k + c;
            let (xs, ys) = source_point(r, c, k, cos, sin);
            for (q, _, dw) in bilinear_taps(k, xs, ys) {
                m[p * kk + q] = m[p * kk + q] + T::from_f64(dw);
            }
        }
    }
    Tensor::new(&[kk, kk], m)
}

/// Rotates every trailing `k×k` kernel of `w` by direct bilinear sampling,
/// without building an operator.
pub fn rotate_kernel_direct<T: Element>(w: &Tensor<T>, theta: f64) -> Result<Tensor<T>> {
    const OP: &str = "rotate_kernel_direct";
    let s = w.shape();
    if s.len() < 2 || s[s.len() - 1] != s[s.len() - 2] {
        return Err(Error::invalid(
            OP,
            format!("trailing extents of {s:?} are not square"),
        ));
    }
    let k = s[s.len() - 1];
    check_k(OP, k)?;
    if !theta.is_finite() {
        return Err(Error::invalid(OP, format!("theta {theta} is not finite")));
    }
    let h = ((k - 1) / 2) as f64;
    let (sin, cos) = theta.sin_cos();
    let kk = k * k;
    let mut out = vec![T::zero(); w.numel()];
    for (src, dst) in w.data().chunks_exact(kk).zip(out.chunks_exact_mut(kk)) {
        let at = |r: usize, c: usize| src[r * k + c].as_f64();
        for r in 0..k {
            for c in 0..k {
                let (xs, ys) = source_point(r, c, k, cos, sin);
                if xs.abs() > h || ys.abs() > h {
                    continue;
                }
                let col = xs + h;
                let row = h - ys;
                let c0 = (col.floor() as usize).min(k.saturating_sub(2));
                let r0 = (row.floor() as usize).min(k.saturating_sub(2));
                let c1 = (c0 + 1).min(k - 1);
                let r1 = (r0 + 1).min(k - 1);
                let tc = col - c0 as f64;
                let tr = row - r0 as f64;
                // Convex form, so integer sample points copy cells exactly.
                let top = at(r0, c0) * (1.0 - tc) + at(r0, c1) * tc;
                let bottom = at(r1, c0) * (1.0 - tc) + at(r1, c1) * tc;
                dst[r * k + c] = T::from_f64(top * (1.0 - tr) + bottom * tr);
            }
        }
    }
    Tensor::new(s, out)
}
