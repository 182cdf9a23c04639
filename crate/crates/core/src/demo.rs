//! Synthetic orientation demo: an oriented line kernel, rotated through GRA
//! with overridden angles, against sinusoidal stripe images.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::angle_generator::{AngleGenParams, AngleSet};
use crate::attention::{AttentionParams, DEFAULT_ATTENTION_KERNEL};
use crate::error::{Error, Result};
use crate::grouped_rotation::KernelBank;
use crate::pipeline::{gra_forward_with_angles, GraParams};
use crate::rotation::cell_coords;
use crate::tensor::Tensor;

/// Stripe angular frequency: one period every six pixels.
const STRIPE_FREQ: f64 = PI / 3.0;
/// Evenly spaced stripe phases averaged per orientation.
const PHASES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub k: usize,
    pub thetas: Vec<f64>,
    pub seed: u64,
    pub hw: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoResult {
    pub thetas: Vec<f64>,
    /// `responses[i][j]`: mean |output| for kernel angle `i` on stripes at angle `j`.
    pub responses: Vec<Vec<f64>>,
}

impl DemoResult {
    /// Column index of the largest response in each row.
    pub fn row_argmax(&self) -> Vec<usize> {
        self.responses
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                        if v > best.1 {
                            (j, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    pub fn diagonal_is_row_max(&self) -> bool {
        self.row_argmax().iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn render(&self) -> String {
        let mut s = String::from("kernel\\stripe");
        for t in &self.thetas {
            s.push_str(&format!(" {t:>10.4}"));
        }
        s.push('\n');
        for (t, row) in self.thetas.iter().zip(&self.responses) {
            s.push_str(&format!("{t:>13.4}"));
            for v in row {
                s.push_str(&format!(" {v:>10.5}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Edge detector for structure running along the x axis: `+1` on the row
/// above the centre, `−1` below it, Gaussian-tapered along the edge.
///
/// The odd profile keeps its selectivity after bilinear resampling at
/// off-grid angles, where an even line detector smears towards isotropy.
pub fn oriented_edge_kernel(k: usize) -> Result<Tensor<f64>> {
    if k.is_multiple_of(2) || k < 3 {
        return Err(Error::invalid(
            "oriented_edge_kernel",
            format!("kernel extent {k} must be odd and at least 3"),
        ));
    }
    let sigma = k as f64 / 3.0;
    Ok(Tensor::from_fn(&[k, k], |i| {
        let (u, v) = cell_coords(i[0], i[1], k);
        let profile = if v == 1.0 {
            1.0
        } else if v == -1.0 {
            -1.0
        } else {
            0.0
        };
        profile * (-(u * u) / (2.0 * sigma * sigma)).exp()
    }))
}

/// Sinusoidal stripes running along direction `phi` (x right, y up).
pub fn stripe_image(hw: usize, phi: f64, phase: f64) -> Tensor<f64> {
    let (s, c) = phi.sin_cos();
    Tensor::from_fn(&[hw, hw], |i| {
        let (x, y) = (i[1] as f64, -(i[0] as f64));
        (STRIPE_FREQ * (-x * s + y * c) + phase).cos()
    })
}

pub fn run_demo(cfg: &DemoConfig) -> Result<DemoResult> {
    if cfg.thetas.is_empty() {
        return Err(Error::invalid("demo", "at least one angle is required"));
    }
    let k = cfg.k;
    let hw = cfg.hw;
    if hw < 2 * k + 1 {
        return Err(Error::invalid(
            "demo",
            format!("image extent {hw} too small for kernel {k}"),
        ));
    }
    let kernel = oriented_edge_kernel(k)?.reshape(&[1, 1, k, k])?;
    let params = GraParams::new(
        KernelBank::new(kernel, 1)?,
        AngleGenParams::zeroed(1, 1),
        AttentionParams::zeroed(DEFAULT_ATTENTION_KERNEL),
    )?;

    // PHASES images per orientation, evenly spaced from a seeded offset.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut images = Vec::with_capacity(cfg.thetas.len() * PHASES);
    for &phi in &cfg.thetas {
        let offset = rng.gen_range(0.0..2.0 * PI);
        for q in 0..PHASES {
            images.push(stripe_image(
                hw,
                phi,
                offset + 2.0 * PI * q as f64 / PHASES as f64,
            ));
        }
    }
    let count = images.len();
    let stripes = Tensor::stack(&images)?.reshape(&[count, 1, hw, hw])?;

    let margin = k / 2;
    let interior = ((hw - 2 * margin) * (hw - 2 * margin) * PHASES) as f64;
    let responses = cfg
        .thetas
        .iter()
        .map(|&theta| {
            let angles = AngleSet::uniform(count, 1, theta, 1.0);
            let y = gra_forward_with_angles(&stripes, &params, &angles)?;
            Ok((0..cfg.thetas.len())
                .map(|j| {
                    let mut sum = 0.0;
                    for s in j * PHASES..(j + 1) * PHASES {
                        for r in margin..hw - margin {
                            for c in margin..hw - margin {
                                sum += y.at(&[s, 0, r, c]).abs();
                            }
                        }
                    }
                    sum / interior
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    Ok(DemoResult {
        thetas: cfg.thetas.clone(),
        responses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_zero_mean_across_the_line() {
        let w = oriented_edge_kernel(3).unwrap();
        for c in 0..3 {
            let col: f64 = (0..3).map(|r| w.at(&[r, c])).sum();
            assert!(col.abs() < 1e-12);
            assert_eq!(w.at(&[0, c]), -w.at(&[2, c]));
            assert_eq!(w.at(&[1, c]), 0.0);
        }
        assert!(oriented_edge_kernel(4).is_err());
    }

    #[test]
    fn horizontal_stripes_are_constant_along_rows() {
        let img = stripe_image(8, 0.0, 0.3);
        for r in 0..8 {
            for c in 1..8 {
                assert!((img.at(&[r, c]) - img.at(&[r, 0])).abs() < 1e-12);
            }
        }
    }
}
