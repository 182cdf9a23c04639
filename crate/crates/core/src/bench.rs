//! Timing harness comparing the naive and batched rotation paths against the
//! convolution they feed.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::angle_generator::AngleSet;
use crate::error::{Error, Result};
use crate::grouped_rotation::{rotate_groups_batched, rotate_groups_naive, KernelBank};
use crate::sample_conv::{conv_per_sample, same_padding};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub hw: usize,
    pub groups: usize,
    pub k: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch: 4,
            cin: 256,
            cout: 256,
            hw: 64,
            groups: 32,
            k: 3,
            iters: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub naive_us: f64,
    pub batched_us: f64,
    pub conv_us: f64,
    /// `100 · batched / conv`
    pub overhead_pct: f64,
    /// Sum of one convolution output, for spotting numerical drift.
    pub checksum: f64,
}

impl BenchReport {
    pub fn speedup(&self) -> f64 {
        self.naive_us / self.batched_us
    }

    /// `bench naive_us=.. batched_us=.. conv_us=.. overhead_pct=..`
    pub fn summary_line(&self) -> String {
        format!(
            "bench naive_us={:.1} batched_us={:.1} conv_us={:.1} overhead_pct={:.3}",
            self.naive_us, self.batched_us, self.conv_us, self.overhead_pct
        )
    }
}

pub fn median(mut samples: Vec<Duration>) -> Duration {
    samples.sort_unstable();
    let n = samples.len();
    if n == 0 {
        Duration::ZERO
    } else if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

fn time_median<R>(iters: usize, mut f: impl FnMut() -> Result<R>) -> Result<(Duration, R)> {
    let mut samples = Vec::with_capacity(iters);
    let mut last = None;
    for _ in 0..iters {
        let t = Instant::now();
        let r = f()?;
        samples.push(t.elapsed());
        last = Some(r);
    }
    Ok((median(samples), last.expect("at least one iteration")))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.iters == 0 || cfg.batch == 0 || cfg.cin == 0 || cfg.hw == 0 {
        return Err(Error::invalid(
            "bench",
            "batch, cin, hw and iters must be positive",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut uniform = |shape: &[usize], lo: f64, hi: f64| {
        Tensor::<f32>::from_fn(shape, |_| rng.gen_range(lo..hi) as f32)
    };
    let bank = KernelBank::new(
        uniform(&[cfg.cout, cfg.cin, cfg.k, cfg.k], -0.1, 0.1),
        cfg.groups,
    )?;
    let x = uniform(&[cfg.batch, cfg.cin, cfg.hw, cfg.hw], -1.0, 1.0);
    let angles = AngleSet::new(
        uniform(&[cfg.batch, cfg.groups], -PI, PI),
        uniform(&[cfg.batch, cfg.groups], 0.05, 0.95),
    )?;
    let padding = same_padding(cfg.k);

    let (naive, _) = time_median(cfg.iters, || rotate_groups_naive(&bank, &angles))?;
    let (batched, w_rot) = time_median(cfg.iters, || rotate_groups_batched(&bank, &angles))?;
    let (conv, y) = time_median(cfg.iters, || conv_per_sample(&x, &w_rot, 1, padding))?;

    let us = |d: Duration| d.as_secs_f64() * 1e6;
    Ok(BenchReport {
        naive_us: us(naive),
        batched_us: us(batched),
        conv_us: us(conv),
        overhead_pct: 100.0 * batched.as_secs_f64() / conv.as_secs_f64(),
        checksum: y.sum_f64(),
    })
}
