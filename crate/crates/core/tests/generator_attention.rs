#![allow(clippy::needless_range_loop)]

mod common;

use common::{attention_ref, generator_ref, random, rng, GenRef};
use gra_core::attention::attention_maps;
use gra_core::{
    attention_forward, generator_forward, generator_init, AngleGenParams, AttentionParams, Tensor,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_gen(r: &mut ChaCha8Rng, cin: usize, n: usize) -> (AngleGenParams<f64>, GenRef) {
    let p = AngleGenParams {
        dw_kernel: random(r, &[cin, 1, 3, 3], 0.8),
        dw_bias: random(r, &[cin], 0.3),
        ln_gamma: Tensor::from_fn(&[cin], |_| r.gen_range(0.5..1.5)),
        ln_beta: random(r, &[cin], 0.3),
        w_theta: random(r, &[n, cin], 1.0),
        b_theta: random(r, &[n], 0.3),
        w_lambda: random(r, &[n, cin], 1.0),
        b_lambda: random(r, &[n], 0.3),
    };
    let reference = GenRef {
        dw_kernel: p.dw_kernel.clone(),
        dw_bias: p.dw_bias.clone(),
        ln_gamma: p.ln_gamma.clone(),
        ln_beta: p.ln_beta.clone(),
        w_theta: p.w_theta.clone(),
        b_theta: p.b_theta.clone(),
        w_lambda: p.w_lambda.clone(),
        b_lambda: p.b_lambda.clone(),
    };
    (p, reference)
}

#[test]
fn generator_matches_the_scalar_reference() {
    let mut r = rng(30);
    for _ in 0..20 {
        let (cin, n) = (r.gen_range(2..=6), r.gen_range(1..=4));
        let (p, reference) = random_gen(&mut r, cin, n);
        let shape = [2, cin, r.gen_range(1..=7), r.gen_range(1..=7)];
        let x = random(&mut r, &shape, 1.0);
        let got = generator_forward(&x, &p).unwrap();
        let (thetas, lambdas) = generator_ref(&x, &reference);
        for b in 0..2 {
            for j in 0..n {
                assert!((got.theta(b, j) - thetas[b][j]).abs() < 1e-9);
                assert!((got.lambda(b, j) - lambdas[b][j]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn generator_on_channel_constant_input() {
    let mut r = rng(31);
    let (p, reference) = random_gen(&mut r, 3, 2);
    let x = Tensor::from_fn(&[1, 3, 6, 6], |i| [0.5, -1.0, 2.0][i[1]]);
    let got = generator_forward(&x, &p).unwrap();
    let (thetas, _) = generator_ref(&x, &reference);
    for j in 0..2 {
        assert!((got.theta(0, j) - thetas[0][j]).abs() < 1e-9);
    }
}

#[test]
fn zero_generator_gives_zero_angles_and_half_scales() {
    let p = AngleGenParams::<f64>::zeroed(4, 3);
    let x = random(&mut rng(32), &[2, 4, 5, 5], 3.0);
    let a = generator_forward(&x, &p).unwrap();
    assert!(a.thetas.data().iter().all(|&t| t == 0.0));
    assert!(a.lambdas.data().iter().all(|&l| l == 0.5));
}

#[test]
fn doubling_the_input_keeps_the_angles_when_relu_signs_hold() {
    let mut r = rng(33);
    let mut checked = 0;
    for _ in 0..20 {
        let (mut p, _) = random_gen(&mut r, 4, 2);
        p.dw_bias = Tensor::zeros(&[4]);
        p.ln_beta = Tensor::zeros(&[4]);
        let x = random(&mut r, &[1, 4, 5, 5], 10.0);
        let x2 = x.scale(2.0);
        // With zero bias the depthwise output scales by 2, so the ReLU pattern is unchanged.
        let pre = gra_core::conv2d(&x, &p.dw_kernel, 1, 1, 4).unwrap();
        let pre2 = gra_core::conv2d(&x2, &p.dw_kernel, 1, 1, 4).unwrap();
        assert!(pre
            .data()
            .iter()
            .zip(pre2.data())
            .all(|(a, b)| (*a > 0.0) == (*b > 0.0)));
        let (a, b) = (
            generator_forward(&x, &p).unwrap(),
            generator_forward(&x2, &p).unwrap(),
        );
        // LayerNorm ε makes the invariance approximate: positions where few
        // channels survive the ReLU have variance comparable to ε.
        assert!(a.thetas.max_abs_diff(&b.thetas) < 1e-4);
        checked += 1;
    }
    assert_eq!(checked, 20);
}

#[test]
fn generator_is_batch_independent_and_permutation_equivariant() {
    let mut r = rng(34);
    let (p, _) = random_gen(&mut r, 3, 4);
    let x = random(&mut r, &[4, 3, 6, 6], 1.0);
    let whole = generator_forward(&x, &p).unwrap();
    for b in 0..4 {
        let single =
            generator_forward(&x.index_outer(b).reshape(&[1, 3, 6, 6]).unwrap(), &p).unwrap();
        for j in 0..4 {
            assert!((single.theta(0, j) - whole.theta(b, j)).abs() < 1e-6);
            assert!((single.lambda(0, j) - whole.lambda(b, j)).abs() < 1e-6);
        }
    }
    let order = [2, 0, 3, 1];
    let permuted: Vec<Tensor<f64>> = order.iter().map(|&b| x.index_outer(b)).collect();
    let pa = generator_forward(&Tensor::stack(&permuted).unwrap(), &p).unwrap();
    for (row, &b) in order.iter().enumerate() {
        for j in 0..4 {
            assert_eq!(pa.theta(row, j), whole.theta(b, j));
            assert_eq!(pa.lambda(row, j), whole.lambda(b, j));
        }
    }
}

#[test]
fn mirrored_symmetric_input_and_kernel_give_equal_angles() {
    let mut r = rng(35);
    let (mut p, _) = random_gen(&mut r, 3, 2);
    // Left-right symmetric depthwise kernels commute with a horizontal flip.
    p.dw_kernel = Tensor::from_fn(&[3, 1, 3, 3], |i| {
        [0.3, -0.2, 0.3][i[3]] * (1.0 + i[0] as f64 + i[2] as f64)
    });
    let x = random(&mut r, &[1, 3, 5, 6], 1.0);
    let flipped = Tensor::from_fn(&[1, 3, 5, 6], |i| x.at(&[0, i[1], i[2], 5 - i[3]]));
    let (a, b) = (
        generator_forward(&x, &p).unwrap(),
        generator_forward(&flipped, &p).unwrap(),
    );
    assert!(a.thetas.max_abs_diff(&b.thetas) < 1e-12);
}

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    let a = generator_init(4, 2, 7).unwrap();
    assert_eq!(a, generator_init(4, 2, 7).unwrap());
    assert_ne!(a, generator_init(4, 2, 8).unwrap());
    assert!(a
        .dw_bias
        .data()
        .iter()
        .chain(a.b_theta.data())
        .chain(a.b_lambda.data())
        .all(|&v| v == 0.0));
    assert!(a.ln_gamma.data().iter().all(|&v| v == 1.0));
    assert!(a.ln_beta.data().iter().all(|&v| v == 0.0));
    let bound = 1.0 / 9f32.sqrt();
    assert!(a.dw_kernel.data().iter().all(|v| v.abs() <= bound));
    assert!(a.w_theta.data().iter().all(|v| v.abs() <= 0.5));
    assert!(generator_init(0, 2, 1).is_err());
    assert!(generator_init(2, 0, 1).is_err());
}

#[test]
fn generator_rejects_channel_mismatch() {
    let p = AngleGenParams::<f64>::zeroed(4, 2);
    assert!(generator_forward(&Tensor::zeros(&[1, 3, 4, 4]), &p).is_err());
}

fn random_attn(r: &mut ChaCha8Rng, ka: usize) -> AttentionParams<f64> {
    AttentionParams {
        f_weight: random(r, &[1, 2, ka, ka], 0.3),
        f_bias: random(r, &[1], 0.5),
    }
}

#[test]
fn attention_matches_the_scalar_reference() {
    let mut r = rng(40);
    for (shape, n, ka) in [
        ([1, 4, 5, 5], 2, 7),
        ([2, 6, 4, 7], 3, 3),
        ([1, 4, 6, 6], 4, 5),
        ([2, 8, 3, 3], 1, 7),
    ] {
        let y = random(&mut r, &shape, 2.0);
        let p = random_attn(&mut r, ka);
        let got = attention_forward(&y, n, &p).unwrap();
        let want = attention_ref(&y, n, &p.f_weight, p.f_bias.data()[0]);
        assert!(got.max_abs_diff(&want) < 1e-9);
    }
}

#[test]
fn zero_filter_halves_exactly() {
    let y = random(&mut rng(41), &[2, 6, 5, 5], 4.0);
    let out = attention_forward(&y, 3, &AttentionParams::zeroed(7)).unwrap();
    assert_eq!(out, y.scale(0.5));
}

#[test]
fn single_channel_groups_pool_to_identical_maps() {
    let mut r = rng(42);
    let y = random(&mut r, &[1, 3, 5, 5], 1.0);
    // With one channel per group avg = max, so only the sum of the two filter
    // channels matters.
    let mut p = random_attn(&mut r, 3);
    let a = attention_forward(&y, 3, &p).unwrap();
    for dy in 0..3 {
        for dx in 0..3 {
            let s = p.f_weight.at(&[0, 0, dy, dx]) + p.f_weight.at(&[0, 1, dy, dx]);
            p.f_weight.set(&[0, 0, dy, dx], s);
            p.f_weight.set(&[0, 1, dy, dx], 0.0);
        }
    }
    assert!(attention_forward(&y, 3, &p).unwrap().max_abs_diff(&a) < 1e-12);
}

#[test]
fn map_is_shared_within_a_group() {
    let mut r = rng(43);
    let y = random(&mut r, &[2, 6, 5, 5], 1.0);
    let p = random_attn(&mut r, 7);
    let out = attention_forward(&y, 2, &p).unwrap();
    let maps = attention_maps(&y, 2, &p).unwrap();
    for b in 0..2 {
        for c in 0..6 {
            for i in 0..5 {
                for j in 0..5 {
                    let ratio = out.at(&[b, c, i, j]) / y.at(&[b, c, i, j]);
                    assert!((ratio - maps.at(&[b, c / 3, i, j])).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn perturbing_one_group_leaves_the_others() {
    let mut r = rng(44);
    let y = random(&mut r, &[1, 6, 4, 4], 1.0);
    let p = random_attn(&mut r, 7);
    let before = attention_forward(&y, 3, &p).unwrap();
    let mut y2 = y.clone();
    y2.set(&[0, 3, 1, 2], 5.0);
    let after = attention_forward(&y2, 3, &p).unwrap();
    for c in 0..6 {
        let same = before.index_outer(0).index_outer(c) == after.index_outer(0).index_outer(c);
        assert_eq!(same, !(2..4).contains(&c));
    }
    assert!(attention_forward(&y, 4, &p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gating_never_increases_magnitude(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(1..=3);
        let cout = n * r.gen_range(1..=3);
        let shape = [r.gen_range(1..=2), cout, r.gen_range(1..=6), r.gen_range(1..=6)];
        let y = random(&mut r, &shape, 3.0);
        let ka = [3, 5, 7][r.gen_range(0..3)];
        let p = random_attn(&mut r, ka);
        let out = attention_forward(&y, n, &p).unwrap();
        prop_assert_eq!(out.shape(), y.shape());
        for (a, b) in out.data().iter().zip(y.data()) {
            prop_assert!(a.abs() <= b.abs());
            if *b != 0.0 {
                prop_assert!(a.abs() < b.abs());
            }
        }
    }

    #[test]
    fn lambdas_stay_inside_the_unit_interval(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (p, _) = random_gen(&mut r, 3, 2);
        let x = random(&mut r, &[2, 3, 4, 4], 5.0);
        let a = generator_forward(&x, &p).unwrap();
        prop_assert!(a.lambdas.data().iter().all(|&l| l > 0.0 && l < 1.0));
        prop_assert!(a.thetas.data().iter().all(|t| t.is_finite()));
    }
}
