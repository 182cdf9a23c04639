//! Mapping between module parameters and named container entries.
//!
//! Both variants store their kernels under `weight` and the generator under
//! `gen.*`; GRA adds `attn.weight` and `attn.bias`. ARC keeps all `m` kernel
//! copies stacked in one `[m, Cout, Cin, k, k]` tensor.

use crate::angle_generator::AngleGenParams;
use crate::attention::AttentionParams;
use crate::error::{Error, Result};
use crate::grouped_rotation::KernelBank;
use crate::pipeline::{ArcParams, GraParams};
use crate::tensor::{Element, Tensor};
use crate::weights_io::TensorContainer;

pub const WEIGHT: &str = "weight";
pub const ATTN_WEIGHT: &str = "attn.weight";
pub const ATTN_BIAS: &str = "attn.bias";
pub const INPUT: &str = "input";
pub const OUTPUT: &str = "output";
pub const THETAS: &str = "thetas";
pub const LAMBDAS: &str = "lambdas";

const GEN_FIELDS: [&str; 8] = [
    "gen.dw_kernel",
    "gen.dw_bias",
    "gen.ln_gamma",
    "gen.ln_beta",
    "gen.w_theta",
    "gen.b_theta",
    "gen.w_lambda",
    "gen.b_lambda",
];

fn fetch<T: Element>(c: &TensorContainer, name: &str) -> Result<Tensor<T>> {
    c.tensor(name)
        .ok_or_else(|| Error::MissingTensor(name.to_string()))
}

fn put<T: Element>(c: &mut TensorContainer, name: &str, t: &Tensor<T>) -> Result<()> {
    c.insert(name, t.clone())?;
    Ok(())
}

fn read_gen<T: Element>(c: &TensorContainer) -> Result<AngleGenParams<T>> {
    let [dw_kernel, dw_bias, ln_gamma, ln_beta, w_theta, b_theta, w_lambda, b_lambda] = GEN_FIELDS;
    let p = AngleGenParams {
        dw_kernel: fetch(c, dw_kernel)?,
        dw_bias: fetch(c, dw_bias)?,
        ln_gamma: fetch(c, ln_gamma)?,
        ln_beta: fetch(c, ln_beta)?,
        w_theta: fetch(c, w_theta)?,
        b_theta: fetch(c, b_theta)?,
        w_lambda: fetch(c, w_lambda)?,
        b_lambda: fetch(c, b_lambda)?,
    };
    p.validate()?;
    Ok(p)
}

fn write_gen<T: Element>(c: &mut TensorContainer, p: &AngleGenParams<T>) -> Result<()> {
    let tensors = [
        &p.dw_kernel,
        &p.dw_bias,
        &p.ln_gamma,
        &p.ln_beta,
        &p.w_theta,
        &p.b_theta,
        &p.w_lambda,
        &p.b_lambda,
    ];
    for (name, t) in GEN_FIELDS.iter().zip(tensors) {
        put(c, name, t)?;
    }
    Ok(())
}

/// Reads GRA parameters, partitioning `weight` into `n` groups.
pub fn gra_params_from_container<T: Element>(
    c: &TensorContainer,
    n: usize,
) -> Result<GraParams<T>> {
    let bank = KernelBank::new(fetch(c, WEIGHT)?, n)?;
    let attn = AttentionParams {
        f_weight: fetch(c, ATTN_WEIGHT)?,
        f_bias: fetch(c, ATTN_BIAS)?,
    };
    GraParams::new(bank, read_gen(c)?, attn)
}

pub fn gra_params_to_container<T: Element>(p: &GraParams<T>) -> Result<TensorContainer> {
    let mut c = TensorContainer::new();
    put(&mut c, WEIGHT, p.bank.weights())?;
    write_gen(&mut c, &p.gen)?;
    put(&mut c, ATTN_WEIGHT, &p.attn.f_weight)?;
    put(&mut c, ATTN_BIAS, &p.attn.f_bias)?;
    Ok(c)
}

/// Reads ARC parameters; `m` must match the number of stacked kernel copies.
pub fn arc_params_from_container<T: Element>(
    c: &TensorContainer,
    m: usize,
) -> Result<ArcParams<T>> {
    let p = ArcParams::new(fetch(c, WEIGHT)?, read_gen(c)?)?;
    if p.branches() != m {
        return Err(Error::invalid(
            "arc_params_from_container",
            format!("{m} branches requested but `weight` holds {}", p.branches()),
        ));
    }
    Ok(p)
}

pub fn arc_params_to_container<T: Element>(p: &ArcParams<T>) -> Result<TensorContainer> {
    let mut c = TensorContainer::new();
    put(&mut c, WEIGHT, &p.banks)?;
    write_gen(&mut c, &p.routing)?;
    Ok(c)
}
