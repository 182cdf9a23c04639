//! Symbolic ResNet-50 backbones (plain, ARC, GRA) with exact parameter and
//! FLOP counting. No weights are allocated.
//!
//! Conventions: one multiply-accumulate is 2 FLOPs; normalisation and
//! activation layers cost 2 FLOPs per element; residual additions 1; pooling
//! one operation per element read. The backbone has no classification head.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};

/// 3×3 kernel extent of the replaced convolutions.
const SITE_KERNEL: usize = 3;
/// Spatial extent of the shared attention convolution.
pub const ATTENTION_KERNEL: usize = 7;
/// Input resolution assumed by the reported FLOP figures.
pub const DEFAULT_INPUT_HW: usize = 1024;

const STAGES: [(usize, usize); 4] = [(3, 64), (4, 128), (6, 256), (3, 512)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Arc { m: usize },
    Gra { n: usize },
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Plain => write!(f, "plain"),
            Variant::Arc { m } => write!(f, "arc(m={m})"),
            Variant::Gra { n } => write!(f, "gra(n={n})"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts `plain`, `arc:<m>`, `gra:<n>` (or `arc(4)`, `gra(32)`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("Variant", format!("unknown variant `{s}`"));
        let s = s.trim();
        if s == "plain" {
            return Ok(Variant::Plain);
        }
        let (kind, rest) = s.split_at(s.find([':', '(']).ok_or_else(bad)?);
        let count: usize = rest[1..].trim_end_matches(')').parse().map_err(|_| bad())?;
        match kind {
            "arc" => Ok(Variant::Arc { m: count }),
            "gra" => Ok(Variant::Gra { n: count }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Stem,
    Conv2,
    Conv3,
    Conv4,
    Conv5,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Stem,
        Stage::Conv2,
        Stage::Conv3,
        Stage::Conv4,
        Stage::Conv5,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Stem => "conv1",
            Stage::Conv2 => "conv2_x",
            Stage::Conv3 => "conv3_x",
            Stage::Conv4 => "conv4_x",
            Stage::Conv5 => "conv5_x",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolOp {
    Max { k: usize, stride: usize },
    GlobalAvg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// `copies` independent weight sets share the layout (ARC keeps `m`).
    Conv {
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        groups: usize,
        bias: bool,
        copies: usize,
    },
    DepthwiseConv {
        channels: usize,
        k: usize,
        bias: bool,
    },
    Linear {
        n_in: usize,
        n_out: usize,
    },
    LayerNorm {
        channels: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Activation {
        channels: usize,
    },
    Pool {
        op: PoolOp,
        channels: usize,
    },
    ResidualAdd {
        channels: usize,
    },
    /// Shared `2 → 1` conv applied to each of `groups` pooled maps, with the
    /// channel pooling, sigmoid and gating that surround it.
    AttentionConv {
        channels: usize,
        groups: usize,
        k: usize,
    },
    /// Rotation of `copies × groups` kernel groups by one bmm each, batch 1.
    KernelRotation {
        cin: usize,
        cout: usize,
        k: usize,
        copies: usize,
    },
    /// Weighted sum over `branches` conv outputs.
    BranchSum {
        channels: usize,
        branches: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub stage: Stage,
    pub kind: LayerKind,
    /// Strides applied between the network input and this layer's input.
    pub stride_chain: Vec<usize>,
}

fn extent_after(input_hw: usize, chain: &[usize]) -> usize {
    chain.iter().fold(input_hw, |h, &s| h.div_ceil(s))
}

impl LayerSpec {
    /// Spatial extent of this layer's input for a square network input.
    pub fn in_extent(&self, input_hw: usize) -> usize {
        extent_after(input_hw, &self.stride_chain)
    }

    pub fn out_extent(&self, input_hw: usize) -> usize {
        let h = self.in_extent(input_hw);
        match self.kind {
            LayerKind::Conv { stride, .. } => h.div_ceil(stride),
            LayerKind::Pool {
                op: PoolOp::Max { stride, .. },
                ..
            } => h.div_ceil(stride),
            LayerKind::Pool {
                op: PoolOp::GlobalAvg,
                ..
            }
            | LayerKind::Linear { .. }
            | LayerKind::KernelRotation { .. } => 1,
            _ => h,
        }
    }

    pub fn params(&self) -> u64 {
        let v = match self.kind {
            LayerKind::Conv {
                cin,
                cout,
                k,
                groups,
                bias,
                copies,
                ..
            } => copies * (cout * (cin / groups) * k * k + if bias { cout } else { 0 }),
            LayerKind::DepthwiseConv { channels, k, bias } => {
                channels * k * k + if bias { channels } else { 0 }
            }
            LayerKind::Linear { n_in, n_out } => n_out * (n_in + 1),
            LayerKind::LayerNorm { channels } | LayerKind::BatchNorm { channels } => 2 * channels,
            LayerKind::AttentionConv { k, .. } => 2 * k * k + 1,
            LayerKind::Activation { .. }
            | LayerKind::Pool { .. }
            | LayerKind::ResidualAdd { .. }
            | LayerKind::KernelRotation { .. }
            | LayerKind::BranchSum { .. } => 0,
        };
        v as u64
    }

    pub fn flops(&self, input_hw: usize) -> u64 {
        let h = self.in_extent(input_hw) as u64;
        let o = self.out_extent(input_hw) as u64;
        let (hw, ohw) = (h * h, o * o);
        match self.kind {
            LayerKind::Conv {
                cin,
                cout,
                k,
                groups,
                copies,
                ..
            } => 2 * ohw * (copies * cout * (cin / groups) * k * k) as u64,
            LayerKind::DepthwiseConv { channels, k, bias } => {
                (2 * k * k + usize::from(bias)) as u64 * channels as u64 * hw
            }
            LayerKind::Linear { n_in, n_out } => 2 * (n_in * n_out) as u64,
            LayerKind::LayerNorm { channels }
            | LayerKind::BatchNorm { channels }
            | LayerKind::Activation { channels } => 2 * channels as u64 * hw,
            LayerKind::Pool {
                op: PoolOp::Max { k, .. },
                channels,
            } => (channels * k * k) as u64 * ohw,
            LayerKind::Pool {
                op: PoolOp::GlobalAvg,
                channels,
            } => channels as u64 * hw,
            LayerKind::ResidualAdd { channels } => channels as u64 * hw,
            LayerKind::AttentionConv {
                channels,
                groups,
                k,
            } => {
                let pooling = 2 * channels as u64 * hw;
                let conv = 2 * groups as u64 * hw * (2 * k * k) as u64;
                let sigmoid = 4 * groups as u64 * hw;
                let gate = channels as u64 * hw;
                pooling + conv + sigmoid + gate
            }
            LayerKind::KernelRotation {
                cin,
                cout,
                k,
                copies,
            } => {
                // n · (B·k²) · k² · (Cout/n · Cin) MACs with B = 1, independent of n.
                2 * (copies * k * k * k * k * cout * cin) as u64
            }
            LayerKind::BranchSum { channels, branches } => 2 * (channels * branches) as u64 * hw,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: usize| v > 0;
        let ok = match self.kind {
            LayerKind::Conv {
                cin,
                cout,
                k,
                stride,
                groups,
                copies,
                ..
            } => {
                [cin, cout, k, stride, groups, copies]
                    .into_iter()
                    .all(positive)
                    && cin % groups == 0
                    && cout % groups == 0
            }
            LayerKind::DepthwiseConv { channels, k, .. } => channels > 0 && k > 0,
            LayerKind::Linear { n_in, n_out } => n_in > 0 && n_out > 0,
            LayerKind::LayerNorm { channels }
            | LayerKind::BatchNorm { channels }
            | LayerKind::Activation { channels }
            | LayerKind::ResidualAdd { channels }
            | LayerKind::Pool { channels, .. } => channels > 0,
            LayerKind::AttentionConv {
                channels,
                groups,
                k,
            } => channels > 0 && groups > 0 && k > 0 && channels % groups == 0,
            LayerKind::KernelRotation {
                cin,
                cout,
                k,
                copies,
            } => [cin, cout, k, copies].into_iter().all(positive),
            LayerKind::BranchSum { channels, branches } => channels > 0 && branches > 0,
        } && self.stride_chain.iter().all(|&s| s > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "LayerSpec",
                format!(
                    "layer `{}` has a nonpositive or inconsistent extent",
                    self.name
                ),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub variant: Variant,
    pub input_hw: usize,
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    /// Layers standing in for a replaced 3×3 convolution (the weight-bearing conv of each site).
    pub fn replacement_sites(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers
            .iter()
            .filter(|l| l.name.ends_with(".conv2") && l.stage >= Stage::Conv3)
    }

    pub fn validate(&self) -> Result<()> {
        self.layers.iter().try_for_each(LayerSpec::validate)
    }
}

struct Builder {
    layers: Vec<LayerSpec>,
    chain: Vec<usize>,
    stage: Stage,
}

impl Builder {
    fn push(&mut self, name: String, kind: LayerKind, chain: &[usize]) {
        self.layers.push(LayerSpec {
            name,
            stage: self.stage,
            kind,
            stride_chain: chain.to_vec(),
        });
    }

    fn conv(
        &mut self,
        name: String,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        chain: &[usize],
    ) -> Vec<usize> {
        self.conv_copies(name, cin, cout, k, stride, 1, chain)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_copies(
        &mut self,
        name: String,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        copies: usize,
        chain: &[usize],
    ) -> Vec<usize> {
        self.push(
            name,
            LayerKind::Conv {
                cin,
                cout,
                k,
                stride,
                groups: 1,
                bias: false,
                copies,
            },
            chain,
        );
        let mut next = chain.to_vec();
        if stride > 1 {
            next.push(stride);
        }
        next
    }

    /// Depthwise 3×3 → ReLU → LayerNorm → global pool → two `heads`-wide linear layers.
    fn routing(&mut self, prefix: &str, cin: usize, heads: usize, chain: &[usize]) {
        self.push(
            format!("{prefix}.dw"),
            LayerKind::DepthwiseConv {
                channels: cin,
                k: SITE_KERNEL,
                bias: true,
            },
            chain,
        );
        self.push(
            format!("{prefix}.relu"),
            LayerKind::Activation { channels: cin },
            chain,
        );
        self.push(
            format!("{prefix}.ln"),
            LayerKind::LayerNorm { channels: cin },
            chain,
        );
        self.push(
            format!("{prefix}.pool"),
            LayerKind::Pool {
                op: PoolOp::GlobalAvg,
                channels: cin,
            },
            chain,
        );
        self.push(
            format!("{prefix}.theta"),
            LayerKind::Linear {
                n_in: cin,
                n_out: heads,
            },
            chain,
        );
        self.push(
            format!("{prefix}.lambda"),
            LayerKind::Linear {
                n_in: cin,
                n_out: heads,
            },
            chain,
        );
    }
}

/// Builds the ResNet-50 backbone (no classifier) for `variant`.
///
/// ARC and GRA replace the 3×3 convolution of every bottleneck in stages
/// conv3_x–conv5_x (13 sites) and keep all 1×1 convolutions.
pub fn build_resnet50(variant: Variant, input_hw: usize) -> Result<ArchSpec> {
    const OP: &str = "build_resnet50";
    if input_hw < 32 {
        return Err(Error::invalid(
            OP,
            format!("input resolution {input_hw} is below 32"),
        ));
    }
    match variant {
        Variant::Arc { m: 0 } => return Err(Error::invalid(OP, "arc needs m >= 1")),
        Variant::Gra { n: 0 } => return Err(Error::invalid(OP, "gra needs n >= 1")),
        Variant::Gra { n } => {
            for &(_, width) in &STAGES[1..] {
                if width % n != 0 {
                    return Err(Error::NotDivisible {
                        op: OP,
                        what: "site output channels",
                        value: width,
                        divisor: n,
                    });
                }
            }
        }
        _ => {}
    }

    let mut b = Builder {
        layers: Vec::new(),
        chain: Vec::new(),
        stage: Stage::Stem,
    };
    let root: Vec<usize> = Vec::new();
    let after_stem = b.conv("conv1".into(), 3, 64, 7, 2, &root);
    b.push(
        "bn1".into(),
        LayerKind::BatchNorm { channels: 64 },
        &after_stem,
    );
    b.push(
        "relu1".into(),
        LayerKind::Activation { channels: 64 },
        &after_stem,
    );
    b.push(
        "maxpool".into(),
        LayerKind::Pool {
            op: PoolOp::Max { k: 3, stride: 2 },
            channels: 64,
        },
        &after_stem,
    );
    b.chain = after_stem;
    b.chain.push(2);

    let mut cin = 64;
    for (si, &(blocks, width)) in STAGES.iter().enumerate() {
        b.stage = Stage::ALL[si + 1];
        let replaced = si > 0;
        for blk in 0..blocks {
            let stride = if blk == 0 && si > 0 { 2 } else { 1 };
            let p = format!("{}.{}", b.stage.label(), blk);
            let chain_in = b.chain.clone();
            let out = 4 * width;

            let c1 = b.conv(format!("{p}.conv1"), cin, width, 1, 1, &chain_in);
            b.push(
                format!("{p}.bn1"),
                LayerKind::BatchNorm { channels: width },
                &c1,
            );
            b.push(
                format!("{p}.relu1"),
                LayerKind::Activation { channels: width },
                &c1,
            );

            let copies = match variant {
                Variant::Arc { m } if replaced => m,
                _ => 1,
            };
            if replaced {
                match variant {
                    Variant::Plain => {}
                    Variant::Arc { m } => b.routing(&format!("{p}.routing"), width, m, &c1),
                    Variant::Gra { n } => b.routing(&format!("{p}.angle_gen"), width, n, &c1),
                }
                if variant != Variant::Plain {
                    b.push(
                        format!("{p}.rotate"),
                        LayerKind::KernelRotation {
                            cin: width,
                            cout: width,
                            k: SITE_KERNEL,
                            copies,
                        },
                        &c1,
                    );
                }
            }
            let c2 = b.conv_copies(
                format!("{p}.conv2"),
                width,
                width,
                SITE_KERNEL,
                stride,
                copies,
                &c1,
            );
            if replaced {
                match variant {
                    Variant::Plain => {}
                    Variant::Arc { m } => b.push(
                        format!("{p}.branch_sum"),
                        LayerKind::BranchSum {
                            channels: width,
                            branches: m,
                        },
                        &c2,
                    ),
                    Variant::Gra { n } => b.push(
                        format!("{p}.attention"),
                        LayerKind::AttentionConv {
                            channels: width,
                            groups: n,
                            k: ATTENTION_KERNEL,
                        },
                        &c2,
                    ),
                }
            }
            b.push(
                format!("{p}.bn2"),
                LayerKind::BatchNorm { channels: width },
                &c2,
            );
            b.push(
                format!("{p}.relu2"),
                LayerKind::Activation { channels: width },
                &c2,
            );

            let c3 = b.conv(format!("{p}.conv3"), width, out, 1, 1, &c2);
            b.push(
                format!("{p}.bn3"),
                LayerKind::BatchNorm { channels: out },
                &c3,
            );
            if blk == 0 {
                b.conv(format!("{p}.downsample"), cin, out, 1, stride, &chain_in);
                b.push(
                    format!("{p}.downsample_bn"),
                    LayerKind::BatchNorm { channels: out },
                    &c3,
                );
            }
            b.push(
                format!("{p}.add"),
                LayerKind::ResidualAdd { channels: out },
                &c3,
            );
            b.push(
                format!("{p}.relu3"),
                LayerKind::Activation { channels: out },
                &c3,
            );

            cin = out;
            b.chain = c3;
        }
    }

    let spec = ArchSpec {
        variant,
        input_hw,
        layers: b.layers,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn count_params(spec: &ArchSpec) -> u64 {
    spec.layers.iter().map(LayerSpec::params).sum()
}

pub fn count_flops(spec: &ArchSpec, input_hw: usize) -> u64 {
    spec.layers.iter().map(|l| l.flops(input_hw)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTotals {
    pub stage: Stage,
    pub params: u64,
    pub flops: u64,
}

pub fn stage_totals(spec: &ArchSpec, input_hw: usize) -> Vec<StageTotals> {
    Stage::ALL
        .iter()
        .map(|&stage| {
            let layers = spec.layers.iter().filter(|l| l.stage == stage);
            StageTotals {
                stage,
                params: layers.clone().map(LayerSpec::params).sum(),
                flops: layers.map(|l| l.flops(input_hw)).sum(),
            }
        })
        .collect()
}

/// Human- and script-readable counting report. The last two lines are
/// `params_M=<..>` and `flops_G=<..>`.
pub fn report(spec: &ArchSpec, input_hw: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "variant={} input={input_hw}x{input_hw} layers={}",
        spec.variant,
        spec.layers.len()
    );
    for t in stage_totals(spec, input_hw) {
        let _ = writeln!(
            s,
            "stage={:<8} params={:>10} flops={:>14}",
            t.stage.label(),
            t.params,
            t.flops
        );
    }
    let (params, flops) = (count_params(spec), count_flops(spec, input_hw));
    let _ = writeln!(s, "total params={params} flops={flops}");
    let _ = writeln!(
        s,
        "note: FLOPs assume 2 per multiply-accumulate at the stated input; the {DEFAULT_INPUT_HW}x{DEFAULT_INPUT_HW} default is inferred, not documented upstream"
    );
    let _ = writeln!(s, "params_M={:.2}", params as f64 / 1e6);
    let _ = writeln!(s, "flops_G={:.1}", flops as f64 / 1e9);
    s
}
