//! Adaptive rescaling layers and the resampling blocks that host them.

mod easn;
mod gdn;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use easn::{Easn, EasnDeep, EasnF, EasnKind, BRANCH_INIT_GAIN};
pub use gdn::{scalar_gdn, FactorizedGdn, Gdn, GdnParams, BETA_FLOOR, GAMMA_INIT};

use crate::error::{Error, Result};
use crate::nn::{ConvLayer, Init};
use crate::params::{Graph, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Normalization variant, spelled in configuration files exactly as
/// `GDN`, `GDN-INVERSE`, `EASN-A` … `EASN-G`, `EASN-DEEP`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Gdn,
    GdnInverse,
    EasnA,
    EasnB,
    EasnC,
    EasnD,
    EasnE,
    EasnF,
    EasnG,
    EasnDeep,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Gdn,
        Variant::GdnInverse,
        Variant::EasnA,
        Variant::EasnB,
        Variant::EasnC,
        Variant::EasnD,
        Variant::EasnE,
        Variant::EasnF,
        Variant::EasnG,
        Variant::EasnDeep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gdn => "GDN",
            Variant::GdnInverse => "GDN-INVERSE",
            Variant::EasnA => "EASN-A",
            Variant::EasnB => "EASN-B",
            Variant::EasnC => "EASN-C",
            Variant::EasnD => "EASN-D",
            Variant::EasnE => "EASN-E",
            Variant::EasnF => "EASN-F",
            Variant::EasnG => "EASN-G",
            Variant::EasnDeep => "EASN-DEEP",
        }
    }

    /// Same-resolution EASN kind, if this is one of A–E.
    pub fn easn_kind(self) -> Option<EasnKind> {
        Some(match self {
            Variant::EasnA => EasnKind::A,
            Variant::EasnB => EasnKind::B,
            Variant::EasnC => EasnKind::C,
            Variant::EasnD => EasnKind::D,
            Variant::EasnE => EasnKind::E,
            _ => return None,
        })
    }

    /// True when the layer includes the resampling convolution itself.
    pub fn fuses_resampling(self) -> bool {
        matches!(self, Variant::EasnF | Variant::EasnG | Variant::EasnDeep)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::invalid(format!("unknown variant `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// Resampling direction of a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Stride-2 convolution (analysis side).
    Down,
    /// Stride-2 transposed convolution (synthesis side).
    Up,
}

/// Read-only recorder of scaling-branch inputs, keyed by tap name.
pub struct Taps<S> {
    active: bool,
    records: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> Taps<S> {
    pub fn off() -> Self {
        Taps {
            active: false,
            records: Vec::new(),
        }
    }

    pub fn recording() -> Self {
        Taps {
            active: true,
            records: Vec::new(),
        }
    }

    fn record(&mut self, name: String, g: &Graph<'_, S>, v: Var) {
        if self.active {
            self.records.push((name, g.value(v).clone()));
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> Vec<&str> {
        self.records.iter().map(|(n, _)| n.as_str()).collect()
    }
}

#[derive(Clone, Debug)]
pub enum BlockKind {
    Gdn { conv: ConvLayer, gdn: Gdn },
    Easn { conv: ConvLayer, easn: Easn },
    EasnF(EasnF),
    EasnDeep(EasnDeep),
}

/// One resampling stage followed by (or fused with) a normalization layer.
#[derive(Clone, Debug)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        name: &str,
        variant: Variant,
        direction: Direction,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let conv = |store: &mut ParamStore<S>, rng: &mut R| {
            let n = format!("{name}.conv");
            let init = Init::FanInUniform { gain: 1.0 };
            match direction {
                Direction::Down => ConvLayer::down(store, &n, in_channels, out_channels, kernel, init, rng),
                Direction::Up => ConvLayer::up(store, &n, in_channels, out_channels, kernel, init, rng),
            }
        };
        let norm_name = format!("{name}.norm");
        let kind = match variant {
            Variant::Gdn | Variant::GdnInverse => {
                let conv = conv(store, rng);
                let inverse = variant == Variant::GdnInverse || direction == Direction::Up;
                BlockKind::Gdn {
                    conv,
                    gdn: Gdn::new(store, &norm_name, out_channels, inverse),
                }
            }
            Variant::EasnA | Variant::EasnB | Variant::EasnC | Variant::EasnD | Variant::EasnE => {
                let conv = conv(store, rng);
                let kind = variant.easn_kind().expect("A-E");
                BlockKind::Easn {
                    conv,
                    easn: Easn::new(store, &norm_name, kind, out_channels, rng),
                }
            }
            Variant::EasnF | Variant::EasnG => BlockKind::EasnF(EasnF::new(
                store,
                &norm_name,
                direction,
                in_channels,
                out_channels,
                kernel,
                variant == Variant::EasnG,
                rng,
            )),
            Variant::EasnDeep => BlockKind::EasnDeep(EasnDeep::new(
                store,
                &norm_name,
                direction,
                in_channels,
                out_channels,
                kernel,
                rng,
            )),
        };
        Block {
            name: name.to_string(),
            kind,
        }
    }

    pub fn tap_names(&self) -> Vec<String> {
        match self.kind {
            BlockKind::EasnDeep(_) => vec![format!("{}.front", self.name), format!("{}.back", self.name)],
            _ => vec![self.name.clone()],
        }
    }

    /// Parameters of every gate / mapping / shift branch convolution.
    pub fn branch_params(&self) -> Vec<ParamId> {
        match &self.kind {
            BlockKind::Gdn { .. } => Vec::new(),
            BlockKind::Easn { easn, .. } => easn.branch_params(),
            BlockKind::EasnF(f) => f.branch_params(),
            BlockKind::EasnDeep(d) => d.branch_params(),
        }
    }

    /// Gate offsets β of the EASN layers in this block.
    pub fn gate_betas(&self) -> Vec<ParamId> {
        match &self.kind {
            BlockKind::Gdn { .. } => Vec::new(),
            BlockKind::Easn { easn, .. } => vec![easn.beta],
            BlockKind::EasnF(f) => vec![f.beta],
            BlockKind::EasnDeep(d) => vec![d.front.beta, d.back.beta],
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, u: Var, taps: &mut Taps<S>) -> Result<Var> {
        match &self.kind {
            BlockKind::Gdn { conv, gdn } => {
                let x = conv.forward(g, u)?;
                taps.record(self.name.clone(), g, x);
                gdn.forward(g, x)
            }
            BlockKind::Easn { conv, easn } => {
                let x = conv.forward(g, u)?;
                taps.record(self.name.clone(), g, x);
                easn.forward(g, x)
            }
            BlockKind::EasnF(f) => {
                taps.record(self.name.clone(), g, u);
                f.forward(g, u)
            }
            BlockKind::EasnDeep(d) => {
                taps.record(format!("{}.front", self.name), g, u);
                let mid = d.front.forward(g, u)?;
                taps.record(format!("{}.back", self.name), g, mid);
                d.back.forward(g, mid)
            }
        }
    }
}
