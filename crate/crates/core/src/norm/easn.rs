//! Expanded adaptive scaling normalization.
//!
//! Output is `m(x)·ŝ(x) + h(x) + x` where the gate is
//! `ŝ_i(x) = 1 / (1 + e^{β_i}·e^{[F(x)]_i}) = σ(−β_i − [F(x)]_i)`.
//! No parameter carries a sign constraint.

use rand::Rng;

use super::Direction;
use crate::error::{Error, Result};
use crate::nn::{Branch, ConvKind, ConvLayer, Init};
use crate::params::{Constraint, Graph, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Gain of the fan-in uniform initialization of branch convolutions.
pub const BRANCH_INIT_GAIN: f64 = 0.1;

/// Same-resolution EASN variants, following the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EasnKind {
    /// ŝ: 1×1, 1×1; m: identity.
    A,
    /// ŝ: 1×1, 1×1; m: 1×1.
    B,
    /// ŝ: 3×3, 3×3; m: 1×1.
    C,
    /// ŝ: 3×3, 3×3; m: 1×1; h: 1×1.
    D,
    /// ŝ: 3×3, 3×3; m: 5×5.
    E,
}

impl EasnKind {
    pub fn scale_kernels(self) -> [usize; 2] {
        match self {
            EasnKind::A | EasnKind::B => [1, 1],
            EasnKind::C | EasnKind::D | EasnKind::E => [3, 3],
        }
    }

    /// `None` means identity mapping.
    pub fn map_kernel(self) -> Option<usize> {
        match self {
            EasnKind::A => None,
            EasnKind::B | EasnKind::C | EasnKind::D => Some(1),
            EasnKind::E => Some(5),
        }
    }

    pub fn shift_kernel(self) -> Option<usize> {
        match self {
            EasnKind::D => Some(1),
            _ => None,
        }
    }
}

fn branch<S: Scalar, R: Rng>(
    store: &mut ParamStore<S>,
    name: &str,
    channels: usize,
    kernels: &[usize],
    rng: &mut R,
) -> Branch {
    let convs = kernels
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            ConvLayer::new(
                store,
                &format!("{name}.{i}"),
                channels,
                channels,
                k,
                1,
                ConvKind::Forward,
                Init::FanInUniform { gain: BRANCH_INIT_GAIN },
                rng,
            )
        })
        .collect();
    Branch { convs }
}

fn add_beta<S: Scalar>(store: &mut ParamStore<S>, name: &str, channels: usize) -> ParamId {
    store.add(
        format!("{name}.beta"),
        Tensor::zeros([1, channels, 1, 1]),
        Constraint::None,
    )
}

/// `σ(−β − z)` for a branch output `z`.
fn gate<S: Scalar>(g: &mut Graph<'_, S>, z: Var, beta: ParamId) -> Result<Var> {
    let beta = g.param(beta);
    let shifted = g.add_channel(z, beta)?;
    let neg = g.neg(shifted);
    Ok(g.sigmoid(neg))
}

/// EASN operating at a fixed resolution (variants A–E).
#[derive(Clone, Debug)]
pub struct Easn {
    pub kind: EasnKind,
    pub channels: usize,
    pub beta: ParamId,
    pub scale: Branch,
    pub map: Option<Branch>,
    pub shift: Option<Branch>,
}

impl Easn {
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        name: &str,
        kind: EasnKind,
        channels: usize,
        rng: &mut R,
    ) -> Self {
        let beta = add_beta(store, name, channels);
        let scale = branch(store, &format!("{name}.scale"), channels, &kind.scale_kernels(), rng);
        let map = kind
            .map_kernel()
            .map(|k| branch(store, &format!("{name}.map"), channels, &[k], rng));
        let shift = kind
            .shift_kernel()
            .map(|k| branch(store, &format!("{name}.shift"), channels, &[k], rng));
        Easn {
            kind,
            channels,
            beta,
            scale,
            map,
            shift,
        }
    }

    /// Branch convolution parameters (excluding β).
    pub fn branch_params(&self) -> Vec<ParamId> {
        let mut ids = self.scale.params();
        for b in self.map.iter().chain(&self.shift) {
            ids.extend(b.params());
        }
        ids
    }

    fn check_input<S: Scalar>(&self, g: &Graph<'_, S>, x: Var) -> Result<()> {
        let c = g.shape(x).channels();
        if c != self.channels {
            return Err(Error::shape(format!(
                "EASN-{:?} over {} channels applied to {c}-channel input",
                self.kind, self.channels
            )));
        }
        Ok(())
    }

    /// The gate `ŝ(x)`, strictly inside `(0, 1)` for finite values.
    pub fn scaling_factor<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        self.check_input(g, x)?;
        let z = self.scale.forward(g, x)?;
        gate(g, z, self.beta)
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let s = self.scaling_factor(g, x)?;
        let m = match &self.map {
            Some(b) => b.forward(g, x)?,
            None => x,
        };
        let scaled = g.mul(m, s)?;
        let mut out = g.add(scaled, x)?;
        if let Some(h) = &self.shift {
            let shift = h.forward(g, x)?;
            out = g.add(out, shift)?;
        }
        Ok(out)
    }
}

/// EASN fed with the pre-resampling feature (EASN-f, and the deeper EASN-g).
///
/// The main path resamples `u`; the gate and mapping branches also start
/// from `u`, with their first convolution carrying the resampling so that the
/// branch outputs land on the resampled grid.
#[derive(Clone, Debug)]
pub struct EasnF {
    pub direction: Direction,
    pub in_channels: usize,
    pub out_channels: usize,
    pub resample: ConvLayer,
    pub beta: ParamId,
    pub scale: Branch,
    pub map: Branch,
    /// True for the deeper EASN-g branch layout.
    pub deep_branches: bool,
}

impl EasnF {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        name: &str,
        direction: Direction,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        deep_branches: bool,
        rng: &mut R,
    ) -> Self {
        let resampler = |store: &mut ParamStore<S>, name: &str, init: Init, rng: &mut R| match direction {
            Direction::Down => ConvLayer::down(store, name, in_channels, out_channels, kernel, init, rng),
            Direction::Up => ConvLayer::up(store, name, in_channels, out_channels, kernel, init, rng),
        };
        let resample = resampler(store, &format!("{name}.resample"), Init::FanInUniform { gain: 1.0 }, rng);
        let beta = add_beta(store, name, out_channels);
        let branch_init = Init::FanInUniform { gain: BRANCH_INIT_GAIN };
        let same = |store: &mut ParamStore<S>, name: String, k: usize, rng: &mut R| {
            ConvLayer::new(store, &name, out_channels, out_channels, k, 1, ConvKind::Forward, branch_init, rng)
        };

        let mut scale = vec![resampler(store, &format!("{name}.scale.0"), branch_init, rng)];
        scale.push(same(store, format!("{name}.scale.1"), 1, rng));
        if deep_branches {
            scale.push(same(store, format!("{name}.scale.2"), 3, rng));
            scale.push(same(store, format!("{name}.scale.3"), 3, rng));
        }
        let mut map = vec![resampler(store, &format!("{name}.map.0"), branch_init, rng)];
        if deep_branches {
            map.push(same(store, format!("{name}.map.1"), 5, rng));
        }
        EasnF {
            direction,
            in_channels,
            out_channels,
            resample,
            beta,
            scale: Branch { convs: scale },
            map: Branch { convs: map },
            deep_branches,
        }
    }

    pub fn branch_params(&self) -> Vec<ParamId> {
        let mut ids = self.scale.params();
        ids.extend(self.map.params());
        ids
    }

    pub fn scaling_factor<S: Scalar>(&self, g: &mut Graph<'_, S>, u: Var) -> Result<Var> {
        let z = self.scale.forward(g, u)?;
        gate(g, z, self.beta)
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, u: Var) -> Result<Var> {
        let c = g.shape(u).channels();
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "EASN-f expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let x = self.resample.forward(g, u)?;
        let s = self.scaling_factor(g, u)?;
        let m = self.map.forward(g, u)?;
        if g.shape(s) != g.shape(x) || g.shape(m) != g.shape(x) {
            // Internal contract: branch geometry mirrors the resampling conv.
            return Err(Error::shape(format!(
                "EASN-f branch outputs {:?}/{:?} do not match resampled {:?}",
                g.shape(s),
                g.shape(m),
                g.shape(x)
            )));
        }
        let scaled = g.mul(m, s)?;
        g.add(scaled, x)
    }
}

/// EASN-f followed by EASN-e at the resampled resolution.
#[derive(Clone, Debug)]
pub struct EasnDeep {
    pub front: EasnF,
    pub back: Easn,
}

impl EasnDeep {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        name: &str,
        direction: Direction,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let front = EasnF::new(
            store,
            &format!("{name}.front"),
            direction,
            in_channels,
            out_channels,
            kernel,
            false,
            rng,
        );
        let back = Easn::new(store, &format!("{name}.back"), EasnKind::E, out_channels, rng);
        EasnDeep { front, back }
    }

    pub fn branch_params(&self) -> Vec<ParamId> {
        let mut ids = self.front.branch_params();
        ids.extend(self.back.branch_params());
        ids
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, u: Var) -> Result<Var> {
        let mid = self.front.forward(g, u)?;
        self.back.forward(g, mid)
    }
}
