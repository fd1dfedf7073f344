//! Convolution layers and small conv stacks built on [`Graph`].

use rand::Rng;

use crate::error::Result;
use crate::params::{Constraint, Graph, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Slope of the leaky ReLU placed between consecutive branch convolutions.
pub const BRANCH_LEAKY_SLOPE: f64 = 0.01;

/// Weight initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(−b, b)` with `b = gain / sqrt(fan_in)`.
    FanInUniform { gain: f64 },
    Zeros,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvKind {
    Forward,
    /// Transposed convolution with the given extra output padding.
    Transposed { output_pad: usize },
}

/// A single (possibly transposed) convolution with bias and "same"-style
/// zero padding of `kernel / 2`.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub kind: ConvKind,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        kind: ConvKind,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let (dims, fan_in) = match kind {
            ConvKind::Forward => ([out_channels, in_channels, kernel, kernel], in_channels),
            ConvKind::Transposed { .. } => {
                ([in_channels, out_channels, kernel, kernel], out_channels)
            }
        };
        let numel: usize = dims.iter().product();
        let data: Vec<S> = match init {
            Init::Zeros => vec![S::zero(); numel],
            Init::FanInUniform { gain } => {
                let bound = gain / ((fan_in * kernel * kernel) as f64).sqrt();
                (0..numel)
                    .map(|_| S::lit(rng.gen_range(-bound..=bound)))
                    .collect()
            }
        };
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::from_vec(dims, data).expect("sized above"),
            Constraint::None,
        );
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::zeros([1, out_channels, 1, 1]),
            Constraint::None,
        );
        ConvLayer {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            kind,
        }
    }

    /// Stride-`stride` downsampling convolution.
    pub fn down<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        Self::new(store, name, in_channels, out_channels, kernel, 2, ConvKind::Forward, init, rng)
    }

    /// Stride-2 transposed convolution doubling the spatial size exactly.
    pub fn up<S: Scalar, R: Rng>(
        store: &mut ParamStore<S>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        Self::new(
            store,
            name,
            in_channels,
            out_channels,
            kernel,
            2,
            ConvKind::Transposed { output_pad: 1 },
            init,
            rng,
        )
    }

    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        match self.kind {
            ConvKind::Forward => g.conv2d(x, w, Some(b), self.stride, self.pad()),
            ConvKind::Transposed { output_pad } => {
                g.conv_transpose2d(x, w, Some(b), self.stride, self.pad(), output_pad)
            }
        }
    }
}

/// Convolutions applied in sequence with a leaky ReLU between neighbours.
#[derive(Clone, Debug)]
pub struct Branch {
    pub convs: Vec<ConvLayer>,
}

impl Branch {
    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            if i > 0 {
                h = g.leaky_relu(h, S::lit(BRANCH_LEAKY_SLOPE))?;
            }
            h = conv.forward(g, h)?;
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.convs.iter().flat_map(ConvLayer::params).collect()
    }

    /// Kernel sizes in order, e.g. `[3, 3]`.
    pub fn kernels(&self) -> Vec<usize> {
        self.convs.iter().map(|c| c.kernel).collect()
    }
}
