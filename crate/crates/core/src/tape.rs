//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every op appends a node holding its output value and the handles of its
//! inputs. Nodes are therefore stored in execution order, which is a valid
//! topological order; [`Tape::backward`] walks them once in reverse.
//!
//! Leaf gradients accumulate across repeated `backward` calls until
//! [`Tape::zero_grad`] is called.

use std::cell::Cell;

use crate::conv::{self, ConvGeometry};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geo: ConvGeometry,
    },
    ConvTranspose2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geo: ConvGeometry,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddChannel {
        x: Var,
        bias: Var,
    },
    Scale {
        x: Var,
        factor: S,
    },
    AddScalar(Var),
    Square(Var),
    Sqrt(Var),
    Ln(Var),
    Sigmoid(Var),
    LeakyRelu {
        x: Var,
        slope: S,
    },
    ClampMin {
        x: Var,
        floor: S,
    },
    Sum(Var),
    Mean(Var),
    Likelihood {
        v: Var,
        loc: Var,
        raw_scale: Var,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Neumaier-compensated sum. Reductions feed the losses that finite
/// differences compare, so their rounding error stays independent of length.
fn compensated_sum<S: Scalar>(xs: &[S]) -> S {
    let (mut sum, mut carry) = (S::zero(), S::zero());
    for &x in xs {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + carry
}

thread_local! {
    static CORRUPT_BACKWARD: Cell<bool> = const { Cell::new(false) };
}

/// Negative-control hook for the gradient checker: while enabled on the
/// current thread, the kernel gradient of `conv2d` is scaled by 1.5.
#[doc(hidden)]
pub fn set_corrupt_backward(on: bool) {
    CORRUPT_BACKWARD.with(|c| c.set(on));
}

/// Floor applied to discretized likelihoods.
pub const LIKELIHOOD_FLOOR: f64 = 1e-9;
/// Added to `softplus(raw_scale)` to keep logistic scales positive.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients are tracked iff `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor<S>) -> Var {
        let requires_grad = tensor.requires_grad;
        self.push(tensor, Op::Leaf, requires_grad)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor<S>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, x: Var, op: Op<S>, f: impl Fn(S) -> S) -> Var {
        let out = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(out, op, rg)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<S>, what: &str, f: impl Fn(S, S) -> S) -> Result<Var> {
        let shape = self.same_shape(a, b, what)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_vec(shape, data)?, op, rg))
    }

    fn check_bias(&self, bias: Option<Var>, channels: usize) -> Result<()> {
        if let Some(b) = bias {
            let n = self.value(b).numel();
            if n != channels {
                return Err(Error::shape(format!(
                    "bias has {n} elements, expected {channels}"
                )));
            }
        }
        Ok(())
    }

    fn add_bias(&self, out: &mut [S], shape: Shape, bias: Option<Var>) {
        if let Some(b) = bias {
            let b = self.value(b).data();
            let plane = shape.plane();
            for (i, chunk) in out.chunks_mut(plane).enumerate() {
                let bv = b[i % shape.channels()];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
    }

    fn kernel_dims(&self, kernel: Var) -> Result<(usize, usize, usize)> {
        let [a, b, kh, kw] = self.shape(kernel).0;
        if kh != kw || kh == 0 {
            return Err(Error::shape(format!(
                "kernel must be square and non-empty, got {kh}x{kw}"
            )));
        }
        Ok((a, b, kh))
    }

    /// 2-D convolution with zero padding. `kernel` is `[c_out, c_in, k, k]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        let xs = self.shape(input);
        let (c_out, c_in, k) = self.kernel_dims(kernel)?;
        if xs.channels() != c_in {
            return Err(Error::shape(format!(
                "conv2d input has {} channels, kernel expects {c_in}",
                xs.channels()
            )));
        }
        self.check_bias(bias, c_out)?;
        let geo = ConvGeometry { kernel: k, stride, pad };
        let (oh, ow) = match (geo.conv_out(xs.height()), geo.conv_out(xs.width())) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                return Err(Error::shape(format!(
                    "kernel {k} with padding {pad} does not fit input {xs:?}"
                )))
            }
        };
        let ys = Shape::new(xs.batch(), c_out, oh, ow);
        let mut out = conv::gather(
            self.value(input).data(),
            xs,
            self.value(kernel).data(),
            c_out,
            geo,
            oh,
            ow,
        );
        self.add_bias(&mut out, ys, bias);
        let mut deps = vec![input, kernel];
        deps.extend(bias);
        let rg = self.rg(&deps);
        Ok(self.push(
            Tensor::from_vec(ys, out)?,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geo,
            },
            rg,
        ))
    }

    /// Transposed convolution, the adjoint of [`Tape::conv2d`] with the same
    /// kernel. `kernel` is `[c_in, c_out, k, k]`; output side length is
    /// `(len − 1)·stride − 2·pad + k + output_pad`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Result<Var> {
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        if output_pad >= stride.max(1) && output_pad > 0 {
            return Err(Error::invalid("output padding must be smaller than stride"));
        }
        let ys = self.shape(input);
        let (c_in, c_out, k) = self.kernel_dims(kernel)?;
        if ys.channels() != c_in {
            return Err(Error::shape(format!(
                "conv_transpose2d input has {} channels, kernel expects {c_in}",
                ys.channels()
            )));
        }
        self.check_bias(bias, c_out)?;
        let geo = ConvGeometry { kernel: k, stride, pad };
        let (oh, ow) = match (
            geo.transpose_out(ys.height(), output_pad),
            geo.transpose_out(ys.width(), output_pad),
        ) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                return Err(Error::shape(format!(
                    "transposed kernel {k} with padding {pad} yields empty output for {ys:?}"
                )))
            }
        };
        let zs = Shape::new(ys.batch(), c_out, oh, ow);
        let mut out = conv::scatter(
            self.value(input).data(),
            ys,
            self.value(kernel).data(),
            c_out,
            geo,
            oh,
            ow,
        );
        self.add_bias(&mut out, zs, bias);
        let mut deps = vec![input, kernel];
        deps.extend(bias);
        let rg = self.rg(&deps);
        Ok(self.push(
            Tensor::from_vec(zs, out)?,
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                geo,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Div(a, b), "div", |x, y| x / y)
    }

    /// Adds a per-channel vector (`numel == channels`) to every pixel.
    pub fn add_channel(&mut self, x: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x);
        self.check_bias(Some(bias), shape.channels())?;
        let mut out = self.value(x).data().to_vec();
        self.add_bias(&mut out, shape, Some(bias));
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Tensor::from_vec(shape, out)?, Op::AddChannel { x, bias }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: S) -> Var {
        self.unary(x, Op::Scale { x, factor }, |v| v * factor)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -S::one())
    }

    pub fn add_scalar(&mut self, x: Var, c: S) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sqrt(x), |v| v.sqrt())
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Op::Ln(x), |v| v.ln())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), Scalar::sigmoid)
    }

    /// `max(x, slope·x)` for a slope in `(0, 1)`.
    pub fn leaky_relu(&mut self, x: Var, slope: S) -> Result<Var> {
        if !(slope > S::zero() && slope < S::one()) {
            return Err(Error::invalid(format!(
                "leaky ReLU slope {slope} outside (0, 1)"
            )));
        }
        Ok(self.unary(x, Op::LeakyRelu { x, slope }, |v| {
            if v > S::zero() {
                v
            } else {
                v * slope
            }
        }))
    }

    /// `max(x, floor)`; gradient flows where `x >= floor`.
    pub fn clamp_min(&mut self, x: Var, floor: S) -> Var {
        self.unary(x, Op::ClampMin { x, floor }, |v| v.max(floor))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = compensated_sum(self.value(x).data());
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let total = compensated_sum(t.data());
        let n = S::lit(t.numel() as f64);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(total / n), Op::Mean(x), rg)
    }

    /// Probability mass of unit bins under a per-channel logistic density:
    /// `CDF_c(v + ½) − CDF_c(v − ½)` floored at [`LIKELIHOOD_FLOOR`], where
    /// `CDF_c(t) = σ((t − loc_c)/s_c)` and `s_c = softplus(raw_scale_c) + 1e-6`.
    pub fn likelihood(&mut self, v: Var, loc: Var, raw_scale: Var) -> Result<Var> {
        let shape = self.shape(v);
        let c = shape.channels();
        for (name, p) in [("loc", loc), ("raw_scale", raw_scale)] {
            let n = self.value(p).numel();
            if n != c {
                return Err(Error::shape(format!(
                    "prior {name} has {n} channels, latent has {c}"
                )));
            }
        }
        let locs = self.value(loc).data();
        let scales: Vec<S> = self
            .value(raw_scale)
            .data()
            .iter()
            .map(|&r| r.softplus() + S::lit(SCALE_FLOOR))
            .collect();
        let plane = shape.plane();
        let floor = S::lit(LIKELIHOOD_FLOOR);
        let data = self
            .value(v)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &val)| {
                let ch = (i / plane) % c;
                bin_mass(val, locs[ch], scales[ch]).max(floor)
            })
            .collect();
        let rg = self.rg(&[v, loc, raw_scale]);
        Ok(self.push(
            Tensor::from_vec(shape, data)?,
            Op::Likelihood { v, loc, raw_scale },
            rg,
        ))
    }

    /// Side of its breakpoint (`true` above) of every leaky-ReLU input and
    /// clamp input on this tape, in recording order. Two evaluations of the
    /// same graph with equal patterns lie on one smooth piece.
    pub fn kink_sides(&self) -> Vec<bool> {
        let mut sides = Vec::new();
        for n in &self.nodes {
            let (x, at) = match n.op {
                Op::LeakyRelu { x, .. } => (x, S::zero()),
                Op::ClampMin { x, floor } => (x, floor),
                _ => continue,
            };
            sides.extend(self.value(x).data().iter().map(|&v| v > at));
        }
        sides
    }

    /// Propagates `d loss / d node` back to every gradient-tracking leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g)?;
            } else {
                self.backprop_node(i, &g, &mut grads);
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let mut send = |v: Var, delta: Vec<S>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let elementwise = |x: Var, f: &dyn Fn(S, S, S) -> S| -> Vec<S> {
            g.iter()
                .zip(val(x))
                .zip(out)
                .map(|((&g, &x), &y)| f(g, x, y))
                .collect()
        };
        match node.op {
            Op::Leaf => unreachable!("leaves handled by caller"),
            Op::Conv2d {
                input,
                kernel,
                bias,
                geo,
            } => {
                let xs = self.shape(input);
                let ys = node.value.shape();
                if self.requires_grad(input) {
                    send(
                        input,
                        conv::scatter(g, ys, val(kernel), xs.channels(), geo, xs.height(), xs.width()),
                    );
                }
                if self.requires_grad(kernel) {
                    let mut dk = conv::weight_grad(val(input), xs, g, ys, geo);
                    if CORRUPT_BACKWARD.with(Cell::get) {
                        dk.iter_mut().for_each(|v| *v *= S::lit(1.5));
                    }
                    send(kernel, dk);
                }
                if let Some(b) = bias {
                    send(b, channel_sums(g, ys));
                }
            }
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                geo,
            } => {
                let ys = self.shape(input);
                let zs = node.value.shape();
                if self.requires_grad(input) {
                    send(
                        input,
                        conv::gather(g, zs, val(kernel), ys.channels(), geo, ys.height(), ys.width()),
                    );
                }
                if self.requires_grad(kernel) {
                    send(kernel, conv::weight_grad(g, zs, val(input), ys, geo));
                }
                if let Some(b) = bias {
                    send(b, channel_sums(g, zs));
                }
            }
            Op::Add(a, b) => {
                send(a, g.to_vec());
                send(b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(a, g.to_vec());
                send(b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                send(a, g.iter().zip(val(b)).map(|(&g, &y)| g * y).collect());
                send(b, g.iter().zip(val(a)).map(|(&g, &x)| g * x).collect());
            }
            Op::Div(a, b) => {
                let bv = val(b);
                send(a, g.iter().zip(bv).map(|(&g, &d)| g / d).collect());
                send(
                    b,
                    g.iter()
                        .zip(out)
                        .zip(bv)
                        .map(|((&g, &q), &d)| -g * q / d)
                        .collect(),
                );
            }
            Op::AddChannel { x, bias } => {
                send(x, g.to_vec());
                send(bias, channel_sums(g, node.value.shape()));
            }
            Op::Scale { x, factor } => send(x, g.iter().map(|&v| v * factor).collect()),
            Op::AddScalar(x) => send(x, g.to_vec()),
            Op::Square(x) => send(x, elementwise(x, &|g, x, _| g * (x + x))),
            Op::Sqrt(x) => send(x, elementwise(x, &|g, _, y| g / (y + y))),
            Op::Ln(x) => send(x, elementwise(x, &|g, x, _| g / x)),
            Op::Sigmoid(x) => {
                send(x, elementwise(x, &|g, _, y| g * y * (S::one() - y)));
            }
            Op::LeakyRelu { x, slope } => send(
                x,
                elementwise(x, &|g, x, _| if x > S::zero() { g } else { g * slope }),
            ),
            Op::ClampMin { x, floor } => send(
                x,
                elementwise(x, &|g, x, _| if x >= floor { g } else { S::zero() }),
            ),
            Op::Sum(x) => send(x, vec![g[0]; self.value(x).numel()]),
            Op::Mean(x) => {
                let n = self.value(x).numel();
                send(x, vec![g[0] / S::lit(n as f64); n]);
            }
            Op::Likelihood { v, loc, raw_scale } => {
                let shape = node.value.shape();
                let c = shape.channels();
                let plane = shape.plane();
                let raws = val(raw_scale);
                let locs = val(loc);
                let floor = S::lit(LIKELIHOOD_FLOOR);
                let mut gv = vec![S::zero(); g.len()];
                let mut gloc = vec![S::zero(); c];
                let mut gscale = vec![S::zero(); c];
                for (i, &x) in val(v).iter().enumerate() {
                    let ch = (i / plane) % c;
                    let s = raws[ch].softplus() + S::lit(SCALE_FLOOR);
                    let mu = locs[ch];
                    if bin_mass(x, mu, s) < floor {
                        continue;
                    }
                    let half = S::lit(0.5);
                    let a = (x + half - mu) / s;
                    let b = (x - half - mu) / s;
                    let (da, db) = (logistic_density(a), logistic_density(b));
                    let dv = (da - db) / s;
                    gv[i] = g[i] * dv;
                    gloc[ch] -= g[i] * dv;
                    gscale[ch] -= g[i] * (a * da - b * db) / s;
                }
                send(v, gv);
                send(loc, gloc);
                send(
                    raw_scale,
                    gscale
                        .iter()
                        .zip(raws)
                        .map(|(&gs, &r)| gs * r.sigmoid())
                        .collect(),
                );
            }
        }
    }
}

/// `σ(a)(1 − σ(a))`, computed without cancellation in the tails.
#[inline]
fn logistic_density<S: Scalar>(a: S) -> S {
    let e = (-a.abs()).exp();
    let d = S::one() + e;
    e / (d * d)
}

/// Logistic mass of the unit bin centred at `v`, accurate in both tails.
#[inline]
pub(crate) fn bin_mass<S: Scalar>(v: S, loc: S, scale: S) -> S {
    let half = S::lit(0.5);
    let upper = (v + half - loc) / scale;
    let lower = (v - half - loc) / scale;
    // Evaluate on the side of the density where the CDF is small.
    if upper + lower > S::zero() {
        (-lower).sigmoid() - (-upper).sigmoid()
    } else {
        upper.sigmoid() - lower.sigmoid()
    }
}

fn channel_sums<S: Scalar>(g: &[S], shape: Shape) -> Vec<S> {
    let c = shape.channels();
    let mut out = vec![S::zero(); c];
    for (i, chunk) in g.chunks(shape.plane()).enumerate() {
        out[i % c] += chunk.iter().copied().sum::<S>();
    }
    out
}
