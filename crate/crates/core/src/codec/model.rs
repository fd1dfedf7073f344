use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::entropy::{quantize_round, FactorizedPrior};
use crate::error::{Error, Result};
use crate::nn::{ConvLayer, Init};
use crate::norm::{Block, Direction, Taps};
use crate::params::{Graph, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::{IntTensor, Tensor};

pub const IMAGE_CHANNELS: usize = 3;

/// Analysis transform, synthesis transform and latent prior, with all
/// parameters held in one store.
#[derive(Clone, Debug)]
pub struct Model<S: Scalar> {
    pub config: ModelConfig,
    pub store: ParamStore<S>,
    pub encoder: Vec<Block>,
    pub encoder_out: ConvLayer,
    pub decoder: Vec<Block>,
    pub decoder_out: ConvLayer,
    pub prior: FactorizedPrior,
}

impl<S: Scalar> Model<S> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let init = Init::FanInUniform { gain: 1.0 };
        let (n, m, k) = (config.n, config.m, config.kernel);

        let mut encoder = Vec::new();
        let mut c_in = IMAGE_CHANNELS;
        for i in 0..config.stages - 1 {
            let name = format!("encoder.{i}");
            encoder.push(Block::new(&mut store, &name, config.variant, Direction::Down, c_in, n, k, &mut rng));
            c_in = n;
        }
        let encoder_out = ConvLayer::down(&mut store, "encoder.out", c_in, m, k, init, &mut rng);

        let mut decoder = Vec::new();
        let mut c_in = m;
        for i in 0..config.stages - 1 {
            let name = format!("decoder.{i}");
            decoder.push(Block::new(&mut store, &name, config.variant, Direction::Up, c_in, n, k, &mut rng));
            c_in = n;
        }
        let decoder_out = ConvLayer::up(&mut store, "decoder.out", c_in, IMAGE_CHANNELS, k, init, &mut rng);
        let prior = FactorizedPrior::new(&mut store, "prior", m);
        Ok(Model {
            config,
            store,
            encoder,
            encoder_out,
            decoder,
            decoder_out,
            prior,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.num_elements()
    }

    /// Every capture point, encoder first.
    pub fn tap_names(&self) -> Vec<String> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(Block::tap_names)
            .collect()
    }

    fn check_image(&self, shape: crate::tensor::Shape) -> Result<()> {
        if shape.channels() != IMAGE_CHANNELS {
            return Err(Error::shape(format!(
                "expected a {IMAGE_CHANNELS}-channel image, got {} channels",
                shape.channels()
            )));
        }
        let d = self.config.divisor();
        let (h, w) = (shape.height(), shape.width());
        if h % d != 0 || w % d != 0 || h == 0 || w == 0 {
            let pad = |v: usize| v.div_ceil(d).max(1) * d - v;
            return Err(Error::shape(format!(
                "{h}x{w} input is not divisible by {d}; pad by {} rows and {} columns",
                pad(h),
                pad(w)
            )));
        }
        Ok(())
    }

    /// `g_a`: image in `[0, 1]` to latent `y`.
    pub fn analysis(&self, g: &mut Graph<'_, S>, x: Var, taps: &mut Taps<S>) -> Result<Var> {
        self.check_image(g.shape(x))?;
        let mut h = x;
        for block in &self.encoder {
            h = block.forward(g, h, taps)?;
        }
        self.encoder_out.forward(g, h)
    }

    /// `g_s`: latent to reconstruction, unclamped.
    pub fn synthesis(&self, g: &mut Graph<'_, S>, y: Var, taps: &mut Taps<S>) -> Result<Var> {
        let c = g.shape(y).channels();
        if c != self.config.m {
            return Err(Error::shape(format!(
                "synthesis expects {} latent channels, got {c}",
                self.config.m
            )));
        }
        let mut h = y;
        for block in &self.decoder {
            h = block.forward(g, h, taps)?;
        }
        self.decoder_out.forward(g, h)
    }

    /// Training forward pass with additive uniform noise `u` on the latent.
    /// Returns `(x̂, likelihood(ỹ))`.
    pub fn forward_noisy(&self, g: &mut Graph<'_, S>, x: Var, noise: &Tensor<S>) -> Result<(Var, Var)> {
        let y = self.analysis(g, x, &mut Taps::off())?;
        let u = g.constant(noise.clone());
        let y_tilde = g.add(y, u)?;
        let p = self.prior.likelihood(g, y_tilde)?;
        let x_hat = self.synthesis(g, y_tilde, &mut Taps::off())?;
        Ok((x_hat, p))
    }

    /// Evaluation forward pass on rounded latents. Returns `(x̂, likelihood(ŷ))`
    /// with `x̂` unclamped.
    pub fn forward_rounded(&self, g: &mut Graph<'_, S>, x: Var, taps: &mut Taps<S>) -> Result<(Var, Var)> {
        let y = self.analysis(g, x, taps)?;
        let y_hat = quantize_round(g.value(y))?.to_float::<S>();
        let y_hat = g.constant(y_hat);
        let p = self.prior.likelihood(g, y_hat)?;
        let x_hat = self.synthesis(g, y_hat, taps)?;
        Ok((x_hat, p))
    }

    /// Rounded latent symbols of an image whose size is divisible by `2^stages`.
    pub fn encode_latent(&self, x: &Tensor<S>) -> Result<IntTensor> {
        let mut g = Graph::new(&self.store);
        let xv = g.constant(x.clone());
        let y = self.analysis(&mut g, xv, &mut Taps::off())?;
        quantize_round(g.value(y))
    }

    /// Unclamped reconstruction from integer latents.
    pub fn decode_latent(&self, y_hat: &IntTensor) -> Result<Tensor<S>> {
        let mut g = Graph::new(&self.store);
        let yv = g.constant(y_hat.to_float());
        let x_hat = self.synthesis(&mut g, yv, &mut Taps::off())?;
        Ok(g.value(x_hat).clone())
    }

    /// Continuous-model estimate `−Σ log₂ p(ŷ)` in bits.
    pub fn estimated_bits(&self, y_hat: &IntTensor) -> Result<f64> {
        let mut g = Graph::new(&self.store);
        let yv = g.constant(y_hat.to_float());
        let p = self.prior.likelihood(&mut g, yv)?;
        let bits = crate::entropy::rate_bits(&mut g, p)?;
        Ok(g.value(bits).item()?.as_f64())
    }

    /// Input of the scaling branch at `tap` while compressing and
    /// reconstructing `x`. The forward results are unaffected.
    pub fn capture(&self, x: &Tensor<S>, tap: &str) -> Result<Tensor<S>> {
        let valid = self.tap_names();
        if !valid.iter().any(|t| t == tap) {
            return Err(Error::UnknownTap {
                name: tap.to_string(),
                valid,
            });
        }
        let mut g = Graph::new(&self.store);
        let xv = g.constant(x.clone());
        let mut taps = Taps::recording();
        self.forward_rounded(&mut g, xv, &mut taps)?;
        taps.get(tap)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("tap `{tap}` was not reached")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::Variant;

    fn tiny(variant: Variant) -> Model<f64> {
        Model::new(ModelConfig {
            stages: 3,
            n: 4,
            m: 8,
            kernel: 5,
            variant,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn geometry() {
        for v in Variant::ALL.into_iter().filter(|&v| v != Variant::GdnInverse) {
            let model = tiny(v);
            let x = Tensor::full([1, 3, 32, 32], 0.3);
            let y = model.encode_latent(&x).unwrap();
            assert_eq!(y.shape.0, [1, 8, 4, 4], "{v}");
            let x_hat = model.decode_latent(&y).unwrap();
            assert_eq!(x_hat.shape().0, [1, 3, 32, 32], "{v}");
        }
    }

    #[test]
    fn indivisible_input_reports_padding() {
        let model = tiny(Variant::Gdn);
        let x = Tensor::zeros([1, 3, 30, 33]);
        let err = model.encode_latent(&x).unwrap_err().to_string();
        assert!(err.contains("pad by 2 rows and 7 columns"), "{err}");
    }

    #[test]
    fn zero_image_gives_zero_latent() {
        let model = tiny(Variant::EasnE);
        let y = model.encode_latent(&Tensor::zeros([1, 3, 16, 16])).unwrap();
        assert!(y.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn tap_names_cover_blocks() {
        assert_eq!(
            tiny(Variant::EasnC).tap_names(),
            ["encoder.0", "encoder.1", "decoder.0", "decoder.1"]
        );
        let deep = tiny(Variant::EasnDeep).tap_names();
        assert_eq!(deep.len(), 8);
        assert_eq!(deep[0], "encoder.0.front");
        assert_eq!(deep[1], "encoder.0.back");
    }

    #[test]
    fn capture_rejects_unknown_tap() {
        let model = tiny(Variant::Gdn);
        let err = model.capture(&Tensor::zeros([1, 3, 8, 8]), "nope").unwrap_err();
        assert!(matches!(err, Error::UnknownTap { ref valid, .. } if valid.len() == 4));
    }

    #[test]
    fn gdn_inverse_variant_rejected() {
        let cfg = ModelConfig {
            variant: Variant::GdnInverse,
            ..ModelConfig::default()
        };
        assert!(Model::<f64>::new(cfg).is_err());
    }
}
