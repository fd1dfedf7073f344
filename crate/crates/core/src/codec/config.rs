use crate::error::{Error, Result};
use crate::norm::Variant;

/// Full-scale λ grid, one model per value.
pub const REFERENCE_LAMBDAS: [f64; 6] = [0.005, 0.010, 0.020, 0.035, 0.080, 0.180];
/// `(N, M)` for the two lowest λ values of the reference grid.
pub const REFERENCE_CHANNELS_LOW_RATE: (usize, usize) = (128, 192);
/// `(N, M)` for the remaining λ values.
pub const REFERENCE_CHANNELS_HIGH_RATE: (usize, usize) = (192, 320);
pub const REFERENCE_LR_INIT: f64 = 1e-4;
pub const REFERENCE_BATCH: usize = 16;
pub const REFERENCE_CROP: usize = 256;

/// Architecture of the analysis/synthesis pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Number of stride-2 resampling stages on each side.
    pub stages: usize,
    /// Base channel count `N`.
    pub n: usize,
    /// Latent channel count `M`.
    pub m: usize,
    /// Kernel size of every resampling convolution.
    pub kernel: usize,
    pub variant: Variant,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            stages: 3,
            n: 8,
            m: 16,
            kernel: 5,
            variant: Variant::EasnC,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.stages > 15 {
            return Err(Error::invalid(format!("stages must be in 1..=15, got {}", self.stages)));
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::invalid("channel counts N and M must be at least 1"));
        }
        if self.m > usize::from(u16::MAX) || self.n > usize::from(u16::MAX) {
            return Err(Error::invalid("channel counts must fit in 16 bits"));
        }
        if self.kernel % 2 == 0 || self.kernel > 255 {
            return Err(Error::invalid(format!(
                "resampling kernel must be odd and at most 255, got {}",
                self.kernel
            )));
        }
        if self.variant == Variant::GdnInverse {
            return Err(Error::invalid(
                "GDN-INVERSE is a layer form, not a model variant; use GDN (inverse GDN is used in the decoder)",
            ));
        }
        Ok(())
    }

    /// Spatial divisor required of inputs, `2^stages`.
    pub fn divisor(&self) -> usize {
        1 << self.stages
    }
}

/// Optimization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr_init: f64,
    pub batch: usize,
    pub crop: usize,
    /// Upper bound on optimizer steps.
    pub steps: usize,
    pub plateau_patience_epochs: usize,
    pub lr_factor: f64,
    pub max_lr_drops: usize,
    /// Seed for crops, flips, shuffling and quantization noise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.01,
            lr_init: 1e-3,
            batch: 8,
            crop: 32,
            steps: 2000,
            plateau_patience_epochs: 10,
            lr_factor: 0.5,
            max_lr_drops: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.lr_init.is_finite() && self.lr_init > 0.0) {
            return Err(Error::invalid(format!("lr_init must be positive, got {}", self.lr_init)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        if self.crop == 0 || self.crop % model.divisor() != 0 {
            return Err(Error::invalid(format!(
                "crop {} must be a positive multiple of {}",
                self.crop,
                model.divisor()
            )));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::invalid(format!("lr_factor must be in (0, 1), got {}", self.lr_factor)));
        }
        if self.plateau_patience_epochs == 0 {
            return Err(Error::invalid("plateau_patience_epochs must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let m = ModelConfig::default();
        m.validate().unwrap();
        TrainConfig::default().validate(&m).unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = ModelConfig {
            variant: Variant::GdnInverse,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            kernel: 4,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let m = ModelConfig::default();
        let t = TrainConfig {
            crop: 36,
            ..TrainConfig::default()
        };
        assert!(t.validate(&m).is_err());
    }
}
