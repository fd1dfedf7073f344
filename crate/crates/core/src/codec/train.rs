use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::data::{center_crop, random_crop_flip, Dataset};
use super::loss::rd_loss;
use super::model::Model;
use super::optim::Adam;
use super::schedule::{Plateau, PlateauEvent};
use crate::entropy::uniform_noise;
use crate::error::{Error, Result};
use crate::norm::Taps;
use crate::params::Graph;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-epoch record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Optimizer steps completed at the end of this epoch.
    pub step: usize,
    /// Mean training loss over the epoch's steps.
    pub train_loss: f64,
    /// Loss on the held-out slice with rounded latents.
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
    /// True when the plateau schedule ended training before `steps`.
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_loss)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the quantization noise for one sample of one step.
pub fn noise_seed(seed: u64, step: usize, sample: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ step as u64) ^ sample as u64)
}

struct SampleResult {
    loss: f64,
    grads: Vec<Vec<f64>>,
}

fn sample_step<S: Scalar>(model: &Model<S>, x: &Tensor<S>, seed: u64, lambda: f64) -> Result<SampleResult> {
    let [_, _, h, w] = x.shape().0;
    let d = model.config.divisor();
    let noise = uniform_noise(&Tensor::<S>::zeros([1, model.config.m, h / d, w / d]), seed);
    let mut g = Graph::new(&model.store);
    let xv = g.constant(x.clone());
    let (x_hat, p) = model.forward_noisy(&mut g, xv, &noise)?;
    if !g.value(x_hat).is_finite() || !g.value(p).is_finite() {
        return Ok(SampleResult {
            loss: f64::NAN,
            grads: Vec::new(),
        });
    }
    let terms = rd_loss(&mut g, xv, x_hat, p, lambda, h * w)?;
    let loss = g.value(terms.total).item()?.as_f64();
    if !loss.is_finite() {
        return Ok(SampleResult {
            loss,
            grads: Vec::new(),
        });
    }
    g.backward(terms.total)?;
    let grads = g
        .param_grads()
        .into_iter()
        .map(|v| v.into_iter().map(|s| s.as_f64()).collect())
        .collect();
    Ok(SampleResult { loss, grads })
}

/// Rate–distortion loss of `x` with rounded latents (no gradient).
pub fn eval_loss<S: Scalar>(model: &Model<S>, x: &Tensor<S>, lambda: f64) -> Result<f64> {
    let [_, _, h, w] = x.shape().0;
    let mut g = Graph::new(&model.store);
    let xv = g.constant(x.clone());
    let (x_hat, p) = model.forward_rounded(&mut g, xv, &mut Taps::off())?;
    let terms = rd_loss(&mut g, xv, x_hat, p, lambda, h * w)?;
    Ok(g.value(terms.total).item()?.as_f64())
}

/// Mean validation loss over center crops of `images`.
pub fn validation_loss<S: Scalar>(model: &Model<S>, images: &[Tensor<S>], crop: usize, lambda: f64) -> Result<f64> {
    let losses = images
        .par_iter()
        .map(|img| eval_loss(model, &center_crop(img, crop)?, lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains `model` in place. See [`train_with`].
pub fn train<S: Scalar>(model: &mut Model<S>, data: &Dataset<S>, tc: &TrainConfig) -> Result<TrainReport> {
    train_with(model, data, tc, |_| {})
}

/// Trains with Adam on random crops and flips, halving the learning rate
/// when the validation loss plateaus, for at most `tc.steps` steps.
///
/// Samples of a batch are evaluated in parallel and their gradients summed
/// in sample order, so results do not depend on the thread count.
pub fn train_with<S: Scalar>(
    model: &mut Model<S>,
    data: &Dataset<S>,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    tc.validate(&model.config)?;
    if data.min_side() < tc.crop {
        return Err(Error::invalid(format!(
            "dataset contains an image smaller than the {0}x{0} crop",
            tc.crop
        )));
    }
    let (train_range, val_range) = data.split();
    let val_images = &data.images[val_range];
    let mut order: Vec<usize> = train_range.collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(&model.store, tc.lr_init);
    let mut plateau = Plateau::new(tc.lr_init, tc.lr_factor, tc.plateau_patience_epochs, tc.max_lr_drops);
    let mut report = TrainReport::default();
    let mut step = 0usize;

    'epochs: while step < tc.steps {
        order.shuffle(&mut rng);
        let lr = plateau.lr;
        adam.lr = lr;
        let mut epoch_losses = Vec::new();
        for batch in order.chunks(tc.batch) {
            if step == tc.steps {
                break;
            }
            let crops = batch
                .iter()
                .map(|&i| random_crop_flip(&data.images[i], tc.crop, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let seeds: Vec<u64> = (0..crops.len()).map(|i| noise_seed(tc.seed, step, i)).collect();
            let results = crops
                .par_iter()
                .zip(&seeds)
                .map(|(x, &s)| sample_step(model, x, s, tc.lambda))
                .collect::<Result<Vec<_>>>()?;

            let inv = 1.0 / results.len() as f64;
            let mut loss = 0.0;
            let mut grads: Vec<Vec<f64>> = model.store.iter().map(|p| vec![0.0; p.value.numel()]).collect();
            for (i, r) in results.iter().enumerate() {
                if !r.loss.is_finite() {
                    return Err(Error::Divergence {
                        step,
                        detail: format!("loss of batch sample {i} is {}", r.loss),
                    });
                }
                loss += r.loss;
                for (acc, g) in grads.iter_mut().zip(&r.grads) {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            loss *= inv;
            for (id, g) in grads.iter_mut().enumerate() {
                for v in g.iter_mut() {
                    *v *= inv;
                }
                if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Divergence {
                        step,
                        detail: format!("gradient {bad} in parameter {}", model.store.iter().nth(id).map_or("?", |p| &p.name)),
                    });
                }
            }
            adam.step(&mut model.store, &grads)?;
            model.store.check_finite().map_err(|e| Error::Divergence {
                step,
                detail: e.to_string(),
            })?;
            epoch_losses.push(loss);
            step += 1;
        }

        let val_loss = validation_loss(model, val_images, tc.crop, tc.lambda)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("validation loss is {val_loss}"),
            });
        }
        let entry = EpochLog {
            epoch: report.epochs.len() + 1,
            step,
            train_loss: epoch_losses.iter().sum::<f64>() / epoch_losses.len().max(1) as f64,
            val_loss,
            lr,
        };
        on_epoch(&entry);
        report.epochs.push(entry);
        if plateau.observe(val_loss) == PlateauEvent::Stop {
            report.stopped_early = step < tc.steps;
            break 'epochs;
        }
    }
    report.steps = step;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::config::ModelConfig;
    use crate::norm::Variant;

    fn tiny() -> (Model<f64>, Dataset<f64>, TrainConfig) {
        let model = Model::new(ModelConfig {
            stages: 2,
            n: 4,
            m: 4,
            kernel: 5,
            variant: Variant::EasnA,
            seed: 1,
        })
        .unwrap();
        let data = Dataset::synthetic(9, 16, 2).unwrap();
        let tc = TrainConfig {
            batch: 4,
            crop: 8,
            steps: 5,
            ..TrainConfig::default()
        };
        (model, data, tc)
    }

    #[test]
    fn noise_seeds_differ() {
        assert_ne!(noise_seed(0, 0, 0), noise_seed(0, 0, 1));
        assert_ne!(noise_seed(0, 0, 1), noise_seed(0, 1, 0));
        assert_eq!(noise_seed(5, 6, 7), noise_seed(5, 6, 7));
    }

    #[test]
    fn runs_requested_steps_and_is_deterministic() {
        let (mut a, data, tc) = tiny();
        let mut b = a.clone();
        let ra = train(&mut a, &data, &tc).unwrap();
        let rb = train(&mut b, &data, &tc).unwrap();
        assert_eq!(ra.steps, 5);
        // 8 training images, batch 4: two steps per epoch.
        assert_eq!(ra.epochs.len(), 3);
        assert_eq!(ra, rb);
        assert_eq!(a.store.iter().map(|p| p.value.clone()).collect::<Vec<_>>(),
                   b.store.iter().map(|p| p.value.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_small_images() {
        let (mut model, data, mut tc) = tiny();
        tc.crop = 32;
        assert!(train(&mut model, &data, &tc).is_err());
    }

    #[test]
    fn nan_is_divergence() {
        let (mut model, data, tc) = tiny();
        let id = model.store.find("encoder.out.weight").unwrap();
        model.store.get_mut(id).data_mut()[0] = f64::NAN;
        let err = train(&mut model, &data, &tc).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 0, .. }), "{err}");
    }
}
