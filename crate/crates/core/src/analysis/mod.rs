//! Rate and quality metrics, high-frequency feature maps and file export.

mod export;
mod hf;
mod metrics;

pub use export::{meta_path, meta_text, normalize_to_u8, pgm_bytes, rd_csv_bytes, write_pgm, write_rd_csv, FLAT_GREY, RD_HEADER};
pub use hf::{flat_region_stat, flattest_window, high_freq_map, log_gradient_map, HfMap, Rect};
pub use metrics::{bpp, mean_point, psnr, psnr_from_mse, psnr_u8, RdPoint, PSNR_CAP_DB};

use crate::codec::{compress, decompress, pad_replicate, Compressed, Model, ModelConfig};
use crate::entropy::ModelId;
use crate::error::Result;
use crate::io::to_u8;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Scaling-branch input recorded at `tap` while coding `image`.
///
/// The image is replicate-padded to the model divisor as in compression,
/// then extended on every side by replicate padding wider than the model's
/// reach, and the features are cropped back to the padded image. Zero
/// padding inside the convolutions therefore never shows up in the result,
/// so a constant image yields constant features.
pub fn capture_scaling_features<S: Scalar>(model: &Model<S>, image: &Tensor<S>, tap: &str) -> Result<Tensor<S>> {
    capture_with_margin(model, image, tap, capture_margin(&model.config))
}

/// Image-pixel distance that bounds how far any tap can see. Each block's
/// serial path spans at most `kernel/2 + 6` cells at its coarser scale,
/// and the output convolutions `kernel/2`.
fn capture_margin(config: &ModelConfig) -> usize {
    let r = config.kernel / 2;
    let coarse: usize = (1..config.stages).map(|i| 1usize << i).sum::<usize>()
        + (1..config.stages).map(|j| 1usize << (config.stages - j + 1)).sum::<usize>();
    let reach = (r + 6) * coarse + r * ((1 << config.stages) + 2);
    reach.div_ceil(config.divisor()) * config.divisor()
}

fn capture_with_margin<S: Scalar>(model: &Model<S>, image: &Tensor<S>, tap: &str, margin: usize) -> Result<Tensor<S>> {
    let padded = pad_replicate(image, model.config.divisor());
    let [_, _, h, w] = padded.shape().0;
    let features = model.capture(&extend_replicate(&padded, margin), tap)?;
    let [n, c, fh, fw] = features.shape().0;
    // Tap grids are power-of-two subsamplings of the extended image.
    let scale = (h + 2 * margin) / fh;
    let (top, oh, ow) = (margin / scale, h / scale, w / scale);
    let src = features.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        for y in top..top + oh {
            let row = (plane * fh + y) * fw + top;
            out.extend_from_slice(&src[row..row + ow]);
        }
    }
    Tensor::from_vec([n, c, oh, ow], out)
}

/// Replicate padding of `m` pixels on all four sides.
fn extend_replicate<S: Scalar>(img: &Tensor<S>, m: usize) -> Tensor<S> {
    let [n, c, h, w] = img.shape().0;
    let (eh, ew) = (h + 2 * m, w + 2 * m);
    let src = img.data();
    let mut out = Vec::with_capacity(n * c * eh * ew);
    for plane in 0..n * c {
        for y in 0..eh {
            let row = (plane * h + y.saturating_sub(m).min(h - 1)) * w;
            out.extend((0..ew).map(|x| src[row + x.saturating_sub(m).min(w - 1)]));
        }
    }
    Tensor::from_vec([n, c, eh, ew], out).expect("sized above")
}

/// 8-bit pixel values of an image in `[0, 1]`.
pub fn to_8bit<S: Scalar>(x: &Tensor<S>) -> Vec<u8> {
    x.data().iter().map(|&v| to_u8(v)).collect()
}

/// Compresses and decompresses `image`, measuring bpp from the serialized
/// size and PSNR on 8-bit pixels.
pub fn evaluate_image<S: Scalar>(
    model: &Model<S>,
    id: ModelId,
    lambda: f64,
    image: &Tensor<S>,
    tag: impl Into<String>,
) -> Result<(Compressed, RdPoint)> {
    let [_, _, h, w] = image.shape().0;
    let compressed = compress(model, id, image)?;
    let x_hat = decompress(model, id, &compressed.bytes)?;
    let point = RdPoint {
        model: tag.into(),
        lambda,
        bpp: bpp(compressed.bytes.len() as u64, w, h)?,
        psnr_db: psnr_u8(&to_8bit(image), &to_8bit(&x_hat))?,
    };
    Ok((compressed, point))
}
