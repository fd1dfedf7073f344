use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{list_images, read_image};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Images as `1×3×H×W` tensors in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Dataset<S: Scalar> {
    pub images: Vec<Tensor<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(images: Vec<Tensor<S>>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        for (i, img) in images.iter().enumerate() {
            let [n, c, _, _] = img.shape().0;
            if n != 1 || c != 3 {
                return Err(Error::shape(format!("image {i} has shape {:?}, expected 1x3xHxW", img.shape())));
            }
        }
        Ok(Dataset { images })
    }

    /// Every PNG/PNM file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::invalid(format!("dataset directory {} does not exist", dir.display())));
        }
        let paths = list_images(dir)?;
        if paths.is_empty() {
            return Err(Error::invalid(format!("no images in {}", dir.display())));
        }
        Self::new(paths.iter().map(|p| read_image(p)).collect::<Result<_>>()?)
    }

    /// Deterministic piecewise-smooth images: a colour ramp with a few
    /// flat rectangles and discs, quantized to 8-bit levels.
    pub fn synthetic(count: usize, size: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let images = (0..count).map(|_| synthetic_image(size, size, &mut rng)).collect();
        Self::new(images)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(train, validation)` index ranges: the last `len/8` images (at
    /// least one when there are two or more) are held out. A single image
    /// serves as both.
    pub fn split(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let n = self.len();
        if n == 1 {
            return (0..1, 0..1);
        }
        let val = (n / 8).max(1);
        (0..n - val, n - val..n)
    }

    pub fn min_side(&self) -> usize {
        self.images
            .iter()
            .map(|t| t.shape().height().min(t.shape().width()))
            .min()
            .unwrap_or(0)
    }
}

fn synthetic_image<S: Scalar>(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<S> {
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.1..0.9));
    let slope: [(f64, f64); 3] = std::array::from_fn(|_| (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)));
    let mut img = vec![0.0f64; 3 * h * w];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
                img[(c * h + y) * w + x] = base[c] + slope[c].0 * u + slope[c].1 * v;
            }
        }
    }
    let shapes = rng.gen_range(2..6);
    for _ in 0..shapes {
        let colour: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let (cy, cx) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        let (ry, rx) = (
            rng.gen_range(0.1..0.4) * h as f64,
            rng.gen_range(0.1..0.4) * w as f64,
        );
        let disc = rng.gen_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = ((y as f64 - cy) / ry, (x as f64 - cx) / rx);
                let inside = if disc {
                    dy * dy + dx * dx <= 1.0
                } else {
                    dy.abs() <= 1.0 && dx.abs() <= 1.0
                };
                if inside {
                    for c in 0..3 {
                        img[(c * h + y) * w + x] = colour[c];
                    }
                }
            }
        }
    }
    let data = img
        .into_iter()
        .map(|v| S::lit((v.clamp(0.0, 1.0) * 255.0).round() / 255.0))
        .collect();
    Tensor::from_vec([1, 3, h, w], data).expect("sized above")
}

/// `crop×crop` window at `(top, left)`, optionally mirrored horizontally.
pub fn crop<S: Scalar>(img: &Tensor<S>, top: usize, left: usize, size: usize, flip: bool) -> Result<Tensor<S>> {
    let [_, c, h, w] = img.shape().0;
    if top + size > h || left + size > w {
        return Err(Error::shape(format!(
            "crop {size}x{size} at ({top}, {left}) exceeds {h}x{w} image"
        )));
    }
    let src = img.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for y in 0..size {
            let row = (ch * h + top + y) * w + left;
            let slice = &src[row..row + size];
            if flip {
                out.extend(slice.iter().rev());
            } else {
                out.extend_from_slice(slice);
            }
        }
    }
    Tensor::from_vec([1, c, size, size], out)
}

pub fn center_crop<S: Scalar>(img: &Tensor<S>, size: usize) -> Result<Tensor<S>> {
    let [_, _, h, w] = img.shape().0;
    if size > h || size > w {
        return Err(Error::shape(format!("crop {size} larger than {h}x{w} image")));
    }
    crop(img, (h - size) / 2, (w - size) / 2, size, false)
}

/// Uniformly placed crop with a fair-coin horizontal flip.
pub fn random_crop_flip<S: Scalar, R: Rng>(img: &Tensor<S>, size: usize, rng: &mut R) -> Result<Tensor<S>> {
    let [_, _, h, w] = img.shape().0;
    if size > h || size > w {
        return Err(Error::shape(format!("crop {size} larger than {h}x{w} image")));
    }
    let top = rng.gen_range(0..=h - size);
    let left = rng.gen_range(0..=w - size);
    let flip = rng.gen_bool(0.5);
    crop(img, top, left, size, flip)
}

/// Replicate-pads the bottom and right edges up to multiples of `divisor`.
pub fn pad_replicate<S: Scalar>(img: &Tensor<S>, divisor: usize) -> Tensor<S> {
    let [n, c, h, w] = img.shape().0;
    let (ph, pw) = (h.div_ceil(divisor) * divisor, w.div_ceil(divisor) * divisor);
    if (ph, pw) == (h, w) {
        return img.clone();
    }
    let src = img.data();
    let mut out = Vec::with_capacity(n * c * ph * pw);
    for plane in 0..n * c {
        for y in 0..ph {
            let row = (plane * h + y.min(h - 1)) * w;
            out.extend((0..pw).map(|x| src[row + x.min(w - 1)]));
        }
    }
    Tensor::from_vec([n, c, ph, pw], out).expect("sized above")
}

/// Top-left `h×w` window.
pub fn crop_to<S: Scalar>(img: &Tensor<S>, h: usize, w: usize) -> Result<Tensor<S>> {
    let [n, c, ih, iw] = img.shape().0;
    if h > ih || w > iw {
        return Err(Error::shape(format!("cannot crop {ih}x{iw} to {h}x{w}")));
    }
    let src = img.data();
    let mut out = Vec::with_capacity(n * c * h * w);
    for plane in 0..n * c {
        for y in 0..h {
            let row = (plane * ih + y) * iw;
            out.extend_from_slice(&src[row..row + w]);
        }
    }
    Tensor::from_vec([n, c, h, w], out)
}
