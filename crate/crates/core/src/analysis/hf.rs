use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A single-channel 2-D map with a label describing where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct HfMap {
    pub height: usize,
    pub width: usize,
    /// Row-major values.
    pub data: Vec<f64>,
    pub source: String,
}

impl HfMap {
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Axis-aligned rectangle `[top, top + height) × [left, left + width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    /// Maps a rectangle given on a `from_h × from_w` grid onto `to_h × to_w`,
    /// keeping at least one cell.
    pub fn rescale(&self, from_h: usize, from_w: usize, to_h: usize, to_w: usize) -> Rect {
        let sy = |v: usize| v * to_h / from_h.max(1);
        let sx = |v: usize| v * to_w / from_w.max(1);
        let top = sy(self.top).min(to_h.saturating_sub(1));
        let left = sx(self.left).min(to_w.saturating_sub(1));
        Rect {
            top,
            left,
            height: sy(self.height).max(1).min(to_h - top),
            width: sx(self.width).max(1).min(to_w - left),
        }
    }
}

fn single<S: Scalar>(x: &Tensor<S>) -> Result<[usize; 3]> {
    let [n, c, h, w] = x.shape().0;
    if n != 1 || c == 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!("expected a nonempty 1xCxHxW feature map, got {:?}", x.shape())));
    }
    Ok([c, h, w])
}

/// Channel mean of `x − mean₃ₓ₃(x)`, with the mean filter using replicate
/// padding so constant inputs map to exactly zero.
pub fn high_freq_map<S: Scalar>(x: &Tensor<S>, source: impl Into<String>) -> Result<HfMap> {
    let [c, h, w] = single(x)?;
    let data = x.data();
    let mut out = vec![0.0f64; h * w];
    for ch in 0..c {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        let at = |y: isize, xx: isize| {
            let y = y.clamp(0, h as isize - 1) as usize;
            let xx = xx.clamp(0, w as isize - 1) as usize;
            plane[y * w + xx].as_f64()
        };
        for y in 0..h {
            for xx in 0..w {
                // x − mean(x) written as −mean(x_n − x) so flat windows give exactly 0.
                let centre = plane[y * w + xx].as_f64();
                let mut dev = 0.0;
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        dev += at(y as isize + dy, xx as isize + dx) - centre;
                    }
                }
                out[y * w + xx] -= dev / 9.0;
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= c as f64);
    Ok(HfMap {
        height: h,
        width: w,
        data: out,
        source: source.into(),
    })
}

/// `log(1 + |∇x|)` of the channel mean, with central differences in the
/// interior and one-sided differences at the borders.
pub fn log_gradient_map<S: Scalar>(x: &Tensor<S>, source: impl Into<String>) -> Result<HfMap> {
    let [c, h, w] = single(x)?;
    let data = x.data();
    let mean: Vec<f64> = (0..h * w)
        .map(|i| (0..c).map(|ch| data[ch * h * w + i].as_f64()).sum::<f64>() / c as f64)
        .collect();
    let diff = |lo: usize, hi: usize, a: f64, b: f64| if hi > lo { (b - a) / (hi - lo) as f64 } else { 0.0 };
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for xx in 0..w {
            let (x0, x1) = (xx.saturating_sub(1), (xx + 1).min(w - 1));
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let gx = diff(x0, x1, mean[y * w + x0], mean[y * w + x1]);
            let gy = diff(y0, y1, mean[y0 * w + xx], mean[y1 * w + xx]);
            out[y * w + xx] = (gx * gx + gy * gy).sqrt().ln_1p();
        }
    }
    Ok(HfMap {
        height: h,
        width: w,
        data: out,
        source: source.into(),
    })
}

/// Mean `|v|` over `rect`, clipped to the map.
pub fn flat_region_stat(map: &HfMap, rect: Rect) -> Result<f64> {
    let bottom = (rect.top + rect.height).min(map.height);
    let right = (rect.left + rect.width).min(map.width);
    if rect.top >= bottom || rect.left >= right {
        return Err(Error::invalid(format!(
            "region {rect:?} does not overlap the {}x{} map",
            map.height, map.width
        )));
    }
    let mut sum = 0.0;
    for y in rect.top..bottom {
        for x in rect.left..right {
            sum += map.at(y, x).abs();
        }
    }
    Ok(sum / ((bottom - rect.top) * (right - rect.left)) as f64)
}

/// The `size×size` window of `map` with the smallest mean value, scanning
/// row-major and keeping the first minimum. `size` is clipped to the map.
pub fn flattest_window(map: &HfMap, size: usize) -> Rect {
    let (h, w) = (map.height, map.width);
    let s = size.clamp(1, h.min(w).max(1));
    // Summed-area table with a zero border row and column.
    let mut sat = vec![0.0f64; (h + 1) * (w + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] =
                map.at(y, x) + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let window = |y: usize, x: usize| {
        sat[(y + s) * (w + 1) + x + s] - sat[y * (w + 1) + x + s] - sat[(y + s) * (w + 1) + x] + sat[y * (w + 1) + x]
    };
    let mut best = (f64::INFINITY, 0, 0);
    for y in 0..=h - s {
        for x in 0..=w - s {
            let v = window(y, x);
            if v < best.0 {
                best = (v, y, x);
            }
        }
    }
    Rect {
        top: best.1,
        left: best.2,
        height: s,
        width: s,
    }
}
