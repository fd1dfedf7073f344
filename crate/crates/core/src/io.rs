//! Atomic file output and 8-bit RGB image I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::{round_half_away, Scalar};
use crate::tensor::Tensor;

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Image file extensions accepted by [`read_image`].
pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pnm", "pgm"];

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Reads a PNG or binary PNM file as a `1×3×H×W` tensor scaled to `[0, 1]`.
pub fn read_image<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor<S: Scalar>(img: &RgbImage) -> Tensor<S> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![S::zero(); 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = S::lit(f64::from(px[c]) / 255.0);
        }
    }
    Tensor::from_vec([1, 3, h, w], data).expect("sized above")
}

/// `round_half_away(clamp(v, 0, 1)·255)`.
pub fn to_u8<S: Scalar>(v: S) -> u8 {
    let v = v.max(S::zero()).min(S::one()) * S::lit(255.0);
    round_half_away(v).as_f64() as u8
}

/// First image of a `N×3×H×W` tensor as an 8-bit RGB image.
pub fn tensor_to_rgb<S: Scalar>(x: &Tensor<S>) -> Result<RgbImage> {
    let [_, c, h, w] = x.shape().0;
    if c != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {c}")));
    }
    let (w32, h32) = (
        u32::try_from(w).map_err(|_| Error::invalid("image too wide"))?,
        u32::try_from(h).map_err(|_| Error::invalid("image too tall"))?,
    );
    let data = x.data();
    Ok(RgbImage::from_fn(w32, h32, |px, py| {
        let at = |ch: usize| to_u8(data[(ch * h + py as usize) * w + px as usize]);
        image::Rgb([at(0), at(1), at(2)])
    }))
}

/// Encodes an image as PNG, or binary PPM when `path` ends in `.ppm`/`.pnm`.
pub fn encode_image(img: &RgbImage, path: &Path) -> Result<Vec<u8>> {
    let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(e) if e == "ppm" || e == "pnm" => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, format).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(buf.into_inner())
}

pub fn write_image<S: Scalar>(path: &Path, x: &Tensor<S>) -> Result<()> {
    let img = tensor_to_rgb(x)?;
    write_atomic(path, &encode_image(&img, path)?)
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_path(p))
        .collect();
    paths.sort();
    Ok(paths)
}
