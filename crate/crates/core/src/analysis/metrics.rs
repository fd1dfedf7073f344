use crate::error::{Error, Result};

/// Upper bound reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

/// `10·log₁₀(255² / mse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// PSNR between two images in the `[0, 255]` domain.
pub fn psnr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("PSNR of empty images"));
    }
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// PSNR between two 8-bit images.
pub fn psnr_u8(a: &[u8], b: &[u8]) -> Result<f64> {
    let f = |v: &[u8]| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
    psnr(&f(a), &f(b))
}

/// Bits per pixel of a file of `file_bytes` bytes.
pub fn bpp(file_bytes: u64, width: usize, height: usize) -> Result<f64> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!("bpp of a {width}x{height} image")));
    }
    Ok(file_bytes as f64 * 8.0 / (width * height) as f64)
}

/// One rate–distortion measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct RdPoint {
    pub model: String,
    pub lambda: f64,
    pub bpp: f64,
    pub psnr_db: f64,
}

/// Row whose rate and quality are the arithmetic means of `points`.
pub fn mean_point(model: impl Into<String>, points: &[RdPoint]) -> Option<RdPoint> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    Some(RdPoint {
        model: model.into(),
        lambda: points[0].lambda,
        bpp: points.iter().map(|p| p.bpp).sum::<f64>() / n,
        psnr_db: points.iter().map(|p| p.psnr_db).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(psnr_from_mse(0.0), 100.0);
        assert!(psnr_from_mse(255.0 * 255.0).abs() < 1e-12);
        assert!((psnr_from_mse(65.025) - 30.0).abs() < 1e-9);
        assert!((bpp(1000, 512, 768).unwrap() - 0.020345).abs() < 1e-6);
        assert_eq!(bpp(0, 4, 4).unwrap(), 0.0);
        assert!(bpp(10, 0, 4).is_err());
    }

    #[test]
    fn psnr_properties() {
        let a = [0.0, 10.0, 200.0];
        let b = [1.0, 12.0, 190.0];
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        assert!(psnr(&a, &b[..2]).is_err());
        assert!(psnr_from_mse(1.0) > psnr_from_mse(2.0));
        assert_eq!(psnr_u8(&[0, 255], &[0, 255]).unwrap(), 100.0);
    }
}
