use std::path::{Path, PathBuf};

use super::hf::HfMap;
use super::metrics::RdPoint;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scalar::round_half_away;

/// Grey level used for every pixel of a constant map.
pub const FLAT_GREY: u8 = 128;

/// 8-bit pixels of `map` after per-map min-max normalization.
pub fn normalize_to_u8(map: &HfMap) -> Vec<u8> {
    let (lo, hi) = map.min_max();
    if !(hi > lo) {
        return vec![FLAT_GREY; map.data.len()];
    }
    map.data
        .iter()
        .map(|&v| round_half_away((v - lo) / (hi - lo) * 255.0) as u8)
        .collect()
}

/// Binary (P5) PGM bytes of `map`.
pub fn pgm_bytes(map: &HfMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend(normalize_to_u8(map));
    out
}

/// Sidecar text recording how the map was normalized.
pub fn meta_text(map: &HfMap) -> String {
    let (lo, hi) = map.min_max();
    let mapping = if hi > lo {
        "linear min->0 max->255".to_string()
    } else {
        format!("constant map -> {FLAT_GREY}")
    };
    format!(
        "source={}\nwidth={}\nheight={}\nmin={lo:e}\nmax={hi:e}\nmapping={mapping}\n",
        map.source, map.width, map.height
    )
}

pub fn meta_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes `path` and `path.meta`.
pub fn write_pgm(path: &Path, map: &HfMap) -> Result<()> {
    if map.data.len() != map.width * map.height || map.data.is_empty() {
        return Err(Error::shape(format!(
            "map has {} values for {}x{}",
            map.data.len(),
            map.height,
            map.width
        )));
    }
    write_atomic(path, &pgm_bytes(map))?;
    write_atomic(&meta_path(path), meta_text(map).as_bytes())
}

pub const RD_HEADER: [&str; 4] = ["model", "lambda", "bpp", "psnr_db"];

pub fn rd_csv_bytes(points: &[RdPoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RD_HEADER)?;
    for p in points {
        w.write_record([p.model.clone(), p.lambda.to_string(), p.bpp.to_string(), p.psnr_db.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_rd_csv(path: &Path, points: &[RdPoint]) -> Result<()> {
    write_atomic(path, &rd_csv_bytes(points)?)
}
