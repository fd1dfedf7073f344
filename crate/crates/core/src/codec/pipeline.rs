use super::data::{crop_to, pad_replicate};
use super::model::{Model, IMAGE_CHANNELS};
use super::weights::format_model_id;
use crate::entropy::{
    channel_ranges, range_decode, range_encode, tables_for_ranges, Bitstream, Header, ModelId, SymbolTable,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{IntTensor, Tensor};

/// Result of compressing one image.
#[derive(Clone, Debug)]
pub struct Compressed {
    pub bitstream: Bitstream,
    /// Serialized file contents.
    pub bytes: Vec<u8>,
    pub y_hat: IntTensor,
}

fn image_dims(x: &Tensor<impl Scalar>) -> Result<(u16, u16)> {
    let [n, c, h, w] = x.shape().0;
    if n != 1 || c != IMAGE_CHANNELS {
        return Err(Error::shape(format!("expected a 1x3xHxW image, got {:?}", x.shape())));
    }
    let h = u16::try_from(h).ok().filter(|&v| v > 0);
    let w = u16::try_from(w).ok().filter(|&v| v > 0);
    match (h, w) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err(Error::invalid(format!(
            "image size {:?} must be between 1 and 65535 per side",
            x.shape()
        ))),
    }
}

fn position_tables<'t>(tables: &'t [SymbolTable], shape: [usize; 4]) -> Vec<&'t SymbolTable> {
    let [n, c, h, w] = shape;
    let mut out = Vec::with_capacity(n * c * h * w);
    for _ in 0..n {
        for t in tables.iter().take(c) {
            out.extend(std::iter::repeat(t).take(h * w));
        }
    }
    out
}

/// Replicate-pads, encodes, rounds and range-codes `x` (`1×3×H×W`, `[0, 1]`).
pub fn compress<S: Scalar>(model: &Model<S>, id: ModelId, x: &Tensor<S>) -> Result<Compressed> {
    let (height, width) = image_dims(x)?;
    let padded = pad_replicate(x, model.config.divisor());
    let y_hat = model.encode_latent(&padded)?;
    let ranges = channel_ranges(&y_hat);
    let tables = tables_for_ranges(&model.prior.values(&model.store), &ranges)?;
    let payload = range_encode(&y_hat.data, &position_tables(&tables, y_hat.shape.0))?;
    let bitstream = Bitstream {
        header: Header {
            model_id: id,
            height,
            width,
            ranges,
        },
        payload,
    };
    let bytes = bitstream.to_bytes()?;
    Ok(Compressed { bitstream, bytes, y_hat })
}

/// Latent symbols stored in a bitstream produced by `model`.
pub fn decode_symbols<S: Scalar>(model: &Model<S>, id: ModelId, bs: &Bitstream) -> Result<IntTensor> {
    let h = &bs.header;
    if h.model_id != id {
        return Err(Error::ModelMismatch {
            expected: format_model_id(&id),
            found: format_model_id(&h.model_id),
        });
    }
    if h.channels() != model.config.m {
        return Err(Error::Decode(format!(
            "bitstream has {} latent channels, model has {}",
            h.channels(),
            model.config.m
        )));
    }
    let d = model.config.divisor();
    let shape = [
        1,
        model.config.m,
        usize::from(h.height).div_ceil(d),
        usize::from(h.width).div_ceil(d),
    ];
    let tables = tables_for_ranges(&model.prior.values(&model.store), &h.ranges)?;
    let positions = position_tables(&tables, shape);
    let symbols = range_decode(&bs.payload, &positions, positions.len())?;
    IntTensor::new(shape, symbols)
}

fn finish<S: Scalar>(x_hat: &Tensor<S>, height: usize, width: usize) -> Result<Tensor<S>> {
    let cropped = crop_to(x_hat, height, width)?;
    Ok(cropped.map(|v| v.max(S::zero()).min(S::one())))
}

/// Reconstruction in `[0, 1]` at the original size.
pub fn decompress<S: Scalar>(model: &Model<S>, id: ModelId, bytes: &[u8]) -> Result<Tensor<S>> {
    let bs = Bitstream::from_bytes(bytes)?;
    let y_hat = decode_symbols(model, id, &bs)?;
    let x_hat = model.decode_latent(&y_hat)?;
    finish(&x_hat, bs.header.height.into(), bs.header.width.into())
}

/// The same reconstruction computed without the entropy coder.
pub fn reconstruct<S: Scalar>(model: &Model<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    let [_, _, h, w] = x.shape().0;
    let y_hat = model.encode_latent(&pad_replicate(x, model.config.divisor()))?;
    finish(&model.decode_latent(&y_hat)?, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::config::ModelConfig;
    use crate::codec::data::Dataset;
    use crate::norm::Variant;

    fn model() -> Model<f64> {
        Model::new(ModelConfig {
            stages: 2,
            n: 4,
            m: 6,
            kernel: 5,
            variant: Variant::EasnC,
            seed: 9,
        })
        .unwrap()
    }

    fn scaled_image(h: usize, w: usize) -> Tensor<f64> {
        let img = Dataset::<f64>::synthetic(1, h.max(w), 4).unwrap().images.remove(0);
        let img = crop_to(&img, h, w).unwrap();
        // Larger values give latents spread over several symbols.
        img.map(|v| v * 4.0)
    }

    #[test]
    fn round_trip_matches_in_memory_pipeline() {
        let m = model();
        let id = [7; 8];
        for (h, w) in [(16, 16), (13, 9), (1, 5)] {
            let x = scaled_image(h, w);
            let c = compress(&m, id, &x).unwrap();
            assert_eq!((c.bitstream.header.height, c.bitstream.header.width), (h as u16, w as u16));
            let out = decompress(&m, id, &c.bytes).unwrap();
            assert_eq!(out.shape().0, [1, 3, h, w]);
            assert_eq!(out, reconstruct(&m, &x).unwrap());
            let bs = Bitstream::from_bytes(&c.bytes).unwrap();
            assert_eq!(decode_symbols(&m, id, &bs).unwrap(), c.y_hat);
        }
    }

    #[test]
    fn wrong_model_refused() {
        let m = model();
        let c = compress(&m, [1; 8], &scaled_image(8, 8)).unwrap();
        let err = decompress(&m, [2; 8], &c.bytes).unwrap_err();
        assert!(matches!(err, Error::ModelMismatch { .. }));
    }

    #[test]
    fn truncated_file_is_decode_error() {
        let m = model();
        let c = compress(&m, [1; 8], &scaled_image(8, 8)).unwrap();
        let err = decompress(&m, [1; 8], &c.bytes[..c.bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Decode(_)));
    }
}
