use easn::codec::{compress, decompress, reconstruct, train, Dataset};
use easn::entropy::{channel_ranges, ideal_bits, tables_for_ranges, SymbolTable};
use easn::{Model, ModelConfig, TrainConfig, Variant};

fn config(variant: Variant) -> ModelConfig {
    ModelConfig {
        stages: 2,
        n: 4,
        m: 6,
        kernel: 3,
        variant,
        seed: 3,
    }
}

fn trained(variant: Variant) -> Model<f64> {
    let mut model = Model::new(config(variant)).unwrap();
    let data = Dataset::synthetic(12, 24, 1).unwrap();
    let tc = TrainConfig {
        steps: 40,
        batch: 4,
        crop: 16,
        seed: 2,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &tc).unwrap();
    model
}

#[test]
fn file_size_tracks_the_rate_estimate() {
    for variant in [Variant::Gdn, Variant::EasnC] {
        let model = trained(variant);
        for (i, img) in Dataset::<f64>::synthetic(4, 48, 11).unwrap().images.iter().enumerate() {
            let c = compress(&model, [4; 8], img).unwrap();
            let pixels = (48 * 48) as f64;
            let file_bpp = (c.bytes.len() * 8) as f64 / pixels;
            let header_bpp = (c.bitstream.header.encoded_len() * 8) as f64 / pixels;
            let estimate = model.estimated_bits(&c.y_hat).unwrap() / pixels;
            assert!(
                (file_bpp - estimate).abs() <= 0.05 * estimate + header_bpp,
                "{variant:?} image {i}: file {file_bpp} estimate {estimate} header {header_bpp}"
            );

            // The payload stays within the coder's bound over its own integer tables.
            let tables = tables_for_ranges(&model.prior.values(&model.store), &channel_ranges(&c.y_hat)).unwrap();
            let plane = c.y_hat.shape.0[2] * c.y_hat.shape.0[3];
            let per_symbol: Vec<&SymbolTable> = tables.iter().flat_map(|t| std::iter::repeat(t).take(plane)).collect();
            let ideal = ideal_bits(&c.y_hat.data, &per_symbol);
            assert!((c.bitstream.payload.len() * 8) as f64 <= ideal + 64.0);
        }
    }
}

#[test]
fn compression_is_deterministic_and_lossless_on_odd_sizes() {
    let model = trained(Variant::EasnC);
    let again = trained(Variant::EasnC);
    let big = Dataset::<f64>::synthetic(1, 37, 5).unwrap().images.remove(0);
    let img = easn::codec::crop_to(&big, 29, 37).unwrap();
    let a = compress(&model, [1; 8], &img).unwrap();
    let b = compress(&again, [1; 8], &img).unwrap();
    assert_eq!(a.bytes, b.bytes);
    let out = decompress(&model, [1; 8], &a.bytes).unwrap();
    assert_eq!(out.shape().0, [1, 3, 29, 37]);
    assert_eq!(out, reconstruct(&model, &img).unwrap());
    assert!(matches!(decompress(&model, [2; 8], &a.bytes), Err(easn::Error::ModelMismatch { .. })));
}

#[test]
fn single_precision_model_round_trips() {
    let model = easn::Model32::new(config(Variant::EasnDeep)).unwrap();
    let img = Dataset::<f32>::synthetic(1, 19, 8).unwrap().images.remove(0);
    let c = compress(&model, [3; 8], &img).unwrap();
    let out = decompress(&model, [3; 8], &c.bytes).unwrap();
    assert_eq!(out.shape().0, [1, 3, 19, 19]);
    assert_eq!(out, reconstruct(&model, &img).unwrap());
}
