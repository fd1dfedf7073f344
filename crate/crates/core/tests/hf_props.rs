use easn::analysis::{high_freq_map, normalize_to_u8, pgm_bytes, FLAT_GREY};
use easn::Tensor;
use proptest::prelude::*;

fn map_of(x: &Tensor<f64>) -> Vec<f64> {
    high_freq_map(x, "t").unwrap().data
}

#[test]
fn impulse_response() {
    let (h, w) = (7, 9);
    let mut data = vec![0.0; h * w];
    data[3 * w + 4] = 1.0;
    let m = high_freq_map(&Tensor::from_vec([1, 1, h, w], data).unwrap(), "impulse").unwrap();
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y.abs_diff(3), x.abs_diff(4));
            let expected = match (dy, dx) {
                (0, 0) => 8.0 / 9.0,
                _ if dy <= 1 && dx <= 1 => -1.0 / 9.0,
                _ => 0.0,
            };
            assert!((m.at(y, x) - expected).abs() <= 1e-12, "({y},{x}) = {}", m.at(y, x));
        }
    }
}

#[test]
fn constant_map_exports_mid_grey() {
    let m = high_freq_map(&Tensor::full([1, 3, 5, 6], 0.7), "flat").unwrap();
    assert!(m.data.iter().all(|&v| v == 0.0));
    assert!(normalize_to_u8(&m).iter().all(|&p| p == FLAT_GREY));
    let pgm = pgm_bytes(&m);
    assert!(pgm.starts_with(b"P5\n6 5\n255\n"));
    assert_eq!(pgm.len(), 11 + 30);
}

proptest! {
    #[test]
    fn constants_vanish(c in -1e6f64..1e6, ch in 1usize..5, h in 1usize..9, w in 1usize..9) {
        let m = map_of(&Tensor::full([1, ch, h, w], c));
        prop_assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_in_scale(
        data in prop::collection::vec(-10.0f64..10.0, 2 * 6 * 5),
        a in -100.0f64..100.0,
    ) {
        let x = Tensor::from_vec([1, 2, 6, 5], data).unwrap();
        let base = map_of(&x);
        let scaled = map_of(&x.map(|v| a * v));
        for (s, b) in scaled.iter().zip(&base) {
            prop_assert!((s - a * b).abs() <= 1e-12 * (1.0 + (a * b).abs()), "{s} vs {}", a * b);
        }
    }

    #[test]
    fn additive(
        p in prop::collection::vec(-5.0f64..5.0, 4 * 4),
        q in prop::collection::vec(-5.0f64..5.0, 4 * 4),
    ) {
        let x = Tensor::from_vec([1, 1, 4, 4], p.clone()).unwrap();
        let y = Tensor::from_vec([1, 1, 4, 4], q.clone()).unwrap();
        let sum = Tensor::from_vec([1, 1, 4, 4], p.iter().zip(&q).map(|(a, b)| a + b).collect()).unwrap();
        let (mx, my, ms) = (map_of(&x), map_of(&y), map_of(&sum));
        for i in 0..16 {
            prop_assert!((ms[i] - mx[i] - my[i]).abs() <= 1e-12);
        }
    }
}
