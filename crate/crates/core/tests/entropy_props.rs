use easn::entropy::{
    ideal_bits, range_decode, range_encode, Bitstream, Header, PriorValues, SymbolTable, TOTAL_FREQUENCY,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A table over `min..=min+width` whose slot weights span up to `skew` decades.
fn random_table(rng: &mut ChaCha8Rng, channel: usize, skew: f64) -> SymbolTable {
    let min = rng.gen_range(-40..40);
    let width = rng.gen_range(0..60);
    let probs: Vec<f64> = (0..width + 2).map(|_| 10f64.powf(-rng.gen_range(0.0..skew))).collect();
    SymbolTable::from_probabilities(channel, min, min + width, &probs).unwrap()
}

/// Symbols drawn from the table's own distribution, with occasional escapes.
fn draw(rng: &mut ChaCha8Rng, t: &SymbolTable) -> i32 {
    let target = rng.gen_range(0..TOTAL_FREQUENCY);
    let slot = t.find_slot(target);
    if slot == t.escape_slot() {
        match rng.gen_range(0..4) {
            0 => i32::MIN,
            1 => i32::MAX,
            2 => t.symbol_max + rng.gen_range(1..1000),
            _ => t.symbol_min - rng.gen_range(1..1000),
        }
    } else {
        t.symbol(slot)
    }
}

fn check_round_trip(symbols: &[i32], tables: &[&SymbolTable]) -> Result<(), TestCaseError> {
    let bytes = range_encode(symbols, tables).unwrap();
    let decoded = range_decode(&bytes, tables, symbols.len()).unwrap();
    prop_assert_eq!(&decoded, symbols);
    let ideal = ideal_bits(symbols, tables);
    prop_assert!(
        (bytes.len() * 8) as f64 <= ideal + 64.0,
        "{} bits against ideal {ideal}",
        bytes.len() * 8
    );
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn range_coder_round_trip(seed in any::<u64>(), len in 0usize..400, skew in 0.0f64..9.0, n_tables in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tables: Vec<SymbolTable> = (0..n_tables).map(|c| random_table(&mut rng, c, skew)).collect();
        let per_symbol: Vec<&SymbolTable> = (0..len).map(|i| &tables[i % n_tables]).collect();
        let symbols: Vec<i32> = per_symbol.iter().map(|t| draw(&mut rng, t)).collect();
        check_round_trip(&symbols, &per_symbol)?;
    }

    #[test]
    fn tables_are_strictly_increasing(
        loc in -50.0f64..50.0,
        log_scale in -8.0f64..4.0,
        min in -60i32..60,
        width in 0i32..200,
    ) {
        let prior = PriorValues { loc: vec![loc], scale: vec![10f64.powf(log_scale)] };
        let t = SymbolTable::from_prior(&prior, 0, min, min + width).unwrap();
        let cdf = t.cdf();
        prop_assert_eq!(cdf[0], 0);
        prop_assert_eq!(*cdf.last().unwrap(), TOTAL_FREQUENCY);
        prop_assert!(cdf.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn extreme_skew_with_rare_symbols() {
    // One slot holds all but the minimum mass of every other slot.
    let slots = 9;
    let mut freqs = vec![1u32; slots];
    freqs[4] = TOTAL_FREQUENCY - (slots as u32 - 1);
    let t = SymbolTable::from_frequencies(0, -4, 3, &freqs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for rare_every in [0usize, 5000, 97, 7, 1] {
        let symbols: Vec<i32> = (0..20_000)
            .map(|i| {
                if rare_every > 0 && i % rare_every == 0 {
                    [-4, -3, 3, 100, i32::MIN][rng.gen_range(0..5)]
                } else {
                    0
                }
            })
            .collect();
        let tables = vec![&t; symbols.len()];
        check_round_trip(&symbols, &tables).unwrap();
    }
}

#[test]
fn thousand_mixed_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for case in 0..1000 {
        let skew = [0.5, 3.0, 9.0][case % 3];
        let tables: Vec<SymbolTable> = (0..3).map(|c| random_table(&mut rng, c, skew)).collect();
        let len = rng.gen_range(0..300);
        let per_symbol: Vec<&SymbolTable> = (0..len).map(|_| &tables[rng.gen_range(0..3)]).collect();
        let symbols: Vec<i32> = per_symbol.iter().map(|t| draw(&mut rng, t)).collect();
        check_round_trip(&symbols, &per_symbol).unwrap_or_else(|e| panic!("case {case}: {e}"));
    }
}

fn header() -> Header {
    Header {
        model_id: *b"abcdefgh",
        height: 33,
        width: 65,
        ranges: vec![(-2, 2), (-1, 5), (0, 0)],
    }
}

#[test]
fn header_fields_are_checked() {
    let bs = Bitstream {
        header: header(),
        payload: vec![9, 8, 7],
    };
    let bytes = bs.to_bytes().unwrap();
    assert_eq!(Bitstream::from_bytes(&bytes).unwrap(), bs);
    assert_eq!(bytes.len(), header().encoded_len() + 3);

    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xFF;
    let mut bad_version = bytes.clone();
    bad_version[4] = 2;
    let mut long_payload = bytes.clone();
    long_payload.push(0);
    for bad in [bad_magic, bad_version, long_payload, bytes[..bytes.len() - 1].to_vec()] {
        assert!(matches!(Bitstream::from_bytes(&bad), Err(easn::Error::Decode(_))));
    }
}

proptest! {
    #[test]
    fn parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..80)) {
        let _ = Bitstream::from_bytes(&bytes);
    }

    #[test]
    fn header_round_trip(
        id in any::<[u8; 8]>(),
        h in 1u16..,
        w in 1u16..,
        ranges in prop::collection::vec((-300i16..300, 0i16..300), 1..6),
        payload in prop::collection::vec(any::<u8>(), 0..40),
    ) {
        let bs = Bitstream {
            header: Header {
                model_id: id,
                height: h,
                width: w,
                ranges: ranges.into_iter().map(|(lo, span)| (lo, lo + span)).collect(),
            },
            payload,
        };
        prop_assert_eq!(Bitstream::from_bytes(&bs.to_bytes().unwrap()).unwrap(), bs);
    }
}
