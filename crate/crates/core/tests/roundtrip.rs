//! Property tests for the archive and the coder on generated models.

mod common;

use proptest::prelude::*;

use riq::archive::{compress, CompressedArchive};
use riq::quant::{quantize_model, QuantConfig};
use riq::rans::{build_table, decode, encode, precision_for};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn archives_roundtrip(seed in 0u64..10_000) {
        let (m, k) = common::random_archive_model(seed);
        let q = quantize_model(&m, &QuantConfig::new(k, 0.01)).unwrap();
        let bytes = compress(&q).unwrap().to_bytes().unwrap();
        let back = CompressedArchive::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_quantized().unwrap(), q.clone());
        prop_assert_eq!(back.to_model().unwrap(), q.to_model().unwrap());
    }

    #[test]
    fn truncation_never_decodes(seed in 0u64..10_000, cut in 1usize..64) {
        let (m, k) = common::random_archive_model(seed);
        let q = quantize_model(&m, &QuantConfig::new(k, 0.01)).unwrap();
        let bytes = compress(&q).unwrap().to_bytes().unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(CompressedArchive::from_bytes(&bytes[..keep]).is_err());
    }

    #[test]
    fn streams_roundtrip(symbols in prop::collection::vec(-1000i64..1000, 1..3000)) {
        let distinct = riq::quant::histogram(&symbols).len();
        let table = build_table(&symbols, precision_for(distinct)).unwrap();
        let bytes = encode(&symbols, &table).unwrap();
        prop_assert_eq!(decode(&bytes, &table, symbols.len()).unwrap(), symbols);
    }
}
