mod common;

use common::*;
use fedgcn_core::federation::{run_pretraining, PretrainOptions, Topology};
use fedgcn_core::graph::partition_nodes;
use fedgcn_core::secure::{
    estimate_ciphertext_bytes, mask_encrypt, pack_bools, secure_sum, unpack_bools, FixedPointCodec,
    MaskedChannel, PairwiseKeys, PlainChannel, SizeModel,
};
use fedgcn_core::wire::{decode_records, encode_records, Record};
use proptest::prelude::*;
use rand::Rng;

const KB: f64 = 1e3;
const MB: f64 = 1e6;

#[test]
fn size_model_against_published_table() {
    // (elements, BGV packed bools, CKKS, BGV), bytes as printed.
    let rows: [(u64, f64, f64, f64); 4] = [
        (1_000, 398.0 * KB, 266.0 * KB, 398.0 * KB),
        (10_000, 398.0 * KB, 798.0 * KB, 1.0 * MB),
        (100_000, 398.0 * KB, 7.0 * MB, 12.0 * MB),
        (1_000_000, 2.0 * MB, 70.0 * MB, 119.0 * MB),
    ];
    for (n, packed, ckks, bgv) in rows {
        let model = [
            estimate_ciphertext_bytes(n, &SizeModel::BGV, true),
            estimate_ciphertext_bytes(n, &SizeModel::CKKS, false),
            estimate_ciphertext_bytes(n, &SizeModel::BGV, false),
        ];
        for (m, printed) in model.iter().zip([packed, ckks, bgv]) {
            let rel = (*m as f64 - printed).abs() / printed;
            assert!(rel <= 0.5, "n={n}: model {m} vs table {printed}");
            if n == 1_000 {
                assert_eq!(*m as f64, printed);
            }
        }
    }
    // Packed booleans cost about twice the plaintext: 1M bools, 1 MB.
    let packed = estimate_ciphertext_bytes(1_000_000, &SizeModel::BGV, true) as f64;
    assert!((1.0..=3.0).contains(&(packed / MB)));
    assert_eq!(pack_bools(&vec![true; 1_000_000]).len(), 15_625);
}

#[test]
fn masked_pretraining_equals_plaintext_pipeline() {
    for seed in 0..5 {
        let g = random_graph(seed, 30, 4, 3, 0.15, true);
        let part = partition_nodes(&g, 4, 0.5, seed).unwrap();
        let topo = Topology::new(&g);
        let plain = run_pretraining(
            &topo,
            &part,
            2,
            2,
            &PlainChannel,
            PretrainOptions::default(),
        )
        .unwrap();
        let masked = run_pretraining(
            &topo,
            &part,
            2,
            2,
            &MaskedChannel::new(seed, false),
            PretrainOptions::default(),
        )
        .unwrap();
        for (a, b) in plain.inboxes.iter().zip(&masked.inboxes) {
            assert_eq!(a.records, b.records);
        }
    }
}

#[test]
fn million_bit_round_trip() {
    let mut r = rng(42);
    let bits: Vec<bool> = (0..1_000_000).map(|_| r.random()).collect();
    let words = pack_bools(&bits);
    assert_eq!(words.len(), 15_625);
    assert_eq!(unpack_bools(&words, bits.len()).unwrap(), bits);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn codec_sums_within_quantization(values in prop::collection::vec(-1.0e4f64..1.0e4, 1..8), bits in 8u32..40) {
        let codec = FixedPointCodec::new(bits).unwrap();
        let mut ring = 0u64;
        for &v in &values {
            ring = ring.wrapping_add(codec.encode(v).unwrap());
        }
        let exact: f64 = values.iter().sum();
        let tol = values.len() as f64 * 2f64.powi(-(bits as i32));
        prop_assert!((codec.decode(ring) - exact).abs() <= tol);
    }

    #[test]
    fn grid_values_round_trip(k in -1_000_000i64..1_000_000, bits in 0u32..30) {
        let codec = FixedPointCodec::new(bits).unwrap();
        let v = k as f64 / 2f64.powi(bits as i32);
        prop_assert_eq!(codec.decode(codec.encode(v).unwrap()), v);
    }

    #[test]
    fn masks_cancel_in_any_order(
        seed in any::<u64>(),
        k in 1usize..7,
        values in prop::collection::vec(any::<u64>(), 1..20),
        rotate in 0usize..7,
    ) {
        let keys = PairwiseKeys::establish(seed, 3, k);
        let all: Vec<usize> = (0..k).collect();
        let mut masked: Vec<_> = (0..k)
            .map(|c| {
                let v: Vec<u64> = values.iter().map(|x| x.wrapping_mul(c as u64 + 1)).collect();
                mask_encrypt(&v, c, &all, &keys, 9).unwrap()
            })
            .collect();
        masked.rotate_left(rotate % k);
        let factor = (k * (k + 1) / 2) as u64;
        let expected: Vec<u64> = values.iter().map(|x| x.wrapping_mul(factor)).collect();
        prop_assert_eq!(secure_sum(&masked).unwrap(), expected);
    }

    #[test]
    fn packing_is_a_bijection(bits in prop::collection::vec(any::<bool>(), 0..3000)) {
        let words = pack_bools(&bits);
        prop_assert_eq!(words.len(), bits.len().div_ceil(64));
        prop_assert_eq!(unpack_bools(&words, bits.len()).unwrap(), bits);
    }

    #[test]
    fn size_model_monotone_and_packing_helps(n in 0u64..50_000_000, step in 0u64..100_000) {
        for model in [SizeModel::BGV, SizeModel::CKKS] {
            let a = estimate_ciphertext_bytes(n, &model, false);
            prop_assert!(a <= estimate_ciphertext_bytes(n + step, &model, false));
            prop_assert!(estimate_ciphertext_bytes(n, &model, true) <= a);
        }
    }

    #[test]
    fn wire_records_round_trip(records in prop::collection::vec(
        (0u32..10_000, 0u32..3, prop::collection::vec(-1e9f64..1e9, 0..12)), 0..10)
    ) {
        let recs: Vec<Record> = records
            .into_iter()
            .map(|(id, hop, p)| Record::new(id as usize, hop, p).unwrap())
            .collect();
        let bytes = encode_records(&recs);
        prop_assert_eq!(decode_records(&bytes).unwrap(), recs.clone());
        if !bytes.is_empty() {
            prop_assert!(decode_records(&bytes[..bytes.len() - 1]).is_err());
        }
    }
}
