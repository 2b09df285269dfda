//! Property tests over the serialization boundaries: LIBSVM text, vertical
//! splits, and the wire codec.

use std::io::Cursor;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use vadmm::dataset::{parse_libsvm, serialize_libsvm, vertical_split, LabeledDataset, PartitionSpec};
use vadmm::transport::{decode, encode, Message};

fn finite_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        Just(1.0),
        Just(-1.0),
        Just(1e-12),
        Just(-2.5e-7),
    ]
    .prop_filter("nonzero", |v| *v != 0.0)
}

prop_compose! {
    fn dataset_strategy()(n in 1usize..12, d in 1usize..10)(
        n in Just(n),
        d in Just(d),
        values in proptest::collection::vec(proptest::option::weighted(0.4, finite_value()), n * d),
        labels in proptest::collection::vec(prop_oneof![Just(-1.0), Just(1.0)], n),
    ) -> LabeledDataset {
        let features = DMatrix::from_fn(n, d, |i, j| values[i * d + j].unwrap_or(0.0));
        LabeledDataset::new(features, DVector::from_vec(labels))
    }
}

proptest! {
    #[test]
    fn libsvm_serialize_parse_round_trip(ds in dataset_strategy()) {
        let mut buf = Vec::new();
        serialize_libsvm(&ds, &mut buf).unwrap();
        let back = parse_libsvm(Cursor::new(buf), Some(ds.n_features())).unwrap();
        prop_assert_eq!(back.n_samples(), ds.n_samples());
        prop_assert_eq!(back.n_features(), ds.n_features());
        for i in 0..ds.n_samples() {
            prop_assert_eq!(back.labels()[i].to_bits(), ds.labels()[i].to_bits());
            for j in 0..ds.n_features() {
                prop_assert_eq!(back.features()[(i, j)].to_bits(), ds.features()[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn split_then_concat_is_the_identity(ds in dataset_strategy(), cuts in proptest::collection::vec(1usize..4, 0..3)) {
        // Build a partition of the dataset's width from the raw cut sizes.
        let d = ds.n_features();
        let mut widths = Vec::new();
        let mut used = 0;
        for c in cuts {
            if used + c < d {
                widths.push(c);
                used += c;
            }
        }
        widths.push(d - used);
        let spec = PartitionSpec::new(widths).unwrap();
        let shards = vertical_split(&ds, &spec).unwrap();

        let mut rebuilt = DMatrix::<f64>::zeros(ds.n_samples(), d);
        let mut offset = 0;
        for shard in &shards {
            rebuilt.columns_mut(offset, shard.width()).copy_from(shard.block());
            offset += shard.width();
        }
        prop_assert_eq!(offset, d);
        for i in 0..ds.n_samples() {
            for j in 0..d {
                prop_assert_eq!(rebuilt[(i, j)].to_bits(), ds.features()[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn wire_codec_round_trips_arbitrary_bit_patterns(
        iteration in any::<u32>(),
        party in 1u16..200,
        bits in proptest::collection::vec(any::<u64>(), 0..40),
    ) {
        let share: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).collect();
        let msg = Message::PushShare { iteration, party_id: party, share: share.clone() };
        let frame = encode(&msg);
        let (back, used) = decode(&frame).unwrap().unwrap();
        prop_assert_eq!(used, frame.len());
        match back {
            Message::PushShare { iteration: it, party_id, share: s } => {
                prop_assert_eq!(it, iteration);
                prop_assert_eq!(party_id, party);
                prop_assert_eq!(s.len(), share.len());
                for (a, b) in s.iter().zip(&share) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            other => prop_assert!(false, "wrong kind {:?}", other),
        }
    }

    #[test]
    fn wire_broadcast_round_trips(
        iteration in any::<u32>(),
        pairs in proptest::collection::vec((any::<u64>(), any::<u64>()), 0..30),
    ) {
        let aggregate: Vec<f64> = pairs.iter().map(|(a, _)| f64::from_bits(*a)).collect();
        let dual: Vec<f64> = pairs.iter().map(|(_, b)| f64::from_bits(*b)).collect();
        let frame = encode(&Message::Broadcast { iteration, aggregate: aggregate.clone(), dual: dual.clone() });
        let (back, _) = decode(&frame).unwrap().unwrap();
        match back {
            Message::Broadcast { aggregate: a, dual: d, .. } => {
                for (x, y) in a.iter().zip(&aggregate) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
                for (x, y) in d.iter().zip(&dual) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            other => prop_assert!(false, "wrong kind {:?}", other),
        }
    }

    #[test]
    fn decoder_never_panics_on_junk(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn decoder_never_panics_on_near_valid_frames(
        kind in 0u8..8,
        len in 0u32..64,
        tail in proptest::collection::vec(any::<u8>(), 0..64),
    ) {
        let mut frame = vec![0x56, 0x41, 1, kind];
        frame.extend_from_slice(&7u32.to_le_bytes());
        frame.extend_from_slice(&3u16.to_le_bytes());
        frame.extend_from_slice(&len.to_le_bytes());
        frame.extend_from_slice(&tail);
        let _ = decode(&frame);
    }
}
