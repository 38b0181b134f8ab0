use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segtriage_core::bundle::{
    decode_bundle, encode_bundle, read_bundle, validate_bytes, write_bundle, Bundle, BundleError, ClassSpec,
    LabelMap, ProbabilityStack,
};
use segtriage_core::synth::{bundle_files, generate_corpus, write_corpus, GeneratorConfig, Layout};

#[derive(Debug, Clone)]
struct Shape {
    t: usize,
    c: usize,
    h: usize,
    w: usize,
    seed: u64,
    label: bool,
    source: bool,
    id: String,
    meta: BTreeMap<String, String>,
}

fn shapes() -> impl Strategy<Value = Shape> {
    (
        1usize..4,
        2usize..6,
        1usize..9,
        1usize..9,
        any::<u64>(),
        any::<bool>(),
        any::<bool>(),
        "[a-zA-Z0-9_./-][a-zA-Z0-9_./ -]{0,23}",
        prop::collection::btree_map("[a-z]{1,6}", "\\PC{0,12}", 0..3),
    )
        .prop_map(|(t, c, h, w, seed, label, source, id, meta)| Shape {
            t,
            c,
            h,
            w,
            seed,
            label,
            source,
            id,
            meta,
        })
}

fn build(shape: &Shape) -> Bundle {
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    let Shape { t, c, h, w, .. } = *shape;
    let n = h * w;
    let mut values = vec![0.0f32; t * c * n];
    for pass in 0..t {
        for i in 0..n {
            let raw: Vec<f32> = (0..c).map(|_| rng.random::<f32>()).collect();
            let sum: f32 = raw.iter().sum::<f32>().max(f32::MIN_POSITIVE);
            for (k, v) in raw.into_iter().enumerate() {
                values[(pass * c + k) * n + i] = if sum > 0.0 { v / sum } else { 1.0 / c as f32 };
            }
        }
    }
    Bundle {
        image_id: shape.id.clone(),
        class_spec: ClassSpec::generic(c).unwrap(),
        probabilities: ProbabilityStack::new(t, c, h, w, values).unwrap(),
        label: shape
            .label
            .then(|| LabelMap::new(h, w, (0..n).map(|_| rng.random_range(0..c as u8)).collect()).unwrap()),
        source_image: shape.source.then(|| (0..3 * n).map(|_| rng.random()).collect()),
        meta: shape.meta.clone(),
    }
}

fn payload_offset(bytes: &[u8]) -> usize {
    10 + u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn random_bundles_round_trip_byte_identical(shape in shapes()) {
        let bundle = build(&shape);
        let bytes = encode_bundle(&bundle).unwrap();
        let back = read_bundle(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &bundle);
        let mut again = Vec::new();
        write_bundle(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

#[test]
fn every_single_byte_payload_corruption_is_detected() {
    let shapes = [(1, 2, 1, 1), (2, 3, 3, 4), (5, 4, 4, 4)];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (i, &(t, c, h, w)) in shapes.iter().enumerate() {
        let bundle = build(&Shape {
            t,
            c,
            h,
            w,
            seed: i as u64,
            label: true,
            source: true,
            id: format!("corrupt-{i}"),
            meta: BTreeMap::new(),
        });
        let bytes = encode_bundle(&bundle).unwrap();
        let start = payload_offset(&bytes);
        for pos in start..bytes.len() {
            let mut bad = bytes.clone();
            bad[pos] ^= rng.random_range(1..=255u8);
            assert!(
                matches!(decode_bundle(&bad), Err(BundleError::ChecksumMismatch { .. })),
                "byte {pos} of bundle {i} went undetected"
            );
            assert!(!validate_bytes(&bad).is_valid());
        }
    }
}

#[test]
fn synthetic_corpus_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let config = GeneratorConfig {
        num_images: 20,
        height: 16,
        width: 16,
        layout: Layout::Blobs,
        seed: 17,
        ..GeneratorConfig::default()
    };
    let images = generate_corpus(&config).unwrap();
    let manifest = write_corpus(dir.path(), &config, &images).unwrap();
    assert_eq!(manifest.images.len(), 20);
    let files = bundle_files(dir.path()).unwrap();
    assert_eq!(files.len(), 20);
    for (path, generated) in files.iter().zip(&images) {
        let bytes = std::fs::read(path).unwrap();
        assert!(validate_bytes(&bytes).is_valid());
        let bundle = decode_bundle(&bytes).unwrap();
        assert_eq!(bundle, generated.bundle);
        assert_eq!(encode_bundle(&bundle).unwrap(), bytes);
    }
}
