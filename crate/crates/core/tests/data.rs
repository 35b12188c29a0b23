//! IDX, PGM and Gaussian random field data sources.

use std::path::Path;

use lnmask::config::grf_pair;
use lnmask::data::{
    encode_idx_f64, encode_idx_images, encode_idx_labels, encode_pgm, gen_gaussian_random_field, lag1_autocorrelation,
    load_idx, parse_idx_f64, parse_idx_images, parse_idx_labels, parse_pgm, Dataset, Split,
};
use lnmask::rng::seeded;
use lnmask::Error;
use proptest::prelude::*;
use rand::Rng;

const FIXTURE_IMAGES: &[u8] = include_bytes!("fixtures/two-3x3-images-idx3-ubyte");
const FIXTURE_LABELS: &[u8] = include_bytes!("fixtures/two-labels-idx1-ubyte");

#[test]
fn handcrafted_idx_fixture_decodes_exactly() {
    let img = parse_idx_images(FIXTURE_IMAGES).unwrap();
    assert_eq!((img.count, img.rows, img.cols), (2, 3, 3));
    let raw = [0u8, 51, 102, 153, 204, 255, 1, 2, 3, 255, 254, 253, 0, 0, 0, 17, 34, 68];
    let want: Vec<f64> = raw.iter().map(|&b| f64::from(b) / 255.0).collect();
    assert_eq!(img.pixels, want);
    assert_eq!(img.pixels[1], 0.2);
    assert_eq!(img.pixels[5], 1.0);
    assert_eq!(parse_idx_labels(FIXTURE_LABELS).unwrap(), vec![7, 3]);
}

#[test]
fn fixture_loads_as_a_labelled_dataset() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let ds = load_idx(&dir.join("two-3x3-images-idx3-ubyte"), Some(&dir.join("two-labels-idx1-ubyte")), Split::Test).unwrap();
    assert_eq!((ds.len(), ds.side, ds.split), (2, 3, Split::Test));
    assert_eq!(ds.labels.as_deref(), Some(&[7u8, 3][..]));
    assert_eq!(ds.image(1)[0], 1.0);
}

#[test]
fn every_wrong_magic_is_rejected() {
    let mut rng = seeded(1, 0);
    let mut rejected = 0;
    for _ in 0..100 {
        let mut bytes = FIXTURE_IMAGES.to_vec();
        let byte = rng.random_range(0..4);
        let bit = rng.random_range(0..8);
        bytes[byte] ^= 1 << bit;
        match parse_idx_images(&bytes) {
            Err(Error::Format(msg)) if msg.contains("magic") => rejected += 1,
            other => panic!("mutated magic accepted: {other:?}"),
        }
    }
    assert_eq!(rejected, 100);
    assert!(matches!(parse_idx_labels(FIXTURE_IMAGES), Err(Error::Format(_))));
    assert!(matches!(parse_idx_images(FIXTURE_LABELS), Err(Error::Format(_))));
}

#[test]
fn truncation_and_trailing_bytes_are_distinguished() {
    for cut in [0, 3, 10, 15, 33] {
        match parse_idx_images(&FIXTURE_IMAGES[..cut]) {
            Err(Error::Io(e)) => assert_eq!(e.kind(), std::io::ErrorKind::UnexpectedEof),
            other => panic!("cut {cut}: {other:?}"),
        }
    }
    let mut long = FIXTURE_IMAGES.to_vec();
    long.push(0);
    assert!(matches!(parse_idx_images(&long), Err(Error::Format(_))));
}

#[test]
fn non_square_images_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rect");
    std::fs::write(&p, encode_idx_images(1, 2, 3, &[0.0; 6])).unwrap();
    assert!(matches!(load_idx(&p, None, Split::Train), Err(Error::Dimension { .. })));
    let l = dir.path().join("labels");
    std::fs::write(&l, encode_idx_labels(&[1, 2])).unwrap();
    let sq = dir.path().join("sq");
    std::fs::write(&sq, encode_idx_images(1, 2, 2, &[0.0; 4])).unwrap();
    assert!(matches!(load_idx(&sq, Some(&l), Split::Train), Err(Error::Dimension { .. })));
}

#[test]
fn f64_fields_reject_non_finite_values() {
    let mut v = vec![0.5; 4];
    assert_eq!(parse_idx_f64(&encode_idx_f64(1, 2, 2, &v)).unwrap().pixels, v);
    v[2] = f64::NAN;
    assert!(matches!(parse_idx_f64(&encode_idx_f64(1, 2, 2, &v)), Err(Error::Format(_))));
}

#[test]
fn bundled_mnist_subset_loads() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let ds = load_idx(&dir.join("t10k-images-idx3-ubyte"), Some(&dir.join("t10k-labels-idx1-ubyte")), Split::Test).unwrap();
    assert_eq!((ds.len(), ds.side), (2000, 28));
    assert!(ds.images().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(ds.labels.unwrap().iter().all(|&l| l < 10));
}

/// Lag-1 correlation computed directly from its definition.
fn lag1_oracle(ds: &Dataset) -> f64 {
    let n = ds.side;
    let all = ds.images();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
    let mut pairs = Vec::new();
    for i in 0..ds.len() {
        let img = ds.image(i);
        for r in 0..n {
            for c in 0..n - 1 {
                pairs.push((img[r * n + c] - mean) * (img[r * n + c + 1] - mean));
                pairs.push((img[c * n + r] - mean) * (img[(c + 1) * n + r] - mean));
            }
        }
    }
    pairs.iter().sum::<f64>() / pairs.len() as f64 / var
}

#[test]
fn white_noise_fields_are_uncorrelated() {
    let ds = gen_gaussian_random_field(200, 16, 0.0, 3, Split::Train).unwrap();
    let r = lag1_oracle(&ds);
    assert!(r.abs() < 0.05, "{r}");
    assert!((lag1_autocorrelation(&ds) - r).abs() < 1e-12);
}

#[test]
fn steep_spectrum_fields_are_smooth() {
    let ds = gen_gaussian_random_field(200, 16, 3.0, 4, Split::Train).unwrap();
    let r = lag1_oracle(&ds);
    assert!(r > 0.8, "{r}");
    let mean = ds.images().iter().sum::<f64>() / ds.images().len() as f64;
    let var = ds.images().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ds.images().len() as f64;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12, "standardized: {mean} {var}");
}

#[test]
fn grf_is_reproducible_and_rejects_bad_sizes() {
    let a = grf_pair(8, 10, 5, 2.0, 7).unwrap();
    let b = grf_pair(8, 10, 5, 2.0, 7).unwrap();
    assert_eq!(a.train.images(), b.train.images());
    assert_eq!(a.test.images(), b.test.images());
    assert_ne!(a.train.images(), grf_pair(8, 10, 5, 2.0, 8).unwrap().train.images());
    assert!(matches!(gen_gaussian_random_field(3, 12, 3.0, 0, Split::Train), Err(Error::Config(_))));
    assert!(matches!(gen_gaussian_random_field(0, 8, 3.0, 0, Split::Train), Err(Error::Config(_))));
}

#[test]
fn pgm_header_comments_are_skipped() {
    let bytes = b"P5\n# written by hand\n2 1\n# max\n255\n\x00\xff";
    let img = parse_pgm(bytes).unwrap();
    assert_eq!((img.width, img.height, img.values.clone()), (2, 1, vec![0.0, 1.0]));
    assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
    assert!(parse_pgm(b"P5\n1 1\n255\n").is_err());
    assert!(parse_pgm(b"P5\n1 1\n100\n\xc8").is_err());
}

proptest! {
    #[test]
    fn pgm_round_trip_is_within_one_level(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
        let mut rng = seeded(seed, 0);
        let values: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..=1.0)).collect();
        let img = parse_pgm(&encode_pgm(&values, w, h).unwrap()).unwrap();
        prop_assert_eq!((img.width, img.height), (w, h));
        for (a, b) in values.iter().zip(&img.values) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn idx_round_trip(count in 1usize..4, side in 1usize..6, seed in any::<u64>()) {
        let mut rng = seeded(seed, 0);
        let levels: Vec<u8> = (0..count * side * side).map(|_| rng.random()).collect();
        let values: Vec<f64> = levels.iter().map(|&b| f64::from(b) / 255.0).collect();
        let img = parse_idx_images(&encode_idx_images(count, side, side, &values)).unwrap();
        prop_assert_eq!(img.pixels, values);
        let f: Vec<f64> = (0..count * side * side).map(|_| rng.random_range(-1e6..1e6)).collect();
        prop_assert_eq!(parse_idx_f64(&encode_idx_f64(count, side, side, &f)).unwrap().pixels, f);
    }

    #[test]
    fn parsers_never_panic_on_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = parse_idx_images(&bytes);
        let _ = parse_idx_labels(&bytes);
        let _ = parse_idx_f64(&bytes);
        let _ = parse_pgm(&bytes);
    }
}
