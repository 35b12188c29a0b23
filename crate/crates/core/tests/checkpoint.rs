//! Checkpoint encoding invariants.

use lnmask::checkpoint::Checkpoint;
use lnmask::model::{init_decoder, DecoderKind};
use lnmask::rng::seeded;
use lnmask::samplers::{init_sampler, SamplerKind};
use lnmask::training::{Model, TrainConfig};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = SamplerKind> {
    prop::sample::select(SamplerKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_is_exact(kind in kind_strategy(), side in 2usize..7, d in 1usize..4, k in 1usize..5, seed in any::<u64>(), with_dec in any::<bool>(), conv in any::<bool>()) {
        let sampler = init_sampler(kind, side, d, k, seed).unwrap();
        let decoder = with_dec.then(|| {
            let dk = if conv { DecoderKind::ConvResnet } else { DecoderKind::Mlp };
            init_decoder(dk, side, 3, &mut seeded(seed, 5)).unwrap()
        });
        let ck = Checkpoint { sampler, decoder };
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn every_strict_prefix_is_rejected(cut in 0usize..2000) {
        let cfg = TrainConfig { latent_dim: 2, decoder_width: Some(2), ..TrainConfig::default() };
        let bytes = Model::init(&cfg, 3).unwrap().checkpoint().encode();
        let cut = cut % bytes.len();
        prop_assert!(Checkpoint::decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = Checkpoint::decode(&bytes);
        let mut framed = b"MSKO\x01\x00\x00\x00".to_vec();
        framed.extend_from_slice(&bytes);
        let _ = Checkpoint::decode(&framed);
    }
}

#[test]
fn save_and_load_through_the_filesystem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.msko");
    let ck = Model::init(&TrainConfig { latent_dim: 3, decoder_width: Some(4), ..TrainConfig::default() }, 4).unwrap().checkpoint();
    ck.save_atomic(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1, "no temporary files left behind");
}
