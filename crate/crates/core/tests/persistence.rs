use proptest::prelude::*;
use rand::Rng as _;
use tumorscope::cnn::{Cnn, ConvSpec, ModelSpec};
use tumorscope::engine::{BatchNormStats, Tensor};
use tumorscope::persistence::{decode, encode, load, save, Checkpoint, MAGIC};
use tumorscope::rng::seeded;
use tumorscope::Error;

fn checkpoint(seed: u64) -> Checkpoint {
    let mut rng = seeded(seed);
    let filters: [usize; 4] = std::array::from_fn(|_| rng.gen_range(1..6));
    let mut spec = ModelSpec::tiny(16, filters);
    spec.convs[1] = ConvSpec::same(filters[1], 5);
    spec.dropout = rng.gen_range(0.0..0.6);
    let mut model = Cnn::<f32>::new(spec, seed).unwrap();
    let c = filters[3];
    let stats = BatchNormStats {
        mean: Tensor::new(vec![c], (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        var: Tensor::new(vec![c], (0..c).map(|_| rng.gen_range(0.1..2.0)).collect()).unwrap(),
    };
    model.set_bn_stats(stats);
    model.set_epochs_trained(rng.gen_range(1..50));
    Checkpoint::new(model, seed, rng.gen_range(0.0..1.0))
}

#[test]
fn layout_starts_with_magic_and_version() {
    let bytes = encode(&checkpoint(0)).unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(bytes[4], 1);
    assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 16);
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.tsck"), dir.path().join("b.tsck"));
    let ck = checkpoint(3);
    save(&ck, &a).unwrap();
    let loaded = load(&a).unwrap();
    assert_eq!(loaded, ck);
    save(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn eval_logits_survive_round_trip() {
    let ck = checkpoint(5);
    let back = decode(&encode(&ck).unwrap()).unwrap();
    let mut rng = seeded(1);
    let x = Tensor::new(vec![3, 1, 16, 16], (0..768).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
    assert_eq!(ck.model.infer(&x, 8).unwrap(), back.model.infer(&x, 8).unwrap());
}

#[test]
fn every_truncation_is_an_integrity_error() {
    let bytes = encode(&checkpoint(1)).unwrap();
    for len in 0..bytes.len() {
        match decode(&bytes[..len]) {
            Err(Error::Integrity(_)) => {}
            other => panic!("length {len}: {other:?}"),
        }
    }
}

#[test]
fn bumped_version_is_reported() {
    let mut bytes = encode(&checkpoint(1)).unwrap();
    bytes[4] = 2;
    assert!(matches!(decode(&bytes), Err(Error::UnsupportedVersion(2))));
}

#[test]
fn flipped_bit_fails_checksum() {
    let mut bytes = encode(&checkpoint(1)).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    assert!(matches!(decode(&bytes), Err(Error::Integrity(_))));
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(load(std::path::Path::new("/nonexistent/model.tsck")), Err(Error::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_trip_is_exact(seed in any::<u64>()) {
        let ck = checkpoint(seed);
        let bytes = encode(&ck).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }
}
