use std::path::Path;

use nmtx::container::{block_entry_name, decode_model, Container, FORMAT_VERSION};
use nmtx::{load_lm, load_model, save_lm, save_model, NmtxError};
use nmtx_core::lm::{LanguageModel, LmConfig};
use nmtx_core::{seeded_rng, BlockName, ModelConfig, Seq2Seq, Vocabulary};
use proptest::prelude::*;

fn vocab(n: usize, prefix: &str) -> Vocabulary {
    Vocabulary::from_types((0..n).map(|i| format!("{prefix}{i}"))).unwrap()
}

fn model(hidden: usize, src: usize, tgt: usize, seed: u64) -> Seq2Seq<f32> {
    let mut cfg = ModelConfig::desk(0, 0);
    cfg.hidden_size = hidden;
    cfg.init_range = 0.3;
    Seq2Seq::new(cfg, vocab(src, "s"), vocab(tgt, "t"), &mut seeded_rng(seed)).unwrap()
}

fn bits(m: &Seq2Seq<f32>) -> Vec<u32> {
    m.params.tensors().iter().flat_map(|t| t.as_slice().iter().map(|x| x.to_bits())).collect()
}

#[test]
fn round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nmtx");
    let m = model(6, 7, 5, 1);
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(bits(&back), bits(&m));
    assert_eq!(back, m);
    let (src, tgt) = (vec![4, 5, 6, 1], vec![7, 4, 8]);
    assert_eq!(
        back.sentence_logprob(&src, &tgt).unwrap().to_bits(),
        m.sentence_logprob(&src, &tgt).unwrap().to_bits()
    );
}

#[test]
fn wider_models_are_stored_as_f32() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nmtx");
    let m: Seq2Seq<f64> = model(4, 3, 3, 2).cast();
    save_model(&m, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), m.cast::<f32>());
}

#[test]
fn file_carries_version_config_vocabularies_and_six_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nmtx");
    save_model(&model(4, 3, 3, 3), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"NMTXMODL");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), FORMAT_VERSION);
    let c = Container::read(&path).unwrap();
    let names: Vec<&str> = c.entries.iter().map(|e| e.name.as_str()).collect();
    let mut want = vec!["config".to_string(), "src_vocab".into(), "tgt_vocab".into()];
    want.extend(BlockName::ALL.iter().map(|&b| block_entry_name(b)));
    assert_eq!(names, want);
    let config = std::str::from_utf8(c.get("config").unwrap()).unwrap();
    assert!(config.contains("hidden_size=4\n"));
    assert_eq!(std::str::from_utf8(c.get("src_vocab").unwrap()).unwrap(), "s0\ns1\ns2\n");
}

#[test]
fn provenance_is_present_only_for_transferred_models() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nmtx");
    let mut m = model(4, 3, 3, 4);
    save_model(&m, &path).unwrap();
    assert!(Container::read(&path).unwrap().get("provenance").is_none());
    m.config.parent = Some("parent.nmtx".into());
    save_model(&m, &path).unwrap();
    assert_eq!(Container::read(&path).unwrap().get("provenance"), Some(&b"parent.nmtx"[..]));
    assert_eq!(load_model(&path).unwrap().config.parent.as_deref(), Some("parent.nmtx"));
}

fn saved_bytes(m: &Seq2Seq<f32>) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nmtx");
    save_model(m, &path).unwrap();
    std::fs::read(&path).unwrap()
}

#[test]
fn corrupt_payload_byte_is_a_checksum_error() {
    let bytes = saved_bytes(&model(4, 3, 3, 5));
    let c = Container::from_bytes(&bytes, Path::new("m")).unwrap();
    let payload: usize = c.entries.iter().map(|e| e.data.len()).sum();
    let start = bytes.len() - payload;
    for k in [start, start + payload / 3, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[k] ^= 0x40;
        let err = Container::from_bytes(&bad, Path::new("m")).unwrap_err();
        assert!(matches!(err, NmtxError::Checksum { .. }), "byte {k}: {err}");
    }
    // a flipped directory byte is caught by the directory checksum
    let mut bad = bytes.clone();
    bad[30] ^= 1;
    let err = Container::from_bytes(&bad, Path::new("m")).unwrap_err();
    assert!(matches!(err, NmtxError::Checksum { ref entry, .. } if entry == "directory"), "{err}");
}

#[test]
fn version_mismatch_is_reported() {
    let mut bytes = saved_bytes(&model(4, 3, 3, 6));
    bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = Container::from_bytes(&bytes, Path::new("m")).unwrap_err();
    assert!(
        matches!(err, NmtxError::VersionMismatch { found, expected, .. } if found == FORMAT_VERSION + 1 && expected == FORMAT_VERSION)
    );
}

#[test]
fn foreign_files_are_rejected() {
    let err = Container::from_bytes(b"hello world, not a model", Path::new("m")).unwrap_err();
    assert!(matches!(err, NmtxError::BadMagic { .. }));
}

#[test]
fn five_block_file_names_the_missing_block() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nmtx");
    save_model(&model(4, 3, 3, 7), &path).unwrap();
    for missing in BlockName::ALL {
        let mut c = Container::read(&path).unwrap();
        c.entries.retain(|e| e.name != block_entry_name(missing));
        let err = decode_model(&c, &path).unwrap_err();
        assert!(
            matches!(err, NmtxError::MissingBlock { ref block, .. } if block == missing.as_str()),
            "{err}"
        );
        assert!(err.to_string().contains(missing.as_str()));
    }
}

#[test]
fn shape_disagreement_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nmtx");
    save_model(&model(4, 3, 3, 8), &path).unwrap();
    let mut c = Container::read(&path).unwrap();
    // one more source type than the stored embedding table has rows
    for e in &mut c.entries {
        if e.name == "src_vocab" {
            e.data.extend_from_slice(b"extra\n");
        }
        if e.name == "config" {
            let text = String::from_utf8(e.data.clone()).unwrap().replace("src_vocab_size=7", "src_vocab_size=8");
            e.data = text.into_bytes();
        }
    }
    let err = decode_model(&c, &path).unwrap_err();
    assert!(matches!(err, NmtxError::Malformed { .. }), "{err}");
}

#[test]
fn language_models_hold_target_blocks_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lm.nmtx");
    let lm = LanguageModel::<f32>::new(
        vocab(5, "w"),
        &LmConfig {
            hidden_size: 4,
            init_range: 0.2,
        },
        &mut seeded_rng(9),
    )
    .unwrap();
    save_lm(&lm, &path).unwrap();
    let c = Container::read(&path).unwrap();
    for b in BlockName::ALL {
        let present = c.get(&block_entry_name(b)).is_some();
        let source_side = matches!(b, BlockName::SourceEmbeddings | BlockName::SourceRnn);
        assert_eq!(present, !source_side, "{b}");
    }
    assert!(c.get("src_vocab").is_none());
    let back = load_lm(&path).unwrap();
    assert_eq!(back, lm);
    // the kinds are not interchangeable
    assert!(matches!(load_model(&path), Err(NmtxError::Malformed { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_truncation_is_detected(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let bytes = saved_bytes(&model(3, 2, 2, seed));
        let keep = 8 + ((bytes.len() - 9) as f64 * cut) as usize;
        let err = Container::from_bytes(&bytes[..keep], Path::new("m")).unwrap_err();
        prop_assert!(matches!(err, NmtxError::Truncated { .. }), "{}", err);
    }

    #[test]
    fn round_trip_for_any_shape(seed in any::<u64>(), hidden in 1usize..6, src in 0usize..6, tgt in 0usize..6) {
        let m = model(hidden, src, tgt, seed);
        let bytes = saved_bytes(&m);
        let c = Container::from_bytes(&bytes, Path::new("m")).unwrap();
        prop_assert_eq!(c.to_bytes(), bytes);
        prop_assert_eq!(decode_model(&c, Path::new("m")).unwrap(), m);
    }
}
