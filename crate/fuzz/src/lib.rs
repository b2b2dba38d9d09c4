//! Entry points shared by the fuzz targets and the seed-replay test.
//! Each must return normally on any input; the assertions are invariants.

use candle_core::DType;
use handlm_cli::config::RunConfig;
use handlm_core::annotation::prompts::{ATOMIC_KEYS, REFINE, SUMMARIZE, VERIFY};
use handlm_core::annotation::{
    stage1_annotate, stage2_refine, verify_annotation, AnnotationConfig, ClosedVocabulary, Descriptor, MockClient, PromptSet,
};
use handlm_core::codec::{deinterleave, interleave, repair, Vocabulary};
use handlm_core::dataset::{decode_hmw, encode_hmw, parse_manifest_line};
use handlm_core::motion::DEFAULT_FPS;
use handlm_core::text::TextTokenizer;
use handlm_nn::params::ParamStore;

const HEADER_LEN: usize = 12;

pub fn hmw_decode(data: &[u8]) {
    check_hmw(data);
    // Rewrite the trailing checksum so the payload checks are reached too.
    if data.len() >= HEADER_LEN + 4 {
        let mut fixed = data.to_vec();
        let end = fixed.len() - 4;
        let crc = crc32fast::hash(&fixed[HEADER_LEN..end]);
        fixed[end..].copy_from_slice(&crc.to_le_bytes());
        check_hmw(&fixed);
    }
}

fn check_hmw(bytes: &[u8]) {
    if let Ok(m) = decode_hmw(bytes, DEFAULT_FPS) {
        let again = decode_hmw(&encode_hmw(&m), DEFAULT_FPS).expect("re-encoded motion decodes");
        assert_eq!(again, m);
    }
}

pub fn manifest_line(data: &[u8]) {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(entry) = parse_manifest_line(line) {
        let text = serde_json::to_string(&entry).expect("entry serializes");
        assert_eq!(parse_manifest_line(&text).expect("serialized entry parses"), entry);
    }
}

fn small_vocab() -> Vocabulary {
    Vocabulary::new(TextTokenizer::build(["pour the kettle", "wave the left hand"]), 8).expect("valid vocabulary")
}

pub fn token_stream(data: &[u8]) {
    let vocab = small_vocab();
    // Ids slightly past the vocabulary exercise the range checks.
    let bound = vocab.len() as u32 + 8;
    let ids: Vec<u32> = data.chunks(2).map(|c| c.iter().fold(0u32, |a, &b| a << 8 | b as u32) % bound).collect();
    if let Ok(tokens) = deinterleave(&ids, &vocab) {
        let stream = interleave(&tokens, &vocab).expect("decoded tokens interleave");
        assert_eq!(stream.len(), 4 * tokens.len() + 2);
        assert_eq!(deinterleave(&stream, &vocab).expect("round trip"), tokens);
    }
    let fixed = repair(&ids, &vocab);
    assert_eq!(repair(&fixed, &vocab), fixed);
    assert!(deinterleave(&fixed, &vocab).is_ok());
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ids) = vocab.from_json_symbols(text) {
            assert!(ids.iter().all(|&id| id < vocab.len() as u32));
        }
    }
}

pub fn vocab_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = Vocabulary::from_json(text) {
        assert!(v.validate().is_ok());
        assert!(v.kind(v.som()).is_some());
    }
}

pub fn closed_vocab_json(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = ClosedVocabulary::from_json(text) {
        assert!(v.pairs().all(|(verb, noun)| v.contains(verb, noun)));
    }
}

pub fn run_config_toml(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        assert!(cfg.validate().is_ok());
    }
}

/// Arbitrary model output for every annotation task.
pub fn model_responses(data: &[u8]) {
    let text = String::from_utf8_lossy(data);
    let _ = Descriptor::parse(&text);
    let mut client = MockClient::new(0);
    for task in ATOMIC_KEYS.into_iter().chain([SUMMARIZE, REFINE, VERIFY]) {
        client = client.with_override(task, &[&text]);
    }
    let descriptor = "family=pour;lead=right;tempo=slow;extent=small";
    let (prompts, vocab, cfg) = (PromptSet::default(), ClosedVocabulary::default(), AnnotationConfig::default());
    let _ = stage1_annotate(descriptor, &prompts, &client, &cfg);
    if let Ok(r) = stage2_refine("pour the kettle", descriptor, &vocab, &prompts, &client, &cfg) {
        assert!(r.pairs.iter().all(|(verb, noun)| vocab.contains(verb, noun)));
    }
    let v = verify_annotation("pour the kettle", descriptor, &prompts, &client, &cfg);
    assert!(v.score.map_or(v.flagged, |s| (0.0..=1.0).contains(&s)));
}

pub fn checkpoint_bytes(data: &[u8]) {
    let _ = ParamStore::from_bytes(data, DType::F32);
}
