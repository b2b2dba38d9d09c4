//! Generated corpus through curation, storage and mock annotation.

use std::fs;

use handlm_core::annotation::{annotate_records, apply_annotations, AnnotationConfig, ClosedVocabulary, MockClient, PromptSet};
use handlm_core::curation::{curate, CurationConfig};
use handlm_core::datagen::generate_corpus;
use handlm_core::dataset::{read_dataset, write_dataset, DatasetError};

#[test]
fn curated_corpus_survives_storage_and_annotation() {
    let records = generate_corpus(24, 3);
    let (kept, report) = curate(records.clone(), &CurationConfig::default());
    assert_eq!(report.decisions.len(), records.len());
    assert_eq!(report.kept(), kept.len());
    assert!(!kept.is_empty());

    let dir = tempfile::tempdir().unwrap();
    write_dataset(&kept, dir.path()).unwrap();
    let read = read_dataset(dir.path()).unwrap();
    assert_eq!(read.len(), kept.len());
    for (a, b) in read.iter().zip(&kept) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.caption_fine, b.caption_fine);
        assert_eq!(a.visibility, b.visibility);
        // Payloads are stored as f32.
        let diff = (a.motion.flatten() - b.motion.flatten()).mapv(f64::abs).fold(0.0_f64, |m, &v| m.max(v));
        assert!(diff < 1e-5, "{}: {diff}", a.id);
    }
    // A second pass is exact once values are f32.
    let again = tempfile::tempdir().unwrap();
    write_dataset(&read, again.path()).unwrap();
    assert_eq!(read_dataset(again.path()).unwrap(), read);

    let vocab = ClosedVocabulary::default();
    let client = MockClient::new(5);
    let outcomes = annotate_records(&read, &vocab, &PromptSet::default(), &client, &AnnotationConfig::default());
    assert_eq!(outcomes.len(), read.len());
    for o in &outcomes {
        assert!(o.pairs.iter().all(|(v, n)| vocab.contains(v, n)), "{}", o.id);
    }
    let annotated = apply_annotations(read, &outcomes);
    assert_eq!(annotated.len(), outcomes.iter().filter(|o| o.kept).count());
}

#[test]
fn corrupted_payload_names_the_record() {
    let records = generate_corpus(3, 9);
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&records, dir.path()).unwrap();
    let victim = dir.path().join(format!("{}.hmw", records[1].id));
    let mut bytes = fs::read(&victim).unwrap();
    bytes[20] ^= 0x40;
    fs::write(&victim, bytes).unwrap();
    match read_dataset(dir.path()) {
        Err(e @ DatasetError::Payload { .. }) => assert_eq!(e.record_id(), Some(records[1].id.as_str())),
        other => panic!("expected a payload error, got {other:?}"),
    }
}

#[test]
fn duplicate_ids_are_refused() {
    let mut records = generate_corpus(2, 1);
    records[1].id = records[0].id.clone();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(write_dataset(&records, dir.path()), Err(DatasetError::Record { .. })));
}
