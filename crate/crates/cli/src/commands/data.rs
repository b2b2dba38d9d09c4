//! `gen-data`, `curate`, `annotate`.

use std::fs;
use std::io::Write;
use std::time::Duration;

use handlm_core::annotation::{annotate_records, apply_annotations, ClosedVocabulary, HttpClient, MockClient, ModelClient, PromptSet};
use handlm_core::curation::curate as curate_records;
use handlm_core::datagen::generate_corpus_with;
use handlm_core::dataset::{read_dataset, write_dataset};

use crate::config::RunConfig;
use crate::provenance::Provenance;
use crate::{AnnotateArgs, ClientKind, CliError, CurateArgs, GenDataArgs};

pub fn gen_data(mut cfg: RunConfig, args: &GenDataArgs) -> Result<(), CliError> {
    if let Some(f) = args.frames {
        cfg.datagen.num_frames = f;
    }
    cfg.validate()?;
    let records = generate_corpus_with(&cfg.datagen, args.num, cfg.seed);
    write_dataset(&records, &args.out)?;
    Provenance::new("gen-data", &cfg).note("records", records.len()).write_for(&args.out)?;
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

pub fn curate(cfg: RunConfig, args: &CurateArgs) -> Result<(), CliError> {
    cfg.curation.validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let records = read_dataset(&args.input)?;
    let total = records.len();
    let (kept, report) = curate_records(records, &cfg.curation);
    write_dataset(&kept, &args.out)?;
    let report_path = args.out.join("curation_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report).expect("report serializes")).map_err(|e| CliError::io(&report_path, e))?;
    let mut prov = Provenance::new("curate", &cfg);
    prov.input(&args.input)?.note("records_in", total).note("records_kept", kept.len());
    prov.write_for(&args.out)?;
    println!("kept {} of {total} records", kept.len());
    Ok(())
}

pub fn annotate(mut cfg: RunConfig, args: &AnnotateArgs) -> Result<(), CliError> {
    if let Some(c) = args.client {
        cfg.annotation.client = match c {
            ClientKind::Mock => "mock",
            ClientKind::Http => "http",
        }
        .into();
    }
    if let Some(e) = &args.endpoint {
        cfg.annotation.endpoint = Some(e.clone());
    }
    if let Some(p) = &args.prompts {
        cfg.annotation.prompts = Some(p.clone());
    }
    if let Some(v) = &args.vocabulary {
        cfg.annotation.vocabulary = Some(v.clone());
    }
    cfg.validate()?;
    let settings = &cfg.annotation;
    let prompts = match &settings.prompts {
        Some(dir) => PromptSet::load_dir(dir).map_err(|e| CliError::Usage(format!("prompts: {e}")))?,
        None => PromptSet::default(),
    };
    let vocab = match &settings.vocabulary {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            ClosedVocabulary::from_json(&text).map_err(|e| CliError::Usage(format!("vocabulary: {e}")))?
        }
        None => ClosedVocabulary::default(),
    };
    let client: Box<dyn ModelClient> = match settings.client.as_str() {
        "http" => {
            let endpoint = settings
                .endpoint
                .as_deref()
                .ok_or_else(|| CliError::Usage("the http client needs --endpoint".into()))?;
            Box::new(HttpClient::new(endpoint, settings.api_key.clone(), Duration::from_secs(settings.timeout_secs), settings.max_in_flight))
        }
        _ => Box::new(MockClient::new(cfg.seed).with_max_in_flight(settings.max_in_flight)),
    };

    let records = read_dataset(&args.input)?;
    let total = records.len();
    let outcomes = annotate_records(&records, &vocab, &prompts, client.as_ref(), &settings.pipeline);
    let annotated = apply_annotations(records, &outcomes);
    write_dataset(&annotated, &args.out)?;

    let log_path = args.out.join("annotations.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    for o in &outcomes {
        writeln!(log, "{}", serde_json::to_string(o).expect("outcome serializes")).map_err(|e| CliError::io(&log_path, e))?;
    }
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    let mut prov = Provenance::new("annotate", &cfg);
    prov.input(&args.input)?
        .note("client", client.name())
        .note("records_in", total)
        .note("records_kept", annotated.len())
        .note("records_failed", failed);
    prov.write_for(&args.out)?;
    println!("annotated {} of {total} records ({failed} failed)", annotated.len());
    Ok(())
}
