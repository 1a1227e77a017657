use std::io::Write;

use moralshift::corpus::{load_dataset, load_dataset_with, write_jsonl, Format, LabelPolicy, LoadOptions};
use moralshift::{Error, MoralLabel};
use tempfile::NamedTempFile;

fn fixture(lines: &[&str]) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f
}

#[test]
fn short_documents_are_filtered() {
    let f = fixture(&[
        r#"{"id":"1","domain":"a","text":"this is long enough","label":"care"}"#,
        r#"{"id":"2","domain":"a","text":"too short","label":"harm"}"#,
        r#"{"id":"3","domain":"b","text":"another fine document","label":"no-moral"}"#,
    ]);
    let ds = load_dataset(f.path(), Format::Jsonl).unwrap();
    assert_eq!(ds.len(), 2);
}

#[test]
fn sentinels_replace_mentions_and_urls() {
    let f = fixture(&[r#"{"id":"1","domain":"a","text":"@a @b http://x","votes":{"care":2}}"#]);
    let ds = load_dataset(f.path(), Format::Jsonl).unwrap();
    let toks = &ds.documents()[0].tokens;
    assert_eq!(toks.iter().filter(|t| *t == "USER").count(), 2);
    assert_eq!(toks.iter().filter(|t| *t == "URL").count(), 1);
}

#[test]
fn rejected_votes_drop_the_record() {
    let f = fixture(&[
        r#"{"id":"1","domain":"a","text":"one two three","votes":{"care":1,"harm":1}}"#,
        r#"{"id":"2","domain":"a","text":"one two three","votes":{"care":2,"harm":3}}"#,
    ]);
    let ds = load_dataset(f.path(), Format::Jsonl).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.documents()[0].id, "2");
    assert_eq!(ds.documents()[0].label, MoralLabel::Harm);
}

#[test]
fn malformed_line_reports_line_number() {
    let f = fixture(&[
        r#"{"id":"1","domain":"a","text":"one two three","label":"care"}"#,
        r#"{"id":"2","domain":"a","text":"#,
    ]);
    match load_dataset(f.path(), Format::Jsonl) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn unknown_label_is_named() {
    let f = fixture(&[r#"{"id":"1","domain":"a","text":"one two three","label":"Liberty"}"#]);
    let err = load_dataset(f.path(), Format::Jsonl).unwrap_err();
    assert!(err.to_string().contains("Liberty"), "{err}");
}

#[test]
fn empty_file_has_no_records() {
    let f = fixture(&[]);
    let err = load_dataset(f.path(), Format::Jsonl).unwrap_err();
    assert!(err.to_string().contains("no records"));
}

#[test]
fn tsv_with_header() {
    let f = fixture(&[
        "id\tdomain\tlabel\ttext",
        "7\tx\tfairness\tEqual rights\tfor all",
        "8\tx\tloyalty\tstand with us",
    ]);
    let ds = load_dataset(f.path(), Format::Tsv).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.documents()[0].tokens, ["equal", "rights", "for", "all"]);
}

#[test]
fn duplicate_policy_emits_one_document_per_label() {
    let f = fixture(&[r#"{"id":"1","domain":"a","text":"one two three","votes":{"care":2,"harm":3}}"#]);
    let opts = LoadOptions {
        label_policy: LabelPolicy::Duplicate,
        ..LoadOptions::default()
    };
    let ds = load_dataset_with(f.path(), Format::Jsonl, opts).unwrap();
    let ids: Vec<_> = ds.documents().iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids, ["1#care", "1#harm"]);
}

#[test]
fn loading_is_deterministic_and_canonical_output_reloads() {
    let f = fixture(&[
        r#"{"id":"b","domain":"z","text":"Hello @you, see www.x.org NOW!","votes":{"care":3}}"#,
        r#"{"id":"a","domain":"z","text":"Another ONE here","label":"purity"}"#,
        r#"{"id":"c","domain":"y","text":"and a third one","label":"no-moral"}"#,
    ]);
    let a = load_dataset(f.path(), Format::Jsonl).unwrap();
    let b = load_dataset(f.path(), Format::Jsonl).unwrap();
    assert_eq!(a, b);

    let out = NamedTempFile::new().unwrap();
    write_jsonl(&a, out.path()).unwrap();
    let c = load_dataset(out.path(), Format::Jsonl).unwrap();
    assert_eq!(a, c);
}
