//! Load a vote-annotated corpus, aggregate the votes and print the
//! per-domain summary.
//!
//! ```sh
//! cargo run --example ingest_corpus -- path/to/corpus.jsonl
//! ```
//!
//! Without an argument a small built-in corpus is used.

use moralshift::cli::summary_table;
use moralshift::corpus::{load_dataset_with, Format, LoadOptions};

const SAMPLE: &str = r#"{"id":"1","domain":"sandy","text":"Volunteers are helping families after the storm @redcross","votes":{"care":3,"loyalty":1}}
{"id":"2","domain":"sandy","text":"They abandoned the shelter and lied about it http://t.co/x","votes":{"betrayal":2,"cheating":2}}
{"id":"3","domain":"sandy","text":"power is back on in our street","votes":{"no-moral":3}}
{"id":"4","domain":"blm","text":"Justice for everyone, equal treatment under the law","votes":{"fairness":2,"care":1}}
{"id":"5","domain":"blm","text":"the violence against protesters has to stop","votes":{"harm":2,"no-moral":2}}
{"id":"6","domain":"blm","text":"ok","votes":{"no-moral":3}}
"#;

pub fn run_example() -> anyhow::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let path = std::env::temp_dir().join("moralshift_ingest_sample.jsonl");
            std::fs::write(&path, SAMPLE)?;
            path
        }
    };
    let dataset = load_dataset_with(&path, Format::from_path(&path), LoadOptions::default())?;
    println!("{} documents kept from {}\n", dataset.len(), path.display());
    print!("{}", summary_table(&dataset));
    println!();
    for doc in dataset.documents() {
        println!("{:>6} {:>10}  {}", doc.domain, doc.label.name(), doc.tokens.join(" "));
    }
    for domain in dataset.domains() {
        match dataset.virtue_vice_ratio(domain) {
            Ok(r) => println!("{domain}: virtue/vice ratio {r:.2}"),
            Err(e) => println!("{domain}: {e}"),
        }
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run_example()
}
