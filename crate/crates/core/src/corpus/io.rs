use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    aggregate_votes, collapse_to_single_label, preprocess_text, Aggregated, Dataset, Document,
    MoralLabel, DEFAULT_VOTE_THRESHOLD,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Tsv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "tsv" => Ok(Format::Tsv),
            other => Err(Error::invalid(format!("unknown format `{other}` (jsonl|tsv)"))),
        }
    }
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => Format::Tsv,
            _ => Format::Jsonl,
        }
    }
}

/// What to do with documents that keep several labels after aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelPolicy {
    /// Keep the single most-voted label.
    #[default]
    Collapse,
    /// Emit one document per kept label (`<id>#<label>`).
    Duplicate,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub vote_threshold: i64,
    pub min_tokens: usize,
    pub label_policy: LabelPolicy,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            vote_threshold: DEFAULT_VOTE_THRESHOLD,
            min_tokens: 3,
            label_policy: LabelPolicy::Collapse,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    id: String,
    domain: String,
    text: String,
    #[serde(default)]
    votes: Option<BTreeMap<String, i64>>,
    #[serde(default)]
    label: Option<String>,
}

enum Annotation {
    Votes(BTreeMap<MoralLabel, i64>),
    Label(MoralLabel),
}

struct RawRecord {
    id: String,
    domain: String,
    text: String,
    annotation: Annotation,
}

pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    load_dataset_with(path, format, LoadOptions::default())
}

pub fn load_dataset_with(path: impl AsRef<Path>, format: Format, opts: LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut records = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec = match format {
            Format::Jsonl => parse_json_line(line),
            Format::Tsv => {
                if lineno == 1 && line.starts_with("id\tdomain\t") {
                    continue;
                }
                parse_tsv_line(line)
            }
        };
        records.push(rec.map_err(|m| parse_err(lineno, m))?);
    }
    if records.is_empty() {
        return Err(Error::invalid(format!("{}: no records", path.display())));
    }

    let mut docs = Vec::with_capacity(records.len());
    for rec in records {
        let tokens = preprocess_text(&rec.text);
        if tokens.len() < opts.min_tokens {
            continue;
        }
        let labels = match rec.annotation {
            Annotation::Label(l) => vec![l],
            Annotation::Votes(votes) => match aggregate_votes(&votes, opts.vote_threshold)? {
                Aggregated::Reject => continue,
                Aggregated::Keep(kept) => match opts.label_policy {
                    LabelPolicy::Collapse => vec![collapse_to_single_label(&kept, &votes)?],
                    LabelPolicy::Duplicate => kept,
                },
            },
        };
        let multi = labels.len() > 1;
        for label in labels {
            let id = if multi {
                format!("{}#{}", rec.id, label)
            } else {
                rec.id.clone()
            };
            docs.push(Document {
                id,
                domain: rec.domain.clone(),
                tokens: tokens.clone(),
                label,
            });
        }
    }
    Ok(Dataset::new(docs))
}

fn parse_label(name: &str) -> std::result::Result<MoralLabel, String> {
    name.parse().map_err(|_| format!("unknown label `{name}`"))
}

fn parse_json_line(line: &str) -> std::result::Result<RawRecord, String> {
    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let annotation = match (rec.votes, rec.label) {
        (Some(votes), None) => {
            if votes.is_empty() {
                return Err("`votes` must contain at least one label".into());
            }
            let mut parsed = BTreeMap::new();
            for (name, count) in votes {
                if count < 0 {
                    return Err(format!("negative vote count {count} for `{name}`"));
                }
                parsed.insert(parse_label(&name)?, count);
            }
            Annotation::Votes(parsed)
        }
        (None, Some(label)) => Annotation::Label(parse_label(&label)?),
        (Some(_), Some(_)) => return Err("record has both `votes` and `label`".into()),
        (None, None) => return Err("record needs `votes` or `label`".into()),
    };
    Ok(RawRecord {
        id: rec.id,
        domain: rec.domain,
        text: rec.text,
        annotation,
    })
}

fn parse_tsv_line(line: &str) -> std::result::Result<RawRecord, String> {
    let mut cols = line.splitn(4, '\t');
    let (Some(id), Some(domain), Some(label), Some(text)) =
        (cols.next(), cols.next(), cols.next(), cols.next())
    else {
        return Err("expected 4 tab-separated columns: id, domain, label, text".into());
    };
    Ok(RawRecord {
        id: id.to_string(),
        domain: domain.to_string(),
        text: text.to_string(),
        annotation: Annotation::Label(parse_label(label.trim())?),
    })
}

#[derive(Serialize)]
struct CanonicalRecord<'a> {
    id: &'a str,
    domain: &'a str,
    text: String,
    label: &'a str,
}

/// Write the dataset as JSONL with pre-aggregated labels and the
/// preprocessed tokens joined by single spaces.
pub fn write_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for d in dataset.documents() {
        let rec = CanonicalRecord {
            id: &d.id,
            domain: &d.domain,
            text: d.tokens.join(" "),
            label: d.label.name(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
