//! Batch commands over the library, driven by flags and TOML config files.
//!
//! Every command resolves its settings as flag > config file > default,
//! writes the resolved config next to its outputs and tags them with the
//! config's SHA-256. Failures print one JSON line on stderr and exit 1.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{cross_domain_grid, features_tsv, top_features, Averaging, LogRegConfig};
use crate::corpus::{load_dataset_with, write_jsonl, Dataset, Format, LabelPolicy, LoadOptions, MoralLabel};
use crate::error::{Error, Result};
use crate::eval::{run_experiment_with, Approach, ExperimentConfig, ExperimentReport};
use crate::l2af::EncoderKind;
use crate::shift_analysis::{fit_lda, shift_tests, similarity_matrix, LdaConfig, SimilarityKind};
use crate::synth::{generate, Scenario};

/// Relative `--out` paths are resolved against this directory when set.
pub const OUT_ROOT_ENV: &str = "MORALSHIFT_OUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "moralshift", version, about = "Moral-value domain shift analysis and instance-weighted adaptation")]
pub struct Cli {
    /// Root directory for relative output paths.
    #[arg(long, env = OUT_ROOT_ENV, global = true)]
    pub out_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and preprocess an annotated corpus, write canonical JSONL and
    /// print per-domain statistics.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with planted shift.
    Synth(SynthArgs),
    /// Topic and label similarity matrices plus the shift tests.
    Analyze(AnalyzeArgs),
    /// Train-on-one / test-on-all baseline grid.
    Grid(GridArgs),
    /// Leave-one-domain-out comparison of In-Domain, No-adapt and Adapt.
    Experiment(ExperimentArgs),
    /// Most informative unigrams of one domain.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input corpus.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input format (jsonl or tsv); inferred from the extension by default.
    #[arg(long)]
    pub format: Option<Format>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub vote_threshold: Option<i64>,
    #[arg(long)]
    pub min_tokens: Option<usize>,
    #[arg(long)]
    pub label_policy: Option<LabelPolicyArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum LabelPolicyArg {
    Collapse,
    Duplicate,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output corpus (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Built-in scenario used when the config has none.
    #[arg(long)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    NoShift,
    StrongShift,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of LDA topics.
    #[arg(long)]
    pub topics: Option<usize>,
    /// Also run the baseline grid and regress performance on shift.
    #[arg(long)]
    pub with_grid: bool,
    #[arg(long)]
    pub emit_plots: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub emit_plots: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub target_domain: Option<String>,
    /// Run a single approach instead of the configured list.
    #[arg(long)]
    pub approach: Option<Approach>,
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Model seed (replaces the config's seed list).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, alias = "target-domain")]
    pub domain: Option<String>,
    #[arg(long)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub input: Option<PathBuf>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub vote_threshold: Option<i64>,
    pub min_tokens: Option<usize>,
    pub label_policy: Option<LabelPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub preset: Preset,
    /// Full scenario; overrides `preset` when present.
    pub scenario: Option<Scenario>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { out: None, seed: 0, preset: Preset::StrongShift, scenario: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub input: Option<PathBuf>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub lda: LdaConfig,
    pub with_grid: bool,
    pub split_seed: u64,
    pub logreg: LogRegConfig,
    pub emit_plots: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub input: Option<PathBuf>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub split_seed: u64,
    pub logreg: LogRegConfig,
    pub emit_plots: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentRunConfig {
    pub input: Option<PathBuf>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    /// Model seeds to run; empty means the seed inside `experiment.hyper`.
    pub seeds: Vec<u64>,
    /// Write each trained model as a JSON checkpoint.
    pub save_models: bool,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub input: Option<PathBuf>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub domain: Option<String>,
    pub top_n: usize,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self { input: None, format: None, out: None, domain: None, top_n: 20 }
    }
}

/// What a finished command wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub outputs: Vec<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<RunManifest>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))?;
    execute(cli)
}

/// Process entry point: runs the command line, prints the manifest on
/// success and a single-line JSON error otherwise.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&Error::Config(e.to_string().trim().replace('\n', " "))),
    };
    match execute(cli) {
        Ok(manifest) => {
            println!("{}", serde_json::to_string(&manifest).expect("manifest serialises"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{line}");
    ExitCode::FAILURE
}

pub fn execute(cli: Cli) -> Result<RunManifest> {
    let root = cli.out_root.as_deref();
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, root),
        Command::Synth(a) => cmd_synth(a, root),
        Command::Analyze(a) => cmd_analyze(a, root),
        Command::Grid(a) => cmd_grid(a, root),
        Command::Experiment(a) => cmd_experiment(a, root),
        Command::Features(a) => cmd_features(a, root),
    }
}

fn load_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    let Some(path) = path else { return Ok(C::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim().replace('\n', " "))))
}

/// Hex SHA-256 of the config's JSON form.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let json = serde_json::to_vec(config).expect("config serialises");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn resolve_out(out: Option<PathBuf>, root: Option<&Path>) -> Result<PathBuf> {
    let out = out.ok_or_else(|| Error::Config("an output path is required (--out or `out` in the config)".into()))?;
    Ok(match root {
        Some(r) if out.is_relative() => r.join(out),
        _ => out,
    })
}

fn require_input(input: Option<PathBuf>) -> Result<PathBuf> {
    input.ok_or_else(|| Error::Config("an input path is required (--input or `input` in the config)".into()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Writes the resolved config and the manifest beside the outputs.
fn finish<C: Serialize>(
    command: &str,
    config: &C,
    config_path: PathBuf,
    manifest_path: PathBuf,
    mut outputs: Vec<PathBuf>,
) -> Result<RunManifest> {
    let toml_text = toml::to_string(config).map_err(|e| Error::Config(format!("cannot render config: {e}")))?;
    write(&config_path, toml_text)?;
    outputs.push(config_path);
    let manifest = RunManifest { command: command.to_string(), config_hash: config_hash(config), outputs };
    write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn load_input(input: &Path, format: Option<Format>) -> Result<Dataset> {
    load_dataset_with(input, format.unwrap_or_else(|| Format::from_path(input)), LoadOptions::default())
}

pub fn cmd_ingest(a: IngestArgs, root: Option<&Path>) -> Result<RunManifest> {
    let mut cfg: IngestConfig = load_config(a.data.config.as_deref())?;
    cfg.input = a.data.input.or(cfg.input);
    cfg.format = a.data.format.or(cfg.format);
    cfg.out = a.data.out.or(cfg.out);
    cfg.vote_threshold = a.vote_threshold.or(cfg.vote_threshold);
    cfg.min_tokens = a.min_tokens.or(cfg.min_tokens);
    if let Some(p) = a.label_policy {
        cfg.label_policy = Some(match p {
            LabelPolicyArg::Collapse => LabelPolicy::Collapse,
            LabelPolicyArg::Duplicate => LabelPolicy::Duplicate,
        });
    }
    let defaults = LoadOptions::default();
    cfg.vote_threshold.get_or_insert(defaults.vote_threshold);
    cfg.min_tokens.get_or_insert(defaults.min_tokens);
    cfg.label_policy.get_or_insert(defaults.label_policy);
    let input = require_input(cfg.input.clone())?;
    cfg.format.get_or_insert(Format::from_path(&input));
    let opts = LoadOptions {
        vote_threshold: cfg.vote_threshold.expect("set above"),
        min_tokens: cfg.min_tokens.expect("set above"),
        label_policy: cfg.label_policy.expect("set above"),
    };
    let dataset = load_dataset_with(&input, cfg.format.expect("set above"), opts)?;
    let out = resolve_out(cfg.out.clone(), root)?;
    ensure_parent(&out)?;
    write_jsonl(&dataset, &out)?;
    let table = summary_table(&dataset);
    print!("{table}");
    let summary_path = sibling(&out, ".summary.tsv");
    write(&summary_path, &table)?;
    finish("ingest", &cfg, sibling(&out, ".config.toml"), sibling(&out, ".run.json"), vec![out, summary_path])
}

/// Per-domain document count, mean tokens and label percentages.
pub fn summary_table(dataset: &Dataset) -> String {
    let mut s = String::from("domain\tdocs\tmean_tokens");
    for l in MoralLabel::ALL {
        let _ = write!(s, "\t{}", l.name());
    }
    s.push('\n');
    for row in dataset.summary() {
        let _ = write!(s, "{}\t{}\t{:.2}", row.domain, row.documents, row.mean_tokens);
        for p in row.label_percent {
            let _ = write!(s, "\t{p:.2}");
        }
        s.push('\n');
    }
    s
}

pub fn cmd_synth(a: SynthArgs, root: Option<&Path>) -> Result<RunManifest> {
    let mut cfg: SynthConfig = load_config(a.config.as_deref())?;
    cfg.out = a.out.or(cfg.out);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if let Some(p) = a.preset {
        cfg.preset = p;
        cfg.scenario = None;
    }
    let scenario = match &cfg.scenario {
        Some(s) => s.clone(),
        None => match cfg.preset {
            Preset::NoShift => Scenario::no_shift(),
            Preset::StrongShift => Scenario::strong_shift(),
        },
    };
    cfg.scenario = Some(scenario.clone());
    let setup = scenario.build(cfg.seed)?;
    let dataset = generate(&setup.specs, &setup.topics, cfg.seed)?;
    let out = resolve_out(cfg.out.clone(), root)?;
    ensure_parent(&out)?;
    write_jsonl(&dataset, &out)?;
    finish("synth", &cfg, sibling(&out, ".config.toml"), sibling(&out, ".run.json"), vec![out])
}

pub fn cmd_analyze(a: AnalyzeArgs, root: Option<&Path>) -> Result<RunManifest> {
    let mut cfg: AnalyzeConfig = load_config(a.data.config.as_deref())?;
    cfg.input = a.data.input.or(cfg.input);
    cfg.format = a.data.format.or(cfg.format);
    cfg.out = a.data.out.or(cfg.out);
    if let Some(seed) = a.seed {
        cfg.lda.seed = seed;
        cfg.split_seed = seed;
    }
    if let Some(k) = a.topics {
        cfg.lda.num_topics = k;
    }
    cfg.with_grid |= a.with_grid;
    cfg.emit_plots |= a.emit_plots;
    let input = require_input(cfg.input.clone())?;
    let dataset = load_input(&input, cfg.format)?;
    let out = resolve_out(cfg.out.clone(), root)?;
    ensure_dir(&out)?;

    let topic_model = fit_lda(&dataset, &cfg.lda)?;
    let mut outputs = Vec::new();
    let mut matrices = Vec::new();
    for (kind, name) in [
        (SimilarityKind::Topic, "topic_similarity"),
        (SimilarityKind::Label, "label_similarity"),
        (SimilarityKind::MoralLabel, "moral_label_similarity"),
    ] {
        let m = similarity_matrix(&dataset, Some(&topic_model), kind)?;
        let csv = out.join(format!("{name}.csv"));
        m.write_csv(&csv)?;
        outputs.push(csv);
        if cfg.emit_plots {
            let png = out.join(format!("{name}.png"));
            m.write_heatmap(&png)?;
            outputs.push(png);
        }
        matrices.push(m);
    }
    let grid = if cfg.with_grid {
        let g = cross_domain_grid(&dataset, cfg.split_seed, &cfg.logreg)?;
        let csv = out.join("grid_macro.csv");
        g.write_csv(&csv, Averaging::Macro)?;
        outputs.push(csv);
        Some(g)
    } else {
        None
    };
    let report = shift_tests(&matrices[0], &matrices[1], grid.as_ref())?;
    let json = out.join("shift_tests.json");
    write(&json, report.to_json()?)?;
    outputs.push(json);
    finish("analyze", &cfg, out.join("config.resolved.toml"), out.join("run.json"), outputs)
}

pub fn cmd_grid(a: GridArgs, root: Option<&Path>) -> Result<RunManifest> {
    let mut cfg: GridConfig = load_config(a.data.config.as_deref())?;
    cfg.input = a.data.input.or(cfg.input);
    cfg.format = a.data.format.or(cfg.format);
    cfg.out = a.data.out.or(cfg.out);
    cfg.split_seed = a.seed.unwrap_or(cfg.split_seed);
    cfg.emit_plots |= a.emit_plots;
    let input = require_input(cfg.input.clone())?;
    let dataset = load_input(&input, cfg.format)?;
    let out = resolve_out(cfg.out.clone(), root)?;
    ensure_dir(&out)?;
    let grid = cross_domain_grid(&dataset, cfg.split_seed, &cfg.logreg)?;
    let mut outputs = Vec::new();
    for (avg, name) in [(Averaging::Macro, "macro"), (Averaging::Micro, "micro"), (Averaging::Weighted, "weighted")] {
        let path = out.join(format!("grid_{name}.csv"));
        grid.write_csv(&path, avg)?;
        outputs.push(path);
    }
    if cfg.emit_plots {
        let png = out.join("grid_macro.png");
        grid.write_heatmap(&png)?;
        outputs.push(png);
    }
    let (inside, outside) = grid.in_out_means(Averaging::Macro);
    println!("mean in-domain macro-F1 {inside:.4}, mean out-domain macro-F1 {outside:.4}");
    finish("grid", &cfg, out.join("config.resolved.toml"), out.join("run.json"), outputs)
}

pub fn cmd_experiment(a: ExperimentArgs, root: Option<&Path>) -> Result<RunManifest> {
    let mut cfg: ExperimentRunConfig = load_config(a.data.config.as_deref())?;
    cfg.input = a.data.input.or(cfg.input);
    cfg.format = a.data.format.or(cfg.format);
    cfg.out = a.data.out.or(cfg.out);
    let exp = &mut cfg.experiment;
    if let Some(t) = a.target_domain {
        exp.target_domain = t;
    }
    if let Some(ap) = a.approach {
        exp.approaches = vec![ap];
    }
    if let Some(kind) = a.encoder {
        exp.encoder.encoder_kind = kind;
    }
    if let Some(alpha) = a.alpha {
        exp.hyper.alpha = alpha;
    }
    if let Some(seed) = a.seed {
        cfg.seeds = vec![seed];
    }
    if cfg.seeds.is_empty() {
        cfg.seeds = vec![cfg.experiment.hyper.seed];
    }
    cfg.experiment.validate()?;
    let input = require_input(cfg.input.clone())?;
    let dataset = load_input(&input, cfg.format)?;
    let out = resolve_out(cfg.out.clone(), root)?;
    ensure_dir(&out)?;

    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let mut exp = cfg.experiment.clone();
        exp.hyper.seed = seed;
        let mut written = Vec::new();
        let report = run_experiment_with(&dataset, &exp, |approach, model, log| {
            let stem = format!("{}_seed{seed}", kebab(approach));
            let log_path = out.join(format!("train_{stem}.jsonl"));
            log.write_jsonl(&log_path)?;
            written.push(log_path);
            if cfg.save_models {
                let model_path = out.join(format!("model_{stem}.json"));
                model.save(&model_path)?;
                written.push(model_path);
            }
            Ok(())
        })?;
        if report.over_budget {
            eprintln!("warning: seed {seed} took {:.0}s, over the 600s budget", report.duration_secs);
        }
        let json = out.join(format!("report_seed{seed}.json"));
        write(&json, report.to_json()?)?;
        let md = out.join(format!("report_seed{seed}.md"));
        write(&md, report.to_markdown())?;
        print!("{}", report.to_markdown());
        outputs.extend(written);
        outputs.extend([json, md]);
        reports.push(report);
    }
    let summary = out.join("summary.md");
    write(&summary, seed_summary(&reports))?;
    outputs.push(summary);
    finish("experiment", &cfg, out.join("config.resolved.toml"), out.join("run.json"), outputs)
}

fn kebab(a: Approach) -> &'static str {
    match a {
        Approach::InDomain => "in-domain",
        Approach::NoAdapt => "no-adapt",
        Approach::Adapt => "adapt",
    }
}

/// Macro-F1 per seed and the mean over seeds, one row per approach.
pub fn seed_summary(reports: &[ExperimentReport]) -> String {
    let mut s = String::from("| Approach |");
    for r in reports {
        let _ = write!(s, " seed {} |", r.seed);
    }
    s.push_str(" mean |\n|---|");
    s.push_str(&"---|".repeat(reports.len() + 1));
    s.push('\n');
    for approach in Approach::ALL {
        let scores: Vec<f64> = reports.iter().filter_map(|r| r.result(approach)).map(|r| r.f1.macro_f1).collect();
        if scores.len() != reports.len() || scores.is_empty() {
            continue;
        }
        let _ = write!(s, "| {} |", approach.name());
        for v in &scores {
            let _ = write!(s, " {v:.3} |");
        }
        let _ = writeln!(s, " {:.3} |", scores.iter().sum::<f64>() / scores.len() as f64);
    }
    s
}

pub fn cmd_features(a: FeaturesArgs, root: Option<&Path>) -> Result<RunManifest> {
    let mut cfg: FeaturesConfig = load_config(a.data.config.as_deref())?;
    cfg.input = a.data.input.or(cfg.input);
    cfg.format = a.data.format.or(cfg.format);
    cfg.out = a.data.out.or(cfg.out);
    cfg.domain = a.domain.or(cfg.domain);
    cfg.top_n = a.top_n.unwrap_or(cfg.top_n);
    let input = require_input(cfg.input.clone())?;
    let domain = cfg.domain.clone().ok_or_else(|| Error::Config("a domain is required (--domain)".into()))?;
    let dataset = load_input(&input, cfg.format)?;
    let ranked = top_features(&dataset, &domain, cfg.top_n)?;
    let out = resolve_out(cfg.out.clone(), root)?;
    ensure_parent(&out)?;
    write(&out, features_tsv(&ranked))?;
    finish("features", &cfg, sibling(&out, ".config.toml"), sibling(&out, ".run.json"), vec![out])
}
