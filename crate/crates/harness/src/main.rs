use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use figqa::annotation::{
    agreement_from_records, apply_scores, scores_from_export, AnnotationStore, ExportRecord,
};
use figqa::config::{self, ConfigError, FileConfig, ModelSection};
use figqa::core::corpus::{
    bin_by_figurativeness, extract_comparator_sentences, split_stats, BinMode, COMPARATOR_PATTERNS,
};
use figqa::core::prompts::PromptTemplate;
use figqa::core::stats::{
    breakdown_report, figurativeness_gain_curve, BreakdownOptions, Pairing, WilcoxonOptions,
    ZeroMethod, DEFAULT_ALPHA, DEFAULT_RESAMPLES,
};
use figqa::core::{CandidateContext, ModelSpec, RunRecord, Strategy, StrategyConfig, WireFormat};
use figqa::finetune::{emit_finetune_file, FinetuneFormat};
use figqa::gateway::{Backend, Gateway, HttpBackend, RoutingBackend, DEFAULT_JOBS};
use figqa::io::{
    load_dataset, read_jsonl, read_qa_csv, read_reviews, save_dataset, write_atomic, write_jsonl,
    Document,
};
use figqa::pipeline::{self, generate_synthetic_qa, persist_run, run_experiment, simplify_context};
use figqa::{report, selftest};
use serde::Serialize;

const DEFAULT_CACHE_DIR: &str = "cache";

/// Figurative-language yes/no QA harness.
#[derive(Parser)]
#[command(name = "figqa", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a QA dataset (JSONL or CSV), print split statistics and
    /// optionally write it back as canonical JSONL.
    Ingest(IngestArgs),
    /// Mine review text for sentences containing comparator patterns.
    Extract(ExtractArgs),
    /// Rewrite every dataset context literally.
    Simplify(SimplifyArgs),
    /// Run one answering strategy over a dataset.
    Run(RunArgs),
    /// Generate synthetic QA pairs and a fine-tune file from candidates.
    Synth(SynthArgs),
    /// Breakdown table with bootstrap means and significance markers.
    Report(ReportArgs),
    /// Accuracy gain per figurativeness bin between two runs.
    Bins(BinsArgs),
    /// Inter-annotator agreement on an annotation export.
    Agree(AgreeArgs),
    /// Serve the annotation API and UI bundle.
    Serve(ServeArgs),
    /// Run the statistics oracle suite.
    Selftest,
}

/// Flags shared by commands that call a model; they override the config.
#[derive(Args, Clone, Default)]
struct ModelFlags {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Endpoint base URL (`https://.../v1`) or `scripted:<fixture.json>`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Environment variable holding the API key (default OPENAI_API_KEY).
    #[arg(long)]
    api_key_env: Option<String>,
    /// `chat` or `completions`.
    #[arg(long, value_parser = parse_wire)]
    wire: Option<WireFormat>,
    /// Response cache directory (default `cache`).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Maximum in-flight requests (default 4).
    #[arg(long)]
    jobs: Option<usize>,
}

impl ModelFlags {
    fn section(&self) -> ModelSection {
        ModelSection {
            endpoint_url: self.backend.clone(),
            model_name: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            api_key_env: self.api_key_env.clone(),
            wire: self.wire,
        }
    }

    fn file(&self) -> Result<FileConfig, ConfigError> {
        FileConfig::load_optional(self.config.as_deref())
    }

    fn cache_dir(&self, file: &FileConfig) -> PathBuf {
        self.cache_dir
            .clone()
            .or_else(|| file.run.cache_dir.clone().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
    }

    fn gateway(&self, file: &FileConfig) -> Gateway {
        let backend = RoutingBackend::new(HttpBackend::ureq());
        Gateway::new(Arc::new(backend) as Arc<dyn Backend>)
            .with_cache(self.cache_dir(file))
            .with_jobs(self.jobs.or(file.run.jobs).unwrap_or(DEFAULT_JOBS))
    }
}

fn parse_wire(s: &str) -> Result<WireFormat, String> {
    match s {
        "chat" => Ok(WireFormat::Chat),
        "completions" => Ok(WireFormat::Completions),
        _ => Err(format!("`{s}` is not chat or completions")),
    }
}

#[derive(Args)]
struct IngestArgs {
    /// `.csv` for a QA table, anything else is read as JSONL.
    input: PathBuf,
    /// Write the validated dataset here as canonical JSONL.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    /// CSV/TSV of reviews, or `.jsonl` with `{id, text}` records.
    reviews: PathBuf,
    #[arg(long, default_value = "text")]
    text_column: String,
    #[arg(long)]
    id_column: Option<String>,
    /// Comma-separated patterns (default like,as,than).
    #[arg(long, value_delimiter = ',')]
    patterns: Option<Vec<String>>,
    #[arg(long)]
    case_sensitive: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "candidates.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct SimplifyArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "simplified.jsonl")]
    out: PathBuf,
    #[arg(long)]
    system_message: Option<String>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct RunArgs {
    /// direct_zero, direct_few, simplify_then_answer or cot.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    dataset: PathBuf,
    /// Run directory (default `runs/<run id>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simplifier endpoint; defaults to the answerer's.
    #[arg(long)]
    simplifier_backend: Option<String>,
    /// Simplifier model; defaults to the answerer's.
    #[arg(long)]
    simplifier_model: Option<String>,
    #[arg(long)]
    system_message: Option<String>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// JSONL of candidate contexts, as written by `extract`.
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long, default_value = "synth")]
    out_dir: PathBuf,
    /// prompt_completion or chat.
    #[arg(long, default_value = "prompt_completion", value_parser = parse_format)]
    format: FinetuneFormat,
    /// Use the exemplar with its stray `the?` removed.
    #[arg(long)]
    normalized_exemplar: bool,
    #[command(flatten)]
    model: ModelFlags,
}

fn parse_format(s: &str) -> Result<FinetuneFormat, String> {
    FinetuneFormat::parse(s).ok_or_else(|| format!("`{s}` is not prompt_completion or chat"))
}

#[derive(Args, Clone)]
struct StatsFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_resamples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// resamples (default) or per_item.
    #[arg(long)]
    pairing: Option<String>,
    /// wilcox (default, discard zeros) or pratt.
    #[arg(long)]
    zero_method: Option<String>,
}

impl StatsFlags {
    fn options(&self) -> Result<BreakdownOptions> {
        let file = FileConfig::load_optional(self.config.as_deref())?.stats;
        let pairing = match self.pairing.clone().or(file.pairing).as_deref() {
            None | Some("resamples") => Pairing::Resamples,
            Some("per_item") => Pairing::PerItem,
            Some(other) => bail!(ConfigError::Invalid(format!("unknown pairing `{other}`"))),
        };
        let zero_method = match self.zero_method.clone().or(file.zero_method).as_deref() {
            None | Some("wilcox") => ZeroMethod::Wilcox,
            Some("pratt") => ZeroMethod::Pratt,
            Some(other) => bail!(ConfigError::Invalid(format!(
                "unknown zero method `{other}`"
            ))),
        };
        Ok(BreakdownOptions {
            n_resamples: self
                .n_resamples
                .or(file.n_resamples)
                .unwrap_or(DEFAULT_RESAMPLES),
            seed: self.seed.or(file.seed).unwrap_or(0),
            alpha: self.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
            pairing,
            wilcoxon: WilcoxonOptions {
                zero_method,
                ..WilcoxonOptions::default()
            },
        })
    }
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated run directories; rows are named after them.
    #[arg(long, value_delimiter = ',', required = true)]
    runs: Vec<PathBuf>,
    /// text, csv or json.
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    stats: StatsFlags,
}

#[derive(Args)]
struct BinsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    method: PathBuf,
    #[arg(long, default_value_t = 4)]
    bins: usize,
    /// equal_width or quantile.
    #[arg(long, default_value = "equal_width")]
    mode: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AgreeArgs {
    /// Batch export (JSONL) from the annotation service.
    export: PathBuf,
    /// Merge exported figurativeness scores into this dataset...
    #[arg(long, requires = "out")]
    dataset: Option<PathBuf>,
    /// ...and write the result here.
    #[arg(long, requires = "dataset")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Append-only judgment log.
    #[arg(long, default_value = "annotations.jsonl")]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory with the built UI bundle.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

/// Outcome of a command that finished without a hard error.
enum Outcome {
    Clean,
    Partial,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(Into::into),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ingest(args: IngestArgs) -> Result<Outcome> {
    let is_csv = args.input.extension().and_then(|e| e.to_str()) == Some("csv");
    let dataset = if is_csv {
        read_qa_csv(&args.input)?
    } else {
        load_dataset(&args.input)?
    };
    print!("{}", split_stats(&dataset));
    println!("digest {}", dataset.digest());
    if let Some(out) = &args.out {
        save_dataset(&dataset, out)?;
        eprintln!("wrote {} instances to {}", dataset.len(), out.display());
    }
    Ok(Outcome::Clean)
}

fn extract(args: ExtractArgs) -> Result<Outcome> {
    let file = FileConfig::load_optional(args.config.as_deref())?.extract;
    let docs: Vec<Document> = if args.reviews.extension().and_then(|e| e.to_str()) == Some("jsonl")
    {
        read_jsonl(&args.reviews)?
    } else {
        read_reviews(&args.reviews, &args.text_column, args.id_column.as_deref())?
    };
    let patterns: Vec<String> = args
        .patterns
        .or(file.patterns)
        .unwrap_or_else(|| COMPARATOR_PATTERNS.iter().map(|s| s.to_string()).collect());
    let case_sensitive = args.case_sensitive || file.case_sensitive.unwrap_or(false);
    let pairs: Vec<(&str, &str)> = docs
        .iter()
        .map(|d| (d.id.as_str(), d.text.as_str()))
        .collect();
    let refs: Vec<&str> = patterns.iter().map(String::as_str).collect();
    let candidates = extract_comparator_sentences(&pairs, &refs, case_sensitive);
    write_jsonl(&args.out, &candidates)?;
    eprintln!(
        "{} candidate sentences from {} documents -> {}",
        candidates.len(),
        docs.len(),
        args.out.display()
    );
    Ok(Outcome::Clean)
}

#[derive(Serialize)]
struct SimplifiedRecord {
    id: String,
    context: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    literal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn simplify(args: SimplifyArgs) -> Result<Outcome> {
    let file = args.model.file()?;
    let spec = file
        .simplifier
        .overlay(&args.model.section())
        .resolve("simplifier", config::simplify_preset)?;
    let dataset = load_dataset(&args.dataset)?;
    let gateway = args.model.gateway(&file);
    let system = args.system_message.or(file.run.system_message.clone());
    let template = match system {
        Some(s) => PromptTemplate::simplify().with_system_message(s),
        None => PromptTemplate::simplify(),
    };
    let records = pipeline::ordered_parallel_map(dataset.instances(), gateway.jobs(), |inst| {
        let r = simplify_context(&inst.id, &inst.context, &spec, &template, &gateway);
        SimplifiedRecord {
            id: inst.id.clone(),
            context: inst.context.clone(),
            literal: r.as_ref().ok().cloned(),
            error: r.err().map(|e| e.to_string()),
        }
    });
    write_jsonl(&args.out, &records)?;
    let failed: Vec<&SimplifiedRecord> = records.iter().filter(|r| r.error.is_some()).collect();
    report_failures(
        failed.iter().filter_map(|r| r.error.as_deref()),
        failed.len(),
        records.len(),
    );
    eprintln!("wrote {}", args.out.display());
    Ok(if failed.is_empty() {
        Outcome::Clean
    } else {
        Outcome::Partial
    })
}

fn report_failures<'a>(errors: impl Iterator<Item = &'a str>, failed: usize, total: usize) {
    if failed == 0 {
        return;
    }
    eprintln!("{failed} of {total} instances failed");
    let mut distinct: Vec<&str> = Vec::new();
    for e in errors {
        // drop the `instance <id>: ` prefix so identical causes group
        let cause = e.split_once(": ").map_or(e, |(_, rest)| rest);
        if !distinct.contains(&cause) {
            distinct.push(cause);
        }
    }
    for cause in distinct.iter().take(5) {
        eprintln!("  {cause}");
    }
}

fn strategy_config(args: &RunArgs, file: &FileConfig) -> Result<StrategyConfig> {
    let name = args
        .strategy
        .clone()
        .or_else(|| file.run.strategy.clone())
        .ok_or_else(|| ConfigError::Missing("run.strategy".into()))?;
    let strategy = Strategy::parse(&name).ok_or_else(|| {
        ConfigError::Invalid(format!(
            "unknown strategy `{name}` (expected one of {})",
            Strategy::ALL.map(Strategy::as_str).join(", ")
        ))
    })?;
    let preset = if strategy == Strategy::Cot {
        config::cot_preset
    } else {
        config::qa_preset
    };
    let answerer_section = file.answerer.overlay(&args.model.section());
    let answerer = answerer_section.resolve("answerer", preset)?;
    let cache_dir = args.model.cache_dir(file);
    let mut cfg = StrategyConfig::new(strategy, answerer, cache_dir.to_string_lossy());
    cfg.system_message = args
        .system_message
        .clone()
        .or(file.run.system_message.clone());
    if strategy == Strategy::SimplifyThenAnswer {
        // unset simplifier keys fall back to the answerer's endpoint and model
        let base = ModelSection {
            endpoint_url: answerer_section.endpoint_url.clone(),
            model_name: answerer_section.model_name.clone(),
            api_key_env: answerer_section.api_key_env.clone(),
            wire: answerer_section.wire,
            ..Default::default()
        };
        let section = base.overlay(&file.simplifier).overlay(&ModelSection {
            endpoint_url: args.simplifier_backend.clone(),
            model_name: args.simplifier_model.clone(),
            ..Default::default()
        });
        cfg = cfg.with_simplifier(section.resolve("simplifier", config::simplify_preset)?);
    }
    cfg.validate().map_err(ConfigError::Invalid)?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<Outcome> {
    let file = args.model.file()?;
    let cfg = strategy_config(&args, &file)?;
    let dataset = load_dataset(&args.dataset)?;
    let gateway = args.model.gateway(&file);
    let record = run_experiment(&dataset, &cfg, &gateway)?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(&record.run_id));
    persist_run(&record, &dir)?;
    println!("{}", dir.display());
    eprintln!(
        "{}: accuracy {:.4} on {} instances, {} backend calls",
        record.run_id,
        record.accuracy().unwrap_or(0.0),
        dataset.len(),
        gateway.backend_calls()
    );
    let failed = record.failed_ids();
    report_failures(
        record.predictions.iter().filter_map(|p| p.error.as_deref()),
        failed.len(),
        dataset.len(),
    );
    Ok(if record.is_clean() {
        Outcome::Clean
    } else {
        Outcome::Partial
    })
}

fn synth(args: SynthArgs) -> Result<Outcome> {
    let file = args.model.file()?;
    let spec: ModelSpec = file
        .generator
        .overlay(&args.model.section())
        .resolve("generator", config::synthetic_preset)?;
    let candidates: Vec<CandidateContext> = read_jsonl(&args.candidates)?;
    let gateway = args.model.gateway(&file);
    let template = if args.normalized_exemplar {
        PromptTemplate::synthetic_normalized()
    } else {
        PromptTemplate::synthetic()
    };
    let report = generate_synthetic_qa(&candidates, &spec, &template, &gateway);
    write_jsonl(&args.out_dir.join("synthetic.jsonl"), &report.items)?;
    write_jsonl(&args.out_dir.join("dropped.jsonl"), &report.dropped)?;
    let n = emit_finetune_file(
        &report.items,
        &args.out_dir.join("finetune.jsonl"),
        args.format,
    )?;
    println!(
        "yes {} no {} total {} dropped {}",
        report.yes,
        report.no,
        n,
        report.dropped.len()
    );
    for d in &report.dropped {
        eprintln!("dropped {}: {}", d.origin.origin, d.reason);
    }
    let call_failures = report.dropped.iter().filter(|d| d.call_failed).count();
    Ok(if call_failures == 0 {
        Outcome::Clean
    } else {
        Outcome::Partial
    })
}

fn load_runs(dirs: &[PathBuf]) -> Result<Vec<(String, RunRecord)>> {
    let mut out: Vec<(String, RunRecord)> = Vec::new();
    for dir in dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("{}: not a run directory", dir.display()))?;
        if out.iter().any(|(n, _)| *n == name) {
            bail!(ConfigError::Invalid(format!("two runs are named `{name}`")));
        }
        let record =
            pipeline::load_run(dir).with_context(|| format!("loading run {}", dir.display()))?;
        out.push((name, record));
    }
    Ok(out)
}

fn report_cmd(args: ReportArgs) -> Result<Outcome> {
    let options = args.stats.options()?;
    let dataset = load_dataset(&args.dataset)?;
    let runs = load_runs(&args.runs)?;
    let report = breakdown_report(runs.iter().map(|(n, r)| (n.as_str(), r)), &dataset, options)?;
    let text = match args.format.as_str() {
        "text" => report::breakdown_text(&report),
        "csv" => report::breakdown_csv(&report),
        "json" => report::breakdown_json(&report),
        other => bail!(ConfigError::Invalid(format!(
            "unknown report format `{other}`"
        ))),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(Outcome::Clean)
}

fn bins(args: BinsArgs) -> Result<Outcome> {
    let mode = match args.mode.as_str() {
        "equal_width" => BinMode::EqualWidth,
        "quantile" => BinMode::Quantile,
        other => bail!(ConfigError::Invalid(format!("unknown bin mode `{other}`"))),
    };
    let dataset = load_dataset(&args.dataset)?;
    let runs = load_runs(&[args.baseline.clone(), args.method.clone()])?;
    for (name, run) in &runs {
        run.check_dataset(&dataset)
            .with_context(|| format!("run {name} does not match the dataset"))?;
    }
    let scored: Vec<_> = dataset
        .instances()
        .iter()
        .filter(|i| i.figurativeness.is_some())
        .cloned()
        .collect();
    let bins = bin_by_figurativeness(&scored, args.bins, mode)?;
    let rows = figurativeness_gain_curve(&bins, &runs[0].1, &runs[1].1)?;
    emit(args.out.as_deref(), &report::gain_csv(&rows))?;
    Ok(Outcome::Clean)
}

fn agree(args: AgreeArgs) -> Result<Outcome> {
    let records: Vec<ExportRecord> = read_jsonl(&args.export)?;
    let first = records
        .first()
        .ok_or_else(|| anyhow!("{}: export is empty", args.export.display()))?;
    let summary = agreement_from_records(&first.batch_id, first.kind, &records)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let (Some(dataset), Some(out)) = (&args.dataset, &args.out) {
        let scores = scores_from_export(&records)?;
        let merged = apply_scores(&load_dataset(dataset)?, &scores)?;
        save_dataset(&merged, out)?;
        eprintln!(
            "merged scores for {} items into {}",
            scores.len(),
            out.display()
        );
    }
    Ok(Outcome::Clean)
}

fn serve(args: ServeArgs) -> Result<Outcome> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| ConfigError::Invalid(format!("listen address: {e}")))?;
    let store = Arc::new(AnnotationStore::open(&args.store)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(figqa::annotation::serve(store, addr, args.static_dir))?;
    Ok(Outcome::Clean)
}

fn selftest_cmd() -> Result<Outcome> {
    let mut ok = true;
    for c in selftest::run_all() {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    if ok {
        Ok(Outcome::Clean)
    } else {
        bail!("statistics self-test failed")
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Extract(a) => extract(a),
        Command::Simplify(a) => simplify(a),
        Command::Run(a) => run(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => report_cmd(a),
        Command::Bins(a) => bins(a),
        Command::Agree(a) => agree(a),
        Command::Serve(a) => serve(a),
        Command::Selftest => selftest_cmd(),
    };
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
