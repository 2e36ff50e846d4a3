use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use cascade::config::FileConfig;
use cascade::engine::{self, Pinned, ScanConfig};
use cascade::formats;
use cascade::sidecar::{Endpoint, SidecarClient};
use cascade::{fixtures, workload};
use cascade_core::extract::extract_explained;
use cascade_core::labels::LabelSnapshot;
use cascade_core::matcher::{generalize, CompiledPattern, DEFAULT_LAMBDA, DEFAULT_TAU};
use cascade_core::metrics::Label;
use cascade_core::primitives::to_hex;
use cascade_core::semantics::{persist_new_category, Cheatsheet, ClassifierBoundary, ClassifierPolicy};
use cascade_core::synth::{benign_suite, synth_corpus, synth_seeds, MutationSpec, SeedSpec};
use cascade_core::tuner::{nested_cv, Grid, Ratio, TuneConfig};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

const EXIT_FATAL: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Seed cheatsheet shipped with the binary; its hash is part of `--version`.
const SEED_CHEATSHEET: &str = include_str!("../data/seed_cheatsheet.json");

/// Detects imitative DeFi attacks by matching transaction traces against
/// patterns generalized from confirmed attacks.
#[derive(Parser)]
#[command(name = "cascade", disable_version_flag = true)]
struct Cli {
    /// Print component versions and the hashes of the pinned cheatsheet and
    /// label snapshot.
    #[arg(short = 'V', long)]
    version: bool,
    /// TOML config file (default: ./cascade.toml when present).
    #[arg(long, global = true, env = "CASCADE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Label snapshot maintenance.
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Cheatsheet maintenance.
    #[command(subcommand)]
    Cheatsheet(CheatsheetCommand),
    /// Extract attacker logic from raw traces (JSON-lines in, JSON-lines out).
    Extract(ExtractArgs),
    /// Generalize one confirmed attack's logic into a pattern file.
    Generalize(GeneralizeArgs),
    /// Scan a trace stream against a pattern directory.
    Scan(ScanArgs),
    /// Select (lambda, tau) by nested family-aware cross-validation.
    Tune(TuneArgs),
    /// Repeated scans of a trace corpus plus the matcher scaling table.
    Bench(BenchArgs),
    /// Generate a synthetic labeled corpus of imitations and benign logic.
    Synth(SynthArgs),
    /// Generate a synthetic raw-trace workload (traces, labels, seed attacks).
    Workload(WorkloadArgs),
    /// Write the handcrafted raw-trace fixtures.
    Fixtures(FixturesArgs),
}

#[derive(Subcommand)]
enum LabelsCommand {
    /// Merge label CSVs and core registries into a snapshot file.
    Load {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Load timestamp (Unix seconds); defaults to now.
        #[arg(long)]
        loaded_at: Option<u64>,
    },
}

#[derive(Subcommand)]
enum CheatsheetCommand {
    /// Classify every unknown signature in a trace stream and persist the
    /// new categories into a successor cheatsheet.
    Extend {
        #[command(flatten)]
        pinned: PinnedArgs,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Inputs shared by every command that extracts logic.
#[derive(Args, Clone)]
struct PinnedArgs {
    /// Label snapshot file.
    #[arg(long, env = "CASCADE_LABELS")]
    labels: Option<PathBuf>,
    /// Cheatsheet file.
    #[arg(long, env = "CASCADE_CHEATSHEET")]
    cheatsheet: Option<PathBuf>,
    /// Classifier endpoint, `HOST:PORT` or `unix:PATH`; the local fallback
    /// is used when absent.
    #[arg(long, env = "CASCADE_CLASSIFIER")]
    classifier: Option<String>,
    /// Classifier answers below this confidence become new categories.
    #[arg(long, env = "CASCADE_MIN_CONFIDENCE")]
    min_confidence: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    pinned: PinnedArgs,
    /// Raw traces, JSON-lines (`-` for standard input).
    #[arg(long)]
    traces: PathBuf,
    /// Also write per-invocation decisions as JSON-lines to standard error.
    #[arg(long)]
    explain: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GeneralizeArgs {
    /// ExtractedLogic JSON-lines holding exactly one attack.
    #[arg(long)]
    attack_logic: PathBuf,
    #[arg(long, env = "CASCADE_LAMBDA")]
    lambda: Option<f64>,
    #[arg(long, env = "CASCADE_TAU")]
    tau: Option<f64>,
    /// Creation timestamp (Unix seconds); defaults to now.
    #[arg(long)]
    created_at: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    pinned: PinnedArgs,
    /// Raw traces, JSON-lines (`-` for standard input).
    #[arg(long)]
    traces: PathBuf,
    /// Directory of pattern files.
    #[arg(long, env = "CASCADE_PATTERNS")]
    patterns: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Attach extraction decisions to each result line.
    #[arg(long)]
    explain: bool,
    /// Results file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report file (default: standard error).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EngineArgs {
    #[arg(long, env = "CASCADE_WORKERS")]
    workers: Option<usize>,
    /// Emit results in input order.
    #[arg(long)]
    ordered: bool,
    /// Per-trace time budget in seconds.
    #[arg(long, env = "CASCADE_TRACE_BUDGET")]
    trace_budget: Option<f64>,
}

#[derive(Args)]
struct TuneArgs {
    /// Labeled corpus, JSON-lines.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 4)]
    folds: usize,
    #[arg(long, default_value_t = 0.02)]
    grid_step: f64,
    /// Inner split holds out one part in this many.
    #[arg(long, default_value_t = 10)]
    inner_parts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    pinned: PinnedArgs,
    /// Raw traces, JSON-lines.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, env = "CASCADE_PATTERNS")]
    patterns: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Seed attack logics, JSON-lines; generated from `--seed` when absent.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Synthesis spec (TOML or JSON); the cascade mutation defaults when
    /// absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "1:5")]
    ratio: Ratio,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WorkloadArgs {
    #[arg(long, default_value_t = 11)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    families: usize,
    #[arg(long, default_value_t = 10)]
    imitations: usize,
    #[arg(long, default_value_t = 1000)]
    benign: usize,
    /// Directory receiving traces.jsonl, seeds.jsonl, labels.csv and truth.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FixturesArgs {
    /// Directory receiving attack.jsonl, imitations.jsonl, benign.jsonl and labels.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Synthesis spec file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSpec {
    mutation: Option<MutationSpec>,
    #[serde(default = "default_imitations")]
    imitations_per_seed: usize,
    #[serde(default = "default_benign_per_kind")]
    benign_per_kind: usize,
    seeds: Option<SeedSpec>,
}

fn default_imitations() -> usize {
    10
}

fn default_benign_per_kind() -> usize {
    1000
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Fatal(String),
    #[error("{0}")]
    Usage(String),
}

type CliResult = Result<ExitCode, CliError>;

fn fatal(e: impl std::fmt::Display) -> CliError {
    CliError::Fatal(e.to_string())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| fatal(format!("cannot write {}: {e}", p.display()))),
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(fatal),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| fatal(format!("cannot create {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

struct Loaded {
    labels: LabelSnapshot,
    cheatsheet: Cheatsheet,
    classifier: Option<Arc<dyn ClassifierBoundary>>,
    policy: ClassifierPolicy,
}

fn load_pinned(args: &PinnedArgs, file: &FileConfig) -> Result<Loaded, CliError> {
    let labels_path = args
        .labels
        .clone()
        .ok_or_else(|| CliError::Usage("--labels SNAPSHOT is required".into()))?;
    let cheatsheet_path = args
        .cheatsheet
        .clone()
        .or_else(|| file.cheatsheet.clone())
        .ok_or_else(|| CliError::Usage("--cheatsheet FILE is required".into()))?;
    let labels = formats::read_snapshot(&labels_path).map_err(fatal)?;
    let cheatsheet = formats::read_cheatsheet(&cheatsheet_path).map_err(fatal)?;
    let classifier = match args.classifier.clone().or_else(|| file.classifier.clone()) {
        Some(addr) => {
            let endpoint: Endpoint = addr.parse().map_err(CliError::Usage)?;
            let timeout = file
                .classifier_timeout_secs
                .map_or(cascade::sidecar::DEFAULT_TIMEOUT, Duration::from_secs);
            Some(Arc::new(SidecarClient::new(endpoint, timeout)) as Arc<dyn ClassifierBoundary>)
        }
        None => None,
    };
    let min_confidence = args.min_confidence.or(file.min_confidence).unwrap_or(0.0);
    if !(0.0..=1.0).contains(&min_confidence) {
        return Err(CliError::Usage(format!("min confidence {min_confidence} outside [0, 1]")));
    }
    Ok(Loaded {
        labels,
        cheatsheet,
        classifier,
        policy: ClassifierPolicy { min_confidence },
    })
}

impl PinnedArgs {
    /// Resolves the labels path against the config file as well.
    fn with_file(mut self, file: &FileConfig) -> Self {
        if self.labels.is_none() {
            self.labels = file.labels.as_ref().and_then(|l| l.first().cloned());
        }
        self
    }
}

fn pinned_for_scan(args: &PinnedArgs, patterns_dir: Option<&PathBuf>, file: &FileConfig) -> Result<Pinned, CliError> {
    let dir = patterns_dir
        .cloned()
        .or_else(|| file.patterns.clone())
        .ok_or_else(|| CliError::Usage("--patterns DIR is required".into()))?;
    let loaded = load_pinned(&args.clone().with_file(file), file)?;
    let patterns = formats::read_pattern_dir(&dir).map_err(fatal)?;
    let mut pinned = Pinned::new(loaded.labels, loaded.cheatsheet, patterns);
    pinned.classifier = loaded.classifier;
    pinned.policy = loaded.policy;
    Ok(pinned)
}

fn scan_config(args: &EngineArgs, explain: bool, file: &FileConfig) -> Result<ScanConfig, CliError> {
    let worker_count = args.workers.or(file.workers).unwrap_or(1);
    if worker_count == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    let budget = args.trace_budget.or(file.trace_budget_secs);
    let trace_budget = match budget {
        Some(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
        Some(s) => return Err(CliError::Usage(format!("trace budget {s} must be positive"))),
        None => engine::DEFAULT_TRACE_BUDGET,
    };
    Ok(ScanConfig {
        worker_count,
        ordered: args.ordered || file.ordered.unwrap_or(false),
        explain,
        trace_budget,
    })
}

fn cmd_labels_load(inputs: &[PathBuf], out: &Path, loaded_at: Option<u64>) -> CliResult {
    let (snapshot, stats) = formats::load_labels(inputs, loaded_at.unwrap_or_else(now)).map_err(fatal)?;
    fs::write(out, formats::snapshot_to_json(&snapshot))
        .map_err(|e| fatal(format!("cannot write {}: {e}", out.display())))?;
    eprintln!(
        "loaded {} entries from {} files ({} csv rows, {} registry rows, {} conflicts within a source); hash {}",
        snapshot.len(),
        stats.files,
        stats.rows,
        stats.registry_rows,
        stats.conflicts_within_source,
        to_hex(&snapshot.content_hash())
    );
    Ok(ExitCode::SUCCESS)
}

/// Extracts every trace of a stream in input order, calling `each` with the
/// result; returns the number of skipped lines.
fn for_each_extraction(
    loaded: &Loaded,
    traces: &Path,
    mut each: impl FnMut(cascade_core::extract::Extraction) -> Result<(), CliError>,
) -> Result<u64, CliError> {
    let ctx = cascade_core::extract::ExtractContext {
        labels: &loaded.labels,
        cheatsheet: &loaded.cheatsheet,
        classifier: loaded.classifier.as_deref(),
        policy: loaded.policy,
        fallback_on_unavailable: true,
    };
    let input = formats::open_lines(traces).map_err(|e| fatal(format!("cannot open {}: {e}", traces.display())))?;
    let mut skipped = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| fatal(format!("{}: {e}", traces.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = formats::parse_trace(line.as_bytes())
            .map_err(|e| e.to_string())
            .and_then(|p| extract_explained(&p.trace, &ctx).map_err(|e| e.to_string()));
        match outcome {
            Ok(extraction) => each(extraction)?,
            Err(e) => {
                eprintln!("{}:{}: skipped: {e}", traces.display(), i + 1);
                skipped += 1;
            }
        }
    }
    Ok(skipped)
}

fn cmd_extract(args: &ExtractArgs, file: &FileConfig) -> CliResult {
    let loaded = load_pinned(&args.pinned.clone().with_file(file), file)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut stderr = io::stderr().lock();
    let skipped = for_each_extraction(&loaded, &args.traces, |ex| {
        serde_json::to_writer(&mut out, &ex.logic).map_err(fatal)?;
        out.write_all(b"\n").map_err(fatal)?;
        if args.explain {
            #[derive(serde::Serialize)]
            struct Dump<'a> {
                tx_hash: cascade_core::primitives::TxHash,
                lift_rounds: u32,
                lift_truncated: bool,
                records: &'a [cascade_core::extract::ExplainRecord],
            }
            serde_json::to_writer(
                &mut stderr,
                &Dump {
                    tx_hash: ex.logic.tx_hash,
                    lift_rounds: ex.lift_rounds,
                    lift_truncated: ex.lift_truncated,
                    records: &ex.explain,
                },
            )
            .map_err(fatal)?;
            stderr.write_all(b"\n").map_err(fatal)?;
        }
        Ok(())
    })?;
    out.flush().map_err(fatal)?;
    Ok(if skipped > 0 { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn cmd_cheatsheet_extend(pinned: &PinnedArgs, traces: &Path, out: &Path, file: &FileConfig) -> CliResult {
    let loaded = load_pinned(&pinned.clone().with_file(file), file)?;
    let mut outcomes = Vec::new();
    let skipped = for_each_extraction(&loaded, traces, |ex| {
        outcomes.extend(ex.new_categories);
        Ok(())
    })?;
    let mut sheet = loaded.cheatsheet;
    let mut added = 0;
    for outcome in &outcomes {
        let next = persist_new_category(&sheet, outcome).map_err(fatal)?;
        if next.version() != sheet.version() {
            added += 1;
        }
        sheet = next;
    }
    fs::write(out, formats::cheatsheet_to_json(&sheet)).map_err(|e| fatal(format!("cannot write {}: {e}", out.display())))?;
    eprintln!(
        "persisted {added} new mappings; cheatsheet {} ({} categories, {} signatures)",
        sheet.version(),
        sheet.category_count(),
        sheet.len()
    );
    Ok(if skipped > 0 { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn check_unit(name: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} {v} outside [0, 1]")))
    }
}

fn cmd_generalize(args: &GeneralizeArgs, file: &FileConfig) -> CliResult {
    let lambda = check_unit("lambda", args.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA))?;
    let tau = check_unit("tau", args.tau.or(file.tau).unwrap_or(DEFAULT_TAU))?;
    let logics = formats::read_logic_lines(&args.attack_logic).map_err(fatal)?;
    let [logic] = logics.as_slice() else {
        return Err(fatal(format!(
            "{}: expected exactly one attack logic, found {}",
            args.attack_logic.display(),
            logics.len()
        )));
    };
    let pattern = generalize(logic, lambda, tau, args.created_at.unwrap_or_else(now)).map_err(fatal)?;
    let self_match = CompiledPattern::new(pattern.clone()).match_logic(logic);
    fs::write(&args.out, formats::pattern_to_json(&pattern))
        .map_err(|e| fatal(format!("cannot write {}: {e}", args.out.display())))?;
    eprintln!(
        "pattern {}: {} core + {} protocol keys; self-match sim_final={} flagged={}",
        pattern.pattern_id(),
        pattern.core_set().len(),
        pattern.proto_set().len(),
        self_match.sim_final,
        self_match.flagged
    );
    if !self_match.flagged {
        return Err(fatal("generalized pattern does not flag its own source trace"));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan(args: &ScanArgs, file: &FileConfig) -> CliResult {
    let pinned = pinned_for_scan(&args.pinned, args.patterns.as_ref(), file)?;
    let config = scan_config(&args.engine, args.explain, file)?;
    let input =
        formats::open_lines(&args.traces).map_err(|e| fatal(format!("cannot open {}: {e}", args.traces.display())))?;
    let report = match &args.out {
        Some(p) => engine::scan(input, &mut create(p)?, &pinned, &config),
        None => engine::scan(input, &mut BufWriter::new(io::stdout().lock()), &pinned, &config),
    }
    .map_err(fatal)?;
    let text = to_json(&report);
    match &args.report {
        Some(p) => fs::write(p, text).map_err(|e| fatal(format!("cannot write {}: {e}", p.display())))?,
        None => eprint!("{text}"),
    }
    Ok(if report.has_line_errors() { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}

fn cmd_tune(args: &TuneArgs) -> CliResult {
    let corpus = formats::read_corpus(&args.corpus).map_err(fatal)?;
    let grid = Grid::with_step(args.grid_step).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = TuneConfig {
        outer_folds: args.folds,
        inner_parts: args.inner_parts,
        grid,
        seed: args.seed,
    };
    let result = nested_cv(&corpus, &config).map_err(fatal)?;
    for f in &result.per_fold {
        eprintln!("{}", cascade_core::tuner::describe_fold(f));
    }
    eprintln!(
        "selected lambda={} tau={} over {} grid points",
        result.best_lambda,
        result.best_tau,
        result.grid.len()
    );
    write_output(None, &to_json(&result))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: &BenchArgs, file: &FileConfig) -> CliResult {
    let pinned = pinned_for_scan(&args.pinned, args.patterns.as_ref(), file)?;
    let config = scan_config(&args.engine, false, file)?;
    let corpus = fs::read_to_string(&args.corpus).map_err(|e| fatal(format!("cannot read {}: {e}", args.corpus.display())))?;
    let report = engine::bench(&corpus, &pinned, &config, args.reps).map_err(|e| match e {
        engine::BenchError::TooFewRepetitions(_) => CliError::Usage(e.to_string()),
        e => fatal(e),
    })?;
    eprintln!(
        "{} traces, median wall {:.3}s, {:.0} TPS",
        report.report.total, report.report.wall_time, report.report.throughput_tps
    );
    for row in &report.scaling {
        eprintln!(
            "  match {:>4} items vs {} keys: median {:.2}us, max {:.2}us{}",
            row.candidate_len,
            engine::SCALING_PATTERN_KEYS,
            row.median * 1e6,
            row.max * 1e6,
            row.ratio_to_previous.map_or(String::new(), |r| format!(", x{r:.2} per doubling"))
        );
    }
    write_output(None, &to_json(&report))?;
    Ok(ExitCode::SUCCESS)
}

fn read_spec(path: &Path) -> Result<SynthSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| fatal(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| fatal(format!("{}: {e}", path.display())))
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let spec = match &args.spec {
        Some(p) => read_spec(p)?,
        None => SynthSpec {
            mutation: None,
            imitations_per_seed: default_imitations(),
            benign_per_kind: default_benign_per_kind(),
            seeds: None,
        },
    };
    let mut mutation = spec.mutation.unwrap_or_else(|| MutationSpec::cascade(args.seed));
    mutation.seed = args.seed;
    let seeds = match &args.seeds {
        Some(p) => formats::read_logic_lines(p).map_err(fatal)?,
        None => synth_seeds(&SeedSpec {
            seed: args.seed,
            ..spec.seeds.unwrap_or_default()
        }),
    };
    let pool = benign_suite(spec.benign_per_kind, args.seed);
    let corpus = synth_corpus(&seeds, &mutation, spec.imitations_per_seed, &pool, args.ratio).map_err(fatal)?;
    eprintln!(
        "{} malicious and {} benign entries from {} seeds at {}",
        corpus.count(Label::Malicious),
        corpus.count(Label::Benign),
        seeds.len(),
        args.ratio
    );
    write_output(args.out.as_deref(), &formats::corpus_to_jsonl(&corpus))?;
    Ok(ExitCode::SUCCESS)
}

fn write_traces<'a>(path: &Path, traces: impl IntoIterator<Item = &'a cascade_core::trace::Trace>) -> Result<(), CliError> {
    let mut out = create(path)?;
    for t in traces {
        writeln!(out, "{}", formats::trace_to_json(t)).map_err(fatal)?;
    }
    out.flush().map_err(fatal)
}

fn cmd_workload(args: &WorkloadArgs) -> CliResult {
    let spec = workload::WorkloadSpec {
        families: args.families,
        imitations_per_family: args.imitations,
        benign: args.benign,
        seed: args.seed,
        ..Default::default()
    };
    let w = workload::generate(&spec);
    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| fatal(format!("cannot create {}: {e}", dir.display())))?;
    write_traces(&dir.join("traces.jsonl"), w.stream.iter().map(|s| &s.trace))?;
    write_traces(&dir.join("seeds.jsonl"), &w.seeds)?;
    fs::write(dir.join("labels.csv"), formats::labels_to_csv(&w.labels)).map_err(fatal)?;
    let mut truth = String::from("tx_hash,label,family\n");
    for s in &w.stream {
        let label = if s.label == Label::Malicious { "MALICIOUS" } else { "BENIGN" };
        let family = s.family.map_or(String::new(), |f| f.to_string());
        truth.push_str(&format!("{},{label},{family}\n", s.trace.tx_hash));
    }
    fs::write(dir.join("truth.csv"), truth).map_err(fatal)?;
    eprintln!("{} traces ({} seeds) written to {}", w.stream.len(), w.seeds.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_fixtures(args: &FixturesArgs) -> CliResult {
    let w = fixtures::World::new();
    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| fatal(format!("cannot create {}: {e}", dir.display())))?;
    write_traces(&dir.join("attack.jsonl"), [&fixtures::attack(&w, &fixtures::Variant::seed(&w))])?;
    write_traces(&dir.join("imitations.jsonl"), &fixtures::imitations(&w))?;
    write_traces(&dir.join("benign.jsonl"), &fixtures::benign(&w))?;
    fs::write(dir.join("labels.csv"), formats::labels_to_csv(&w.labels())).map_err(fatal)?;
    Ok(ExitCode::SUCCESS)
}

fn print_version(file: &FileConfig) {
    println!("cascade {}", env!("CARGO_PKG_VERSION"));
    println!("trace format v1, logic fingerprint {:?}", String::from_utf8_lossy(cascade_core::extract::FINGERPRINT_HEADER).trim_end());
    match formats::parse_cheatsheet(Path::new("seed_cheatsheet.json"), SEED_CHEATSHEET) {
        Ok(s) => println!("bundled cheatsheet {} hash {}", s.version(), to_hex(&s.content_hash())),
        Err(e) => println!("bundled cheatsheet unreadable: {e}"),
    }
    let cheatsheet = std::env::var_os("CASCADE_CHEATSHEET").map(PathBuf::from).or_else(|| file.cheatsheet.clone());
    if let Some(p) = cheatsheet {
        match formats::read_cheatsheet(&p) {
            Ok(s) => println!("pinned cheatsheet {} {} hash {}", p.display(), s.version(), to_hex(&s.content_hash())),
            Err(e) => println!("pinned cheatsheet: {e}"),
        }
    }
    let labels = std::env::var_os("CASCADE_LABELS")
        .map(PathBuf::from)
        .or_else(|| file.labels.as_ref().and_then(|l| l.first().cloned()));
    if let Some(p) = labels {
        match formats::read_snapshot(&p) {
            Ok(s) => println!("pinned labels {} v{} hash {}", p.display(), s.version(), to_hex(&s.content_hash())),
            Err(e) => println!("pinned labels: {e}"),
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let file = FileConfig::load(cli.config.as_deref()).map_err(fatal)?;
    if cli.version {
        print_version(&file);
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = cli.command else {
        return Err(CliError::Usage("a subcommand is required; see --help".into()));
    };
    match command {
        Command::Labels(LabelsCommand::Load { inputs, out, loaded_at }) => cmd_labels_load(&inputs, &out, loaded_at),
        Command::Cheatsheet(CheatsheetCommand::Extend { pinned, traces, out }) => {
            cmd_cheatsheet_extend(&pinned, &traces, &out, &file)
        }
        Command::Extract(a) => cmd_extract(&a, &file),
        Command::Generalize(a) => cmd_generalize(&a, &file),
        Command::Scan(a) => cmd_scan(&a, &file),
        Command::Tune(a) => cmd_tune(&a),
        Command::Bench(a) => cmd_bench(&a, &file),
        Command::Synth(a) => cmd_synth(&a),
        Command::Workload(a) => cmd_workload(&a),
        Command::Fixtures(a) => cmd_fixtures(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CASCADE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("cascade: {e}");
            ExitCode::from(match e {
                CliError::Fatal(_) => EXIT_FATAL,
                CliError::Usage(_) => EXIT_USAGE,
            })
        }
    }
}
