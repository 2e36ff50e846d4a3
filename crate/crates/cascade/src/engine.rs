//! Streaming scan engine: one reader, a pool of workers that parse,
//! extract and match each trace, and a single writer emitting one JSON line
//! per valid trace.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cascade_core::extract::{extract_explained, ExplainRecord, ExtractContext, ExtractedLogic, LogicItem, TargetRole};
use cascade_core::labels::{LabelSnapshot, TokenClass};
use cascade_core::matcher::{match_all, CompiledPattern, LogicKey, MatchResult, Pattern, PatternProvenance};
use cascade_core::primitives::TxHash;
use cascade_core::semantics::{CategoryId, Cheatsheet, ClassifierBoundary, ClassifierPolicy};
use crossbeam_channel::bounded;
use serde::Serialize;

use crate::formats::parse_trace;

pub const DEFAULT_TRACE_BUDGET: Duration = Duration::from_secs(5);

/// Worker stack size; deep call trees recurse in parsing and dropping.
const WORKER_STACK: usize = 16 << 20;

/// Read-only inputs pinned for the duration of a scan.
pub struct Pinned {
    pub labels: LabelSnapshot,
    pub cheatsheet: Cheatsheet,
    pub patterns: Vec<CompiledPattern>,
    pub classifier: Option<Arc<dyn ClassifierBoundary>>,
    pub policy: ClassifierPolicy,
    pub fallback_on_unavailable: bool,
}

impl Pinned {
    pub fn new(labels: LabelSnapshot, cheatsheet: Cheatsheet, patterns: Vec<Pattern>) -> Self {
        Pinned {
            labels,
            cheatsheet,
            patterns: patterns.into_iter().map(CompiledPattern::new).collect(),
            classifier: None,
            policy: ClassifierPolicy::default(),
            fallback_on_unavailable: true,
        }
    }

    pub fn context(&self) -> ExtractContext<'_> {
        ExtractContext {
            labels: &self.labels,
            cheatsheet: &self.cheatsheet,
            classifier: self.classifier.as_deref(),
            policy: self.policy,
            fallback_on_unavailable: self.fallback_on_unavailable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanConfig {
    pub worker_count: usize,
    /// Emit results in input order instead of completion order.
    pub ordered: bool,
    /// Attach per-invocation extraction records to every result line.
    pub explain: bool,
    /// Wall-clock budget per trace; slower traces are reported TIMED_OUT.
    pub trace_budget: Duration,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            worker_count: 1,
            ordered: false,
            explain: false,
            trace_budget: DEFAULT_TRACE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Ok,
    TimedOut,
    Error,
}

/// One output line per valid trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanLine {
    pub tx_hash: TxHash,
    pub status: Status,
    /// Whether any pattern flagged the trace.
    pub flagged: bool,
    pub results: Vec<MatchResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explain: Option<Vec<ExplainRecord>>,
}

/// Latency summary of one stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageLatency {
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl StageLatency {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &mut [f64]) -> Self {
        if samples.is_empty() {
            return StageLatency::default();
        }
        samples.sort_by(f64::total_cmp);
        let rank = |q: f64| samples[((q * samples.len() as f64).ceil() as usize).clamp(1, samples.len()) - 1];
        StageLatency {
            p50: rank(0.50),
            p95: rank(0.95),
            max: samples[samples.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinnedVersions {
    pub label_snapshot_version: u64,
    pub cheatsheet_version: String,
    pub pattern_ids: Vec<String>,
    pub worker_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    /// Valid traces processed (one result line each).
    pub total: u64,
    pub flagged: u64,
    pub timed_out: u64,
    /// Traces whose processing failed; reported as ERROR lines.
    pub failed: u64,
    /// Input lines that were not valid traces; skipped without output.
    pub parse_errors: u64,
    pub unknown_fields: u64,
    pub per_pattern_hits: BTreeMap<String, u64>,
    pub wall_time: f64,
    pub throughput_tps: f64,
    pub extract_latency: StageLatency,
    pub match_latency: StageLatency,
    pub config: PinnedVersions,
}

impl ScanReport {
    /// Whether any line was skipped or failed (exit status 2).
    pub fn has_line_errors(&self) -> bool {
        self.parse_errors > 0 || self.failed > 0 || self.timed_out > 0
    }
}

enum Outcome {
    Line {
        line: Box<ScanLine>,
        extract: f64,
        matching: f64,
        unknown_fields: usize,
    },
    Invalid(String),
}

fn process(raw: &str, pinned: &Pinned, config: &ScanConfig) -> Outcome {
    let start = Instant::now();
    let parsed = match catch_unwind(|| parse_trace(raw.as_bytes())) {
        Ok(Ok(p)) => p,
        Ok(Err(e)) => return Outcome::Invalid(e.to_string()),
        Err(_) => return Outcome::Invalid("parser panicked".into()),
    };
    let tx_hash = parsed.trace.tx_hash;
    let error_line = |status, error: String| ScanLine {
        tx_hash,
        status,
        flagged: false,
        results: Vec::new(),
        error: Some(error),
        explain: None,
    };
    let work = catch_unwind(AssertUnwindSafe(|| {
        let extraction = extract_explained(&parsed.trace, &pinned.context());
        let extracted_at = Instant::now();
        let extraction = extraction?;
        let results = match_all(&pinned.patterns, &extraction.logic);
        Ok::<_, cascade_core::extract::ExtractError>((extraction, results, extracted_at, Instant::now()))
    }));
    let line = match work {
        Ok(Ok((extraction, results, extracted_at, matched_at))) => {
            let extract = (extracted_at - start).as_secs_f64();
            let matching = (matched_at - extracted_at).as_secs_f64();
            // The budget is enforced when the trace completes; extraction and
            // matching are linear, so only a pathological classifier can
            // overrun it.
            let line = if matched_at - start > config.trace_budget {
                error_line(
                    Status::TimedOut,
                    format!("exceeded the {:?} budget", config.trace_budget),
                )
            } else {
                ScanLine {
                    tx_hash,
                    status: Status::Ok,
                    flagged: results.iter().any(|r| r.flagged),
                    results,
                    error: None,
                    explain: config.explain.then_some(extraction.explain),
                }
            };
            return Outcome::Line {
                line: Box::new(line),
                extract,
                matching,
                unknown_fields: parsed.unknown_fields,
            };
        }
        Ok(Err(e)) => error_line(Status::Error, e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "worker panicked".into());
            error_line(Status::Error, format!("panic: {msg}"))
        }
    };
    Outcome::Line {
        line: Box::new(line),
        extract: 0.0,
        matching: 0.0,
        unknown_fields: parsed.unknown_fields,
    }
}

struct Writer<'w, W: Write> {
    out: &'w mut W,
    report: ScanReport,
    extract: Vec<f64>,
    matching: Vec<f64>,
}

impl<W: Write> Writer<'_, W> {
    fn accept(&mut self, outcome: Outcome) -> io::Result<()> {
        match outcome {
            Outcome::Invalid(reason) => {
                log::warn!("skipping invalid trace line: {reason}");
                self.report.parse_errors += 1;
            }
            Outcome::Line {
                line,
                extract,
                matching,
                unknown_fields,
            } => {
                let r = &mut self.report;
                r.total += 1;
                r.unknown_fields += unknown_fields as u64;
                match line.status {
                    Status::Ok => {
                        self.extract.push(extract);
                        self.matching.push(matching);
                    }
                    Status::TimedOut => r.timed_out += 1,
                    Status::Error => r.failed += 1,
                }
                if line.flagged {
                    r.flagged += 1;
                }
                for res in line.results.iter().filter(|res| res.flagged) {
                    *r.per_pattern_hits.entry(res.pattern_id.clone()).or_default() += 1;
                }
                serde_json::to_writer(&mut *self.out, &*line)?;
                self.out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// Scans JSON-lines traces from `input`, writing one result line per valid
/// trace to `out`.
pub fn scan<R, W>(input: R, out: &mut W, pinned: &Pinned, config: &ScanConfig) -> io::Result<ScanReport>
where
    R: BufRead + Send,
    W: Write,
{
    let workers = config.worker_count.max(1);
    let start = Instant::now();
    let mut writer = Writer {
        out,
        report: ScanReport {
            total: 0,
            flagged: 0,
            timed_out: 0,
            failed: 0,
            parse_errors: 0,
            unknown_fields: 0,
            per_pattern_hits: pinned
                .patterns
                .iter()
                .map(|p| (p.pattern().pattern_id().to_owned(), 0))
                .collect(),
            wall_time: 0.0,
            throughput_tps: 0.0,
            extract_latency: StageLatency::default(),
            match_latency: StageLatency::default(),
            config: PinnedVersions {
                label_snapshot_version: pinned.labels.version(),
                cheatsheet_version: pinned.cheatsheet.version().to_owned(),
                pattern_ids: pinned.patterns.iter().map(|p| p.pattern().pattern_id().to_owned()).collect(),
                worker_count: workers,
            },
        },
        extract: Vec::new(),
        matching: Vec::new(),
    };

    let (line_tx, line_rx) = bounded::<(u64, String)>(workers * 64);
    let (out_tx, out_rx) = bounded::<(u64, Outcome)>(workers * 64);
    let read_result = std::thread::scope(|s| -> io::Result<io::Result<()>> {
        let reader = s.spawn(move || -> io::Result<()> {
            for (seq, line) in input.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                if line_tx.send((seq as u64, line)).is_err() {
                    break;
                }
            }
            Ok(())
        });
        for _ in 0..workers {
            let rx = line_rx.clone();
            let tx = out_tx.clone();
            std::thread::Builder::new()
                .stack_size(WORKER_STACK)
                .spawn_scoped(s, move || {
                    for (seq, raw) in rx {
                        if tx.send((seq, process(&raw, pinned, config))).is_err() {
                            break;
                        }
                    }
                })?;
        }
        drop(out_tx);
        drop(line_rx);

        let mut pending: BTreeMap<u64, Outcome> = BTreeMap::new();
        let mut emitted = 0usize;
        // Sequence numbers skip blank lines, so ordered emission releases the
        // smallest pending entry once every worker's output is accounted for.
        let mut write_err = None;
        for (seq, outcome) in &out_rx {
            if write_err.is_some() {
                continue;
            }
            let res = if config.ordered {
                pending.insert(seq, outcome);
                Ok(())
            } else {
                writer.accept(outcome)
            };
            if let Err(e) = res {
                write_err = Some(e);
            }
            emitted += 1;
        }
        if let Some(e) = write_err {
            return Err(e);
        }
        let _ = emitted;
        for (_, outcome) in std::mem::take(&mut pending) {
            writer.accept(outcome)?;
        }
        Ok(reader.join().unwrap_or_else(|_| Err(io::Error::other("reader panicked"))))
    })?;
    read_result?;
    writer.out.flush()?;

    let mut report = writer.report;
    report.wall_time = start.elapsed().as_secs_f64();
    report.throughput_tps = if report.wall_time > 0.0 {
        report.total as f64 / report.wall_time
    } else {
        0.0
    };
    report.extract_latency = StageLatency::from_samples(&mut writer.extract);
    report.match_latency = StageLatency::from_samples(&mut writer.matching);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Benchmarks
// ---------------------------------------------------------------------------

pub const SCALING_PATTERN_KEYS: usize = 800;
pub const SCALING_LENGTHS: [usize; 4] = [100, 200, 400, 800];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub candidate_len: usize,
    /// Median seconds per match.
    pub median: f64,
    /// Slowest single match observed.
    pub max: f64,
    /// Median at this length over the median at half the length.
    pub ratio_to_previous: Option<f64>,
}

/// A pattern with `n` distinct keys split evenly across both sides.
pub fn scaling_pattern(n: usize) -> CompiledPattern {
    let key = |i: usize| {
        let (token, target_role) = if i.is_multiple_of(2) {
            (TokenClass::Core, TargetRole::CoreAssetToken)
        } else {
            (TokenClass::ProtocolSpecific, TargetRole::ProtocolToken)
        };
        LogicKey {
            category: CategoryId::new(format!("K{i:05}")).expect("generated ids are valid"),
            token,
            target_role,
        }
    };
    let (core, proto): (Vec<LogicKey>, Vec<LogicKey>) = (0..n).map(key).partition(|k| k.token == TokenClass::Core);
    let pattern = Pattern::from_parts(
        None,
        core,
        proto,
        0.6,
        0.7,
        PatternProvenance {
            source_tx: TxHash::derive("scaling"),
            created_at: 0,
        },
        None,
    )
    .expect("non-empty pattern");
    CompiledPattern::new(pattern)
}

/// Candidate of `len` items: every other item is a pattern key.
pub fn scaling_candidate(len: usize) -> ExtractedLogic {
    let items = (0..len)
        .map(|i| {
            let (token, target_role) = if i % 2 == 0 {
                (TokenClass::Core, TargetRole::CoreAssetToken)
            } else {
                (TokenClass::ProtocolSpecific, TargetRole::ProtocolToken)
            };
            let id = if i % 4 < 2 { format!("K{i:05}") } else { format!("N{i:05}") };
            LogicItem {
                category: CategoryId::new(id).expect("generated ids are valid"),
                token,
                target_role,
                depth_after_lift: 0,
            }
        })
        .collect();
    ExtractedLogic {
        tx_hash: TxHash::derive(&format!("scaling-{len}")),
        items,
        source_invocation_count: len,
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Match latency at each candidate length against a fixed pattern. Each
/// sample times a batch of matches so the timer resolution does not
/// dominate; lengths are interleaved so drift affects all of them alike.
pub fn scaling_table(pattern: &CompiledPattern, lengths: &[usize], samples: usize) -> Vec<ScalingRow> {
    let candidates: Vec<ExtractedLogic> = lengths.iter().map(|&n| scaling_candidate(n)).collect();
    const BATCH: usize = 64;
    let mut times: Vec<Vec<f64>> = vec![Vec::with_capacity(samples); lengths.len()];
    let mut worst = vec![0f64; lengths.len()];
    for c in &candidates {
        std::hint::black_box(pattern.match_logic(c));
    }
    for _ in 0..samples.max(1) {
        for (i, c) in candidates.iter().enumerate() {
            let t = Instant::now();
            for _ in 0..BATCH {
                std::hint::black_box(pattern.match_logic(std::hint::black_box(c)));
            }
            let per = t.elapsed().as_secs_f64() / BATCH as f64;
            times[i].push(per);
            let single = Instant::now();
            std::hint::black_box(pattern.match_logic(c));
            worst[i] = worst[i].max(single.elapsed().as_secs_f64());
        }
    }
    let mut rows: Vec<ScalingRow> = Vec::new();
    for (i, &n) in lengths.iter().enumerate() {
        let m = median(&mut times[i]);
        let ratio_to_previous = rows
            .last()
            .filter(|prev| prev.candidate_len * 2 == n)
            .map(|prev| m / prev.median);
        rows.push(ScalingRow {
            candidate_len: n,
            median: m,
            max: worst[i],
            ratio_to_previous,
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkerScaling {
    pub single_worker_wall: f64,
    pub workers: usize,
    pub multi_worker_wall: f64,
    pub speedup: f64,
    pub available_parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub repetitions: usize,
    /// Report of the median-wall-time repetition.
    pub report: ScanReport,
    pub wall_times: Vec<f64>,
    pub scaling: Vec<ScalingRow>,
    pub worker_scaling: Option<WorkerScaling>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("bench needs at least 3 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error("bench corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Repeated scans of an in-memory corpus plus the matcher scaling table.
pub fn bench(corpus: &str, pinned: &Pinned, config: &ScanConfig, repetitions: usize) -> Result<BenchReport, BenchError> {
    if repetitions < 3 {
        return Err(BenchError::TooFewRepetitions(repetitions));
    }
    if corpus.lines().all(|l| l.trim().is_empty()) {
        return Err(BenchError::EmptyCorpus);
    }
    let run = |cfg: &ScanConfig| scan(corpus.as_bytes(), &mut io::sink(), pinned, cfg);
    let mut reports = (0..repetitions).map(|_| run(config)).collect::<io::Result<Vec<_>>>()?;
    reports.sort_by(|a, b| a.wall_time.total_cmp(&b.wall_time));
    let wall_times = reports.iter().map(|r| r.wall_time).collect();
    let report = reports.swap_remove(repetitions / 2);

    let worker_scaling = if config.worker_count > 1 {
        let single = ScanConfig {
            worker_count: 1,
            ..*config
        };
        let mut walls = (0..repetitions)
            .map(|_| run(&single).map(|r| r.wall_time))
            .collect::<io::Result<Vec<_>>>()?;
        let single_worker_wall = median(&mut walls);
        Some(WorkerScaling {
            single_worker_wall,
            workers: config.worker_count,
            multi_worker_wall: report.wall_time,
            speedup: single_worker_wall / report.wall_time,
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        })
    } else {
        None
    };
    let scaling = scaling_table(&scaling_pattern(SCALING_PATTERN_KEYS), &SCALING_LENGTHS, 31);
    Ok(BenchReport {
        repetitions,
        report,
        wall_times,
        scaling,
        worker_scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_use_nearest_rank() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = StageLatency::from_samples(&mut v);
        assert_eq!((s.p50, s.p95, s.max), (50.0, 95.0, 100.0));
        assert_eq!(StageLatency::from_samples(&mut []), StageLatency::default());
    }

    #[test]
    fn scaling_candidate_covers_half_its_items() {
        let p = scaling_pattern(800);
        let r = p.match_logic(&scaling_candidate(800));
        assert!((r.sim_final - 0.5).abs() < 1e-12, "{}", r.sim_final);
    }
}
