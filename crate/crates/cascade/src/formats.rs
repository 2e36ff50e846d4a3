//! On-disk formats: trace JSON lines, label CSV and core registry,
//! snapshot, cheatsheet, pattern and corpus documents.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use cascade_core::extract::ExtractedLogic;
use cascade_core::labels::{AddressLabel, LabelClass, LabelSnapshot, LabelSnapshotBuilder, LabelSource};
use cascade_core::matcher::{LogicKey, Pattern, PatternProvenance};
use cascade_core::metrics::Label;
use cascade_core::primitives::{to_hex, Address, Selector, TxHash};
use cascade_core::semantics::{CategoryId, CategoryMeta, Cheatsheet};
use cascade_core::trace::{CallKind, Invocation, Trace, MAX_CALL_DEPTH, MAX_INVOCATIONS};
use cascade_core::tuner::{CorpusEntry, LabeledCorpus};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

// ---------------------------------------------------------------------------
// Trace documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceFormatError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("invariant violation at {path}: {reason}")]
    InvariantViolation { path: String, reason: String },
}

/// A parsed trace plus the number of unrecognized fields that were ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTrace {
    pub trace: Trace,
    pub unknown_fields: usize,
}

const TRACE_FIELDS: &[&str] = &["tx_hash", "sender", "chain_id", "calls"];
const CALL_FIELDS: &[&str] = &["caller", "callee", "selector", "signature", "kind", "depth", "value", "children"];

/// Nesting bound checked before parsing: every call level costs an object
/// and a `children` array, plus the document envelope.
const MAX_JSON_NESTING: usize = 2 * (MAX_CALL_DEPTH as usize + 1) + 4;

fn schema(path: impl Into<String>, reason: impl Into<String>) -> TraceFormatError {
    TraceFormatError::SchemaViolation {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Deepest bracket nesting outside string literals.
fn json_nesting(bytes: &[u8]) -> usize {
    let (mut depth, mut max) = (0usize, 0usize);
    let (mut in_string, mut escaped) = (false, false);
    for &b in bytes {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => {
                depth += 1;
                max = max.max(depth);
            }
            b']' | b'}' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    max
}

struct Walker {
    unknown_fields: usize,
    invocations: usize,
}

impl Walker {
    fn object<'v>(&mut self, v: &'v Value, path: &str, known: &[&str]) -> Result<&'v Map<String, Value>, TraceFormatError> {
        let obj = v.as_object().ok_or_else(|| schema(path, "expected an object"))?;
        self.unknown_fields += obj.keys().filter(|k| !known.contains(&k.as_str())).count();
        Ok(obj)
    }

    fn call(&mut self, v: &Value, path: &str) -> Result<Invocation, TraceFormatError> {
        self.invocations += 1;
        if self.invocations > MAX_INVOCATIONS {
            return Err(schema(path, format!("trace exceeds {MAX_INVOCATIONS} invocations")));
        }
        let obj = self.object(v, path, CALL_FIELDS)?;
        let selector = match str_field(obj, path, "selector")? {
            "" => None,
            s => Some(
                s.parse::<Selector>()
                    .map_err(|e| schema(format!("{path}.selector"), e.to_string()))?,
            ),
        };
        let kind_str = str_field(obj, path, "kind")?;
        let kind = CallKind::parse(kind_str)
            .ok_or_else(|| schema(format!("{path}.kind"), format!("unknown call kind {kind_str:?}")))?;
        let depth = obj
            .get("depth")
            .ok_or_else(|| schema(format!("{path}.depth"), "missing field"))?
            .as_u64()
            .filter(|d| *d <= u64::from(MAX_CALL_DEPTH))
            .ok_or_else(|| schema(format!("{path}.depth"), format!("expected an integer in 0..={MAX_CALL_DEPTH}")))?
            as u32;
        let children = obj
            .get("children")
            .ok_or_else(|| schema(format!("{path}.children"), "missing field"))?
            .as_array()
            .ok_or_else(|| schema(format!("{path}.children"), "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, c)| self.call(c, &format!("{path}.children[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Invocation {
            caller: address_field(obj, path, "caller")?,
            callee: address_field(obj, path, "callee")?,
            selector,
            signature: str_field(obj, path, "signature")?.to_owned(),
            kind,
            depth,
            value: str_field(obj, path, "value")?.to_owned(),
            children,
        })
    }
}

fn str_field<'v>(obj: &'v Map<String, Value>, path: &str, name: &str) -> Result<&'v str, TraceFormatError> {
    obj.get(name)
        .ok_or_else(|| schema(format!("{path}.{name}"), "missing field"))?
        .as_str()
        .ok_or_else(|| schema(format!("{path}.{name}"), "expected a string"))
}

fn address_field(obj: &Map<String, Value>, path: &str, name: &str) -> Result<Address, TraceFormatError> {
    str_field(obj, path, name)?
        .parse()
        .map_err(|e: cascade_core::primitives::HexError| schema(format!("{path}.{name}"), e.to_string()))
}

/// Parses and validates one trace document.
pub fn parse_trace(bytes: &[u8]) -> Result<ParsedTrace, TraceFormatError> {
    if json_nesting(bytes) > MAX_JSON_NESTING {
        return Err(schema("$", format!("nesting exceeds call depth {MAX_CALL_DEPTH}")));
    }
    // Nesting is bounded above, so serde_json's own recursion guard (128
    // levels, too shallow for deep call trees) can be lifted.
    let mut de = serde_json::Deserializer::from_slice(bytes);
    de.disable_recursion_limit();
    let value = Value::deserialize(&mut de)
        .and_then(|v| de.end().map(|()| v))
        .map_err(|e| TraceFormatError::MalformedJson(e.to_string()))?;
    let mut w = Walker {
        unknown_fields: 0,
        invocations: 0,
    };
    let obj = w.object(&value, "$", TRACE_FIELDS)?;
    let tx_hash = str_field(obj, "$", "tx_hash")?
        .parse::<TxHash>()
        .map_err(|e| schema("$.tx_hash", e.to_string()))?;
    let sender = address_field(obj, "$", "sender")?;
    let chain_id = obj
        .get("chain_id")
        .ok_or_else(|| schema("$.chain_id", "missing field"))?
        .as_u64()
        .ok_or_else(|| schema("$.chain_id", "expected a non-negative integer"))?;
    let root_calls = obj
        .get("calls")
        .ok_or_else(|| schema("$.calls", "missing field"))?
        .as_array()
        .ok_or_else(|| schema("$.calls", "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, c)| w.call(c, &format!("$.calls[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let trace = Trace {
        tx_hash,
        sender,
        chain_id,
        root_calls,
    };
    trace.validate().map_err(|e| match e {
        cascade_core::trace::TraceError::Invariant { path, reason } => TraceFormatError::InvariantViolation {
            path: format!("$.{path}"),
            reason,
        },
        other => TraceFormatError::InvariantViolation {
            path: "$.calls".into(),
            reason: other.to_string(),
        },
    })?;
    Ok(ParsedTrace {
        trace,
        unknown_fields: w.unknown_fields,
    })
}

#[derive(Serialize)]
struct TraceOut<'a> {
    tx_hash: TxHash,
    sender: Address,
    chain_id: u64,
    calls: Vec<CallOut<'a>>,
}

#[derive(Serialize)]
struct CallOut<'a> {
    caller: Address,
    callee: Address,
    selector: String,
    signature: &'a str,
    kind: &'static str,
    depth: u32,
    value: &'a str,
    children: Vec<CallOut<'a>>,
}

impl<'a> From<&'a Invocation> for CallOut<'a> {
    fn from(inv: &'a Invocation) -> Self {
        CallOut {
            caller: inv.caller,
            callee: inv.callee,
            selector: inv.selector.map(|s| s.to_string()).unwrap_or_default(),
            signature: &inv.signature,
            kind: inv.kind.as_str(),
            depth: inv.depth,
            value: &inv.value,
            children: inv.children.iter().map(CallOut::from).collect(),
        }
    }
}

/// Serializes a trace as one JSON line (no trailing newline).
pub fn trace_to_json(trace: &Trace) -> String {
    let doc = TraceOut {
        tx_hash: trace.tx_hash,
        sender: trace.sender,
        chain_id: trace.chain_id,
        calls: trace.root_calls.iter().map(CallOut::from).collect(),
    };
    serde_json::to_string(&doc).expect("trace documents always serialize")
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

pub const LABEL_CSV_HEADER: [&str; 4] = ["address", "label_class", "display_name", "source"];

#[derive(Debug, thiserror::Error)]
pub enum LabelLoadError {
    #[error("label file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {reason}", path.display())]
    MalformedRow { path: PathBuf, line: u64, reason: String },
}

/// Counters gathered while loading label files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelLoadStats {
    pub files: usize,
    pub rows: usize,
    pub registry_rows: usize,
    pub conflicts_within_source: usize,
}

fn io_err(path: &Path, source: std::io::Error) -> LabelLoadError {
    if source.kind() == std::io::ErrorKind::NotFound {
        LabelLoadError::FileNotFound(path.to_owned())
    } else {
        LabelLoadError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// A core-registry file is recognized by its first meaningful line: a
/// `#` comment or a bare address rather than the CSV header.
fn is_registry(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .is_some_and(|l| l.starts_with('#') || (l.starts_with("0x") && !l.contains(',')))
}

/// Entries of a core registry: `(chain_id, address)` pairs. Addresses
/// before the first section header belong to chain 0.
pub fn parse_core_registry(path: &Path, text: &str) -> Result<Vec<(u64, Address)>, LabelLoadError> {
    let mut chain = 0u64;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let malformed = |reason: String| LabelLoadError::MalformedRow {
            path: path.to_owned(),
            line: i as u64 + 1,
            reason,
        };
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("chain_id=") {
                chain = id.trim().parse().map_err(|_| malformed(format!("bad chain id {id:?}")))?;
            }
            continue;
        }
        let addr = line.parse().map_err(|e| malformed(format!("{e}")))?;
        out.push((chain, addr));
    }
    Ok(out)
}

fn parse_label_csv(path: &Path, text: &str, builder: &mut LabelSnapshotBuilder) -> Result<usize, LabelLoadError> {
    let malformed = |line: u64, reason: String| LabelLoadError::MalformedRow {
        path: path.to_owned(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if header.iter().map(str::trim).ne(LABEL_CSV_HEADER) {
        return Err(malformed(1, format!("expected header {}", LABEL_CSV_HEADER.join(","))));
    }
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, found {}", record.len())));
        }
        let address = record[0]
            .trim()
            .parse()
            .map_err(|e| malformed(line, format!("address: {e}")))?;
        let label_class = LabelClass::parse(record[1].trim())
            .ok_or_else(|| malformed(line, format!("unknown label_class {:?}", &record[1])))?;
        let source = LabelSource::parse(record[3].trim())
            .ok_or_else(|| malformed(line, format!("unknown source {:?}", &record[3])))?;
        builder.insert(AddressLabel {
            address,
            label_class,
            display_name: record[2].to_owned(),
            source,
        });
        rows += 1;
    }
    Ok(rows)
}

/// Label rows in the CSV format [`load_labels`] reads.
pub fn labels_to_csv<'a>(labels: impl IntoIterator<Item = &'a AddressLabel>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LABEL_CSV_HEADER).expect("in-memory write");
    for l in labels {
        w.write_record([
            l.address.to_string().as_str(),
            l.label_class.as_str(),
            &l.display_name,
            l.source.as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of UTF-8 fields")
}

/// Loads label CSVs and core registries into a fresh snapshot (version 1).
/// Precedence across sources follows the snapshot builder; conflicts within
/// one source keep the last row and are only counted.
pub fn load_labels(files: &[PathBuf], loaded_at: u64) -> Result<(LabelSnapshot, LabelLoadStats), LabelLoadError> {
    let mut builder = LabelSnapshotBuilder::new();
    let mut stats = LabelLoadStats::default();
    for path in files {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        stats.files += 1;
        if is_registry(&text) {
            for (chain, address) in parse_core_registry(path, &text)? {
                builder.insert(AddressLabel {
                    address,
                    label_class: LabelClass::CoreAssetToken,
                    display_name: format!("core registry chain {chain}"),
                    source: LabelSource::VendorDb,
                });
                stats.registry_rows += 1;
            }
        } else {
            stats.rows += parse_label_csv(path, &text, &mut builder)?;
        }
    }
    stats.conflicts_within_source = builder.conflicts_within_source();
    if stats.conflicts_within_source > 0 {
        log::warn!("{} label conflicts within one source; last rows kept", stats.conflicts_within_source);
    }
    Ok((builder.build(1, loaded_at), stats))
}

#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    version: u64,
    loaded_at: u64,
    content_hash: String,
    entries: Vec<AddressLabel>,
}

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {reason}", path.display())]
    Invalid { path: PathBuf, reason: String },
}

impl DocumentError {
    fn invalid(path: &Path, reason: impl ToString) -> Self {
        DocumentError::Invalid {
            path: path.to_owned(),
            reason: reason.to_string(),
        }
    }
}

fn read_doc(path: &Path) -> Result<String, DocumentError> {
    fs::read_to_string(path).map_err(|source| DocumentError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn snapshot_to_json(snapshot: &LabelSnapshot) -> String {
    let doc = SnapshotDoc {
        version: snapshot.version(),
        loaded_at: snapshot.loaded_at(),
        content_hash: to_hex(&snapshot.content_hash()),
        entries: snapshot.sorted_entries().into_iter().cloned().collect(),
    };
    serde_json::to_string_pretty(&doc).expect("snapshots always serialize")
}

pub fn parse_snapshot(path: &Path, text: &str) -> Result<LabelSnapshot, DocumentError> {
    let doc: SnapshotDoc = serde_json::from_str(text).map_err(|e| DocumentError::invalid(path, e))?;
    let mut b = LabelSnapshotBuilder::new();
    for label in doc.entries {
        b.insert(label);
    }
    let snapshot = b.build(doc.version, doc.loaded_at);
    let actual = to_hex(&snapshot.content_hash());
    if actual != doc.content_hash {
        return Err(DocumentError::invalid(
            path,
            format!("content hash {actual} does not match recorded {}", doc.content_hash),
        ));
    }
    Ok(snapshot)
}

pub fn read_snapshot(path: &Path) -> Result<LabelSnapshot, DocumentError> {
    parse_snapshot(path, &read_doc(path)?)
}

// ---------------------------------------------------------------------------
// Cheatsheet
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheatsheetDoc {
    version: String,
    categories: Vec<CategoryMeta>,
    entries: Vec<CheatsheetEntry>,
}

#[derive(Serialize, Deserialize)]
struct CheatsheetEntry {
    signature: String,
    category: CategoryId,
}

pub fn parse_cheatsheet(path: &Path, text: &str) -> Result<Cheatsheet, DocumentError> {
    let doc: CheatsheetDoc = serde_json::from_str(text).map_err(|e| DocumentError::invalid(path, e))?;
    Cheatsheet::new(
        doc.version,
        doc.categories,
        doc.entries.into_iter().map(|e| (e.signature, e.category)),
    )
    .map_err(|e| DocumentError::invalid(path, e))
}

pub fn read_cheatsheet(path: &Path) -> Result<Cheatsheet, DocumentError> {
    parse_cheatsheet(path, &read_doc(path)?)
}

pub fn cheatsheet_to_json(sheet: &Cheatsheet) -> String {
    let doc = CheatsheetDoc {
        version: sheet.version().to_owned(),
        categories: sheet.categories().cloned().collect(),
        entries: sheet
            .entries()
            .map(|(sig, cat)| CheatsheetEntry {
                signature: sig.to_owned(),
                category: cat.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("cheatsheets always serialize")
}

// ---------------------------------------------------------------------------
// Patterns
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PatternDoc {
    pattern_id: String,
    source_tx: TxHash,
    lambda: f64,
    tau: f64,
    core_set: Vec<LogicKey>,
    proto_set: Vec<LogicKey>,
    #[serde(default)]
    created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_logic: Option<ExtractedLogic>,
}

pub fn pattern_to_json(pattern: &Pattern) -> String {
    let doc = PatternDoc {
        pattern_id: pattern.pattern_id().to_owned(),
        source_tx: pattern.provenance().source_tx,
        lambda: pattern.lambda(),
        tau: pattern.tau(),
        core_set: pattern.core_set().to_vec(),
        proto_set: pattern.proto_set().to_vec(),
        created_at: pattern.provenance().created_at,
        reference_logic: pattern.reference_logic().cloned(),
    };
    serde_json::to_string_pretty(&doc).expect("patterns always serialize")
}

pub fn parse_pattern(path: &Path, text: &str) -> Result<Pattern, DocumentError> {
    let doc: PatternDoc = serde_json::from_str(text).map_err(|e| DocumentError::invalid(path, e))?;
    Pattern::from_parts(
        Some(doc.pattern_id),
        doc.core_set,
        doc.proto_set,
        doc.lambda,
        doc.tau,
        PatternProvenance {
            source_tx: doc.source_tx,
            created_at: doc.created_at,
        },
        doc.reference_logic,
    )
    .map_err(|e| DocumentError::invalid(path, e))
}

/// Every `*.json` pattern in `dir`, sorted by file name.
pub fn read_pattern_dir(dir: &Path) -> Result<Vec<Pattern>, DocumentError> {
    let entries = fs::read_dir(dir).map_err(|source| DocumentError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let patterns = files
        .iter()
        .map(|p| parse_pattern(p, &read_doc(p)?))
        .collect::<Result<Vec<_>, _>>()?;
    if patterns.is_empty() {
        return Err(DocumentError::invalid(dir, "no pattern files (*.json) found"));
    }
    Ok(patterns)
}

// ---------------------------------------------------------------------------
// Logic and corpus lines
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    tx_hash: TxHash,
    label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<String>,
    logic: ExtractedLogic,
}

pub fn corpus_entry_to_json(entry: &CorpusEntry) -> String {
    serde_json::to_string(&CorpusLine {
        tx_hash: entry.logic.tx_hash,
        label: entry.label,
        family: entry.family.clone(),
        logic: entry.logic.clone(),
    })
    .expect("corpus lines always serialize")
}

pub fn corpus_to_jsonl(corpus: &LabeledCorpus) -> String {
    let mut out = String::new();
    for e in &corpus.entries {
        out.push_str(&corpus_entry_to_json(e));
        out.push('\n');
    }
    out
}

/// Parses a corpus; tx hashes must be unique and agree with the logic.
pub fn parse_corpus(path: &Path, text: &str) -> Result<LabeledCorpus, DocumentError> {
    let mut seen = BTreeMap::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |reason: String| DocumentError::invalid(path, format!("line {}: {reason}", i + 1));
        let doc: CorpusLine = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        if doc.tx_hash != doc.logic.tx_hash {
            return Err(at(format!("tx_hash {} differs from logic.tx_hash {}", doc.tx_hash, doc.logic.tx_hash)));
        }
        if let Some(first) = seen.insert(doc.tx_hash, i + 1) {
            return Err(at(format!("duplicate tx_hash {} (first on line {first})", doc.tx_hash)));
        }
        entries.push(CorpusEntry {
            logic: doc.logic,
            label: doc.label,
            family: doc.family,
        });
    }
    Ok(LabeledCorpus { entries })
}

pub fn read_corpus(path: &Path) -> Result<LabeledCorpus, DocumentError> {
    parse_corpus(path, &read_doc(path)?)
}

/// Extracted logic, one JSON document per line.
pub fn parse_logic_lines(path: &Path, text: &str) -> Result<Vec<ExtractedLogic>, DocumentError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| DocumentError::invalid(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn read_logic_lines(path: &Path) -> Result<Vec<ExtractedLogic>, DocumentError> {
    parse_logic_lines(path, &read_doc(path)?)
}

/// Lines of a JSON-lines file or standard input (`-`).
pub fn open_lines(path: &Path) -> std::io::Result<Box<dyn BufRead + Send>> {
    if path == Path::new("-") {
        Ok(Box::new(BufReader::new(std::io::stdin())))
    } else {
        Ok(Box::new(BufReader::new(fs::File::open(path)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"tx_hash":"0x1111111111111111111111111111111111111111111111111111111111111111","sender":"0x00000000000000000000000000000000000000aa","chain_id":1,"calls":[{"caller":"0x00000000000000000000000000000000000000AA","callee":"0x00000000000000000000000000000000000000bb","selector":"0xa9059cbb","signature":"transfer(address,uint256)","kind":"CALL","depth":0,"value":"0","children":[]}]}"#;

    #[test]
    fn minimal_document_parses_and_normalizes_case() {
        let p = parse_trace(MINIMAL.as_bytes()).unwrap();
        assert_eq!(p.trace.invocation_count(), 1);
        assert_eq!(p.unknown_fields, 0);
        assert_eq!(
            p.trace.root_calls[0].caller.to_string(),
            "0x00000000000000000000000000000000000000aa"
        );
    }

    #[test]
    fn child_depth_mismatch_names_the_child() {
        let doc = MINIMAL.replace(
            r#""children":[]"#,
            r#""children":[{"caller":"0x00000000000000000000000000000000000000bb","callee":"0x00000000000000000000000000000000000000cc","selector":"","signature":"","kind":"CALL","depth":0,"value":"0","children":[]}]"#,
        );
        match parse_trace(doc.as_bytes()) {
            Err(TraceFormatError::InvariantViolation { path, .. }) => assert_eq!(path, "$.calls[0].children[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_json_path() {
        let doc = MINIMAL.replace(r#""kind":"CALL""#, r#""kind":"JUMP""#);
        assert!(matches!(parse_trace(doc.as_bytes()),
            Err(TraceFormatError::SchemaViolation { path, .. }) if path == "$.calls[0].kind"));
        let doc = MINIMAL.replace(r#","chain_id":1"#, "");
        assert!(matches!(parse_trace(doc.as_bytes()),
            Err(TraceFormatError::SchemaViolation { path, .. }) if path == "$.chain_id"));
        let doc = MINIMAL.replace(r#""value":"0""#, r#""value":0"#);
        assert!(matches!(parse_trace(doc.as_bytes()),
            Err(TraceFormatError::SchemaViolation { path, .. }) if path == "$.calls[0].value"));
        assert!(matches!(parse_trace(b"{\"tx_hash\":"), Err(TraceFormatError::MalformedJson(_))));
    }

    #[test]
    fn wrong_selector_is_an_invariant_violation() {
        let doc = MINIMAL.replace("0xa9059cbb", "0xdeadbeef");
        assert!(matches!(parse_trace(doc.as_bytes()), Err(TraceFormatError::InvariantViolation { .. })));
    }

    #[test]
    fn unknown_fields_are_counted() {
        let doc = MINIMAL.replacen('{', r#"{"block":12,"#, 1).replace(r#""depth":0"#, r#""depth":0,"gas":"21000""#);
        assert_eq!(parse_trace(doc.as_bytes()).unwrap().unknown_fields, 2);
    }

    #[test]
    fn pathological_nesting_is_rejected_before_parsing() {
        let doc = "[".repeat(100_000);
        assert!(matches!(parse_trace(doc.as_bytes()), Err(TraceFormatError::SchemaViolation { .. })));
    }

    #[test]
    fn registry_sections_assign_chain_ids() {
        let text = "# chain_id=1\n0x00000000000000000000000000000000000000aa\n\n# chain_id=56\n0x00000000000000000000000000000000000000BB\n";
        let rows = parse_core_registry(Path::new("r"), text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].0, 56);
        assert!(is_registry(text));
        assert!(!is_registry("address,label_class,display_name,source\n"));
    }
}
