//! Function-signature semantics.
//!
//! Known signatures resolve through the [`Cheatsheet`]. Unknown ones go
//! through [`classify_unknown`]: undecoded calls are discarded, decoded ones
//! are sent to an optional external [`ClassifierBoundary`] or, without one,
//! resolved by a fixed keyword-stem table.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::primitives::{keccak256, to_hex};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error("invalid category id {0:?}")]
    InvalidCategoryId(String),
    #[error("unparsable signature {0:?}")]
    UnparsableSignature(String),
    #[error("entry {signature} references unknown category {category}")]
    UnknownCategory { signature: String, category: String },
    #[error("signature {signature} mapped to both {first} and {second}")]
    SignatureConflict {
        signature: String,
        first: String,
        second: String,
    },
    #[error("category {0} already present with a different description or kind")]
    CategoryCollision(String),
    #[error("cheatsheet has no categories")]
    NoCategories,
    #[error("outcome is not a new category")]
    NotNewCategory,
    #[error("classifier unavailable: {0}")]
    SidecarUnavailable(String),
}

/// Semantic category token, e.g. `SWAP` or `VERIFY_DEPOSIT`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "String", into = "String"))]
pub struct CategoryId(String);

impl CategoryId {
    pub fn new(id: impl Into<String>) -> Result<Self, SemanticsError> {
        let id = id.into();
        let ok = (2..=32).contains(&id.len())
            && id
                .bytes()
                .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_');
        if ok {
            Ok(CategoryId(id))
        } else {
            Err(SemanticsError::InvalidCategoryId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CategoryId {
    type Error = SemanticsError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CategoryId::new(value)
    }
}

impl From<CategoryId> for String {
    fn from(value: CategoryId) -> Self {
        value.0
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum CategoryKind {
    Financial,
    Verification,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoryMeta {
    pub id: CategoryId,
    pub kind: CategoryKind,
    pub description: String,
}

/// Canonical form of a function signature: parameter names, qualifiers and
/// whitespace removed, types lowercased, `uint`/`int` widened to 256 bits.
///
/// Returns `None` when the text is not a function signature.
pub fn canonical_signature(signature: &str) -> Option<String> {
    let s = signature.trim();
    let s = s.strip_prefix("function ").map_or(s, str::trim_start);
    let open = s.find('(')?;
    let name = s[..open].trim();
    let mut chars = name.chars();
    let first = chars.next()?;
    if !(first.is_ascii_alphabetic() || first == '_' || first == '$')
        || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
    {
        return None;
    }
    let close = matching_paren(s, open)?;
    let rest = &s[close + 1..];
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let params = canonical_param_list(&s[open + 1..close])?;
    Some(format!("{name}({params})"))
}

fn matching_paren(s: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in s[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

fn canonical_param_list(inner: &str) -> Option<String> {
    if inner.trim().is_empty() {
        return Some(String::new());
    }
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.checked_sub(1)?,
            ',' if depth == 0 => {
                parts.push(canonical_param(&inner[start..i])?);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(canonical_param(&inner[start..])?);
    Some(parts.join(","))
}

fn canonical_param(param: &str) -> Option<String> {
    let p = param.trim();
    if p.is_empty() {
        return None;
    }
    if p.starts_with('(') || p.starts_with("tuple(") {
        let open = p.find('(')?;
        let close = matching_paren(p, open)?;
        let inner = canonical_param_list(&p[open + 1..close])?;
        let dims = array_suffix(&p[close + 1..])?;
        return Some(format!("({inner}){dims}"));
    }
    // Whitespace inside or directly before array brackets belongs to the
    // type; the first other whitespace ends it.
    let mut ty = String::new();
    let mut in_brackets = false;
    let mut chars = p.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '[' => in_brackets = true,
            ']' => in_brackets = false,
            c if c.is_whitespace() => {
                while chars.next_if(|c| c.is_whitespace()).is_some() {}
                if in_brackets || chars.peek() == Some(&'[') {
                    continue;
                }
                break;
            }
            _ => {}
        }
        ty.push(c.to_ascii_lowercase());
    }
    let base_end = ty.find('[').unwrap_or(ty.len());
    let (base, dims) = ty.split_at(base_end);
    if base.is_empty() || !base.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return None;
    }
    let dims = array_suffix(dims)?;
    let base = match base {
        "uint" => "uint256",
        "int" => "int256",
        other => other,
    };
    Some(format!("{base}{dims}"))
}

/// Array dimensions directly following a type, with names discarded.
fn array_suffix(s: &str) -> Option<String> {
    let mut out = String::new();
    let mut rest = s.trim_start();
    while let Some(r) = rest.strip_prefix('[') {
        let close = r.find(']')?;
        let size = r[..close].trim();
        if !size.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        out.push('[');
        out.push_str(size);
        out.push(']');
        rest = r[close + 1..].trim_start();
    }
    Some(out)
}

/// Function name of a signature (text before the first parenthesis).
pub fn function_name(signature: &str) -> &str {
    let s = signature.trim();
    let s = s.strip_prefix("function ").map_or(s, str::trim_start);
    s.split('(').next().unwrap_or("").trim()
}

/// Signature → category table.
#[derive(Debug, Clone, PartialEq)]
pub struct Cheatsheet {
    version: String,
    categories: BTreeMap<CategoryId, CategoryMeta>,
    entries: BTreeMap<String, CategoryId>,
}

impl Cheatsheet {
    /// Builds a cheatsheet, canonicalizing every signature.
    pub fn new(
        version: impl Into<String>,
        categories: impl IntoIterator<Item = CategoryMeta>,
        entries: impl IntoIterator<Item = (String, CategoryId)>,
    ) -> Result<Self, SemanticsError> {
        let mut cats = BTreeMap::new();
        for meta in categories {
            if let Some(prev) = cats.get(&meta.id) {
                if prev != &meta {
                    return Err(SemanticsError::CategoryCollision(meta.id.0));
                }
            }
            cats.insert(meta.id.clone(), meta);
        }
        if cats.is_empty() {
            return Err(SemanticsError::NoCategories);
        }
        let mut sheet = Cheatsheet {
            version: version.into(),
            categories: cats,
            entries: BTreeMap::new(),
        };
        for (sig, cat) in entries {
            sheet.insert_entry(&sig, cat)?;
        }
        Ok(sheet)
    }

    fn insert_entry(&mut self, signature: &str, category: CategoryId) -> Result<bool, SemanticsError> {
        let canonical = canonical_signature(signature)
            .ok_or_else(|| SemanticsError::UnparsableSignature(signature.to_owned()))?;
        if !self.categories.contains_key(&category) {
            return Err(SemanticsError::UnknownCategory {
                signature: canonical,
                category: category.0,
            });
        }
        match self.entries.get(&canonical) {
            Some(existing) if existing == &category => Ok(false),
            Some(existing) => Err(SemanticsError::SignatureConflict {
                signature: canonical,
                first: existing.0.clone(),
                second: category.0,
            }),
            None => {
                self.entries.insert(canonical, category);
                Ok(true)
            }
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Revision counter carried in the version string (`<label>+r<N>`); zero
    /// for a version that has never been extended.
    pub fn revision(&self) -> u64 {
        self.version
            .rsplit_once("+r")
            .and_then(|(_, n)| n.parse().ok())
            .unwrap_or(0)
    }

    fn next_version(&self) -> String {
        let base = match self.version.rsplit_once("+r") {
            Some((base, n)) if n.parse::<u64>().is_ok() => base,
            _ => self.version.as_str(),
        };
        format!("{base}+r{}", self.revision() + 1)
    }

    pub fn category(&self, id: &CategoryId) -> Option<&CategoryMeta> {
        self.categories.get(id)
    }

    pub fn categories(&self) -> impl Iterator<Item = &CategoryMeta> {
        self.categories.values()
    }

    /// `(canonical signature, category)` pairs in signature order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &CategoryId)> {
        self.entries.iter().map(|(s, c)| (s.as_str(), c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    /// Digest over categories and entries; the version string is excluded.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut buf = Vec::new();
        for meta in self.categories.values() {
            buf.extend_from_slice(meta.id.0.as_bytes());
            buf.push(0);
            buf.extend_from_slice(kind_str(meta.kind).as_bytes());
            buf.push(0);
            buf.extend_from_slice(meta.description.as_bytes());
            buf.push(b'\n');
        }
        buf.push(b'\n');
        for (sig, cat) in &self.entries {
            buf.extend_from_slice(sig.as_bytes());
            buf.push(0);
            buf.extend_from_slice(cat.0.as_bytes());
            buf.push(b'\n');
        }
        keccak256(&buf)
    }
}

fn kind_str(kind: CategoryKind) -> &'static str {
    match kind {
        CategoryKind::Financial => "FINANCIAL",
        CategoryKind::Verification => "VERIFICATION",
        CategoryKind::Other => "OTHER",
    }
}

/// Exact lookup of a signature after canonicalization.
pub fn lookup<'a>(cheatsheet: &'a Cheatsheet, signature: &str) -> Option<&'a CategoryId> {
    let canonical = canonical_signature(signature)?;
    cheatsheet.entries.get(&canonical)
}

/// Whether a category is a token operation (transfer, approve, mint or burn
/// family).
pub fn is_token_operation(category: &CategoryId) -> bool {
    const FAMILIES: [&str; 4] = ["TRANSFER", "APPROVE", "MINT", "BURN"];
    FAMILIES.iter().any(|f| category.0.starts_with(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum ClassificationSource {
    Cheatsheet,
    Sidecar,
    LocalFallback,
    DiscardUndecoded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Category(CategoryId),
    Discarded,
    /// A category the cheatsheet does not have yet.
    NewCategory(CategoryMeta),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationOutcome {
    /// Canonical signature, or the raw text when it could not be parsed.
    pub signature: String,
    pub classification: Classification,
    pub source: ClassificationSource,
}

impl ClassificationOutcome {
    pub fn category_id(&self) -> Option<&CategoryId> {
        match &self.classification {
            Classification::Category(id) => Some(id),
            Classification::NewCategory(meta) => Some(&meta.id),
            Classification::Discarded => None,
        }
    }
}

/// Request sent to an external classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierRequest {
    pub signature: String,
    pub source_code: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierResponse {
    pub category: String,
    pub confidence: f64,
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifierError {
    #[error("classifier unreachable: {0}")]
    Unavailable(String),
    #[error("classifier protocol error: {0}")]
    Protocol(String),
}

/// Pluggable code-similarity classifier for decoded signatures the
/// cheatsheet does not know.
pub trait ClassifierBoundary: Send + Sync {
    fn classify(&self, request: &ClassifierRequest) -> Result<ClassifierResponse, ClassifierError>;
}

/// Acceptance policy applied to classifier answers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierPolicy {
    /// Validated answers below this confidence create a new category instead.
    pub min_confidence: f64,
}

impl Default for ClassifierPolicy {
    fn default() -> Self {
        Self { min_confidence: 0.0 }
    }
}

/// Keyword stems used when no classifier is configured: (stem, category).
pub const STEM_TABLE: &[(&str, &str)] = &[
    ("addliquidity", "ADD_LIQUIDITY"),
    ("airdrop", "AIRDROP"),
    ("approve", "APPROVE"),
    ("borrow", "BORROW"),
    ("burn", "BURN"),
    ("buy", "BUY"),
    ("claim", "CLAIM"),
    ("deposit", "DEPOSIT"),
    ("flashloan", "FLASHLOAN"),
    ("harvest", "HARVEST"),
    ("liquidate", "LIQUIDATE"),
    ("lock", "LOCK"),
    ("mint", "MINT"),
    ("redeem", "REDEEM"),
    ("removeliquidity", "REMOVE_LIQUIDITY"),
    ("repay", "REPAY"),
    ("reward", "REWARD"),
    ("sell", "SELL"),
    ("skim", "SKIM"),
    ("stake", "STAKE"),
    ("swap", "SWAP"),
    ("sync", "SYNC"),
    ("transfer", "TRANSFER"),
    ("unlock", "UNLOCK"),
    ("unstake", "UNSTAKE"),
    ("withdraw", "WITHDRAW"),
];

/// Prefixes that mark a verification hook regardless of the stem.
pub const VERIFICATION_PREFIXES: &[&str] = &["before", "after", "check"];

/// Longest stem contained in `name` (lowercased); ties go to the
/// alphabetically smaller stem.
pub fn match_stem(name: &str) -> Option<(&'static str, &'static str)> {
    let lower = name.to_ascii_lowercase();
    STEM_TABLE
        .iter()
        .filter(|(stem, _)| lower.contains(stem))
        .max_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| b.0.cmp(a.0)))
        .copied()
}

fn content_suffix(signature: &str) -> String {
    let mut tagged = Vec::with_capacity(signature.len() + 9);
    tagged.extend_from_slice(b"category:");
    tagged.extend_from_slice(signature.as_bytes());
    to_hex(&keccak256(&tagged)[..4]).to_ascii_uppercase()
}

/// Deterministic local classification by keyword stem.
pub fn local_fallback(cheatsheet: &Cheatsheet, canonical: &str) -> Classification {
    let name = function_name(canonical);
    let lower = name.to_ascii_lowercase();
    let verification = VERIFICATION_PREFIXES.iter().any(|p| lower.starts_with(p));
    let stem = match_stem(name);

    let (id, kind, description) = match (verification, stem) {
        (true, Some((stem, cat))) => (
            format!("VERIFY_{cat}"),
            CategoryKind::Verification,
            format!("verification hook around {stem}"),
        ),
        (true, None) => (
            "VERIFY_HOOK".to_string(),
            CategoryKind::Verification,
            "verification hook".to_string(),
        ),
        (false, Some((stem, cat))) => (
            cat.to_string(),
            CategoryKind::Financial,
            format!("{stem} operations"),
        ),
        (false, None) => (
            format!("OTHER_{}", content_suffix(canonical)),
            CategoryKind::Other,
            format!("unresolved signature {canonical}"),
        ),
    };
    resolve_new(cheatsheet, id, kind, description)
}

fn resolve_new(
    cheatsheet: &Cheatsheet,
    id: String,
    kind: CategoryKind,
    description: String,
) -> Classification {
    // Ids built above are always well-formed.
    let id = CategoryId::new(id).expect("generated category id");
    if cheatsheet.categories.contains_key(&id) {
        Classification::Category(id)
    } else {
        Classification::NewCategory(CategoryMeta {
            id,
            kind,
            description,
        })
    }
}

/// Classifies a signature the cheatsheet does not contain.
///
/// Undecoded signatures are discarded without consulting the classifier.
/// `SidecarUnavailable` is returned when a configured classifier cannot be
/// reached; callers choose whether to retry with `classifier = None`.
pub fn classify_unknown(
    cheatsheet: &Cheatsheet,
    signature: &str,
    is_decoded: bool,
    classifier: Option<&dyn ClassifierBoundary>,
    policy: ClassifierPolicy,
) -> Result<ClassificationOutcome, SemanticsError> {
    if !is_decoded || signature.trim().is_empty() {
        return Ok(ClassificationOutcome {
            signature: signature.to_owned(),
            classification: Classification::Discarded,
            source: ClassificationSource::DiscardUndecoded,
        });
    }
    let Some(canonical) = canonical_signature(signature) else {
        // Decoded but unparsable text carries no usable semantics.
        return Ok(ClassificationOutcome {
            signature: signature.to_owned(),
            classification: Classification::Discarded,
            source: ClassificationSource::DiscardUndecoded,
        });
    };

    let Some(classifier) = classifier else {
        let classification = local_fallback(cheatsheet, &canonical);
        return Ok(ClassificationOutcome {
            signature: canonical,
            classification,
            source: ClassificationSource::LocalFallback,
        });
    };

    let request = ClassifierRequest {
        signature: canonical.clone(),
        source_code: String::new(),
    };
    let response = match classifier.classify(&request) {
        Ok(r) => r,
        Err(ClassifierError::Unavailable(msg)) => return Err(SemanticsError::SidecarUnavailable(msg)),
        Err(ClassifierError::Protocol(msg)) => return Err(SemanticsError::SidecarUnavailable(msg)),
    };
    let accepted = response.validated && response.confidence >= policy.min_confidence;
    let classification = match CategoryId::new(response.category.clone()) {
        Ok(id) if accepted && cheatsheet.categories.contains_key(&id) => Classification::Category(id),
        Ok(id) if accepted => Classification::NewCategory(CategoryMeta {
            id,
            kind: CategoryKind::Other,
            description: format!("proposed by classifier for {canonical}"),
        }),
        _ => resolve_new(
            cheatsheet,
            format!("OTHER_{}", content_suffix(&canonical)),
            CategoryKind::Other,
            format!("classifier rejected nearest category for {canonical}"),
        ),
    };
    Ok(ClassificationOutcome {
        signature: canonical,
        classification,
        source: ClassificationSource::Sidecar,
    })
}

/// Full resolution: cheatsheet first, then [`classify_unknown`].
pub fn classify_signature(
    cheatsheet: &Cheatsheet,
    signature: &str,
    classifier: Option<&dyn ClassifierBoundary>,
    policy: ClassifierPolicy,
) -> Result<ClassificationOutcome, SemanticsError> {
    if let Some(id) = lookup(cheatsheet, signature) {
        return Ok(ClassificationOutcome {
            signature: canonical_signature(signature).unwrap_or_default(),
            classification: Classification::Category(id.clone()),
            source: ClassificationSource::Cheatsheet,
        });
    }
    classify_unknown(cheatsheet, signature, !signature.trim().is_empty(), classifier, policy)
}

/// Returns a copy of `cheatsheet` extended with the new category and its
/// signature. Re-adding an identical mapping returns an unchanged copy.
pub fn persist_new_category(
    cheatsheet: &Cheatsheet,
    outcome: &ClassificationOutcome,
) -> Result<Cheatsheet, SemanticsError> {
    let Classification::NewCategory(meta) = &outcome.classification else {
        return Err(SemanticsError::NotNewCategory);
    };
    let mut next = cheatsheet.clone();
    let mut changed = false;
    match next.categories.get(&meta.id) {
        Some(existing) if existing != meta => {
            return Err(SemanticsError::CategoryCollision(meta.id.0.clone()))
        }
        Some(_) => {}
        None => {
            next.categories.insert(meta.id.clone(), meta.clone());
            changed = true;
        }
    }
    changed |= next.insert_entry(&outcome.signature, meta.id.clone())?;
    if changed {
        next.version = cheatsheet.next_version();
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::sync::atomic::{AtomicUsize, Ordering};

    fn cat(id: &str, kind: CategoryKind) -> CategoryMeta {
        CategoryMeta {
            id: CategoryId::new(id).unwrap(),
            kind,
            description: id.to_ascii_lowercase(),
        }
    }

    fn small_sheet() -> Cheatsheet {
        Cheatsheet::new(
            "test",
            vec![cat("TRANSFER", CategoryKind::Financial), cat("SWAP", CategoryKind::Financial)],
            vec![
                ("transfer(address,uint256)".to_string(), CategoryId::new("TRANSFER").unwrap()),
                (
                    "swap(uint256,uint256,address,bytes)".to_string(),
                    CategoryId::new("SWAP").unwrap(),
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn canonicalization() {
        let cases = [
            ("transfer(address,uint256)", "transfer(address,uint256)"),
            ("transfer( address , uint256 )", "transfer(address,uint256)"),
            ("transfer(address to, uint256 amount)", "transfer(address,uint256)"),
            ("function deposit(uint amount) external", "deposit(uint256)"),
            ("foo(Address[] memory xs, bytes32 [2] ys)", "foo(address[],bytes32[2])"),
            ("bar((uint a, address b)[] calldata c, int d)", "bar((uint256,address)[],int256)"),
            ("sync()", "sync()"),
        ];
        for (input, expected) in cases {
            assert_eq!(canonical_signature(input).as_deref(), Some(expected), "{input}");
        }
        for bad in ["", "transfer", "(address)", "f(,)", "f(address", "1f()", "f(a-b)"] {
            assert_eq!(canonical_signature(bad), None, "{bad}");
        }
    }

    #[test]
    fn lookup_canonicalizes() {
        let s = small_sheet();
        assert_eq!(lookup(&s, "transfer(address,uint256)").unwrap().as_str(), "TRANSFER");
        assert_eq!(lookup(&s, "transfer( address , uint256 )").unwrap().as_str(), "TRANSFER");
        assert!(lookup(&s, "mint(address,uint256)").is_none());
    }

    #[test]
    fn category_id_shape() {
        assert!(CategoryId::new("SWAP").is_ok());
        assert!(CategoryId::new("VERIFY_HOOK_2").is_ok());
        assert!(CategoryId::new("S").is_err());
        assert!(CategoryId::new("swap").is_err());
        assert!(CategoryId::new("A".repeat(33)).is_err());
    }

    #[test]
    fn undecoded_is_discarded_without_classifier_call() {
        struct Counting(AtomicUsize);
        impl ClassifierBoundary for Counting {
            fn classify(&self, _: &ClassifierRequest) -> Result<ClassifierResponse, ClassifierError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Err(ClassifierError::Unavailable("down".into()))
            }
        }
        let s = small_sheet();
        let c = Counting(AtomicUsize::new(0));
        for classifier in [None, Some(&c as &dyn ClassifierBoundary)] {
            let out = classify_unknown(&s, "", false, classifier, ClassifierPolicy::default()).unwrap();
            assert_eq!(out.classification, Classification::Discarded);
            assert_eq!(out.source, ClassificationSource::DiscardUndecoded);
            let out = classify_unknown(&s, "foo(uint256)", false, classifier, ClassifierPolicy::default())
                .unwrap();
            assert_eq!(out.classification, Classification::Discarded);
        }
        assert_eq!(c.0.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn before_hook_is_verification_not_deposit() {
        let s = small_sheet();
        let out =
            classify_unknown(&s, "beforeDeposit(uint256)", true, None, ClassifierPolicy::default()).unwrap();
        match out.classification {
            Classification::NewCategory(meta) => {
                assert_eq!(meta.kind, CategoryKind::Verification);
                assert_ne!(meta.id.as_str(), "DEPOSIT");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn emergency_burn_is_burn_family() {
        let s = small_sheet();
        let out =
            classify_unknown(&s, "emergencyBurn(address)", true, None, ClassifierPolicy::default()).unwrap();
        assert_eq!(out.category_id().unwrap().as_str(), "BURN");
        assert_eq!(out.source, ClassificationSource::LocalFallback);
    }

    #[test]
    fn stem_resolves_to_existing_category() {
        let s = small_sheet();
        let out = classify_unknown(&s, "swapExactTokensForTokens(uint256,uint256,address[],address,uint256)",
            true, None, ClassifierPolicy::default()).unwrap();
        assert_eq!(out.classification, Classification::Category(CategoryId::new("SWAP").unwrap()));
    }

    #[test]
    fn longest_stem_wins_and_ties_are_alphabetical() {
        assert_eq!(match_stem("unstakeAll").unwrap().1, "UNSTAKE");
        assert_eq!(match_stem("removeLiquidityETH").unwrap().1, "REMOVE_LIQUIDITY");
        // "burn" and "mint" are both four letters.
        assert_eq!(match_stem("mintOrBurn").unwrap().0, "burn");
        assert!(match_stem("getReserves").is_none());
    }

    #[test]
    fn prefixed_stem_never_equals_plain_stem() {
        let s = small_sheet();
        for (stem, _) in STEM_TABLE {
            for prefix in VERIFICATION_PREFIXES {
                let plain = classify_unknown(&s, &format!("{stem}()"), true, None, Default::default()).unwrap();
                let hooked = classify_unknown(&s, &format!("{prefix}{stem}()"), true, None, Default::default())
                    .unwrap();
                assert_ne!(plain.category_id(), hooked.category_id(), "{prefix}{stem}");
            }
        }
    }

    #[test]
    fn unresolved_gets_hashed_other_category() {
        let s = small_sheet();
        let out = classify_unknown(&s, "zzz(uint8)", true, None, Default::default()).unwrap();
        let id = out.category_id().unwrap().as_str().to_string();
        assert!(id.starts_with("OTHER_") && id.len() == 14, "{id}");
        let again = classify_unknown(&s, "zzz( uint8 )", true, None, Default::default()).unwrap();
        assert_eq!(again.category_id().unwrap().as_str(), id);
    }

    struct Scripted(ClassifierResponse);
    impl ClassifierBoundary for Scripted {
        fn classify(&self, _: &ClassifierRequest) -> Result<ClassifierResponse, ClassifierError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn sidecar_validated_existing_category() {
        let s = small_sheet();
        let c = Scripted(ClassifierResponse { category: "SWAP".into(), confidence: 0.9, validated: true });
        let out = classify_unknown(&s, "trade(uint256)", true, Some(&c), Default::default()).unwrap();
        assert_eq!(out.classification, Classification::Category(CategoryId::new("SWAP").unwrap()));
        assert_eq!(out.source, ClassificationSource::Sidecar);
    }

    #[test]
    fn sidecar_rejection_creates_new_category() {
        let s = small_sheet();
        let c = Scripted(ClassifierResponse { category: "SWAP".into(), confidence: 0.9, validated: false });
        let out = classify_unknown(&s, "trade(uint256)", true, Some(&c), Default::default()).unwrap();
        assert!(matches!(out.classification, Classification::NewCategory(_)));
    }

    #[test]
    fn sidecar_unavailable_is_reported() {
        struct Down;
        impl ClassifierBoundary for Down {
            fn classify(&self, _: &ClassifierRequest) -> Result<ClassifierResponse, ClassifierError> {
                Err(ClassifierError::Unavailable("refused".into()))
            }
        }
        let s = small_sheet();
        let err = classify_unknown(&s, "trade(uint256)", true, Some(&Down), Default::default()).unwrap_err();
        assert!(matches!(err, SemanticsError::SidecarUnavailable(_)));
    }

    #[test]
    fn persist_is_value_semantic_and_idempotent() {
        let s = small_sheet();
        let out = classify_unknown(&s, "zzz(uint8)", true, None, Default::default()).unwrap();
        let next = persist_new_category(&s, &out).unwrap();
        assert_eq!(s.len(), 2);
        assert!(lookup(&s, "zzz(uint8)").is_none());
        assert_eq!(next.len(), 3);
        assert_eq!(next.revision(), 1);
        assert_eq!(lookup(&next, "zzz(uint8)"), out.category_id());

        let again = persist_new_category(&next, &out).unwrap();
        assert_eq!(again.version(), next.version());
        assert_eq!(again.content_hash(), next.content_hash());
    }

    #[test]
    fn persist_detects_collision() {
        let s = small_sheet();
        let outcome = ClassificationOutcome {
            signature: "trade(uint256)".into(),
            classification: Classification::NewCategory(CategoryMeta {
                id: CategoryId::new("SWAP").unwrap(),
                kind: CategoryKind::Other,
                description: "something else".into(),
            }),
            source: ClassificationSource::Sidecar,
        };
        assert_eq!(
            persist_new_category(&s, &outcome),
            Err(SemanticsError::CategoryCollision("SWAP".into()))
        );
        let not_new = ClassificationOutcome {
            classification: Classification::Discarded,
            ..outcome
        };
        assert_eq!(persist_new_category(&s, &not_new), Err(SemanticsError::NotNewCategory));
    }

    #[test]
    fn hundred_sequential_additions() {
        let mut sheet = small_sheet();
        let base = sheet.len();
        let mut last_rev = sheet.revision();
        for i in 0..100 {
            let out = classify_unknown(&sheet, &format!("opaque{i}(uint256)"), true, None, Default::default())
                .unwrap();
            sheet = persist_new_category(&sheet, &out).unwrap();
            assert!(sheet.revision() > last_rev);
            last_rev = sheet.revision();
        }
        assert_eq!(sheet.len(), base + 100);
        assert_eq!(sheet.revision(), 100);
    }

    #[test]
    fn token_operation_families() {
        for id in ["TRANSFER", "TRANSFER_FROM", "APPROVE", "MINT", "BURN"] {
            assert!(is_token_operation(&CategoryId::new(id).unwrap()));
        }
        for id in ["SWAP", "SKIM", "VERIFY_TRANSFER"] {
            assert!(!is_token_operation(&CategoryId::new(id).unwrap()));
        }
    }
}
