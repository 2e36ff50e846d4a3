//! Token-type-aware matching.
//!
//! Extracted logic is split into core-asset and protocol-specific key sets.
//! Each side is scored with the asymmetric normalized set difference
//! `1 − |A ∖ B| / |A|` against the pattern's reference sets and the two
//! scores are blended with λ; a candidate is flagged when the blend reaches τ.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::hash::{Hash, Hasher};

use hashbrown::{Equivalent, HashMap, HashSet};

use crate::extract::{ExtractedLogic, LogicItem, TargetRole};
use crate::labels::TokenClass;
use crate::primitives::{keccak256, to_hex, TxHash};
use crate::semantics::CategoryId;

pub const DEFAULT_LAMBDA: f64 = 0.6;
pub const DEFAULT_TAU: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("pattern has no core-asset or protocol-specific items")]
    EmptyPattern,
    #[error("{name} = {value} is outside [0, 1]")]
    InvalidHyperparameter { name: &'static str, value: f64 },
    #[error("reference set is empty")]
    EmptyReference,
    #[error("{side} set holds a key with token class {found}")]
    WrongSide { side: &'static str, found: &'static str },
    #[error("generalized pattern does not match its own source")]
    SelfMatchFailed,
}

/// Canonical element identity: `(category, token class, target role)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(from = "(CategoryId, TokenClass, TargetRole)", into = "(CategoryId, TokenClass, TargetRole)")
)]
pub struct LogicKey {
    pub category: CategoryId,
    pub token: TokenClass,
    pub target_role: TargetRole,
}

impl From<(CategoryId, TokenClass, TargetRole)> for LogicKey {
    fn from((category, token, target_role): (CategoryId, TokenClass, TargetRole)) -> Self {
        LogicKey {
            category,
            token,
            target_role,
        }
    }
}

impl From<LogicKey> for (CategoryId, TokenClass, TargetRole) {
    fn from(k: LogicKey) -> Self {
        (k.category, k.token, k.target_role)
    }
}

impl From<&LogicItem> for LogicKey {
    fn from(item: &LogicItem) -> Self {
        LogicKey {
            category: item.category.clone(),
            token: item.token,
            target_role: item.target_role,
        }
    }
}

fn hash_key<H: Hasher>(category: &str, token: TokenClass, role: TargetRole, state: &mut H) {
    state.write(category.as_bytes());
    state.write_u8(0xff);
    state.write_u8(token as u8);
    state.write_u8(role as u8);
}

impl Hash for LogicKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        hash_key(self.category.as_str(), self.token, self.target_role, state);
    }
}

/// Borrowed view of a key, so lookups need no allocation.
struct KeyRef<'a>(&'a LogicItem);

impl Hash for KeyRef<'_> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        hash_key(self.0.category.as_str(), self.0.token, self.0.target_role, state);
    }
}

impl Equivalent<LogicKey> for KeyRef<'_> {
    fn equivalent(&self, key: &LogicKey) -> bool {
        self.0.category == key.category && self.0.token == key.token && self.0.target_role == key.target_role
    }
}

/// Asymmetric normalized set difference `1 − |A ∖ B| / |A|`. Both inputs
/// are treated as sets.
pub fn ansd<K: Hash + Eq>(reference: &[K], candidate: &[K]) -> Result<f64, MatchError> {
    let reference: HashSet<&K> = reference.iter().collect();
    if reference.is_empty() {
        return Err(MatchError::EmptyReference);
    }
    let candidate: HashSet<&K> = candidate.iter().collect();
    let covered = reference.iter().filter(|k| candidate.contains(*k)).count();
    Ok(ratio(covered, reference.len()))
}

fn ratio(covered: usize, total: usize) -> f64 {
    covered as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatternProvenance {
    pub source_tx: TxHash,
    /// Unix seconds.
    pub created_at: u64,
}

/// Detection pattern generalized from one confirmed attack.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pattern_id: String,
    reference_logic: Option<ExtractedLogic>,
    core_set: Vec<LogicKey>,
    proto_set: Vec<LogicKey>,
    lambda: f64,
    tau: f64,
    provenance: PatternProvenance,
}

fn check_unit(name: &'static str, value: f64) -> Result<(), MatchError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MatchError::InvalidHyperparameter { name, value })
    }
}

fn normalize_side(
    mut keys: Vec<LogicKey>,
    side: &'static str,
    expected: TokenClass,
) -> Result<Vec<LogicKey>, MatchError> {
    if let Some(k) = keys.iter().find(|k| k.token != expected) {
        return Err(MatchError::WrongSide {
            side,
            found: k.token.as_str(),
        });
    }
    keys.sort_unstable();
    keys.dedup();
    Ok(keys)
}

/// Stable identifier derived from the source transaction and key sets.
pub fn derive_pattern_id(source_tx: &TxHash, core_set: &[LogicKey], proto_set: &[LogicKey]) -> String {
    let mut buf = Vec::new();
    buf.extend_from_slice(source_tx.as_bytes());
    for (tag, side) in [(b'C', core_set), (b'P', proto_set)] {
        for k in side {
            buf.push(tag);
            buf.extend_from_slice(k.category.as_str().as_bytes());
            buf.push(0);
            buf.push(k.token as u8);
            buf.push(k.target_role as u8);
        }
    }
    format!("pat-{}", to_hex(&keccak256(&buf)[..8]))
}

impl Pattern {
    /// Builds a pattern from explicit key sets (e.g. a pattern file).
    /// Sets are sorted and deduplicated; keys must sit on their own side.
    pub fn from_parts(
        pattern_id: Option<String>,
        core_set: Vec<LogicKey>,
        proto_set: Vec<LogicKey>,
        lambda: f64,
        tau: f64,
        provenance: PatternProvenance,
        reference_logic: Option<ExtractedLogic>,
    ) -> Result<Self, MatchError> {
        check_unit("lambda", lambda)?;
        check_unit("tau", tau)?;
        let core_set = normalize_side(core_set, "core", TokenClass::Core)?;
        let proto_set = normalize_side(proto_set, "proto", TokenClass::ProtocolSpecific)?;
        if core_set.is_empty() && proto_set.is_empty() {
            return Err(MatchError::EmptyPattern);
        }
        let pattern_id =
            pattern_id.unwrap_or_else(|| derive_pattern_id(&provenance.source_tx, &core_set, &proto_set));
        Ok(Pattern {
            pattern_id,
            reference_logic,
            core_set,
            proto_set,
            lambda,
            tau,
            provenance,
        })
    }

    pub fn pattern_id(&self) -> &str {
        &self.pattern_id
    }

    pub fn reference_logic(&self) -> Option<&ExtractedLogic> {
        self.reference_logic.as_ref()
    }

    pub fn core_set(&self) -> &[LogicKey] {
        &self.core_set
    }

    pub fn proto_set(&self) -> &[LogicKey] {
        &self.proto_set
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn provenance(&self) -> &PatternProvenance {
        &self.provenance
    }

    pub fn key_count(&self) -> usize {
        self.core_set.len() + self.proto_set.len()
    }

    /// Same sets and provenance with different hyperparameters.
    pub fn with_hyperparameters(&self, lambda: f64, tau: f64) -> Result<Self, MatchError> {
        check_unit("lambda", lambda)?;
        check_unit("tau", tau)?;
        Ok(Pattern {
            lambda,
            tau,
            ..self.clone()
        })
    }
}

/// Partitions logic into deduplicated, sorted (core, proto) key sets;
/// NON_TOKEN items are left out.
pub fn partition(logic: &ExtractedLogic) -> (Vec<LogicKey>, Vec<LogicKey>) {
    let mut core = Vec::new();
    let mut proto = Vec::new();
    for item in &logic.items {
        match item.token {
            TokenClass::Core => core.push(LogicKey::from(item)),
            TokenClass::ProtocolSpecific => proto.push(LogicKey::from(item)),
            TokenClass::NonToken => {}
        }
    }
    for side in [&mut core, &mut proto] {
        side.sort_unstable();
        side.dedup();
    }
    (core, proto)
}

/// Generalizes a confirmed attack into a pattern (Def. 2).
pub fn generalize(
    attack: &ExtractedLogic,
    lambda: f64,
    tau: f64,
    created_at: u64,
) -> Result<Pattern, MatchError> {
    check_unit("lambda", lambda)?;
    check_unit("tau", tau)?;
    let (core_set, proto_set) = partition(attack);
    let pattern = Pattern::from_parts(
        None,
        core_set,
        proto_set,
        lambda,
        tau,
        PatternProvenance {
            source_tx: attack.tx_hash,
            created_at,
        },
        Some(attack.clone()),
    )?;
    if !match_one(&pattern, attack).flagged {
        return Err(MatchError::SelfMatchFailed);
    }
    Ok(pattern)
}

/// Score of one pattern side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SideScore {
    Scored(f64),
    /// The pattern has no keys on this side.
    NotApplicable,
}

impl SideScore {
    pub fn value(self) -> Option<f64> {
        match self {
            SideScore::Scored(v) => Some(v),
            SideScore::NotApplicable => None,
        }
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for SideScore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SideScore::Scored(v) => s.serialize_f64(*v),
            SideScore::NotApplicable => s.serialize_str("NOT_APPLICABLE"),
        }
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for SideScore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = SideScore;
            fn expecting(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
                f.write_str("a number or \"NOT_APPLICABLE\"")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<SideScore, E> {
                Ok(SideScore::Scored(v))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<SideScore, E> {
                Ok(SideScore::Scored(v as f64))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<SideScore, E> {
                Ok(SideScore::Scored(v as f64))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<SideScore, E> {
                if v == "NOT_APPLICABLE" {
                    Ok(SideScore::NotApplicable)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchResult {
    pub pattern_id: String,
    pub tx_hash: TxHash,
    pub sim_core: SideScore,
    pub sim_proto: SideScore,
    pub sim_final: f64,
    pub flagged: bool,
}

/// Blends the two side scores; an inapplicable side hands its weight to
/// the other one.
pub fn blend(lambda: f64, core: SideScore, proto: SideScore) -> f64 {
    let v = match (core, proto) {
        (SideScore::Scored(c), SideScore::Scored(p)) if c == p => c,
        (SideScore::Scored(c), SideScore::Scored(p)) => lambda * c + (1.0 - lambda) * p,
        (SideScore::Scored(c), SideScore::NotApplicable) => c,
        (SideScore::NotApplicable, SideScore::Scored(p)) => p,
        (SideScore::NotApplicable, SideScore::NotApplicable) => 0.0,
    };
    v.clamp(0.0, 1.0)
}

/// Whether repeated keys count (multiset) or not (set, the default).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Multiplicity {
    #[default]
    Set,
    Multiset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Core,
    Proto,
}

/// A pattern prepared for repeated matching: one hash lookup per candidate
/// item, so a match costs O(|candidate|) plus a slot reset.
#[derive(Debug, Clone)]
pub struct CompiledPattern {
    pattern: Pattern,
    slots: HashMap<LogicKey, (Side, usize)>,
    /// Required multiplicity per slot (all ones in set mode).
    need: Vec<u32>,
    core_total: u32,
    proto_total: u32,
}

impl CompiledPattern {
    pub fn new(pattern: Pattern) -> Self {
        Self::with_multiplicity(pattern, Multiplicity::Set)
    }

    /// In multiset mode the reference multiplicities come from the
    /// pattern's reference logic; keys it does not cover count once.
    pub fn with_multiplicity(pattern: Pattern, mode: Multiplicity) -> Self {
        let mut counts: HashMap<LogicKey, u32> = HashMap::new();
        if let (Multiplicity::Multiset, Some(logic)) = (mode, pattern.reference_logic()) {
            for item in &logic.items {
                *counts.entry(LogicKey::from(item)).or_insert(0) += 1;
            }
        }
        let mut slots = HashMap::with_capacity(pattern.key_count());
        let mut need = Vec::with_capacity(pattern.key_count());
        let mut totals = [0u32; 2];
        for (side, keys) in [(Side::Core, pattern.core_set()), (Side::Proto, pattern.proto_set())] {
            for key in keys {
                let n = counts.get(key).copied().unwrap_or(1).max(1);
                slots.insert(key.clone(), (side, need.len()));
                need.push(n);
                totals[side as usize] += n;
            }
        }
        CompiledPattern {
            pattern,
            slots,
            need,
            core_total: totals[0],
            proto_total: totals[1],
        }
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    /// Per-side scores without blending.
    pub fn side_scores(&self, candidate: &ExtractedLogic) -> (SideScore, SideScore) {
        let mut seen = vec![0u32; self.need.len()];
        let mut covered = [0u32; 2];
        for item in &candidate.items {
            if item.token == TokenClass::NonToken {
                continue;
            }
            if let Some(&(side, slot)) = self.slots.get(&KeyRef(item)) {
                if seen[slot] < self.need[slot] {
                    seen[slot] += 1;
                    covered[side as usize] += 1;
                }
            }
        }
        let score = |covered: u32, total: u32| {
            if total == 0 {
                SideScore::NotApplicable
            } else {
                SideScore::Scored(ratio(covered as usize, total as usize))
            }
        };
        (score(covered[0], self.core_total), score(covered[1], self.proto_total))
    }

    pub fn match_logic(&self, candidate: &ExtractedLogic) -> MatchResult {
        let (sim_core, sim_proto) = self.side_scores(candidate);
        let sim_final = blend(self.pattern.lambda, sim_core, sim_proto);
        MatchResult {
            pattern_id: self.pattern.pattern_id.clone(),
            tx_hash: candidate.tx_hash,
            sim_core,
            sim_proto,
            sim_final,
            flagged: sim_final >= self.pattern.tau,
        }
    }
}

/// Scores one pattern against one candidate.
pub fn match_one(pattern: &Pattern, candidate: &ExtractedLogic) -> MatchResult {
    CompiledPattern::new(pattern.clone()).match_logic(candidate)
}

/// One result per pattern, in input order.
pub fn match_all(patterns: &[CompiledPattern], candidate: &ExtractedLogic) -> Vec<MatchResult> {
    patterns.iter().map(|p| p.match_logic(candidate)).collect()
}

/// A transaction is observed iff any pattern flags it.
pub fn observed(results: &[MatchResult]) -> bool {
    results.iter().any(|r| r.flagged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(cat: &str, token: TokenClass) -> LogicKey {
        let target_role = match token {
            TokenClass::Core => TargetRole::CoreAssetToken,
            TokenClass::ProtocolSpecific => TargetRole::ProtocolToken,
            TokenClass::NonToken => TargetRole::Protocol,
        };
        LogicKey {
            category: CategoryId::new(cat).unwrap(),
            token,
            target_role,
        }
    }

    fn logic(tag: &str, keys: &[LogicKey]) -> ExtractedLogic {
        ExtractedLogic {
            tx_hash: TxHash::derive(tag),
            items: keys
                .iter()
                .map(|k| LogicItem {
                    category: k.category.clone(),
                    token: k.token,
                    target_role: k.target_role,
                    depth_after_lift: 0,
                })
                .collect(),
            source_invocation_count: keys.len(),
        }
    }

    use TokenClass::{Core, NonToken, ProtocolSpecific as Proto};

    #[test]
    fn ansd_examples() {
        let s = |xs: &[&str]| xs.iter().map(|x| String::from(*x)).collect::<Vec<_>>();
        assert_eq!(ansd(&s(&["a", "b", "c"]), &s(&["c", "b", "a"])).unwrap(), 1.0);
        assert_eq!(ansd(&s(&["a", "b", "c", "d"]), &s(&["a", "b"])).unwrap(), 0.5);
        assert_eq!(ansd(&s(&["a", "b"]), &s(&["a", "b", "x", "y"])).unwrap(), 1.0);
        assert_eq!(ansd(&s(&["a", "b"]), &s(&["x"])).unwrap(), 0.0);
        assert_eq!(ansd::<String>(&[], &s(&["x"])), Err(MatchError::EmptyReference));
    }

    #[test]
    fn generalize_partitions_by_token() {
        let attack = logic(
            "a",
            &[key("SWAP", Core), key("TRANSFER", Core), key("SKIM", Proto), key("SYNC", NonToken), key("SWAP", Core)],
        );
        let p = generalize(&attack, 0.6, 0.7, 0).unwrap();
        assert_eq!(p.core_set().len(), 2);
        assert_eq!(p.proto_set().len(), 1);
        assert!(p.pattern_id().starts_with("pat-"));
        let r = match_one(&p, &attack);
        assert!(r.flagged);
        assert_eq!(r.sim_final, 1.0);
    }

    #[test]
    fn generalize_rejects_bad_input() {
        let only_non_token = logic("n", &[key("SYNC", NonToken)]);
        assert_eq!(generalize(&only_non_token, 0.6, 0.7, 0), Err(MatchError::EmptyPattern));
        let ok = logic("o", &[key("SWAP", Core)]);
        assert!(matches!(generalize(&ok, 1.5, 0.7, 0), Err(MatchError::InvalidHyperparameter { name: "lambda", .. })));
        assert!(matches!(generalize(&ok, 0.5, -0.1, 0), Err(MatchError::InvalidHyperparameter { name: "tau", .. })));
    }

    #[test]
    fn self_match_holds_for_every_tau() {
        let attack = logic("a", &[key("SWAP", Core), key("SKIM", Proto)]);
        for lambda in [0.0, 0.1, 0.3, 0.6, 1.0] {
            let p = generalize(&attack, lambda, 1.0, 0).unwrap();
            assert!(match_one(&p, &attack).flagged);
        }
    }

    fn two_sided() -> Pattern {
        let attack = logic(
            "a",
            &[key("TRANSFER", Core), key("SWAP", Core), key("SKIM", Proto), key("SYNC", Proto)],
        );
        generalize(&attack, 0.6, 0.7, 0).unwrap()
    }

    #[test]
    fn weighted_blend_example() {
        let p = two_sided();
        let cand = logic("c", &[key("TRANSFER", Core), key("SWAP", Core), key("SKIM", Proto)]);
        let r = match_one(&p, &cand);
        assert_eq!(r.sim_core, SideScore::Scored(1.0));
        assert_eq!(r.sim_proto, SideScore::Scored(0.5));
        assert!((r.sim_final - 0.8).abs() < 1e-12);
        assert!(r.flagged);
    }

    #[test]
    fn single_sided_candidate_never_flags_at_defaults() {
        let p = two_sided();
        let cand = logic("c", &[key("TRANSFER", Core), key("SWAP", Core), key("APPROVE", Core)]);
        let r = match_one(&p, &cand);
        assert_eq!(r.sim_proto, SideScore::Scored(0.0));
        assert!(r.sim_final <= 0.6);
        assert!(!r.flagged);
    }

    #[test]
    fn noise_and_reordering_are_ignored() {
        let p = two_sided();
        let mut keys = vec![key("SYNC", Proto), key("SKIM", Proto), key("SWAP", Core), key("TRANSFER", Core)];
        for i in 0..10 {
            keys.insert(i % keys.len(), key(&format!("NOISE_{i}"), if i % 2 == 0 { Core } else { Proto }));
        }
        let r = match_one(&p, &logic("c", &keys));
        assert_eq!(r.sim_final, 1.0);
        assert!(r.flagged);
    }

    #[test]
    fn empty_side_policy() {
        let attack = logic("a", &[key("SKIM", Proto), key("SYNC", Proto)]);
        let p = generalize(&attack, 0.6, 0.7, 0).unwrap();
        let r = match_one(&p, &logic("c", &[key("SKIM", Proto), key("SYNC", Proto), key("SWAP", Core)]));
        assert_eq!(r.sim_core, SideScore::NotApplicable);
        assert_eq!(r.sim_final, 1.0);
    }

    #[test]
    fn tau_boundary_flags_on_equality() {
        let p = two_sided().with_hyperparameters(0.5, 0.75).unwrap();
        let cand = logic("c", &[key("TRANSFER", Core), key("SWAP", Core), key("SKIM", Proto)]);
        let r = match_one(&p, &cand);
        assert_eq!(r.sim_final, 0.75);
        assert!(r.flagged);
    }

    #[test]
    fn match_all_examples() {
        let p1 = CompiledPattern::new(two_sided());
        let p2 = CompiledPattern::new(generalize(&logic("b", &[key("MINT", Proto)]), 0.6, 0.7, 0).unwrap());
        let p3 = CompiledPattern::new(generalize(&logic("d", &[key("BURN", Core)]), 0.6, 0.7, 0).unwrap());
        let empty = logic("e", &[]);
        let rs = match_all(&[p1.clone(), p2.clone(), p3.clone()], &empty);
        assert!(rs.iter().all(|r| r.sim_final == 0.0 && !r.flagged));
        let one = logic("o", &[key("MINT", Proto)]);
        let rs = match_all(&[p1.clone(), p2.clone(), p3], &one);
        assert_eq!(rs.iter().filter(|r| r.flagged).count(), 1);
        assert!(observed(&rs));
        let dup = match_all(&[p2.clone(), p2], &one);
        assert_eq!(dup[0], dup[1]);
    }

    #[test]
    fn multiset_mode_counts_repeats() {
        let attack = logic("a", &[key("SKIM", Proto), key("SKIM", Proto), key("SWAP", Core)]);
        let p = generalize(&attack, 0.5, 0.7, 0).unwrap();
        let set = CompiledPattern::new(p.clone());
        let multi = CompiledPattern::with_multiplicity(p, Multiplicity::Multiset);
        let cand = logic("c", &[key("SKIM", Proto), key("SWAP", Core)]);
        assert_eq!(set.match_logic(&cand).sim_proto, SideScore::Scored(1.0));
        assert_eq!(multi.match_logic(&cand).sim_proto, SideScore::Scored(0.5));
    }

    #[test]
    fn from_parts_validates_sides() {
        let prov = PatternProvenance { source_tx: TxHash::derive("s"), created_at: 0 };
        let err = Pattern::from_parts(None, vec![key("SKIM", Proto)], vec![], 0.6, 0.7, prov.clone(), None);
        assert!(matches!(err, Err(MatchError::WrongSide { side: "core", .. })));
        let err = Pattern::from_parts(None, vec![], vec![], 0.6, 0.7, prov, None);
        assert_eq!(err, Err(MatchError::EmptyPattern));
    }

    /// Longest common subsequence similarity, used only to show why the
    /// matcher is set-based: a reorder that ANSD ignores costs LCS heavily.
    fn lcs_similarity(a: &[LogicKey], b: &[LogicKey]) -> f64 {
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                dp[i + 1][j + 1] = if a[i] == b[j] { dp[i][j] + 1 } else { dp[i][j + 1].max(dp[i + 1][j]) };
            }
        }
        dp[a.len()][b.len()] as f64 / a.len() as f64
    }

    #[test]
    fn lcs_is_order_fragile_where_ansd_is_not() {
        let a: Vec<LogicKey> = ["A1", "B1", "C1", "D1", "E1", "F1"].iter().map(|c| key(c, Proto)).collect();
        let mut b = a.clone();
        b.reverse();
        assert!(lcs_similarity(&a, &b) < 0.2);
        assert_eq!(ansd(&a, &b).unwrap(), 1.0);
    }
}
