//! Attacker-logic extraction.
//!
//! Three phases over one trace:
//!
//! 1. **Tagging** — every address gets an [`AddressRole`] from the label
//!    snapshot. Unlabeled contracts that receive token operations from the
//!    attacker are treated as protocol tokens rather than attacker scripts.
//! 2. **Filtration** — an invocation survives iff its caller is the sender or
//!    an attacker script; protocol-internal calls are dropped.
//! 3. **Layer restructuring** — surviving calls into attacker scripts are
//!    wrappers: they are removed and their surviving children lifted one
//!    level, round by round, until no wrapper remains.
//!
//! Each remaining invocation is abstracted to a [`LogicItem`].

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};

use crate::labels::{classify_address, token_class, AddressRole, LabelClass, LabelSnapshot, TokenClass};
use crate::primitives::{Address, TxHash};
use crate::semantics::{
    classify_signature, is_token_operation, CategoryId, Cheatsheet, Classification,
    ClassificationOutcome, ClassifierBoundary, ClassifierPolicy, SemanticsError,
};
use crate::trace::{flatten_indexed, Trace};

/// Wrapper-nesting depth beyond which restructuring stops.
pub const MAX_LIFT_ROUNDS: u32 = 32;

/// Role of the contract an extracted invocation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum TargetRole {
    Protocol,
    CoreAssetToken,
    ProtocolToken,
}

impl TargetRole {
    pub const ALL: [TargetRole; 3] = [TargetRole::Protocol, TargetRole::CoreAssetToken, TargetRole::ProtocolToken];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetRole::Protocol => "PROTOCOL",
            TargetRole::CoreAssetToken => "CORE_ASSET_TOKEN",
            TargetRole::ProtocolToken => "PROTOCOL_TOKEN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        TargetRole::ALL.into_iter().find(|r| r.as_str() == s)
    }

    fn from_role(role: AddressRole) -> Option<Self> {
        match role {
            AddressRole::Protocol => Some(TargetRole::Protocol),
            AddressRole::CoreAssetToken => Some(TargetRole::CoreAssetToken),
            AddressRole::ProtocolToken => Some(TargetRole::ProtocolToken),
            AddressRole::AttackerScript | AddressRole::Sender => None,
        }
    }
}

/// One attacker-intent operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogicItem {
    #[cfg_attr(feature = "serde", serde(rename = "category_id"))]
    pub category: CategoryId,
    pub token: TokenClass,
    pub target_role: TargetRole,
    pub depth_after_lift: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExtractedLogic {
    pub tx_hash: TxHash,
    pub items: Vec<LogicItem>,
    pub source_invocation_count: usize,
}

impl ExtractedLogic {
    pub fn empty(tx_hash: TxHash) -> Self {
        ExtractedLogic {
            tx_hash,
            items: Vec::new(),
            source_invocation_count: 0,
        }
    }
}

/// Pinned inputs shared by every extraction of a scan.
#[derive(Clone, Copy)]
pub struct ExtractContext<'a> {
    pub labels: &'a LabelSnapshot,
    pub cheatsheet: &'a Cheatsheet,
    pub classifier: Option<&'a dyn ClassifierBoundary>,
    pub policy: ClassifierPolicy,
    /// Resolve locally when the classifier is unreachable instead of failing.
    pub fallback_on_unavailable: bool,
}

impl<'a> ExtractContext<'a> {
    pub fn new(labels: &'a LabelSnapshot, cheatsheet: &'a Cheatsheet) -> Self {
        ExtractContext {
            labels,
            cheatsheet,
            classifier: None,
            policy: ClassifierPolicy::default(),
            fallback_on_unavailable: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Phase {
    Filtration,
    Restructuring,
    Abstraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Reason {
    /// Caller is neither the sender nor an attacker script.
    ProtocolInternal,
    /// Call back into the sending account.
    TargetsSender,
    /// Attacker-script wrapper removed; its children were lifted.
    LiftedWrapper,
    /// Nested below the lift cap.
    LiftTruncated,
    /// Undecoded or unparsable signature.
    Undecoded,
    /// Became a logic item.
    Emitted,
}

/// Per-invocation record of the extraction decisions (`--explain`).
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExplainRecord {
    /// Pre-order index in the original trace.
    pub index: usize,
    pub depth: u32,
    pub caller: Address,
    pub callee: Address,
    pub signature: String,
    pub callee_role: AddressRole,
    pub phase: Phase,
    pub kept: bool,
    pub reason: Reason,
}

/// Extraction output together with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub logic: ExtractedLogic,
    /// Original pre-order index of the invocation behind each item.
    pub provenance: Vec<usize>,
    pub explain: Vec<ExplainRecord>,
    pub lift_rounds: u32,
    pub lift_truncated: bool,
    /// Categories resolved outside the cheatsheet during this extraction.
    pub new_categories: Vec<ClassificationOutcome>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// Node of the restructured call forest, in pre-order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestNode {
    /// Identifier carried through lifting (the original pre-order index).
    pub origin: usize,
    /// Index of the parent within the same forest; always smaller than the
    /// node's own index.
    pub parent: Option<usize>,
    pub wrapper: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftOutcome {
    /// Surviving nodes with parents remapped; no node is a wrapper.
    pub nodes: Vec<ForestNode>,
    /// Depth of each surviving node in the lifted forest.
    pub depths: Vec<u32>,
    pub rounds: u32,
    /// Origins removed because they sit below [`MAX_LIFT_ROUNDS`] wrappers.
    pub truncated: Vec<usize>,
}

/// Removes wrapper nodes round by round, promoting their children.
///
/// A wrapper under `k` other wrappers disappears in round `k + 1`, so the
/// round count is the deepest wrapper nesting. Nodes below
/// [`MAX_LIFT_ROUNDS`] nested wrappers are truncated.
pub fn lift(nodes: &[ForestNode]) -> LiftOutcome {
    let mut nesting = vec![0u32; nodes.len()];
    let mut new_index: Vec<Option<usize>> = vec![None; nodes.len()];
    let mut out = LiftOutcome {
        nodes: Vec::new(),
        depths: Vec::new(),
        rounds: 0,
        truncated: Vec::new(),
    };
    for (i, node) in nodes.iter().enumerate() {
        if let Some(p) = node.parent {
            debug_assert!(p < i, "forest must be in pre-order");
            nesting[i] = nesting[p] + u32::from(nodes[p].wrapper);
        }
        if nesting[i] >= MAX_LIFT_ROUNDS {
            out.truncated.push(node.origin);
            continue;
        }
        if node.wrapper {
            out.rounds = out.rounds.max(nesting[i] + 1);
            continue;
        }
        // Nearest surviving ancestor: climb through removed wrappers.
        let mut parent = node.parent;
        while let Some(p) = parent {
            if new_index[p].is_some() {
                break;
            }
            parent = nodes[p].parent;
        }
        let parent = parent.and_then(|p| new_index[p]);
        let depth = parent.map_or(0, |p| out.depths[p] + 1);
        new_index[i] = Some(out.nodes.len());
        out.nodes.push(ForestNode {
            origin: node.origin,
            parent,
            wrapper: false,
        });
        out.depths.push(depth);
    }
    out
}

struct Resolver<'c, 'a> {
    ctx: &'c ExtractContext<'a>,
    cache: HashMap<&'c str, ClassificationOutcome>,
}

impl<'c, 'a> Resolver<'c, 'a> {
    fn resolve(&mut self, signature: &'c str) -> Result<&ClassificationOutcome, SemanticsError> {
        if !self.cache.contains_key(signature) {
            let ctx = self.ctx;
            let outcome = match classify_signature(ctx.cheatsheet, signature, ctx.classifier, ctx.policy) {
                Err(SemanticsError::SidecarUnavailable(_)) if ctx.fallback_on_unavailable => {
                    classify_signature(ctx.cheatsheet, signature, None, ctx.policy)?
                }
                other => other?,
            };
            self.cache.insert(signature, outcome);
        }
        Ok(&self.cache[signature])
    }

    fn is_token_op(&mut self, signature: &'c str) -> Result<bool, SemanticsError> {
        if signature.is_empty() {
            return Ok(false);
        }
        Ok(self.resolve(signature)?.category_id().is_some_and(is_token_operation))
    }
}

fn is_attacker_side(role: AddressRole) -> bool {
    matches!(role, AddressRole::Sender | AddressRole::AttackerScript)
}

/// Extracts the attacker logic of `trace`.
pub fn extract(trace: &Trace, ctx: &ExtractContext<'_>) -> Result<ExtractedLogic, ExtractError> {
    extract_explained(trace, ctx).map(|e| e.logic)
}

/// [`extract`] plus per-invocation diagnostics and item provenance.
pub fn extract_explained(trace: &Trace, ctx: &ExtractContext<'_>) -> Result<Extraction, ExtractError> {
    let flat = flatten_indexed(trace);
    let labels = ctx.labels;
    let sender = trace.sender;
    let mut resolver = Resolver {
        ctx,
        cache: HashMap::new(),
    };
    let plain_role = |addr: &Address, direct: bool| classify_address(labels, addr, &sender, direct);

    // Tagging, first pass: unlabeled contracts receiving token operations
    // from the attacker side are tokens, not attacker scripts. Only calls
    // that pass plain filtration are consulted, so protocol-internal
    // traffic can never influence the outcome.
    let mut token_like: HashSet<Address> = HashSet::new();
    for node in &flat {
        let inv = node.invocation;
        if !is_attacker_side(plain_role(&inv.caller, false))
            || labels.label_class(&inv.callee) != LabelClass::Unlabeled
            || inv.callee == sender
        {
            continue;
        }
        if resolver.is_token_op(&inv.signature)? {
            token_like.insert(inv.callee);
        }
    }
    let role = |addr: &Address, direct: bool| {
        if token_like.contains(addr) {
            AddressRole::ProtocolToken
        } else {
            plain_role(addr, direct)
        }
    };

    // Filtration. Callers are judged by their own label, so children of a
    // lifted wrapper stay attacker-initiated.
    // (Alternative reading: re-check a lifted child against the position it
    // is lifted into; with caller-based filtration both readings coincide
    // because a wrapper's children always have the wrapper as caller.)
    let mut explain = Vec::with_capacity(flat.len());
    let mut callee_roles = Vec::with_capacity(flat.len());
    let mut in_forest = vec![false; flat.len()];
    let mut forest_parent: Vec<Option<usize>> = vec![None; flat.len()];
    let mut forest: Vec<ForestNode> = Vec::new();
    let mut forest_index: Vec<Option<usize>> = vec![None; flat.len()];
    for (i, node) in flat.iter().enumerate() {
        let inv = node.invocation;
        let callee_role = role(&inv.callee, inv.caller == sender);
        callee_roles.push(callee_role);
        // Nearest ancestor that is part of the forest.
        forest_parent[i] = node
            .parent
            .and_then(|p| if in_forest[p] { Some(p) } else { forest_parent[p] });
        let mut record = ExplainRecord {
            index: i,
            depth: inv.depth,
            caller: inv.caller,
            callee: inv.callee,
            signature: inv.signature.clone(),
            callee_role,
            phase: Phase::Filtration,
            kept: false,
            reason: Reason::ProtocolInternal,
        };
        if !is_attacker_side(role(&inv.caller, false)) {
            explain.push(record);
            continue;
        }
        if callee_role == AddressRole::Sender {
            record.phase = Phase::Restructuring;
            record.reason = Reason::TargetsSender;
            explain.push(record);
            continue;
        }
        in_forest[i] = true;
        forest_index[i] = Some(forest.len());
        forest.push(ForestNode {
            origin: i,
            parent: forest_parent[i].and_then(|p| forest_index[p]),
            wrapper: callee_role == AddressRole::AttackerScript,
        });
        record.kept = true;
        record.reason = Reason::Emitted;
        explain.push(record);
    }

    // Layer restructuring.
    let lifted = lift(&forest);
    for f in &forest {
        if f.wrapper {
            explain[f.origin].phase = Phase::Restructuring;
            explain[f.origin].kept = false;
            explain[f.origin].reason = Reason::LiftedWrapper;
        }
    }
    for &origin in &lifted.truncated {
        explain[origin].phase = Phase::Restructuring;
        explain[origin].kept = false;
        explain[origin].reason = Reason::LiftTruncated;
    }

    // Abstraction.
    let mut items = Vec::with_capacity(lifted.nodes.len());
    let mut provenance = Vec::with_capacity(lifted.nodes.len());
    let mut new_categories: Vec<ClassificationOutcome> = Vec::new();
    for (node, &depth) in lifted.nodes.iter().zip(&lifted.depths) {
        let i = node.origin;
        let inv = flat[i].invocation;
        let record = &mut explain[i];
        record.phase = Phase::Abstraction;
        let outcome = resolver.resolve(&inv.signature)?;
        let category = match &outcome.classification {
            Classification::Discarded => {
                record.kept = false;
                record.reason = Reason::Undecoded;
                continue;
            }
            Classification::Category(id) => id.clone(),
            Classification::NewCategory(meta) => {
                if !new_categories.iter().any(|o| o.signature == outcome.signature) {
                    new_categories.push(outcome.clone());
                }
                meta.id.clone()
            }
        };
        let target_role = TargetRole::from_role(callee_roles[i])
            .expect("wrappers and sender targets never reach abstraction");
        let token = token_class(labels, &inv.callee, token_like.contains(&inv.callee));
        items.push(LogicItem {
            category,
            token,
            target_role,
            depth_after_lift: depth,
        });
        provenance.push(i);
    }

    Ok(Extraction {
        logic: ExtractedLogic {
            tx_hash: trace.tx_hash,
            items,
            source_invocation_count: flat.len(),
        },
        provenance,
        explain,
        lift_rounds: lifted.rounds,
        lift_truncated: !lifted.truncated.is_empty(),
        new_categories,
    })
}

/// Header of every fingerprint; also the whole fingerprint of an empty logic.
pub const FINGERPRINT_HEADER: &[u8] = b"cascade-logic/v1\n";

/// Order-independent canonical serialization of the item multiset.
pub fn logic_fingerprint(logic: &ExtractedLogic) -> Vec<u8> {
    let mut lines: Vec<String> = logic
        .items
        .iter()
        .map(|item| {
            alloc::format!(
                "{}|{}|{}|{}\n",
                item.category,
                item.token.as_str(),
                item.target_role.as_str(),
                item.depth_after_lift
            )
        })
        .collect();
    lines.sort_unstable();
    let mut out = FINGERPRINT_HEADER.to_vec();
    for line in lines {
        out.extend_from_slice(line.as_bytes());
    }
    out
}
