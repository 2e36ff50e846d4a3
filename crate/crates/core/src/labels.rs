//! Address labels and the role/token classification derived from them.

use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::primitives::{keccak256, Address};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum LabelClass {
    Protocol,
    CoreAssetToken,
    ProtocolToken,
    Exploiter,
    Unlabeled,
}

impl LabelClass {
    pub const ALL: [LabelClass; 5] = [
        LabelClass::Protocol,
        LabelClass::CoreAssetToken,
        LabelClass::ProtocolToken,
        LabelClass::Exploiter,
        LabelClass::Unlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelClass::Protocol => "PROTOCOL",
            LabelClass::CoreAssetToken => "CORE_ASSET_TOKEN",
            LabelClass::ProtocolToken => "PROTOCOL_TOKEN",
            LabelClass::Exploiter => "EXPLOITER",
            LabelClass::Unlabeled => "UNLABELED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Where a label came from. Variants are ordered by precedence: a later
/// variant wins over an earlier one when both label the same address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum LabelSource {
    CommunityDb,
    VendorDb,
    LocalOverride,
}

impl LabelSource {
    pub const ALL: [LabelSource; 3] = [
        LabelSource::CommunityDb,
        LabelSource::VendorDb,
        LabelSource::LocalOverride,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::CommunityDb => "COMMUNITY_DB",
            LabelSource::VendorDb => "VENDOR_DB",
            LabelSource::LocalOverride => "LOCAL_OVERRIDE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AddressLabel {
    pub address: Address,
    pub label_class: LabelClass,
    pub display_name: String,
    pub source: LabelSource,
}

/// Role of an address inside one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum AddressRole {
    Protocol,
    CoreAssetToken,
    ProtocolToken,
    AttackerScript,
    Sender,
}

/// Economic class of the token touched by an invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum TokenClass {
    Core,
    ProtocolSpecific,
    NonToken,
}

impl TokenClass {
    pub const ALL: [TokenClass; 3] = [
        TokenClass::Core,
        TokenClass::ProtocolSpecific,
        TokenClass::NonToken,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenClass::Core => "CORE",
            TokenClass::ProtocolSpecific => "PROTOCOL_SPECIFIC",
            TokenClass::NonToken => "NON_TOKEN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// What happened when a label was offered to a [`LabelSnapshotBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    New,
    /// Replaced a label from a lower-precedence source.
    Overrode,
    /// A higher-precedence source already labels this address.
    Shadowed,
    /// Same source, same class: last occurrence kept.
    Duplicate,
    /// Same source, different class: last occurrence kept.
    ConflictWithinSource,
}

#[derive(Debug, Default)]
pub struct LabelSnapshotBuilder {
    entries: HashMap<Address, AddressLabel>,
    conflicts: usize,
}

impl LabelSnapshotBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: AddressLabel) -> InsertOutcome {
        match self.entries.get_mut(&label.address) {
            None => {
                self.entries.insert(label.address, label);
                InsertOutcome::New
            }
            Some(existing) if existing.source > label.source => InsertOutcome::Shadowed,
            Some(existing) if existing.source < label.source => {
                *existing = label;
                InsertOutcome::Overrode
            }
            Some(existing) => {
                let outcome = if existing.label_class == label.label_class {
                    InsertOutcome::Duplicate
                } else {
                    self.conflicts += 1;
                    InsertOutcome::ConflictWithinSource
                };
                *existing = label;
                outcome
            }
        }
    }

    pub fn conflicts_within_source(&self) -> usize {
        self.conflicts
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(self, version: u64, loaded_at: u64) -> LabelSnapshot {
        LabelSnapshot {
            entries: self.entries,
            version,
            loaded_at,
        }
    }
}

/// Immutable address → label map pinned for the duration of a scan.
#[derive(Debug, Clone, Default)]
pub struct LabelSnapshot {
    entries: HashMap<Address, AddressLabel>,
    version: u64,
    loaded_at: u64,
}

impl LabelSnapshot {
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Seconds since the Unix epoch at which the snapshot was built.
    pub fn loaded_at(&self) -> u64 {
        self.loaded_at
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, addr: &Address) -> Option<&AddressLabel> {
        self.entries.get(addr)
    }

    pub fn label_class(&self, addr: &Address) -> LabelClass {
        self.entries
            .get(addr)
            .map_or(LabelClass::Unlabeled, |l| l.label_class)
    }

    /// Entries sorted by address.
    pub fn sorted_entries(&self) -> Vec<&AddressLabel> {
        let mut v: Vec<_> = self.entries.values().collect();
        v.sort_by_key(|l| l.address);
        v
    }

    /// Keccak digest over the sorted entries; stable across processes.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut buf = Vec::with_capacity(self.entries.len() * 64);
        for l in self.sorted_entries() {
            buf.extend_from_slice(l.address.as_bytes());
            buf.extend_from_slice(l.label_class.as_str().as_bytes());
            buf.push(0);
            buf.extend_from_slice(l.source.as_str().as_bytes());
            buf.push(0);
            buf.extend_from_slice(l.display_name.as_bytes());
            buf.push(b'\n');
        }
        keccak256(&buf)
    }

    /// Same entries under the next version number.
    pub fn successor(&self, entries: LabelSnapshotBuilder, loaded_at: u64) -> LabelSnapshot {
        entries.build(self.version + 1, loaded_at)
    }
}

/// Role of `addr` in a transaction sent by `trace_sender`.
///
/// Unlabeled and exploiter-tagged addresses are attacker scripts. A direct
/// callee of the sender keeps its protocol or token label; only unlabeled or
/// exploiter direct callees become attacker scripts, so
/// `directly_called_by_sender` never changes the result on its own.
pub fn classify_address(
    snapshot: &LabelSnapshot,
    addr: &Address,
    trace_sender: &Address,
    directly_called_by_sender: bool,
) -> AddressRole {
    if addr == trace_sender {
        return AddressRole::Sender;
    }
    // The direct-call trigger only ever fires for addresses that are already
    // unlabeled, so it adds nothing beyond the label check.
    let _ = directly_called_by_sender;
    match snapshot.label_class(addr) {
        LabelClass::Exploiter | LabelClass::Unlabeled => AddressRole::AttackerScript,
        LabelClass::Protocol => AddressRole::Protocol,
        LabelClass::CoreAssetToken => AddressRole::CoreAssetToken,
        LabelClass::ProtocolToken => AddressRole::ProtocolToken,
    }
}

/// Token class of `addr`. `token_like` reports whether the invocation
/// touching an unlabeled address looks like a token operation.
pub fn token_class(snapshot: &LabelSnapshot, addr: &Address, token_like: bool) -> TokenClass {
    match snapshot.label_class(addr) {
        LabelClass::CoreAssetToken => TokenClass::Core,
        LabelClass::ProtocolToken => TokenClass::ProtocolSpecific,
        LabelClass::Unlabeled if token_like => TokenClass::ProtocolSpecific,
        _ => TokenClass::NonToken,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn label(addr: Address, class: LabelClass, source: LabelSource) -> AddressLabel {
        AddressLabel {
            address: addr,
            label_class: class,
            display_name: "x".to_string(),
            source,
        }
    }

    #[test]
    fn local_override_beats_community() {
        let a = Address::derive("a");
        let mut b = LabelSnapshotBuilder::new();
        b.insert(label(a, LabelClass::Exploiter, LabelSource::LocalOverride));
        assert_eq!(
            b.insert(label(a, LabelClass::Protocol, LabelSource::CommunityDb)),
            InsertOutcome::Shadowed
        );
        let s = b.build(1, 0);
        assert_eq!(s.label_class(&a), LabelClass::Exploiter);
        let sender = Address::derive("eoa");
        assert_eq!(
            classify_address(&s, &a, &sender, false),
            AddressRole::AttackerScript
        );
    }

    #[test]
    fn same_source_keeps_last_and_counts_conflict() {
        let a = Address::derive("a");
        let mut b = LabelSnapshotBuilder::new();
        b.insert(label(a, LabelClass::Protocol, LabelSource::VendorDb));
        assert_eq!(
            b.insert(label(a, LabelClass::ProtocolToken, LabelSource::VendorDb)),
            InsertOutcome::ConflictWithinSource
        );
        assert_eq!(b.conflicts_within_source(), 1);
        assert_eq!(b.build(1, 0).label_class(&a), LabelClass::ProtocolToken);
    }

    /// Decision table over every (label class, directly called) cell.
    #[test]
    fn classify_decision_table() {
        let sender = Address::derive("eoa");
        let addr = Address::derive("target");
        let expected = |class: LabelClass, _direct: bool| match class {
            LabelClass::Protocol => AddressRole::Protocol,
            LabelClass::CoreAssetToken => AddressRole::CoreAssetToken,
            LabelClass::ProtocolToken => AddressRole::ProtocolToken,
            LabelClass::Exploiter | LabelClass::Unlabeled => AddressRole::AttackerScript,
        };
        for class in LabelClass::ALL {
            let mut b = LabelSnapshotBuilder::new();
            if class != LabelClass::Unlabeled {
                b.insert(label(addr, class, LabelSource::VendorDb));
            }
            let snap = b.build(1, 0);
            for direct in [false, true] {
                assert_eq!(
                    classify_address(&snap, &addr, &sender, direct),
                    expected(class, direct),
                    "{class:?} direct={direct}"
                );
                assert_eq!(
                    classify_address(&snap, &sender, &sender, direct),
                    AddressRole::Sender
                );
            }
        }
    }

    #[test]
    fn token_classes() {
        let core = Address::derive("usdt");
        let proto = Address::derive("ptoken");
        let unknown = Address::derive("unknown");
        let mut b = LabelSnapshotBuilder::new();
        b.insert(label(core, LabelClass::CoreAssetToken, LabelSource::VendorDb));
        b.insert(label(proto, LabelClass::ProtocolToken, LabelSource::CommunityDb));
        let s = b.build(1, 0);
        assert_eq!(token_class(&s, &core, false), TokenClass::Core);
        assert_eq!(token_class(&s, &proto, false), TokenClass::ProtocolSpecific);
        assert_eq!(token_class(&s, &unknown, false), TokenClass::NonToken);
        assert_eq!(token_class(&s, &unknown, true), TokenClass::ProtocolSpecific);
    }

    #[test]
    fn empty_snapshot() {
        let s = LabelSnapshotBuilder::new().build(1, 0);
        assert_eq!(s.len(), 0);
        assert_eq!(s.version(), 1);
    }
}
