//! Decoded transaction call trees.
//!
//! A [`Trace`] is the decoded call tree of one transaction: the sending EOA,
//! its top-level calls and every nested internal call. Values are immutable
//! once validated and can be shared freely between scan workers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::primitives::{Address, Selector, TxHash};
use crate::semantics::canonical_signature;

/// Largest accepted trace, counted in invocations.
pub const MAX_INVOCATIONS: usize = 100_000;

/// Deepest accepted call nesting; the EVM itself stops at 1024 frames.
pub const MAX_CALL_DEPTH: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CallKind {
    #[cfg_attr(feature = "serde", serde(rename = "CALL"))]
    Call,
    #[cfg_attr(feature = "serde", serde(rename = "DELEGATECALL"))]
    DelegateCall,
    #[cfg_attr(feature = "serde", serde(rename = "STATICCALL"))]
    StaticCall,
    #[cfg_attr(feature = "serde", serde(rename = "CREATE"))]
    Create,
}

impl CallKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CallKind::Call => "CALL",
            CallKind::DelegateCall => "DELEGATECALL",
            CallKind::StaticCall => "STATICCALL",
            CallKind::Create => "CREATE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "CALL" => CallKind::Call,
            "DELEGATECALL" => CallKind::DelegateCall,
            "STATICCALL" => CallKind::StaticCall,
            "CREATE" => CallKind::Create,
            _ => return None,
        })
    }
}

/// One call frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub caller: Address,
    pub callee: Address,
    pub selector: Option<Selector>,
    /// Textual signature; empty when the call could not be decoded.
    pub signature: String,
    pub kind: CallKind,
    pub depth: u32,
    /// Wei amount as a base-10 string.
    pub value: String,
    pub children: Vec<Invocation>,
}

impl Invocation {
    pub fn is_decoded(&self) -> bool {
        !self.signature.is_empty()
    }

    /// Number of invocations in this subtree, including `self`.
    pub fn subtree_len(&self) -> usize {
        let mut count = 0;
        let mut stack = alloc::vec![self];
        while let Some(node) = stack.pop() {
            count += 1;
            stack.extend(node.children.iter());
        }
        count
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub tx_hash: TxHash,
    /// The externally owned account that signed the transaction.
    pub sender: Address,
    pub chain_id: u64,
    pub root_calls: Vec<Invocation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("trace has no root calls")]
    NoRootCalls,
    #[error("trace has {count} invocations, limit is {MAX_INVOCATIONS}")]
    TooLarge { count: usize },
    #[error("invariant violated at {path}: {reason}")]
    Invariant { path: String, reason: String },
}

/// Location of a node in the call tree, rendered as a JSON path
/// (`calls[0].children[3]`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodePath(pub Vec<usize>);

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, idx) in self.0.iter().enumerate() {
            if i == 0 {
                write!(f, "calls[{idx}]")?;
            } else {
                write!(f, ".children[{idx}]")?;
            }
        }
        Ok(())
    }
}

/// A pre-order entry produced by [`flatten_indexed`].
#[derive(Debug, Clone, Copy)]
pub struct FlatNode<'a> {
    pub invocation: &'a Invocation,
    /// Index of the parent in the flattened order; `None` for root calls.
    pub parent: Option<usize>,
}

impl Trace {
    pub fn invocation_count(&self) -> usize {
        self.root_calls.iter().map(Invocation::subtree_len).sum()
    }

    /// Checks every structural invariant of the trace.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.root_calls.is_empty() {
            return Err(TraceError::NoRootCalls);
        }
        let count = self.invocation_count();
        if count > MAX_INVOCATIONS {
            return Err(TraceError::TooLarge { count });
        }

        let mut stack: Vec<(&Invocation, Option<u32>, NodePath)> = self
            .root_calls
            .iter()
            .enumerate()
            .rev()
            .map(|(i, inv)| (inv, None, NodePath(alloc::vec![i])))
            .collect();

        while let Some((inv, parent_depth, path)) = stack.pop() {
            let fail = |reason: String| TraceError::Invariant {
                path: format!("{path}"),
                reason,
            };
            match parent_depth {
                None => {
                    if inv.depth != 0 {
                        return Err(fail(format!("root call has depth {}", inv.depth)));
                    }
                    if inv.caller != self.sender {
                        return Err(fail(format!(
                            "root caller {} is not the sender {}",
                            inv.caller, self.sender
                        )));
                    }
                }
                Some(pd) => {
                    if inv.depth != pd + 1 {
                        return Err(fail(format!(
                            "depth {} under parent depth {pd}",
                            inv.depth
                        )));
                    }
                }
            }
            if inv.depth > MAX_CALL_DEPTH {
                return Err(fail(format!("depth exceeds {MAX_CALL_DEPTH}")));
            }
            if inv.value.is_empty() || !inv.value.bytes().all(|b| b.is_ascii_digit()) {
                return Err(fail(format!("value {:?} is not a base-10 integer", inv.value)));
            }
            if let (Some(sel), true) = (inv.selector, inv.is_decoded()) {
                let canonical = canonical_signature(&inv.signature)
                    .ok_or_else(|| fail(format!("unparsable signature {:?}", inv.signature)))?;
                let expected = Selector::of_canonical(&canonical);
                if expected != sel {
                    return Err(fail(format!(
                        "selector {sel} does not match {canonical} ({expected})"
                    )));
                }
            }
            for (i, child) in inv.children.iter().enumerate().rev() {
                let mut child_path = path.clone();
                child_path.0.push(i);
                stack.push((child, Some(inv.depth), child_path));
            }
        }
        Ok(())
    }
}

/// Pre-order depth-first enumeration of every invocation.
pub fn flatten(trace: &Trace) -> Vec<&Invocation> {
    flatten_indexed(trace)
        .into_iter()
        .map(|n| n.invocation)
        .collect()
}

/// Pre-order enumeration that also records each node's parent index.
pub fn flatten_indexed(trace: &Trace) -> Vec<FlatNode<'_>> {
    let mut out = Vec::new();
    let mut stack: Vec<(&Invocation, Option<usize>)> =
        trace.root_calls.iter().rev().map(|inv| (inv, None)).collect();
    while let Some((inv, parent)) = stack.pop() {
        let idx = out.len();
        out.push(FlatNode {
            invocation: inv,
            parent,
        });
        stack.extend(inv.children.iter().rev().map(|c| (c, Some(idx))));
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn call(caller: Address, callee: Address, sig: &str, depth: u32) -> Invocation {
        Invocation {
            caller,
            callee,
            selector: None,
            signature: sig.to_string(),
            kind: CallKind::Call,
            depth,
            value: "0".to_string(),
            children: vec![],
        }
    }

    fn sample() -> Trace {
        let sender = Address::derive("eoa");
        let x = Address::derive("x");
        let mut root = call(sender, x, "", 0);
        root.children.push(call(x, Address::derive("a"), "a()", 1));
        root.children.push(call(x, Address::derive("b"), "b()", 1));
        Trace {
            tx_hash: TxHash::derive("t"),
            sender,
            chain_id: 1,
            root_calls: vec![root],
        }
    }

    #[test]
    fn flatten_is_preorder() {
        let t = sample();
        let flat = flatten(&t);
        let sigs: Vec<_> = flat.iter().map(|i| i.signature.as_str()).collect();
        assert_eq!(sigs, ["", "a()", "b()"]);
    }

    #[test]
    fn flatten_single_root() {
        let sender = Address::derive("eoa");
        let t = Trace {
            tx_hash: TxHash::derive("t"),
            sender,
            chain_id: 1,
            root_calls: vec![call(sender, Address::derive("p"), "f()", 0)],
        };
        assert_eq!(flatten(&t).len(), 1);
        t.validate().unwrap();
    }

    #[test]
    fn child_with_parent_depth_is_rejected() {
        let mut t = sample();
        t.root_calls[0].children[1].depth = 0;
        match t.validate() {
            Err(TraceError::Invariant { path, .. }) => assert_eq!(path, "calls[0].children[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn root_caller_must_be_sender() {
        let mut t = sample();
        t.root_calls[0].caller = Address::derive("other");
        assert!(matches!(t.validate(), Err(TraceError::Invariant { .. })));
    }

    #[test]
    fn selector_must_match_signature() {
        let mut t = sample();
        t.root_calls[0].children[0].signature = "transfer(address to, uint256 amount)".to_string();
        t.root_calls[0].children[0].selector = Some("0xa9059cbb".parse().unwrap());
        t.validate().unwrap();
        t.root_calls[0].children[0].selector = Some("0x095ea7b3".parse().unwrap());
        assert!(t.validate().is_err());
    }

    #[test]
    fn value_must_be_decimal() {
        let mut t = sample();
        t.root_calls[0].value = "0x10".to_string();
        assert!(t.validate().is_err());
        t.root_calls[0].value = "340282366920938463463374607431768211456000".to_string();
        t.validate().unwrap();
    }

    #[test]
    fn empty_roots_rejected() {
        let mut t = sample();
        t.root_calls.clear();
        assert_eq!(t.validate(), Err(TraceError::NoRootCalls));
    }
}
