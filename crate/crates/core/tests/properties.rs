//! Property suites for the detection core. Each property is checked against
//! an independent oracle: nested loops, recursive counters or hand
//! arithmetic, never the code under test.

use std::collections::BTreeSet;

use cascade_core::extract::{logic_fingerprint, ExtractedLogic, LogicItem, TargetRole};
use cascade_core::labels::{
    classify_address, AddressLabel, AddressRole, LabelClass, LabelSnapshotBuilder, LabelSource, TokenClass,
};
use cascade_core::matcher::{ansd, generalize, match_one, CompiledPattern, LogicKey, SideScore};
use cascade_core::primitives::{Address, TxHash};
use cascade_core::semantics::{lookup, CategoryId, CategoryKind, CategoryMeta, Cheatsheet};
use cascade_core::trace::{flatten, flatten_indexed, CallKind, Invocation, Trace};
use proptest::prelude::*;

/// Nested-loop set difference: |A ∖ B| counted over deduplicated A.
fn brute_force_ansd(reference: &[u32], candidate: &[u32]) -> f64 {
    let mut distinct: Vec<u32> = Vec::new();
    for &a in reference {
        if !distinct.contains(&a) {
            distinct.push(a);
        }
    }
    let mut missing = 0usize;
    for &a in &distinct {
        let mut found = false;
        for &b in candidate {
            if a == b {
                found = true;
                break;
            }
        }
        if !found {
            missing += 1;
        }
    }
    1.0 - missing as f64 / distinct.len() as f64
}

const CATEGORIES: &[&str] = &[
    "SWAP", "TRANSFER", "MINT", "BURN", "SKIM", "SYNC", "DEPOSIT", "WITHDRAW", "BORROW", "REPAY", "FLASH_LOAN",
    "APPROVE", "CLAIM", "STAKE", "UNSTAKE", "LIQUIDATE",
];

fn key(i: usize) -> LogicKey {
    let category = CategoryId::new(CATEGORIES[i % CATEGORIES.len()]).unwrap();
    let (token, target_role) = match (i / CATEGORIES.len()) % 3 {
        0 => (TokenClass::Core, TargetRole::CoreAssetToken),
        1 => (TokenClass::ProtocolSpecific, TargetRole::ProtocolToken),
        _ => (TokenClass::ProtocolSpecific, TargetRole::Protocol),
    };
    LogicKey {
        category,
        token,
        target_role,
    }
}

fn item(k: &LogicKey) -> LogicItem {
    LogicItem {
        category: k.category.clone(),
        token: k.token,
        target_role: k.target_role,
        depth_after_lift: 0,
    }
}

fn logic(tag: &str, keys: &[LogicKey]) -> ExtractedLogic {
    ExtractedLogic {
        tx_hash: TxHash::derive(tag),
        items: keys.iter().map(item).collect(),
        source_invocation_count: keys.len(),
    }
}

fn key_universe() -> impl Strategy<Value = usize> {
    0..CATEGORIES.len() * 3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn ansd_equals_nested_loop_oracle(
        reference in prop::collection::vec(0u32..400, 1..=200),
        candidate in prop::collection::vec(0u32..400, 1..=200),
    ) {
        let got = ansd(&reference, &candidate).unwrap();
        let want = brute_force_ansd(&reference, &candidate);
        prop_assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn noise_and_reordering_never_lower_the_score(
        pattern_keys in prop::collection::vec(key_universe(), 1..20),
        candidate_keys in prop::collection::vec(key_universe(), 0..30),
        noise in prop::collection::vec(key_universe(), 1..10),
        shuffle_seed in any::<u64>(),
        lambda in 0.0f64..=1.0,
    ) {
        let attack: Vec<LogicKey> = pattern_keys.iter().map(|&i| key(i)).collect();
        let pattern = generalize(&logic("seed", &attack), lambda, 0.7, 0).unwrap();
        let compiled = CompiledPattern::new(pattern);
        let base: Vec<LogicKey> = candidate_keys.iter().map(|&i| key(i)).collect();
        let before = compiled.match_logic(&logic("c", &base)).sim_final;

        let mut noisy = base.clone();
        noisy.extend(noise.iter().map(|&i| key(i)));
        // Deterministic Fisher–Yates driven by the proptest seed.
        let mut state = shuffle_seed | 1;
        for i in (1..noisy.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            noisy.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let after = compiled.match_logic(&logic("c", &noisy)).sim_final;
        prop_assert!(after >= before, "{after} < {before}");

        let mut covering = attack.clone();
        covering.extend(noise.iter().map(|&i| key(i)));
        covering.reverse();
        prop_assert_eq!(compiled.match_logic(&logic("c", &covering)).sim_final, 1.0);
    }

    #[test]
    fn permutation_invariance(
        pattern_keys in prop::collection::vec(key_universe(), 1..20),
        candidate_keys in prop::collection::vec(key_universe(), 0..30),
        rotate in 0usize..30,
    ) {
        let attack: Vec<LogicKey> = pattern_keys.iter().map(|&i| key(i)).collect();
        let pattern = generalize(&logic("seed", &attack), 0.6, 0.7, 0).unwrap();
        let mut cand: Vec<LogicKey> = candidate_keys.iter().map(|&i| key(i)).collect();
        let a = match_one(&pattern, &logic("c", &cand));
        if !cand.is_empty() {
            let r = rotate % cand.len();
            cand.rotate_left(r);
        }
        cand.reverse();
        let b = match_one(&pattern, &logic("c", &cand));
        prop_assert_eq!(a.sim_core, b.sim_core);
        prop_assert_eq!(a.sim_proto, b.sim_proto);
        prop_assert_eq!(a.sim_final, b.sim_final);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn drop_sensitivity_is_exactly_k_over_m(
        core in prop::collection::btree_set(0usize..CATEGORIES.len(), 1..12),
        drop in 0usize..12,
    ) {
        // Core-only pattern: every key has token class CORE.
        let keys: Vec<LogicKey> = core.iter().map(|&i| key(i)).collect();
        let m = keys.len();
        let k = drop.min(m);
        let pattern = generalize(&logic("seed", &keys), 0.6, 0.7, 0).unwrap();
        let kept: Vec<LogicKey> = keys[k..].to_vec();
        let r = match_one(&pattern, &logic("c", &kept));
        let want = 1.0 - k as f64 / m as f64;
        prop_assert!((r.sim_core.value().unwrap() - want).abs() < 1e-12);
        prop_assert_eq!(r.sim_proto, SideScore::NotApplicable);
    }

    #[test]
    fn flatten_is_preorder_with_parents_first(shape in prop::collection::vec(any::<prop::sample::Index>(), 49)) {
        // Node i+1 attaches under a random earlier node: a random 50-node tree.
        let sender = Address::derive("eoa");
        let mut parent_of = vec![usize::MAX];
        for (i, ix) in shape.iter().enumerate() {
            parent_of.push(ix.index(i + 1));
        }
        let trace = build_tree(sender, &parent_of);
        trace.validate().unwrap();
        let flat = flatten(&trace);
        prop_assert_eq!(flat.len(), 50);
        prop_assert_eq!(flat.len(), count_recursive(&trace.root_calls));
        let indexed = flatten_indexed(&trace);
        for (i, node) in indexed.iter().enumerate() {
            if let Some(p) = node.parent {
                prop_assert!(p < i);
                prop_assert_eq!(indexed[p].invocation.depth + 1, node.invocation.depth);
            }
        }
    }

    #[test]
    fn higher_precedence_source_wins(
        classes in prop::collection::vec((0usize..4, 0usize..3), 1..6),
    ) {
        const CLASSES: [LabelClass; 4] =
            [LabelClass::Protocol, LabelClass::CoreAssetToken, LabelClass::ProtocolToken, LabelClass::Exploiter];
        const SOURCES: [LabelSource; 3] = [LabelSource::CommunityDb, LabelSource::VendorDb, LabelSource::LocalOverride];
        let addr = Address::derive("contested");
        let mut b = LabelSnapshotBuilder::new();
        let mut winner: Option<(usize, LabelClass)> = None;
        for &(c, s) in &classes {
            b.insert(AddressLabel {
                address: addr,
                label_class: CLASSES[c],
                display_name: String::new(),
                source: SOURCES[s],
            });
            // Oracle: the highest source rank wins; within a rank the last row.
            if winner.is_none_or(|(rank, _)| s >= rank) {
                winner = Some((s, CLASSES[c]));
            }
        }
        let snap = b.build(1, 0);
        prop_assert_eq!(snap.label_class(&addr), winner.unwrap().1);
    }
}

fn build_tree(sender: Address, parent_of: &[usize]) -> Trace {
    fn node(i: usize, depth: u32, parent_of: &[usize], callee_of: &dyn Fn(usize) -> Address, caller: Address) -> Invocation {
        let callee = callee_of(i);
        let children = (i + 1..parent_of.len())
            .filter(|&j| parent_of[j] == i)
            .map(|j| node(j, depth + 1, parent_of, callee_of, callee))
            .collect();
        Invocation {
            caller,
            callee,
            selector: None,
            signature: String::new(),
            kind: CallKind::Call,
            depth,
            value: "0".into(),
            children,
        }
    }
    let callee_of = |i: usize| Address::derive(&format!("node{i}"));
    Trace {
        tx_hash: TxHash::derive("tree"),
        sender,
        chain_id: 1,
        root_calls: vec![node(0, 0, parent_of, &callee_of, sender)],
    }
}

fn count_recursive(calls: &[Invocation]) -> usize {
    calls.iter().map(|c| 1 + count_recursive(&c.children)).sum()
}

#[test]
fn classify_address_decision_table() {
    let sender = Address::derive("eoa");
    let cells = [
        (LabelClass::Protocol, AddressRole::Protocol),
        (LabelClass::CoreAssetToken, AddressRole::CoreAssetToken),
        (LabelClass::ProtocolToken, AddressRole::ProtocolToken),
        (LabelClass::Exploiter, AddressRole::AttackerScript),
        (LabelClass::Unlabeled, AddressRole::AttackerScript),
    ];
    for (class, want) in cells {
        let addr = Address::derive(class.as_str());
        let mut b = LabelSnapshotBuilder::new();
        if class != LabelClass::Unlabeled {
            b.insert(AddressLabel {
                address: addr,
                label_class: class,
                display_name: String::new(),
                source: LabelSource::VendorDb,
            });
        }
        let snap = b.build(1, 0);
        for direct in [false, true] {
            assert_eq!(classify_address(&snap, &addr, &sender, direct), want, "{class:?} direct={direct}");
            assert_eq!(classify_address(&snap, &sender, &sender, direct), AddressRole::Sender);
        }
    }
}

#[test]
fn lookup_is_a_pure_function_of_content() {
    let meta = |id: &str| CategoryMeta {
        id: CategoryId::new(id).unwrap(),
        kind: CategoryKind::Financial,
        description: String::new(),
    };
    let entries = || {
        vec![
            ("transfer(address,uint256)".to_string(), CategoryId::new("TRANSFER").unwrap()),
            ("swap(uint256,uint256,address,bytes)".to_string(), CategoryId::new("SWAP").unwrap()),
        ]
    };
    let a = Cheatsheet::new("1", [meta("TRANSFER"), meta("SWAP")], entries()).unwrap();
    let b = Cheatsheet::new("2", [meta("SWAP"), meta("TRANSFER")], entries().into_iter().rev()).unwrap();
    for sig in ["transfer(address,uint256)", "transfer( address to , uint256 amount )", "swap(uint,uint,address,bytes)", "skim(address)"] {
        assert_eq!(lookup(&a, sig), lookup(&b, sig), "{sig}");
        assert_eq!(lookup(&a, sig), lookup(&a, sig));
    }
    assert_eq!(a.content_hash(), b.content_hash());
}

#[test]
fn fingerprints_distinguish_every_single_field_perturbation() {
    let base: Vec<LogicKey> = (0..6).map(key).collect();
    let l = logic("fp", &base);
    let mut seen = BTreeSet::new();
    seen.insert(logic_fingerprint(&l));
    for i in 0..l.items.len() {
        for token in TokenClass::ALL {
            for role in TargetRole::ALL {
                for depth in [0, 1] {
                    let mut m = l.clone();
                    m.items[i].token = token;
                    m.items[i].target_role = role;
                    m.items[i].depth_after_lift = depth;
                    if m.items[i] != l.items[i] {
                        assert_ne!(logic_fingerprint(&m), logic_fingerprint(&l));
                    }
                }
            }
        }
    }
}
