//! Synthetic imitative-attack corpora.
//!
//! Seeds are attack logics; imitations are seeds with their call order
//! shuffled, ambient noise inserted and a bounded share of keys dropped.
//! Benign logics touch one token class only, or very few operations.
//! Everything is deterministic under the given seed.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::extract::{ExtractedLogic, LogicItem, TargetRole};
use crate::labels::TokenClass;
use crate::matcher::LogicKey;
use crate::metrics::Label;
use crate::primitives::TxHash;
use crate::semantics::CategoryId;
use crate::tuner::{CorpusEntry, LabeledCorpus, Ratio};

/// How many noise items an imitation receives.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum NoiseSpec {
    None,
    /// Uniform in `0..=max`.
    Uniform { max: u32 },
    /// Uniform in `0..=floor(max_fraction · seed length)`.
    Proportional { max_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MutationSpec {
    pub reorder: bool,
    pub noise: NoiseSpec,
    /// Share of distinct keys removed per side, in `[0, 0.5]`.
    pub drop_fraction: f64,
    /// Swap protocol-token identities. Keys carry no token identity, so this
    /// leaves extracted logic unchanged; it exists for format parity.
    pub token_rename: bool,
    pub seed: u64,
}

impl MutationSpec {
    /// All mutations off.
    pub fn identity(seed: u64) -> Self {
        MutationSpec {
            reorder: false,
            noise: NoiseSpec::None,
            drop_fraction: 0.0,
            token_rename: false,
            seed,
        }
    }

    /// Reorder, up to 50% noise and up to 10% drops.
    pub fn cascade(seed: u64) -> Self {
        MutationSpec {
            reorder: true,
            noise: NoiseSpec::Proportional { max_fraction: 0.5 },
            drop_fraction: 0.1,
            token_rename: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fraction_ok = |f: f64| (0.0..=0.5).contains(&f);
        if !fraction_ok(self.drop_fraction) {
            return Err(SynthError::InvalidSpec("drop_fraction must lie in [0, 0.5]"));
        }
        if let NoiseSpec::Proportional { max_fraction } = self.noise {
            if !(0.0..=10.0).contains(&max_fraction) {
                return Err(SynthError::InvalidSpec("noise max_fraction must lie in [0, 10]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("no seed logics given")]
    NoSeeds,
    #[error("benign pool has {available} entries, ratio needs {needed}")]
    InsufficientBenign { needed: usize, available: usize },
    #[error("invalid mutation spec: {0}")]
    InvalidSpec(&'static str),
}

/// Mixes a base seed with a stream index into an independent seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn side_of(token: TokenClass) -> Option<usize> {
    match token {
        TokenClass::Core => Some(0),
        TokenClass::ProtocolSpecific => Some(1),
        TokenClass::NonToken => None,
    }
}

/// Applies `spec` to `seed`, drawing noise from `noise_pool`.
pub fn mutate(
    seed: &ExtractedLogic,
    spec: &MutationSpec,
    noise_pool: &[LogicItem],
    rng: &mut ChaCha8Rng,
    tx_hash: TxHash,
) -> ExtractedLogic {
    let mut items = seed.items.clone();

    if spec.drop_fraction > 0.0 {
        for side in 0..2 {
            let mut keys: Vec<LogicKey> = items
                .iter()
                .filter(|i| side_of(i.token) == Some(side))
                .map(LogicKey::from)
                .collect();
            keys.sort_unstable();
            keys.dedup();
            let n_drop = libm::floor(spec.drop_fraction * keys.len() as f64) as usize;
            if n_drop == 0 {
                continue;
            }
            keys.shuffle(rng);
            let dropped = &keys[..n_drop];
            items.retain(|i| !dropped.iter().any(|k| *k == LogicKey::from(i)));
        }
    }

    if spec.reorder {
        items.shuffle(rng);
    }

    let n_noise = match spec.noise {
        NoiseSpec::None => 0,
        NoiseSpec::Uniform { max } => rng.random_range(0..=max as usize),
        NoiseSpec::Proportional { max_fraction } => {
            let cap = libm::floor(max_fraction * seed.items.len() as f64) as usize;
            rng.random_range(0..=cap)
        }
    };
    if !noise_pool.is_empty() {
        for _ in 0..n_noise {
            let item = noise_pool.choose(rng).expect("non-empty pool").clone();
            let at = rng.random_range(0..=items.len());
            items.insert(at, item);
        }
    }

    ExtractedLogic {
        tx_hash,
        source_invocation_count: items.len().max(seed.source_invocation_count),
        items,
    }
}

/// Family identifier of a seed.
pub fn family_id(seed: &ExtractedLogic) -> String {
    format!("fam-{}", &crate::primitives::to_hex(seed.tx_hash.as_bytes())[..16])
}

/// Imitations of every seed plus benign entries at `ratio`.
pub fn synth_corpus(
    seeds: &[ExtractedLogic],
    spec: &MutationSpec,
    n_imitations_per_seed: usize,
    benign_pool: &[ExtractedLogic],
    ratio: Ratio,
) -> Result<LabeledCorpus, SynthError> {
    if seeds.is_empty() {
        return Err(SynthError::NoSeeds);
    }
    spec.validate()?;
    let n_mal = seeds.len() * n_imitations_per_seed;
    let n_ben = n_mal * ratio.benign as usize / ratio.malicious as usize;
    if benign_pool.len() < n_ben {
        return Err(SynthError::InsufficientBenign {
            needed: n_ben,
            available: benign_pool.len(),
        });
    }
    let noise_pool: Vec<LogicItem> = benign_pool.iter().flat_map(|l| l.items.iter().cloned()).collect();

    let mut entries = Vec::with_capacity(n_mal + n_ben);
    for (s, seed) in seeds.iter().enumerate() {
        let family = family_id(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, s as u64));
        for k in 0..n_imitations_per_seed {
            let tx = TxHash::derive(&format!("{}/imitation/{k}", seed.tx_hash));
            let logic = mutate(seed, spec, &noise_pool, &mut rng, tx);
            entries.push(CorpusEntry {
                logic,
                label: Label::Malicious,
                family: Some(family.clone()),
            });
        }
    }
    let mut order: Vec<usize> = (0..benign_pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, u64::MAX)));
    for &i in &order[..n_ben] {
        entries.push(CorpusEntry {
            logic: benign_pool[i].clone(),
            label: Label::Benign,
            family: None,
        });
    }
    Ok(LabeledCorpus { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum BenignKind {
    SingleCategoryCore,
    SingleCategoryProto,
    MixedShort,
}

impl BenignKind {
    pub const ALL: [BenignKind; 3] = [
        BenignKind::SingleCategoryCore,
        BenignKind::SingleCategoryProto,
        BenignKind::MixedShort,
    ];

    fn tag(self) -> &'static str {
        match self {
            BenignKind::SingleCategoryCore => "core",
            BenignKind::SingleCategoryProto => "proto",
            BenignKind::MixedShort => "mixed",
        }
    }
}

/// Operations common in ordinary traffic.
pub const BENIGN_VOCABULARY: &[&str] = &[
    "TRANSFER", "APPROVE", "SWAP", "DEPOSIT", "WITHDRAW", "BALANCE_QUERY", "ADD_LIQUIDITY",
    "REMOVE_LIQUIDITY", "STAKE", "UNSTAKE", "CLAIM", "MINT", "BURN", "PERMIT", "WRAP", "UNWRAP",
];

/// Operations that appear in exploit logic.
pub const ATTACK_VOCABULARY: &[&str] = &[
    "TRANSFER", "TRANSFER_FROM", "APPROVE", "SWAP", "SKIM", "SYNC", "MINT", "BURN", "DEPOSIT",
    "WITHDRAW", "BORROW", "REPAY", "FLASHLOAN", "LIQUIDATE", "REDEEM", "HARVEST", "CLAIM", "STAKE",
    "UNSTAKE", "ADD_LIQUIDITY", "REMOVE_LIQUIDITY", "BALANCE_QUERY", "GET_RESERVES", "PRICE_QUERY",
    "SET_ORACLE", "UPDATE_REWARD", "DISTRIBUTE", "AIRDROP", "EMERGENCY_WITHDRAW", "MIGRATE",
    "EXCHANGE", "BUY", "SELL", "LOCK", "UNLOCK", "REBASE", "DONATE", "CALLBACK", "SETTLE",
    "INVEST",
];

fn key_item(category: &str, side: usize, depth: u32) -> LogicItem {
    let (token, target_role) = if side == 0 {
        (TokenClass::Core, TargetRole::CoreAssetToken)
    } else {
        (TokenClass::ProtocolSpecific, TargetRole::ProtocolToken)
    };
    LogicItem {
        category: CategoryId::new(category).expect("vocabulary ids are valid"),
        token,
        target_role,
        depth_after_lift: depth,
    }
}

/// Benign logics of one kind.
pub fn synth_benign(kind: BenignKind, n: usize, seed: u64) -> Vec<ExtractedLogic> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, kind as u64));
    (0..n)
        .map(|i| {
            let len = match kind {
                BenignKind::MixedShort => rng.random_range(1..=3),
                _ => rng.random_range(1..=8),
            };
            let items = (0..len)
                .map(|_| {
                    let side = match kind {
                        BenignKind::SingleCategoryCore => 0,
                        BenignKind::SingleCategoryProto => 1,
                        BenignKind::MixedShort => rng.random_range(0..2),
                    };
                    let cat = BENIGN_VOCABULARY.choose(&mut rng).expect("vocabulary");
                    key_item(cat, side, rng.random_range(0..2))
                })
                .collect::<Vec<_>>();
            ExtractedLogic {
                tx_hash: TxHash::derive(&format!("benign/{}/{seed}/{i}", kind.tag())),
                source_invocation_count: items.len() + rng.random_range(0..20),
                items,
            }
        })
        .collect()
}

/// `n_per_kind` logics of every benign kind.
pub fn benign_suite(n_per_kind: usize, seed: u64) -> Vec<ExtractedLogic> {
    BenignKind::ALL
        .iter()
        .flat_map(|&k| synth_benign(k, n_per_kind, seed))
        .collect()
}

/// Shape of generated seed attacks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeedSpec {
    pub families: usize,
    /// Families are variations of this many shared exploit archetypes.
    pub archetypes: usize,
    pub min_side: usize,
    pub max_side: usize,
    pub seed: u64,
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec {
            families: 50,
            archetypes: 10,
            min_side: 5,
            max_side: 12,
            seed: 7,
        }
    }
}

/// Seed attack logics. Each family varies one archetype by dropping at most
/// one archetype key per side and adding one or two family-specific keys,
/// so families of one archetype resemble each other the way real exploit
/// waves do.
pub fn synth_seeds(spec: &SeedSpec) -> Vec<ExtractedLogic> {
    assert!(spec.min_side >= 2 && spec.max_side >= spec.min_side + 3, "side range too narrow");
    assert!(spec.max_side < ATTACK_VOCABULARY.len(), "side larger than vocabulary");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0));
    let archetypes: Vec<[Vec<&str>; 2]> = (0..spec.archetypes.max(1))
        .map(|_| {
            let mut pick = || {
                let k = rng.random_range(spec.min_side + 1..=spec.max_side - 2);
                ATTACK_VOCABULARY.choose_multiple(&mut rng, k).copied().collect::<Vec<_>>()
            };
            [pick(), pick()]
        })
        .collect();

    (0..spec.families)
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, f as u64 + 1));
            let arch = &archetypes[f % archetypes.len()];
            let mut items = Vec::new();
            for (side, keys) in arch.iter().enumerate() {
                let mut keys = keys.clone();
                if rng.random_bool(0.5) {
                    let at = rng.random_range(0..keys.len());
                    keys.remove(at);
                }
                let extra = rng.random_range(1..=2);
                let unused: Vec<&str> = ATTACK_VOCABULARY
                    .iter()
                    .copied()
                    .filter(|c| !keys.contains(c))
                    .collect();
                keys.extend(unused.choose_multiple(&mut rng, extra).copied());
                for cat in keys {
                    // Some operations repeat, as loops in real exploits do.
                    let reps = if rng.random_bool(0.2) { 2 } else { 1 };
                    for _ in 0..reps {
                        items.push(key_item(cat, side, rng.random_range(0..3)));
                    }
                }
            }
            for _ in 0..rng.random_range(0..=3) {
                items.push(LogicItem {
                    category: CategoryId::new(*ATTACK_VOCABULARY.choose(&mut rng).expect("vocabulary"))
                        .expect("valid"),
                    token: TokenClass::NonToken,
                    target_role: TargetRole::Protocol,
                    depth_after_lift: 0,
                });
            }
            items.shuffle(&mut rng);
            ExtractedLogic {
                tx_hash: TxHash::derive(&format!("seed/{}/{f}", spec.seed)),
                source_invocation_count: items.len() * 3,
                items,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::{generalize, match_one, partition};

    fn pool() -> Vec<ExtractedLogic> {
        benign_suite(50, 3)
    }

    #[test]
    fn identity_spec_copies_seeds() {
        let seeds = synth_seeds(&SeedSpec { families: 3, ..SeedSpec::default() });
        let corpus = synth_corpus(&seeds, &MutationSpec::identity(1), 2, &pool(), Ratio::new(1, 1)).unwrap();
        for (i, e) in corpus.entries.iter().take(6).enumerate() {
            assert_eq!(e.logic.items, seeds[i / 2].items);
            assert_eq!(e.family.as_deref(), Some(family_id(&seeds[i / 2]).as_str()));
        }
        assert_eq!(corpus.count(Label::Benign), 6);
    }

    #[test]
    fn drop_fraction_on_ten_key_side() {
        let items: Vec<LogicItem> = (0..10).map(|i| key_item(ATTACK_VOCABULARY[i], 1, 0)).collect();
        let seed = ExtractedLogic { tx_hash: TxHash::derive("s"), items, source_invocation_count: 10 };
        let spec = MutationSpec { drop_fraction: 0.1, ..MutationSpec::identity(5) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let imitation = mutate(&seed, &spec, &[], &mut rng, TxHash::derive("i"));
        assert_eq!(imitation.items.len(), 9);
        let pattern = generalize(&seed, 0.6, 0.7, 0).unwrap();
        assert!((match_one(&pattern, &imitation).sim_final - 0.9).abs() < 1e-12);
    }

    #[test]
    fn reorder_and_noise_keep_full_score() {
        let seeds = synth_seeds(&SeedSpec { families: 10, ..SeedSpec::default() });
        let spec = MutationSpec { drop_fraction: 0.0, ..MutationSpec::cascade(11) };
        let corpus = synth_corpus(&seeds, &spec, 5, &pool(), Ratio::new(1, 1)).unwrap();
        for (i, e) in corpus.entries.iter().filter(|e| e.label == Label::Malicious).enumerate() {
            let p = generalize(&seeds[i / 5], 0.6, 0.7, 0).unwrap();
            assert_eq!(match_one(&p, &e.logic).sim_final, 1.0);
        }
    }

    #[test]
    fn label_soundness() {
        let seeds = synth_seeds(&SeedSpec::default());
        let spec = MutationSpec { drop_fraction: 0.5, ..MutationSpec::cascade(2) };
        let corpus = synth_corpus(&seeds, &spec, 4, &benign_suite(70, 3), Ratio::new(1, 1)).unwrap();
        for (i, e) in corpus.entries.iter().filter(|e| e.label == Label::Malicious).enumerate() {
            let (sc, sp) = partition(&seeds[i / 4]);
            let (ic, ip) = partition(&e.logic);
            for (s, m) in [(sc, ic), (sp, ip)] {
                let kept = s.iter().filter(|k| m.contains(k)).count();
                assert!(kept as f64 >= 0.5 * s.len() as f64);
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let seeds = synth_seeds(&SeedSpec::default());
        assert_eq!(seeds, synth_seeds(&SeedSpec::default()));
        let a = synth_corpus(&seeds, &MutationSpec::cascade(4), 3, &pool(), Ratio::new(1, 1)).unwrap();
        let b = synth_corpus(&seeds, &MutationSpec::cascade(4), 3, &pool(), Ratio::new(1, 1)).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&seeds, &MutationSpec::cascade(5), 3, &pool(), Ratio::new(1, 1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn seed_sides_are_in_range() {
        for seed in synth_seeds(&SeedSpec::default()) {
            let (c, p) = partition(&seed);
            assert!((5..=12).contains(&c.len()), "{}", c.len());
            assert!((5..=12).contains(&p.len()), "{}", p.len());
        }
    }

    #[test]
    fn benign_kinds_hold_their_shape() {
        for l in synth_benign(BenignKind::SingleCategoryCore, 20, 1) {
            assert!(l.items.iter().all(|i| i.token == TokenClass::Core));
        }
        for l in synth_benign(BenignKind::SingleCategoryProto, 20, 1) {
            assert!(l.items.iter().all(|i| i.token == TokenClass::ProtocolSpecific));
        }
        for l in synth_benign(BenignKind::MixedShort, 20, 1) {
            assert!((1..=3).contains(&l.items.len()));
        }
        assert_eq!(synth_benign(BenignKind::MixedShort, 1, 9).len(), 1);
    }

    #[test]
    fn insufficient_benign() {
        let seeds = synth_seeds(&SeedSpec { families: 2, ..SeedSpec::default() });
        let err = synth_corpus(&seeds, &MutationSpec::identity(0), 10, &pool()[..5], Ratio::new(1, 25)).unwrap_err();
        assert_eq!(err, SynthError::InsufficientBenign { needed: 500, available: 5 });
        assert_eq!(synth_corpus(&[], &MutationSpec::identity(0), 1, &[], Ratio::new(1, 1)), Err(SynthError::NoSeeds));
        let bad = MutationSpec { drop_fraction: 0.6, ..MutationSpec::identity(0) };
        assert!(synth_corpus(&seeds, &bad, 1, &pool(), Ratio::new(1, 1)).is_err());
    }
}
