//! Ethereum-like synthetic trace streams for scan and throughput runs.
//!
//! Each attack family has its own victim token, pair and recipe (a set of
//! core-asset and protocol-token operations); members of a family are
//! mutated copies of the recipe. Benign traffic is router swaps, plain
//! transfers and short smart-wallet batches. Every trace is padded with
//! protocol-internal subcalls up to a length drawn from a log-normal
//! distribution (median 24, clamped to 3..=800 invocations), mirroring the
//! long tail of mainnet call trees.

use cascade_core::labels::{AddressLabel, LabelClass, LabelSource};
use cascade_core::metrics::Label;
use cascade_core::primitives::Address;
use cascade_core::synth::derive_seed;
use cascade_core::trace::Trace;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::fixtures::{frame, trace, Frame};

pub const MAX_TRACE_LEN: usize = 800;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub families: usize,
    pub imitations_per_family: usize,
    pub benign: usize,
    pub median_len: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            families: 20,
            imitations_per_family: 10,
            benign: 1_000,
            median_len: 24.0,
            sigma: 1.0,
            seed: 11,
        }
    }
}

/// One generated trace with its ground truth.
#[derive(Debug, Clone)]
pub struct Sample {
    pub trace: Trace,
    pub label: Label,
    pub family: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub labels: Vec<AddressLabel>,
    /// The first attack of every family, used to derive patterns.
    pub seeds: Vec<Trace>,
    /// Imitations and benign traffic, shuffled.
    pub stream: Vec<Sample>,
}

const CORE_OPS: &[&str] = &[
    "balanceOf(address)",
    "approve(address,uint256)",
    "transfer(address,uint256)",
    "transferFrom(address,address,uint256)",
    "deposit()",
    "withdraw(uint256)",
];

const TOKEN_OPS: &[&str] = &[
    "balanceOf(address)",
    "transfer(address,uint256)",
    "transferFrom(address,address,uint256)",
    "approve(address,uint256)",
    "burn(uint256)",
    "mint(address,uint256)",
    "sell(uint256)",
    "buy(uint256)",
    "claim()",
    "stake(uint256)",
    "unstake(uint256)",
    "deposit(uint256)",
    "withdraw(uint256)",
    "rebase()",
    "harvest()",
    "redeem(uint256)",
    "emergencyWithdraw(uint256)",
    "donateToReserves(uint256)",
];

const PAIR_OPS: &[&str] = &["skim(address)", "sync()", "swap(uint256,uint256,address,bytes)", "getReserves()", "mint(address)", "burn(address)"];

#[derive(Debug, Clone, Copy)]
enum Target {
    Core(usize),
    Token,
    Pair,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    sig: &'static str,
    target: Target,
}

struct Shared {
    cores: [Address; 3],
    router: Address,
    vault: Address,
}

struct Family {
    token: Address,
    pair: Address,
    steps: Vec<Step>,
}

fn pick_steps(rng: &mut ChaCha8Rng) -> Vec<Step> {
    let mut steps = Vec::new();
    let n_core = rng.random_range(3..=5);
    for sig in CORE_OPS.choose_multiple(rng, n_core) {
        steps.push(Step {
            sig,
            target: Target::Core(rng.random_range(0..2)),
        });
    }
    // A transfer of the victim token is always part of the recipe, so an
    // unlabeled victim is still recognized as a token.
    steps.push(Step {
        sig: "transfer(address,uint256)",
        target: Target::Token,
    });
    let n_token = rng.random_range(1..=4);
    for sig in TOKEN_OPS[2..].choose_multiple(rng, n_token) {
        steps.push(Step { sig, target: Target::Token });
    }
    let n_pair = rng.random_range(2..=3);
    for sig in PAIR_OPS.choose_multiple(rng, n_pair) {
        steps.push(Step { sig, target: Target::Pair });
    }
    steps.shuffle(rng);
    steps
}

fn target_addr(shared: &Shared, fam: &Family, t: Target) -> Address {
    match t {
        Target::Core(i) => shared.cores[i],
        Target::Token => fam.token,
        Target::Pair => fam.pair,
    }
}

/// Protocol-internal subcalls under protocol-side frames until the trace
/// reaches `target` invocations.
fn pad(frames: &mut [Frame], shared: &Shared, target: usize, rng: &mut ChaCha8Rng) {
    fn count(frames: &[Frame]) -> usize {
        frames.iter().map(|f| 1 + count(&f.children)).sum()
    }
    let mut have = count(frames);
    // Frames whose callee is a labeled protocol or token contract.
    let hosts: Vec<usize> = (0..frames.len()).collect();
    let mut hops = 0usize;
    while have < target {
        let host = &mut frames[hosts[hops % hosts.len()]];
        hops += 1;
        let inner = host.callee;
        let leaf_target = *shared.cores.choose(rng).expect("non-empty");
        let sig = *["transfer(address,uint256)", "balanceOf(address)", "getReserves()", "sync()"]
            .choose(rng)
            .expect("non-empty");
        let mut leaf = frame(inner, leaf_target, sig);
        // Occasionally nest one level deeper inside the callee.
        if have + 2 <= target && rng.random_bool(0.3) {
            leaf = leaf.with([frame(leaf_target, shared.vault, "balanceOf(address)")]);
            have += 1;
        }
        host.children.push(leaf);
        have += 1;
    }
}

fn sample_len(dist: &LogNormal<f64>, rng: &mut ChaCha8Rng) -> usize {
    (dist.sample(rng).round() as usize).clamp(3, MAX_TRACE_LEN)
}

fn attack_trace(
    tag: &str,
    shared: &Shared,
    fam: &Family,
    steps: &[Step],
    nested: bool,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Trace {
    let eoa = Address::derive(&format!("{tag}-eoa"));
    let script = Address::derive(&format!("{tag}-script"));
    let owner = if nested {
        Address::derive(&format!("{tag}-helper"))
    } else {
        script
    };
    let mut body: Vec<Frame> = steps
        .iter()
        .map(|s| frame(owner, target_addr(shared, fam, s.target), s.sig))
        .collect();
    // Protocol-side frames host the padding; attacker frames stay as built.
    let mut internals = vec![frame(owner, shared.router, "getAmountsOut(uint256,address[])")];
    pad(&mut internals, shared, len.saturating_sub(body.len() + 4), rng);
    body.extend(internals);
    let body = if nested {
        vec![frame(script, owner, "").with(body)]
    } else {
        body
    };
    let loan = frame(script, shared.vault, "flashLoan(address,address[],uint256[],bytes)").with([
        frame(shared.vault, shared.cores[0], "transfer(address,uint256)"),
        frame(shared.vault, script, "receiveFlashLoan(address[],uint256[],uint256[],bytes)").with(body),
    ]);
    trace(tag, eoa, vec![frame(eoa, script, "").with([loan])])
}

fn benign_trace(tag: &str, shared: &Shared, families: &[Family], len: usize, rng: &mut ChaCha8Rng) -> Trace {
    let user = Address::derive(&format!("{tag}-user"));
    let fam = families.choose(rng).expect("at least one family");
    let kind = rng.random_range(0..4);
    let mut frames = match kind {
        // Router swap: everything below the router is protocol-internal.
        0 => vec![frame(user, shared.router, "swapExactTokensForTokens(uint256,uint256,address[],address,uint256)")
            .with([
                frame(shared.router, shared.cores[0], "transferFrom(address,address,uint256)"),
                frame(shared.router, fam.pair, "swap(uint256,uint256,address,bytes)"),
            ])],
        // Plain core-asset transfer or approval.
        1 => vec![frame(user, shared.cores[rng.random_range(0..3)], CORE_OPS[rng.random_range(0..4)])],
        // Protocol-token housekeeping.
        2 => vec![
            frame(user, fam.token, TOKEN_OPS[rng.random_range(0..TOKEN_OPS.len())]),
            frame(user, fam.pair, "sync()"),
        ],
        // Short smart-wallet batch mixing both sides.
        _ => {
            let wallet = Address::derive(&format!("{tag}-wallet"));
            vec![frame(user, wallet, "execute(address,uint256,bytes)").with([
                frame(wallet, shared.cores[0], "approve(address,uint256)"),
                frame(wallet, shared.router, "swapExactTokensForTokens(uint256,uint256,address[],address,uint256)"),
                frame(wallet, fam.token, "balanceOf(address)"),
            ])]
        }
    };
    let mut hosts = vec![frame(user, shared.router, "getAmountsOut(uint256,address[])")];
    let base: usize = frames.iter().map(|f| 1 + f.children.len()).sum();
    pad(&mut hosts, shared, len.saturating_sub(base), rng);
    frames.extend(hosts);
    trace(tag, user, frames)
}

/// Generates a labeled workload.
pub fn generate(spec: &WorkloadSpec) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dist = LogNormal::new(spec.median_len.ln(), spec.sigma).expect("valid log-normal parameters");
    let shared = Shared {
        cores: [Address::derive("wl-weth"), Address::derive("wl-usdt"), Address::derive("wl-usdc")],
        router: Address::derive("wl-router"),
        vault: Address::derive("wl-vault"),
    };
    let mut labels = vec![];
    let mut add = |address, label_class, name: String| {
        labels.push(AddressLabel {
            address,
            label_class,
            display_name: name,
            source: LabelSource::VendorDb,
        })
    };
    for (i, c) in shared.cores.iter().enumerate() {
        add(*c, LabelClass::CoreAssetToken, format!("core-{i}"));
    }
    add(shared.router, LabelClass::Protocol, "router".into());
    add(shared.vault, LabelClass::Protocol, "vault".into());

    let families: Vec<Family> = (0..spec.families)
        .map(|f| {
            let mut frng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, f as u64));
            let token = Address::derive(&format!("wl-token-{f}"));
            let pair = Address::derive(&format!("wl-pair-{f}"));
            // A third of the victim tokens are unlabeled, as fresh deployments are.
            if f % 3 != 0 {
                add(token, LabelClass::ProtocolToken, format!("token-{f}"));
            }
            add(pair, LabelClass::ProtocolToken, format!("pair-{f}"));
            Family {
                token,
                pair,
                steps: pick_steps(&mut frng),
            }
        })
        .collect();

    let mut seeds = Vec::new();
    let mut stream = Vec::new();
    for (f, fam) in families.iter().enumerate() {
        let len = sample_len(&dist, &mut rng);
        seeds.push(attack_trace(&format!("wl-seed-{f}"), &shared, fam, &fam.steps, false, len, &mut rng));
        for k in 0..spec.imitations_per_family {
            let mut steps = fam.steps.clone();
            steps.shuffle(&mut rng);
            // Repeat a few steps (loops) and add unrelated operations.
            for _ in 0..rng.random_range(0..4) {
                let s = *fam.steps.choose(&mut rng).expect("recipes are non-empty");
                steps.push(s);
            }
            for _ in 0..rng.random_range(0..3) {
                steps.push(Step {
                    sig: TOKEN_OPS.choose(&mut rng).expect("non-empty"),
                    target: Target::Token,
                });
            }
            let len = sample_len(&dist, &mut rng);
            let nested = rng.random_bool(0.3);
            stream.push(Sample {
                trace: attack_trace(&format!("wl-imitation-{f}-{k}"), &shared, fam, &steps, nested, len, &mut rng),
                label: Label::Malicious,
                family: Some(f),
            });
        }
    }
    for b in 0..spec.benign {
        let len = sample_len(&dist, &mut rng);
        stream.push(Sample {
            trace: benign_trace(&format!("wl-benign-{b}"), &shared, &families, len, &mut rng),
            label: Label::Benign,
            family: None,
        });
    }
    stream.shuffle(&mut rng);
    Workload { labels, seeds, stream }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traces_are_valid_and_lengths_are_long_tailed() {
        let w = generate(&WorkloadSpec {
            benign: 300,
            ..WorkloadSpec::default()
        });
        assert_eq!(w.seeds.len(), 20);
        assert_eq!(w.stream.len(), 500);
        let mut lens: Vec<usize> = w.stream.iter().map(|s| s.trace.invocation_count()).collect();
        for s in &w.stream {
            s.trace.validate().unwrap();
        }
        lens.sort_unstable();
        let median = lens[lens.len() / 2];
        assert!((12..=48).contains(&median), "median {median}");
        assert!(*lens.last().unwrap() <= MAX_TRACE_LEN + 40);
        assert!(lens[lens.len() * 95 / 100] > 2 * median);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = WorkloadSpec {
            families: 3,
            benign: 20,
            ..WorkloadSpec::default()
        };
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(
            a.stream.iter().map(|s| &s.trace).collect::<Vec<_>>(),
            b.stream.iter().map(|s| &s.trace).collect::<Vec<_>>()
        );
    }
}
