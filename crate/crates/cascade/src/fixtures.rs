//! Handcrafted raw-trace fixtures: a pSeudoEth-style skim-loop attack, its
//! imitations and ordinary traffic touching the same contracts.
//!
//! The attack shape follows the public incident: flash-borrow WETH, buy the
//! rebasing token, repeatedly transfer it to the pair and `skim` the
//! phantom surplus, dump it back into the pair and repay. Addresses are
//! derived from tags; none of these are real transactions.

use cascade_core::labels::{AddressLabel, LabelClass, LabelSource};
use cascade_core::metrics::Label;
use cascade_core::primitives::{Address, Selector, TxHash};
use cascade_core::semantics::canonical_signature;
use cascade_core::trace::{CallKind, Invocation, Trace};

/// Builds one call frame; the selector is derived from the signature and
/// depths are fixed up by [`Frame::into_invocation`].
#[derive(Debug, Clone)]
pub struct Frame {
    pub caller: Address,
    pub callee: Address,
    pub signature: &'static str,
    pub kind: CallKind,
    pub value: String,
    pub children: Vec<Frame>,
}

pub fn frame(caller: Address, callee: Address, signature: &'static str) -> Frame {
    Frame {
        caller,
        callee,
        signature,
        kind: CallKind::Call,
        value: "0".into(),
        children: Vec::new(),
    }
}

impl Frame {
    pub fn with(mut self, children: impl IntoIterator<Item = Frame>) -> Self {
        self.children.extend(children);
        self
    }

    pub fn kind(mut self, kind: CallKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn into_invocation(self, depth: u32) -> Invocation {
        let selector = canonical_signature(self.signature).map(|c| Selector::of_canonical(&c));
        Invocation {
            caller: self.caller,
            callee: self.callee,
            selector,
            signature: self.signature.to_owned(),
            kind: self.kind,
            depth,
            value: self.value,
            children: self.children.into_iter().map(|c| c.into_invocation(depth + 1)).collect(),
        }
    }
}

pub fn trace(tag: &str, sender: Address, roots: Vec<Frame>) -> Trace {
    Trace {
        tx_hash: TxHash::derive(tag),
        sender,
        chain_id: 1,
        root_calls: roots.into_iter().map(|f| f.into_invocation(0)).collect(),
    }
}

/// Contracts shared by the fixture set.
#[derive(Debug, Clone, Copy)]
pub struct World {
    pub weth: Address,
    pub usdt: Address,
    pub vault: Address,
    pub dpp: Address,
    pub router: Address,
    pub peth: Address,
    pub pair: Address,
    /// Second rebasing token, deliberately unlabeled (freshly deployed).
    pub fresh_token: Address,
    pub fresh_pair: Address,
}

impl World {
    pub fn new() -> Self {
        World {
            weth: Address::derive("weth"),
            usdt: Address::derive("usdt"),
            vault: Address::derive("balancer-vault"),
            dpp: Address::derive("dodo-dpp"),
            router: Address::derive("uniswap-v2-router"),
            peth: Address::derive("pseudo-eth"),
            pair: Address::derive("peth-weth-pair"),
            fresh_token: Address::derive("fresh-rebasing-token"),
            fresh_pair: Address::derive("fresh-weth-pair"),
        }
    }

    pub fn labels(&self) -> Vec<AddressLabel> {
        let l = |address, label_class, name: &str, source| AddressLabel {
            address,
            label_class,
            display_name: name.to_owned(),
            source,
        };
        vec![
            l(self.weth, LabelClass::CoreAssetToken, "WETH", LabelSource::VendorDb),
            l(self.usdt, LabelClass::CoreAssetToken, "USDT", LabelSource::VendorDb),
            l(self.vault, LabelClass::Protocol, "Balancer: Vault", LabelSource::VendorDb),
            l(self.dpp, LabelClass::Protocol, "DODO: DPP", LabelSource::CommunityDb),
            l(self.router, LabelClass::Protocol, "Uniswap V2: Router", LabelSource::VendorDb),
            l(self.peth, LabelClass::ProtocolToken, "pSeudoEth", LabelSource::CommunityDb),
            l(self.pair, LabelClass::ProtocolToken, "Uniswap V2: pETH-WETH", LabelSource::CommunityDb),
            l(self.fresh_pair, LabelClass::ProtocolToken, "Uniswap V2: FRESH-WETH", LabelSource::CommunityDb),
        ]
    }
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

/// Knobs that turn the seed attack into an imitation.
#[derive(Debug, Clone)]
pub struct Variant {
    pub tag: &'static str,
    pub token: Address,
    pub pair: Address,
    pub skim_rounds: usize,
    /// Use the DODO pool and its callback instead of the Balancer vault.
    pub dodo_flash: bool,
    /// Route the loan body through a second unlabeled helper contract.
    pub nested_helper: bool,
    pub approve_first: bool,
    pub query_reserves: bool,
    pub noise: bool,
}

impl Variant {
    pub fn seed(w: &World) -> Self {
        Variant {
            tag: "pseudo-eth-attack",
            token: w.peth,
            pair: w.pair,
            skim_rounds: 5,
            dodo_flash: false,
            nested_helper: false,
            approve_first: false,
            query_reserves: true,
            noise: false,
        }
    }
}

/// The attack (or an imitation) as a raw trace.
pub fn attack(w: &World, v: &Variant) -> Trace {
    let eoa = Address::derive(&format!("{}-eoa", v.tag));
    let script = Address::derive(&format!("{}-contract", v.tag));
    let body_owner = if v.nested_helper {
        Address::derive(&format!("{}-helper", v.tag))
    } else {
        script
    };
    let a = body_owner;

    let mut body = Vec::new();
    let balance = frame(a, w.weth, "balanceOf(address)");
    let approve = frame(a, w.weth, "approve(address,uint256)");
    if v.approve_first {
        body.extend([approve, balance]);
    } else {
        body.extend([balance, approve]);
    }
    body.push(
        frame(a, w.router, "swapExactTokensForTokensSupportingFeeOnTransferTokens(uint256,uint256,address[],address,uint256)")
            .with([
                frame(w.router, w.weth, "transferFrom(address,address,uint256)"),
                frame(w.router, v.pair, "getReserves()"),
                frame(w.router, v.pair, "swap(uint256,uint256,address,bytes)")
                    .with([frame(v.pair, v.token, "transfer(address,uint256)"), frame(v.pair, w.weth, "balanceOf(address)")]),
            ]),
    );
    if v.noise {
        body.push(frame(a, w.usdt, "decimals()"));
        body.push(frame(a, v.token, "symbol()"));
    }
    for _ in 0..v.skim_rounds {
        body.push(frame(a, v.token, "balanceOf(address)"));
        body.push(frame(a, v.token, "transfer(address,uint256)").with([frame(v.token, v.token, "rebase()")]));
        body.push(frame(a, v.pair, "skim(address)").with([frame(v.pair, v.token, "transfer(address,uint256)")]));
    }
    if v.query_reserves {
        body.push(frame(a, v.pair, "getReserves()"));
    }
    body.push(frame(a, v.token, "transfer(address,uint256)"));
    body.push(
        frame(a, v.pair, "swap(uint256,uint256,address,bytes)")
            .with([frame(v.pair, w.weth, "transfer(address,uint256)"), frame(v.pair, v.token, "balanceOf(address)")]),
    );
    let (lender, borrow_sig, callback_sig) = if v.dodo_flash {
        (w.dpp, "flashLoan(uint256,uint256,address,bytes)", "DPPFlashLoanCall(address,uint256,uint256,bytes)")
    } else {
        (w.vault, "flashLoan(address,address[],uint256[],bytes)", "receiveFlashLoan(address[],uint256[],uint256[],bytes)")
    };
    body.push(frame(a, w.weth, "transfer(address,uint256)"));

    let body_frame = if v.nested_helper {
        vec![frame(script, body_owner, "").kind(CallKind::DelegateCall).with(body)]
    } else {
        body
    };
    let loan = frame(script, lender, borrow_sig).with([
        frame(lender, w.weth, "transfer(address,uint256)"),
        frame(lender, script, callback_sig).with(body_frame),
        frame(lender, w.weth, "balanceOf(address)"),
    ]);
    let root = frame(eoa, script, "").with([loan, frame(script, w.weth, "transfer(address,uint256)")]);
    trace(v.tag, eoa, vec![root])
}

/// Imitations of the seed attack, each with a different mix of mutations.
pub fn imitations(w: &World) -> Vec<Trace> {
    let seed = Variant::seed(w);
    let variants = [
        Variant {
            tag: "imitation-reordered",
            skim_rounds: 3,
            approve_first: true,
            ..seed.clone()
        },
        Variant {
            tag: "imitation-fresh-token",
            token: w.fresh_token,
            pair: w.fresh_pair,
            skim_rounds: 8,
            ..seed.clone()
        },
        Variant {
            tag: "imitation-dodo-nested",
            dodo_flash: true,
            nested_helper: true,
            ..seed.clone()
        },
        Variant {
            tag: "imitation-noisy",
            noise: true,
            skim_rounds: 2,
            ..seed.clone()
        },
        Variant {
            tag: "imitation-dropped-step",
            query_reserves: false,
            dodo_flash: true,
            ..seed.clone()
        },
    ];
    variants.iter().map(|v| attack(w, v)).collect()
}

/// Ordinary transactions touching the same contracts.
pub fn benign(w: &World) -> Vec<Trace> {
    let user = Address::derive("benign-user");
    let wallet = Address::derive("benign-smart-wallet");
    let router_swap = |caller| {
        frame(caller, w.router, "swapExactTokensForTokens(uint256,uint256,address[],address,uint256)").with([
            frame(w.router, w.weth, "transferFrom(address,address,uint256)"),
            frame(w.router, w.pair, "swap(uint256,uint256,address,bytes)")
                .with([frame(w.pair, w.peth, "transfer(address,uint256)")]),
        ])
    };
    vec![
        trace("benign-router-swap", user, vec![router_swap(user)]),
        trace("benign-weth-transfer", user, vec![frame(user, w.weth, "transfer(address,uint256)")]),
        trace("benign-approve", user, vec![frame(user, w.peth, "approve(address,uint256)")]),
        trace(
            "benign-add-liquidity",
            user,
            vec![frame(user, w.router, "addLiquidity(address,address,uint256,uint256,uint256,uint256,address,uint256)")
                .with([
                    frame(w.router, w.weth, "transferFrom(address,address,uint256)"),
                    frame(w.router, w.peth, "transferFrom(address,address,uint256)"),
                    frame(w.router, w.pair, "mint(address)"),
                ])],
        ),
        trace(
            "benign-wallet-batch",
            user,
            vec![frame(user, wallet, "execute(address,uint256,bytes)").with([
                frame(wallet, w.weth, "approve(address,uint256)"),
                router_swap(wallet),
                frame(wallet, w.peth, "balanceOf(address)"),
            ])],
        ),
        trace(
            "benign-peth-holder",
            user,
            vec![
                frame(user, w.peth, "transfer(address,uint256)"),
                frame(user, w.pair, "sync()"),
            ],
        ),
    ]
}

/// Every fixture trace with its ground-truth label; the seed attack first.
pub fn labeled(w: &World) -> Vec<(Trace, Label)> {
    let mut out = vec![(attack(w, &Variant::seed(w)), Label::Malicious)];
    out.extend(imitations(w).into_iter().map(|t| (t, Label::Malicious)));
    out.extend(benign(w).into_iter().map(|t| (t, Label::Benign)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid_traces() {
        let w = World::new();
        for (t, _) in labeled(&w) {
            t.validate().unwrap_or_else(|e| panic!("{}: {e}", t.tx_hash));
        }
    }
}
