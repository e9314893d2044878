//! Deterministic generator of labeled synthetic cross-chain behaviors.
//!
//! Each class has a structural signature:
//!
//! * normal: deposit and lock on the source chain (user, router, token, logs),
//!   relayed mint on the destination chain;
//! * source-chain attack: a chain of unlisted contracts calls the router with a
//!   fake token contract, and the destination releases funds straight from the
//!   router without touching the token contract;
//! * off-chain attack: a deposit that never locks anything, followed by a
//!   regular-looking mint on the destination;
//! * destination-chain attack: an unlisted contract chain drives the
//!   destination router into a malicious token that re-enters the real token
//!   contract in cycles.
//!
//! Noise only ever attaches a single unlisted account to a normal behavior, so
//! long chains of unlisted contracts stay exclusive to attacks.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    write_pairs, write_records, Approval, BridgeConfig, Call, CrossChainBehavior, IngestError,
    LogEntry, PairSpec, TransactionRecord, Transfer,
};
use crate::taxonomy::Label;

pub const SOURCE_CHAIN: &str = "eth";
pub const DEST_CHAIN: &str = "bsc";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    Spec(String),
    #[error("{0} is not an attack class")]
    NotAttack(Label),
    #[error(transparent)]
    Io(#[from] IngestError),
}

/// Inclusive range of extra benign items added per behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jitter {
    pub min: usize,
    pub max: usize,
}

impl Jitter {
    fn draw(self, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_normal: usize,
    pub n_per_attack_class: usize,
    /// Probability that a normal behavior touches one extra unlisted account.
    pub noise: f64,
    /// Probability that a normal behavior takes a benign route resembling an attack:
    /// entering the bridge through an aggregator contract chain, or paying out
    /// through a token with a receive hook.
    pub decoy: f64,
    pub extra_calls: Jitter,
    pub extra_logs: Jitter,
    pub extra_transfers: Jitter,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            n_normal: 400,
            n_per_attack_class: 60,
            noise: 0.1,
            decoy: 0.25,
            extra_calls: Jitter { min: 0, max: 2 },
            extra_logs: Jitter { min: 0, max: 2 },
            extra_transfers: Jitter { min: 0, max: 1 },
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, p) in [("noise", self.noise), ("decoy", self.decoy)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Spec(format!("{name} {p} outside [0, 1]")));
            }
        }
        for (name, j) in [
            ("extra_calls", self.extra_calls),
            ("extra_logs", self.extra_logs),
            ("extra_transfers", self.extra_transfers),
        ] {
            if j.min > j.max {
                return Err(SynthError::Spec(format!("{name}: min {} > max {}", j.min, j.max)));
            }
        }
        Ok(())
    }
}

/// A bridge deployment: router and token contract on each chain.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Bridge {
    src_router: String,
    src_token: String,
    dst_router: String,
    dst_token: String,
}

fn fixed_addr(tag: u64, i: u64) -> String {
    format!("0x{:08x}{:032x}", tag, 0x1000 + i)
}

fn bridges() -> Vec<Bridge> {
    (0..3)
        .map(|i| Bridge {
            src_router: fixed_addr(0xb41d_0001, i),
            src_token: fixed_addr(0xb41d_0002, i),
            dst_router: fixed_addr(0xb41d_0003, i),
            dst_token: fixed_addr(0xb41d_0004, i),
        })
        .collect()
}

/// One generated behavior and the externally owned accounts it involves.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBehavior {
    pub behavior: CrossChainBehavior,
    /// `(chain, address)` of every user account, for the bridge configuration.
    pub users: Vec<(String, String)>,
}

/// Bridge configuration listing every synthetic router and token plus `users`.
pub fn bridge_config<'a>(users: impl IntoIterator<Item = &'a (String, String)>) -> BridgeConfig {
    let mut routers = Vec::new();
    let mut tokens = Vec::new();
    for b in bridges() {
        routers.push((SOURCE_CHAIN.to_string(), b.src_router));
        routers.push((DEST_CHAIN.to_string(), b.dst_router));
        tokens.push((SOURCE_CHAIN.to_string(), b.src_token));
        tokens.push((DEST_CHAIN.to_string(), b.dst_token));
    }
    let users: BTreeSet<(String, String)> = users.into_iter().cloned().collect();
    let users: Vec<(String, String)> = users.into_iter().collect();
    BridgeConfig::new(&routers, &tokens, Some(&users)).expect("synthetic routers and tokens are disjoint")
}

/// Per-behavior generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub noise: f64,
    pub decoy: f64,
    pub extra_calls: Jitter,
    pub extra_logs: Jitter,
    pub extra_transfers: Jitter,
}

impl Default for Generator {
    fn default() -> Self {
        Generator::from(&CorpusSpec::default())
    }
}

impl From<&CorpusSpec> for Generator {
    fn from(s: &CorpusSpec) -> Self {
        Self {
            noise: s.noise,
            decoy: s.decoy,
            extra_calls: s.extra_calls,
            extra_logs: s.extra_logs,
            extra_transfers: s.extra_transfers,
        }
    }
}

struct Ctx {
    rng: ChaCha8Rng,
    seed: u64,
    users: Vec<(String, String)>,
    bridge: Bridge,
}

impl Ctx {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = bridges();
        let bridge = all[rng.gen_range(0..all.len())].clone();
        Self {
            rng,
            seed,
            users: Vec::new(),
            bridge,
        }
    }

    fn addr(&mut self) -> String {
        let hi: u32 = self.rng.gen();
        let lo: u128 = self.rng.gen();
        format!("0x{hi:08x}{lo:032x}")
    }

    fn user(&mut self, chain: &str) -> String {
        let a = self.addr();
        self.users.push((chain.to_string(), a.clone()));
        a
    }

    fn amount(&mut self) -> String {
        self.rng.gen_range(1u64..5_000_000_000).to_string()
    }

    fn tx(&mut self, chain: &str, side: u8, from: &str, to: &str) -> TransactionRecord {
        let tail: u128 = self.rng.gen();
        TransactionRecord {
            tx_hash: format!("0x{:016x}{side:02x}{tail:046x}", self.seed),
            chain_id: chain.to_string(),
            block_number: self.rng.gen_range(10_000_000..20_000_000),
            timestamp: self.rng.gen_range(1_600_000_000..1_700_000_000),
            from_addr: from.to_string(),
            to_addr: to.to_string(),
            calls: Vec::new(),
            logs: Vec::new(),
            transfers: Vec::new(),
            approvals: Vec::new(),
        }
    }

    fn pick<'a>(&mut self, options: &[&'a str]) -> &'a str {
        options.choose(&mut self.rng).copied().expect("nonempty options")
    }
}

fn call(caller: &str, callee: &str, f: &str) -> Call {
    Call {
        caller: caller.to_string(),
        callee: callee.to_string(),
        function_name: f.to_string(),
        param_text: String::new(),
    }
}

fn log(emitter: &str, event: &str) -> LogEntry {
    LogEntry {
        emitter: emitter.to_string(),
        event_name: event.to_string(),
        param_text: String::new(),
    }
}

fn transfer(ctx: &mut Ctx, from: &str, to: &str, token: &str) -> Transfer {
    Transfer {
        from: from.to_string(),
        to: to.to_string(),
        token: token.to_string(),
        amount: ctx.amount(),
    }
}

fn finish(ctx: Ctx, label: Label, src: TransactionRecord, dst: TransactionRecord) -> SyntheticBehavior {
    SyntheticBehavior {
        behavior: CrossChainBehavior {
            behavior_id: format!("synth-{:016x}", ctx.seed),
            source_tx: Some(src),
            dest_tx: Some(dst),
            label: Some(label),
        },
        users: ctx.users,
    }
}

impl Generator {
    /// Benign extras between bridge accounts only.
    fn benign_source(&self, ctx: &mut Ctx, tx: &mut TransactionRecord, user: &str) {
        let (r, t) = (ctx.bridge.src_router.clone(), ctx.bridge.src_token.clone());
        for _ in 0..self.extra_calls.draw(&mut ctx.rng) {
            let f = ctx.pick(&["balanceOf(address)", "allowance(address,address)", "decimals()"]);
            tx.calls.push(call(&r, &t, f));
        }
        for _ in 0..self.extra_logs.draw(&mut ctx.rng) {
            let e = ctx.pick(&["Approval", "Sync"]);
            tx.logs.push(log(&t, e));
        }
        for _ in 0..self.extra_transfers.draw(&mut ctx.rng) {
            let tr = transfer(ctx, user, &t, &t);
            tx.transfers.push(tr);
        }
        if ctx.rng.gen_bool(0.5) {
            tx.approvals.push(Approval {
                owner: user.to_string(),
                spender: r,
                token: t,
            });
        }
    }

    fn benign_dest(&self, ctx: &mut Ctx, tx: &mut TransactionRecord) {
        let (r, t) = (ctx.bridge.dst_router.clone(), ctx.bridge.dst_token.clone());
        for _ in 0..self.extra_calls.draw(&mut ctx.rng) {
            let f = ctx.pick(&["totalSupply()", "balanceOf(address)", "decimals()"]);
            tx.calls.push(call(&r, &t, f));
        }
        for _ in 0..self.extra_logs.draw(&mut ctx.rng) {
            let e = ctx.pick(&["Transfer", "Sync"]);
            tx.logs.push(log(&t, e));
        }
    }

    /// Deposit and lock on the source chain.
    fn source_deposit(&self, ctx: &mut Ctx, lock: bool) -> (TransactionRecord, String) {
        let user = ctx.user(SOURCE_CHAIN);
        let (r, t) = (ctx.bridge.src_router.clone(), ctx.bridge.src_token.clone());
        let mut tx = ctx.tx(SOURCE_CHAIN, 0, &user, &r);
        let f = ctx.pick(&["deposit(address,uint256,uint256)", "lockTokens(uint256,address)", "swapOut(uint256)"]);
        tx.calls.push(call(&user, &r, f));
        if lock {
            let f = ctx.pick(&["transferFrom(address,address,uint256)", "lock(address,uint256)"]);
            tx.calls.push(call(&r, &t, f));
            tx.logs.push(log(&t, "Transfer"));
            let tr = transfer(ctx, &user, &r, &t);
            tx.transfers.push(tr);
        }
        let e = ctx.pick(&["Deposit", "TokenLocked", "LogSwapOut"]);
        tx.logs.push(log(&r, e));
        (tx, user)
    }

    /// Relayed mint on the destination chain, paying `receiver`.
    fn dest_mint(&self, ctx: &mut Ctx, receiver: &str) -> TransactionRecord {
        let relayer = ctx.user(DEST_CHAIN);
        let (r, t) = (ctx.bridge.dst_router.clone(), ctx.bridge.dst_token.clone());
        let mut tx = ctx.tx(DEST_CHAIN, 1, &relayer, &r);
        let f = ctx.pick(&["withdraw(bytes,bytes[])", "executeProposal(bytes32,bytes)", "swapIn(bytes32,address,uint256)"]);
        tx.calls.push(call(&relayer, &r, f));
        let f = ctx.pick(&["mint(address,uint256)", "transfer(address,uint256)"]);
        tx.calls.push(call(&r, &t, f));
        tx.logs.push(log(&t, "Transfer"));
        let e = ctx.pick(&["Withdrawal", "TokenUnlocked", "LogSwapIn"]);
        tx.logs.push(log(&r, e));
        let tr = transfer(ctx, &t, receiver, &t);
        tx.transfers.push(tr);
        tx
    }

    pub fn normal(&self, seed: u64) -> SyntheticBehavior {
        let mut ctx = Ctx::new(seed);
        let (mut src, user) = self.source_deposit(&mut ctx, true);
        self.benign_source(&mut ctx, &mut src, &user);
        let receiver = ctx.user(DEST_CHAIN);
        let mut dst = self.dest_mint(&mut ctx, &receiver);
        self.benign_dest(&mut ctx, &mut dst);
        if ctx.rng.gen_bool(self.decoy) {
            if ctx.rng.gen_bool(0.5) {
                self.aggregator_entry(&mut ctx, &mut src, &user);
            } else {
                // Receive hook on the payout token, called once.
                let hook = ctx.addr();
                let dt = ctx.bridge.dst_token.clone();
                dst.calls.push(call(&dt, &hook, "tokensReceived(address,uint256)"));
                dst.calls.push(call(&hook, &dt, "balanceOf(address)"));
            }
        }
        if ctx.rng.gen_bool(self.noise) {
            // One unlisted account touched once; it never initiates anything.
            let other = ctx.addr();
            let which = ctx.rng.gen_range(0..3);
            let (r, t) = (ctx.bridge.src_router.clone(), ctx.bridge.src_token.clone());
            match which {
                0 => src.calls.push(call(&r, &other, "collectFee(uint256)")),
                1 => {
                    let tr = transfer(&mut ctx, &t, &other, &t);
                    src.transfers.push(tr);
                }
                _ => {
                    let dt = ctx.bridge.dst_token.clone();
                    let tr = transfer(&mut ctx, &dt, &other, &dt);
                    dst.transfers.push(tr);
                }
            }
        }
        finish(ctx, Label::Normal, src, dst)
    }

    /// Routes the user's deposit through two or three swap contracts before it reaches the router.
    fn aggregator_entry(&self, ctx: &mut Ctx, src: &mut TransactionRecord, user: &str) {
        let n = ctx.rng.gen_range(2..=3);
        let contracts: Vec<String> = (0..n).map(|_| ctx.addr()).collect();
        let r = ctx.bridge.src_router.clone();
        let deposit = src.calls.remove(0);
        src.to_addr = contracts[0].clone();
        let mut calls = vec![call(user, &contracts[0], "execute(bytes)")];
        for w in contracts.windows(2) {
            let f = ctx.pick(&["swap(uint256,uint256,address,bytes)", "uniswapV2Call(address,uint256,uint256,bytes)"]);
            calls.push(call(&w[0], &w[1], f));
        }
        calls.push(call(&contracts[n - 1], &r, &deposit.function_name));
        calls.append(&mut src.calls);
        src.calls = calls;
    }

    /// Attack transaction running `attacker -> O1 -> ... -> On`; returns it with `On`.
    fn contract_chain(&self, ctx: &mut Ctx, chain: &str, side: u8, attacker: &str, n: usize) -> (TransactionRecord, String) {
        let contracts: Vec<String> = (0..n).map(|_| ctx.addr()).collect();
        let mut tx = ctx.tx(chain, side, attacker, &contracts[0]);
        tx.calls.push(call(attacker, &contracts[0], "execute(bytes)"));
        for w in contracts.windows(2) {
            let f = ctx.pick(&["flashLoan(uint256)", "swap(uint256,uint256,address,bytes)", "fallback()", "uniswapV2Call(address,uint256,uint256,bytes)"]);
            tx.calls.push(call(&w[0], &w[1], f));
        }
        let last = contracts[n - 1].clone();
        (tx, last)
    }

    pub fn attack(&self, kind: Label, seed: u64) -> Result<SyntheticBehavior, SynthError> {
        let mut ctx = Ctx::new(seed);
        let (src, dst) = match kind {
            Label::SrcAttack => {
                // Fake deposit: the router accepts a counterfeit token and logs a deposit.
                let attacker = ctx.user(SOURCE_CHAIN);
                let r = ctx.bridge.src_router.clone();
                let n = ctx.rng.gen_range(4..=6);
                let (mut src, last) = self.contract_chain(&mut ctx, SOURCE_CHAIN, 0, &attacker, n);
                src.calls.push(call(&last, &r, "deposit(address,uint256,uint256)"));
                let fake = ctx.addr();
                let helper = ctx.addr();
                src.calls.push(call(&r, &fake, "transferFrom(address,address,uint256)"));
                src.calls.push(call(&fake, &helper, "callback(bytes)"));
                src.logs.push(log(&fake, "Transfer"));
                src.logs.push(log(&r, "Deposit"));
                let receiver = ctx.user(DEST_CHAIN);
                let relayer = ctx.user(DEST_CHAIN);
                let (dr, dt) = (ctx.bridge.dst_router.clone(), ctx.bridge.dst_token.clone());
                let mut dst = ctx.tx(DEST_CHAIN, 1, &relayer, &dr);
                dst.calls.push(call(&relayer, &dr, "withdraw(bytes,bytes[])"));
                dst.logs.push(log(&dr, "Withdrawal"));
                let tr = transfer(&mut ctx, &dr, &receiver, &dt);
                dst.transfers.push(tr);
                (src, dst)
            }
            Label::OffAttack => {
                // Forged relay message: nothing is locked, yet the destination mints.
                let (src, _) = self.source_deposit(&mut ctx, false);
                let receiver = ctx.user(DEST_CHAIN);
                let mut dst = self.dest_mint(&mut ctx, &receiver);
                let reps = ctx.rng.gen_range(1..=3);
                let dt = ctx.bridge.dst_token.clone();
                for _ in 0..reps {
                    let tr = transfer(&mut ctx, &dt, &receiver, &dt);
                    dst.transfers.push(tr);
                }
                (src, dst)
            }
            Label::DstAttack => {
                // Reentrancy through a malicious token on the destination chain.
                let (src, _) = self.source_deposit(&mut ctx, false);
                let attacker = ctx.user(DEST_CHAIN);
                let (dr, dt) = (ctx.bridge.dst_router.clone(), ctx.bridge.dst_token.clone());
                let n = ctx.rng.gen_range(2..=3);
                let (mut dst, last) = self.contract_chain(&mut ctx, DEST_CHAIN, 1, &attacker, n);
                dst.calls.push(call(&last, &dr, "withdraw(bytes,bytes[])"));
                let evil = ctx.addr();
                let hook = ctx.addr();
                dst.calls.push(call(&dr, &evil, "transfer(address,uint256)"));
                let cycles = ctx.rng.gen_range(2..=4);
                for _ in 0..cycles {
                    dst.calls.push(call(&evil, &hook, "onTokenTransfer(address,uint256,bytes)"));
                    dst.calls.push(call(&hook, &evil, "reenter()"));
                    dst.calls.push(call(&hook, &dt, "transfer(address,uint256)"));
                    dst.calls.push(call(&dt, &hook, "tokensReceived(address,uint256)"));
                    dst.logs.push(log(&dt, "Transfer"));
                }
                dst.calls.push(call(&hook, &dr, "withdraw(bytes,bytes[])"));
                dst.logs.push(log(&dr, "Withdrawal"));
                let tr = transfer(&mut ctx, &dt, &attacker, &dt);
                dst.transfers.push(tr);
                (src, dst)
            }
            Label::Normal => return Err(SynthError::NotAttack(kind)),
        };
        Ok(finish(ctx, kind, src, dst))
    }
}

pub fn gen_normal(seed: u64) -> SyntheticBehavior {
    Generator::default().normal(seed)
}

pub fn gen_attack(kind: Label, seed: u64) -> Result<SyntheticBehavior, SynthError> {
    Generator::default().attack(kind, seed)
}

/// Bijective 64-bit mixer, so distinct inputs give distinct behavior seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// An in-memory corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<TransactionRecord>,
    pub pairs: Vec<PairSpec>,
    pub config: BridgeConfig,
    pub behaviors: Vec<CrossChainBehavior>,
}

pub fn gen_corpus(spec: &CorpusSpec) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let generator = Generator::from(spec);
    let mut items = Vec::with_capacity(spec.n_normal + 3 * spec.n_per_attack_class);
    for (class, count) in Label::ALL.iter().map(|&l| {
        let n = if l == Label::Normal { spec.n_normal } else { spec.n_per_attack_class };
        (l, n)
    }) {
        for i in 0..count {
            let seed = mix(spec.seed ^ ((class.index() as u64) << 40 | i as u64));
            let b = match class {
                Label::Normal => generator.normal(seed),
                _ => generator.attack(class, seed)?,
            };
            items.push(b);
        }
    }
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut records = Vec::new();
    let mut pairs = Vec::new();
    let mut users = Vec::new();
    let mut behaviors = Vec::new();
    for item in items {
        let b = item.behavior;
        let (src, dst) = (b.source_tx.clone().expect("two-sided"), b.dest_tx.clone().expect("two-sided"));
        pairs.push(PairSpec {
            src_chain: src.chain_id.clone(),
            src_tx: src.tx_hash.clone(),
            dst_chain: dst.chain_id.clone(),
            dst_tx: dst.tx_hash.clone(),
            label: b.label,
        });
        records.push(src);
        records.push(dst);
        users.extend(item.users);
        behaviors.push(b);
    }
    Ok(Corpus {
        records,
        pairs,
        config: bridge_config(&users),
        behaviors,
    })
}

/// Writes `records.jsonl`, `pairs.jsonl` and `bridge_config.json` into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_records(dir.join("records.jsonl"), &corpus.records)?;
    write_pairs(dir.join("pairs.jsonl"), &corpus.pairs)?;
    corpus.config.save(dir.join("bridge_config.json"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metapath::{contains_instance, MetaPath};
    use crate::xbhg::build_graph;
    use crate::NodeType;

    fn built(s: &SyntheticBehavior) -> crate::xbhg::XbhgGraph {
        let (g, warnings) = build_graph(&s.behavior, &bridge_config(&s.users)).unwrap();
        assert!(warnings.is_empty());
        g
    }

    fn has(g: &crate::xbhg::XbhgGraph, p: &str) -> bool {
        contains_instance(g, &p.parse::<MetaPath>().unwrap())
    }

    #[test]
    fn normal_shape() {
        let plain = Generator {
            decoy: 0.0,
            ..Generator::default()
        };
        for seed in 0..30 {
            let s = plain.normal(seed);
            assert_eq!(s, plain.normal(seed));
            let g = built(&s);
            for p in ["URT", "RTL", "URL"] {
                assert!(has(&g, p), "seed {seed} lacks {p}");
            }
            assert!(!has(&g, "OO"));
            assert_eq!(g.nodes.iter().filter(|n| n.ntype == NodeType::D).count(), 1);
            assert_eq!(g.edges.iter().filter(|e| e.etype == crate::EdgeType::CrossChain).count(), 2);
        }
    }

    #[test]
    fn decoy_normals_keep_the_lock_and_stay_short() {
        let g = Generator {
            decoy: 1.0,
            ..Generator::default()
        };
        let (mut chains, mut hooks) = (0, 0);
        for seed in 0..40 {
            let b = built(&g.normal(seed));
            for p in ["URT", "RTL"] {
                assert!(has(&b, p), "seed {seed} lacks {p}");
            }
            assert!(!has(&b, "OOOO"));
            if has(&b, "OOR") {
                chains += 1;
            }
            if has(&b, "TOT") {
                hooks += 1;
            }
        }
        assert!(chains > 5 && hooks > 5, "{chains} {hooks}");
    }

    #[test]
    fn attack_shapes() {
        for seed in 0..30 {
            let src = built(&gen_attack(Label::SrcAttack, seed).unwrap());
            assert!(has(&src, "OOOO") && has(&src, "OROO"));
            assert!(!has(&src, "RTL"));

            let off = gen_attack(Label::OffAttack, seed).unwrap();
            let src_tx = off.behavior.source_tx.as_ref().unwrap();
            let token = &bridges()
                .into_iter()
                .find(|b| b.src_router == src_tx.to_addr)
                .unwrap()
                .src_token;
            assert!(src_tx.logs.iter().all(|l| &l.emitter != token));
            assert!(src_tx.calls.iter().all(|c| &c.callee != token));
            assert!(has(&built(&off), "RTL"));

            let dst = built(&gen_attack(Label::DstAttack, seed).unwrap());
            assert!(has(&dst, "OOOO") && has(&dst, "TOT") && has(&dst, "OTO"));
            assert!(!has(&dst, "RT"));
        }
        assert!(matches!(gen_attack(Label::Normal, 1), Err(SynthError::NotAttack(_))));
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let spec = CorpusSpec {
            n_normal: 12,
            n_per_attack_class: 3,
            ..Default::default()
        };
        let a = gen_corpus(&spec).unwrap();
        assert_eq!(a.pairs.len(), 21);
        assert_eq!(a.records.len(), 42);
        for l in Label::ALL {
            let want = if l == Label::Normal { 12 } else { 3 };
            assert_eq!(a.pairs.iter().filter(|p| p.label == Some(l)).count(), want);
        }
        assert_eq!(a, gen_corpus(&spec).unwrap());
        assert_ne!(a, gen_corpus(&CorpusSpec { seed: 7, ..spec.clone() }).unwrap());
        assert!(gen_corpus(&CorpusSpec { noise: 1.5, ..spec }).is_err());
    }
}
