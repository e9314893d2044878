//! Decoded transaction records, bridge address roles and source/destination linking.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{Label, NodeType};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("duplicate transaction ({chain_id}, {tx_hash}) on line {line}")]
    DuplicateTransaction {
        chain_id: String,
        tx_hash: String,
        line: usize,
    },
    #[error("{what} line {line}: {message}")]
    Malformed {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error("invalid bridge config: {0}")]
    Config(String),
    #[error("pair #{index} resolves to neither a source nor a destination transaction")]
    EmptyPair { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Call {
    pub caller: String,
    pub callee: String,
    #[serde(rename = "function")]
    pub function_name: String,
    #[serde(rename = "params", default)]
    pub param_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub emitter: String,
    #[serde(rename = "event")]
    pub event_name: String,
    #[serde(rename = "params", default)]
    pub param_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: String,
    pub to: String,
    pub token: String,
    /// Decimal string; amounts are carried but never interpreted.
    pub amount: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub owner: String,
    pub spender: String,
    pub token: String,
}

/// One decoded on-chain transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub tx_hash: String,
    pub chain_id: String,
    pub block_number: u64,
    pub timestamp: u64,
    #[serde(rename = "from")]
    pub from_addr: String,
    #[serde(rename = "to")]
    pub to_addr: String,
    #[serde(default)]
    pub calls: Vec<Call>,
    #[serde(default)]
    pub logs: Vec<LogEntry>,
    #[serde(default)]
    pub transfers: Vec<Transfer>,
    #[serde(default)]
    pub approvals: Vec<Approval>,
}

impl TransactionRecord {
    /// Checks the per-record invariants: nonempty hash and nonempty addresses.
    pub fn validate(&self) -> Result<(), String> {
        if self.tx_hash.trim().is_empty() {
            return Err("empty tx_hash".into());
        }
        if self.chain_id.trim().is_empty() {
            return Err("empty chain_id".into());
        }
        let mut addrs: Vec<(&str, &str)> = vec![("from", &self.from_addr), ("to", &self.to_addr)];
        for c in &self.calls {
            addrs.push(("call.caller", &c.caller));
            addrs.push(("call.callee", &c.callee));
        }
        for l in &self.logs {
            addrs.push(("log.emitter", &l.emitter));
        }
        for t in &self.transfers {
            addrs.push(("transfer.from", &t.from));
            addrs.push(("transfer.to", &t.to));
            addrs.push(("transfer.token", &t.token));
        }
        for a in &self.approvals {
            addrs.push(("approval.owner", &a.owner));
            addrs.push(("approval.spender", &a.spender));
            addrs.push(("approval.token", &a.token));
        }
        match addrs.into_iter().find(|(_, a)| a.trim().is_empty()) {
            Some((field, _)) => Err(format!("empty address in {field}")),
            None => Ok(()),
        }
    }

    pub fn key(&self) -> (String, String) {
        (self.chain_id.clone(), self.tx_hash.clone())
    }
}

/// Lowercases and trims an address so checksum variants compare equal.
pub fn normalize_address(addr: &str) -> String {
    addr.trim().to_ascii_lowercase()
}

/// A schema violation on one input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedRecords {
    pub records: Vec<TransactionRecord>,
    pub errors: Vec<LineError>,
}

/// Parses `records.jsonl`. Blank lines are skipped; malformed lines are reported
/// with their 1-based line numbers and do not abort the parse.
pub fn parse_records(path: impl AsRef<Path>) -> Result<ParsedRecords, IngestError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_records_from(BufReader::new(file)).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn parse_records_from(reader: impl BufRead) -> Result<ParsedRecords, IngestError> {
    let mut out = ParsedRecords::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TransactionRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(LineError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if let Err(message) = record.validate() {
            out.errors.push(LineError {
                line: line_no,
                message,
            });
            continue;
        }
        if !seen.insert(record.key()) {
            return Err(IngestError::DuplicateTransaction {
                chain_id: record.chain_id,
                tx_hash: record.tx_hash,
                line: line_no,
            });
        }
        out.records.push(record);
    }
    for e in &out.errors {
        log::warn!("records line {}: {}", e.line, e.message);
    }
    Ok(out)
}

pub fn write_records(
    path: impl AsRef<Path>,
    records: &[TransactionRecord],
) -> Result<(), IngestError> {
    let path = path.as_ref();
    write_jsonl(path, records)
}

pub(crate) fn write_jsonl<S: Serialize>(path: &Path, items: &[S]) -> Result<(), IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for item in items {
        let line = serde_json::to_string(item).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct BridgeConfigFile {
    #[serde(default)]
    routers: Vec<(String, String)>,
    #[serde(default)]
    tokens: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    users: Option<Vec<(String, String)>>,
}

/// Known bridge addresses per chain. All addresses are stored normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BridgeConfig {
    routers: BTreeSet<(String, String)>,
    tokens: BTreeSet<(String, String)>,
    users: Option<BTreeSet<(String, String)>>,
}

fn normalize_pairs<'a>(
    it: impl IntoIterator<Item = &'a (String, String)>,
) -> BTreeSet<(String, String)> {
    it.into_iter()
        .map(|(c, a)| (c.trim().to_string(), normalize_address(a)))
        .collect()
}

impl BridgeConfig {
    pub fn new(
        routers: &[(String, String)],
        tokens: &[(String, String)],
        users: Option<&[(String, String)]>,
    ) -> Result<Self, IngestError> {
        let routers = normalize_pairs(routers);
        let tokens = normalize_pairs(tokens);
        if let Some((c, a)) = routers.intersection(&tokens).next() {
            return Err(IngestError::Config(format!(
                "{a} on chain {c} is both a router and a token"
            )));
        }
        Ok(Self {
            routers,
            tokens,
            users: users.map(normalize_pairs),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let raw: BridgeConfigFile = serde_json::from_str(text).map_err(|e| IngestError::Malformed {
            what: "bridge config",
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(&raw.routers, &raw.tokens, raw.users.as_deref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw = BridgeConfigFile {
            routers: self.routers.iter().cloned().collect(),
            tokens: self.tokens.iter().cloned().collect(),
            users: self.users.as_ref().map(|u| u.iter().cloned().collect()),
        };
        serde_json::to_string_pretty(&raw).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IngestError> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn has(set: &BTreeSet<(String, String)>, chain: &str, addr: &str) -> bool {
        set.contains(&(chain.to_string(), addr.to_string()))
    }

    pub fn is_router(&self, chain: &str, addr: &str) -> bool {
        Self::has(&self.routers, chain, &normalize_address(addr))
    }

    /// Role of an address: router, then token, then user, then other.
    ///
    /// `initiator` marks an address seen as the `from` of a transaction on this chain.
    pub fn classify_address(&self, chain: &str, addr: &str, initiator: bool) -> NodeType {
        let addr = normalize_address(addr);
        if Self::has(&self.routers, chain, &addr) {
            NodeType::R
        } else if Self::has(&self.tokens, chain, &addr) {
            NodeType::T
        } else if initiator
            || self
                .users
                .as_ref()
                .is_some_and(|u| Self::has(u, chain, &addr))
        {
            NodeType::U
        } else {
            NodeType::O
        }
    }
}

/// One line of `pairs.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub src_chain: String,
    pub src_tx: String,
    pub dst_chain: String,
    pub dst_tx: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

pub fn parse_pairs(path: impl AsRef<Path>) -> Result<Vec<PairSpec>, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pairs_str(&text)
}

/// Unlike records, a malformed pair line is fatal: a silently dropped pair changes labels.
pub fn parse_pairs_str(text: &str) -> Result<Vec<PairSpec>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IngestError::Malformed {
                what: "pairs",
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[PairSpec]) -> Result<(), IngestError> {
    write_jsonl(path.as_ref(), pairs)
}

/// A matched source/destination transaction pair; the unit of classification.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossChainBehavior {
    pub behavior_id: String,
    pub source_tx: Option<TransactionRecord>,
    pub dest_tx: Option<TransactionRecord>,
    pub label: Option<Label>,
}

impl CrossChainBehavior {
    pub fn is_empty(&self) -> bool {
        self.source_tx.is_none() && self.dest_tx.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkWarning {
    pub pair_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LinkOutcome {
    pub behaviors: Vec<CrossChainBehavior>,
    pub warnings: Vec<LinkWarning>,
}

/// Joins records into behaviors following an explicit pair list.
///
/// A pair with one dangling hash is skipped with a warning; a pair with both
/// hashes dangling is an error. With `single_sided`, records that no pair
/// references become source-only, unlabeled behaviors.
pub fn link_cross_chain(
    records: &[TransactionRecord],
    pairs: &[PairSpec],
    single_sided: bool,
) -> Result<LinkOutcome, IngestError> {
    let index: HashMap<(&str, &str), usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.chain_id.as_str(), r.tx_hash.as_str()), i))
        .collect();
    let mut used = vec![false; records.len()];
    let mut out = LinkOutcome::default();

    for (i, p) in pairs.iter().enumerate() {
        let src = index.get(&(p.src_chain.as_str(), p.src_tx.as_str())).copied();
        let dst = index.get(&(p.dst_chain.as_str(), p.dst_tx.as_str())).copied();
        match (src, dst) {
            (Some(s), Some(d)) => {
                used[s] = true;
                used[d] = true;
                out.behaviors.push(CrossChainBehavior {
                    behavior_id: format!("pair-{i:06}"),
                    source_tx: Some(records[s].clone()),
                    dest_tx: Some(records[d].clone()),
                    label: p.label,
                });
            }
            (None, None) => return Err(IngestError::EmptyPair { index: i }),
            (s, _) => {
                let (chain, hash) = if s.is_none() {
                    (&p.src_chain, &p.src_tx)
                } else {
                    (&p.dst_chain, &p.dst_tx)
                };
                let message = format!("unknown transaction {hash} on {chain}; pair skipped");
                log::warn!("pair #{i}: {message}");
                out.warnings.push(LinkWarning {
                    pair_index: i,
                    message,
                });
            }
        }
    }

    if single_sided {
        for (r, _) in records.iter().zip(&used).filter(|(_, u)| !**u) {
            out.behaviors.push(CrossChainBehavior {
                behavior_id: format!("single-{}-{}", r.chain_id, r.tx_hash),
                source_tx: Some(r.clone()),
                dest_tx: None,
                label: None,
            });
        }
    }
    Ok(out)
}
