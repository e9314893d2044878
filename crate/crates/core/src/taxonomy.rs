//! Node, edge and class vocabularies shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Node type of a behavior graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    /// Account that initiates or receives a cross-chain operation.
    U,
    /// Bridge router contract.
    R,
    /// Token contract.
    T,
    /// Any other account.
    O,
    /// Emitted log record.
    L,
    /// Off-chain relay.
    D,
}

impl NodeType {
    pub const ALL: [NodeType; 6] = [
        NodeType::U,
        NodeType::R,
        NodeType::T,
        NodeType::O,
        NodeType::L,
        NodeType::D,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            NodeType::U => 'U',
            NodeType::R => 'R',
            NodeType::T => 'T',
            NodeType::O => 'O',
            NodeType::L => 'L',
            NodeType::D => 'D',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            'U' => NodeType::U,
            'R' => NodeType::R,
            'T' => NodeType::T,
            'O' => NodeType::O,
            'L' => NodeType::L,
            'D' => NodeType::D,
            _ => return None,
        })
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    /// Transaction `from` -> `to`.
    #[serde(rename = "E_t")]
    Transaction,
    /// Caller -> callee.
    #[serde(rename = "E_c")]
    Call,
    /// Emitter -> log node.
    #[serde(rename = "E_e")]
    Emit,
    /// Asset transfer sender -> receiver.
    #[serde(rename = "E_x")]
    Transfer,
    /// Spender -> owner.
    #[serde(rename = "E_a")]
    Approval,
    /// Router <-> relay.
    #[serde(rename = "E_d")]
    CrossChain,
}

/// Which part of the cross-chain lifecycle a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Dest,
    Offchain,
}

/// Classification target. Index order doubles as the argmax tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    SrcAttack,
    OffAttack,
    DstAttack,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Normal,
        Label::SrcAttack,
        Label::OffAttack,
        Label::DstAttack,
    ];
    pub const COUNT: usize = 4;
    pub const ATTACKS: [Label; 3] = [Label::SrcAttack, Label::OffAttack, Label::DstAttack];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_attack(self) -> bool {
        self != Label::Normal
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Normal => "Normal",
            Label::SrcAttack => "SrcAttack",
            Label::OffAttack => "OffAttack",
            Label::DstAttack => "DstAttack",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Label::Normal),
            "srcattack" | "src" => Ok(Label::SrcAttack),
            "offattack" | "off" => Ok(Label::OffAttack),
            "dstattack" | "dst" => Ok(Label::DstAttack),
            _ => Err(format!("unknown label `{s}`")),
        }
    }
}
