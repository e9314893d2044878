use std::collections::{BTreeSet, HashMap};

use crate::ingest::{normalize_address, BridgeConfig, CrossChainBehavior, TransactionRecord};
use crate::taxonomy::{EdgeType, NodeType, Side};

use super::{Edge, GraphError, Node, XbhgGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildWarning {
    pub graph_id: String,
    pub message: String,
}

struct Builder<'a> {
    config: &'a BridgeConfig,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<(Side, String), usize>,
    called: HashMap<usize, BTreeSet<String>>,
}

impl<'a> Builder<'a> {
    fn account(&mut self, side: Side, chain: &str, addr: &str, initiators: &BTreeSet<String>) -> usize {
        let addr = normalize_address(addr);
        if let Some(&id) = self.index.get(&(side, addr.clone())) {
            return id;
        }
        let id = self.nodes.len();
        let ntype = self
            .config
            .classify_address(chain, &addr, initiators.contains(&addr));
        self.nodes.push(Node {
            id,
            ntype,
            side,
            addr: Some(addr.clone()),
            text: None,
            features: Vec::new(),
        });
        self.index.insert((side, addr), id);
        id
    }

    fn push(&mut self, node: Node) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { id, ..node });
        id
    }

    fn edge(&mut self, src: usize, dst: usize, etype: EdgeType) {
        self.edges.push(Edge { src, dst, etype });
    }

    fn add_transaction(&mut self, side: Side, tx: &TransactionRecord) {
        let chain = tx.chain_id.as_str();
        let initiators: BTreeSet<String> = [normalize_address(&tx.from_addr)].into();
        let from = self.account(side, chain, &tx.from_addr, &initiators);
        let to = self.account(side, chain, &tx.to_addr, &initiators);
        self.edge(from, to, EdgeType::Transaction);
        for call in &tx.calls {
            let caller = self.account(side, chain, &call.caller, &initiators);
            let callee = self.account(side, chain, &call.callee, &initiators);
            self.edge(caller, callee, EdgeType::Call);
            self.called
                .entry(callee)
                .or_default()
                .insert(call.function_name.clone());
        }
        for log in &tx.logs {
            let emitter = self.account(side, chain, &log.emitter, &initiators);
            let l = self.push(Node {
                id: 0,
                ntype: NodeType::L,
                side,
                addr: None,
                text: Some(log.event_name.clone()),
                features: Vec::new(),
            });
            self.edge(emitter, l, EdgeType::Emit);
        }
        for t in &tx.transfers {
            let from = self.account(side, chain, &t.from, &initiators);
            let to = self.account(side, chain, &t.to, &initiators);
            self.edge(from, to, EdgeType::Transfer);
        }
        for a in &tx.approvals {
            let spender = self.account(side, chain, &a.spender, &initiators);
            let owner = self.account(side, chain, &a.owner, &initiators);
            self.edge(spender, owner, EdgeType::Approval);
        }
    }

    /// Router attached to the relay: the transaction target when it is a router,
    /// otherwise the lexicographically smallest router address on that side.
    fn router(&self, side: Side, tx: &TransactionRecord) -> Option<usize> {
        let to = normalize_address(&tx.to_addr);
        if let Some(&id) = self.index.get(&(side, to)) {
            if self.nodes[id].ntype == NodeType::R {
                return Some(id);
            }
        }
        self.nodes
            .iter()
            .filter(|n| n.side == side && n.ntype == NodeType::R)
            .min_by(|a, b| a.addr.cmp(&b.addr))
            .map(|n| n.id)
    }
}

/// Builds the heterogeneous graph of one behavior.
///
/// Account nodes are keyed by (side, normalized address), so the same address on
/// both chains yields two nodes. A relay node is added only when both sides are
/// present; a side without an identifiable router drops its `E_d` edge and emits
/// a warning.
pub fn build_graph(
    behavior: &CrossChainBehavior,
    config: &BridgeConfig,
) -> Result<(XbhgGraph, Vec<BuildWarning>), GraphError> {
    if behavior.is_empty() {
        return Err(GraphError::EmptyBehavior(behavior.behavior_id.clone()));
    }
    let mut b = Builder {
        config,
        nodes: Vec::new(),
        edges: Vec::new(),
        index: HashMap::new(),
        called: HashMap::new(),
    };
    let mut warnings = Vec::new();
    let sides = [
        (Side::Source, behavior.source_tx.as_ref()),
        (Side::Dest, behavior.dest_tx.as_ref()),
    ];
    for (side, tx) in sides {
        if let Some(tx) = tx {
            b.add_transaction(side, tx);
        }
    }

    if let (Some(src), Some(dst)) = (&behavior.source_tx, &behavior.dest_tx) {
        let src_router = b.router(Side::Source, src);
        let dst_router = b.router(Side::Dest, dst);
        let relay = b.push(Node {
            id: 0,
            ntype: NodeType::D,
            side: Side::Offchain,
            addr: None,
            text: None,
            features: Vec::new(),
        });
        match src_router {
            Some(r) => b.edge(r, relay, EdgeType::CrossChain),
            None => warnings.push("no router on the source side; E_d omitted"),
        }
        match dst_router {
            Some(r) => b.edge(relay, r, EdgeType::CrossChain),
            None => warnings.push("no router on the destination side; E_d omitted"),
        }
    }

    for (id, fns) in std::mem::take(&mut b.called) {
        b.nodes[id].text = Some(fns.into_iter().collect::<Vec<_>>().join(" "));
    }

    let graph = XbhgGraph {
        graph_id: behavior.behavior_id.clone(),
        label: behavior.label,
        nodes: b.nodes,
        edges: b.edges,
    };
    let warnings = warnings
        .into_iter()
        .map(|m| {
            log::warn!("graph {}: {m}", graph.graph_id);
            BuildWarning {
                graph_id: graph.graph_id.clone(),
                message: m.to_string(),
            }
        })
        .collect();
    graph.validate()?;
    Ok((graph, warnings))
}

/// Builds every behavior and initializes raw features with `embedder`.
pub fn build_graphs(
    behaviors: &[CrossChainBehavior],
    config: &BridgeConfig,
    embedder: &dyn super::TextEmbedder,
) -> Result<(Vec<XbhgGraph>, Vec<BuildWarning>), GraphError> {
    let mut graphs = Vec::with_capacity(behaviors.len());
    let mut warnings = Vec::new();
    for b in behaviors {
        let (mut g, w) = build_graph(b, config)?;
        g.init_features(embedder);
        graphs.push(g);
        warnings.extend(w);
    }
    Ok((graphs, warnings))
}
