//! Cross-chain behavior heterogeneous graphs: construction, raw features and file format.

mod build;
mod embed;
mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{EdgeType, Label, NodeType, Side};

pub use build::{build_graph, build_graphs, BuildWarning};
pub use embed::{embed_text, HashingEmbedder, TableEmbedder, TextEmbedder};
pub use io::{load_graph, load_graph_dir, save_graph, GRAPH_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("behavior {0} has no transactions")]
    EmptyBehavior(String),
    #[error("graph {graph_id} is invalid: {reason}")]
    Invalid { graph_id: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse graph file {path}: {message}")]
    Format { path: String, message: String },
    #[error("external embedding for `{text}` has length {got}, expected {want}")]
    EmbeddingDim {
        text: String,
        got: usize,
        want: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub ntype: NodeType,
    pub side: Side,
    /// Normalized address for account nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addr: Option<String>,
    /// Event signature for log nodes, called function list for callees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default)]
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub etype: EdgeType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XbhgGraph {
    pub graph_id: String,
    pub label: Option<Label>,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

/// Raw-feature settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub text_dim: usize,
    pub use_external_embeddings: bool,
    pub external_path: Option<String>,
    pub common_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            text_dim: 64,
            use_external_embeddings: false,
            external_path: None,
            common_dim: 64,
        }
    }
}

impl FeatureConfig {
    /// Raw feature width shared by every node type: two degree slots plus the text block.
    pub fn raw_dim(&self) -> usize {
        2 + self.text_dim
    }

    /// Builds the configured embedder; external tables fall back to hashing for unseen text.
    pub fn embedder(&self) -> Result<Box<dyn TextEmbedder>, GraphError> {
        match (&self.external_path, self.use_external_embeddings) {
            (Some(path), true) => Ok(Box::new(TableEmbedder::load(path, self.text_dim)?)),
            _ => Ok(Box::new(HashingEmbedder::new(self.text_dim))),
        }
    }
}

impl XbhgGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.src] += 1;
        }
        deg
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.dst] += 1;
        }
        deg
    }

    /// Out-adjacency with parallel edges collapsed, sorted by target id.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.src].push(e.dst);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    pub fn node_types(&self) -> Vec<NodeType> {
        self.nodes.iter().map(|n| n.ntype).collect()
    }

    fn invalid(&self, reason: impl Into<String>) -> GraphError {
        GraphError::Invalid {
            graph_id: self.graph_id.clone(),
            reason: reason.into(),
        }
    }

    /// Checks the structural invariants of a behavior graph.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(self.invalid(format!("node at position {i} has id {}", n.id)));
            }
        }
        let n = self.nodes.len();
        let ty = |i: usize| self.nodes[i].ntype;
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(self.invalid(format!("edge {}->{} has a missing endpoint", e.src, e.dst)));
            }
            if e.etype == EdgeType::Emit && ty(e.dst) != NodeType::L {
                return Err(self.invalid(format!("E_e edge {}->{} does not end at a log", e.src, e.dst)));
            }
            if e.etype != EdgeType::Emit && ty(e.dst) == NodeType::L {
                return Err(self.invalid(format!("log node {} entered by a non-E_e edge", e.dst)));
            }
            if ty(e.src) == NodeType::L {
                return Err(self.invalid(format!("log node {} has an outgoing edge", e.src)));
            }
            if e.etype == EdgeType::CrossChain {
                let pair = (ty(e.src), ty(e.dst));
                if pair != (NodeType::R, NodeType::D) && pair != (NodeType::D, NodeType::R) {
                    return Err(self.invalid(format!("E_d edge {}->{} is not R<->D", e.src, e.dst)));
                }
            }
        }
        let relays = self.nodes.iter().filter(|n| n.ntype == NodeType::D).count();
        if relays > 1 {
            return Err(self.invalid(format!("{relays} relay nodes")));
        }
        let widths: std::collections::BTreeSet<usize> =
            self.nodes.iter().map(|n| n.features.len()).collect();
        if widths.len() > 1 {
            return Err(self.invalid("nodes carry features of differing width"));
        }
        Ok(())
    }

    /// Populates `features` on every node: `[ln(1+out), ln(1+in)]` followed by the
    /// text block (embedding of `text`, or zeros when the node carries none).
    pub fn init_features(&mut self, embedder: &dyn TextEmbedder) {
        let out = self.out_degrees();
        let inn = self.in_degrees();
        let dim = embedder.dim();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let mut f = Vec::with_capacity(2 + dim);
            f.push((out[i] as f64).ln_1p());
            f.push((inn[i] as f64).ln_1p());
            match node.text.as_deref() {
                Some(t) if !t.is_empty() => f.extend(embedder.embed(t)),
                _ => f.extend(std::iter::repeat(0.0).take(dim)),
            }
            node.features = f;
        }
    }

    /// Width of the raw feature vectors, if any node has features.
    pub fn feature_dim(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.features.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: usize, ntype: NodeType, text: Option<&str>) -> Node {
        Node {
            id,
            ntype,
            side: Side::Source,
            addr: None,
            text: text.map(str::to_string),
            features: vec![],
        }
    }

    fn graph(nodes: Vec<Node>, edges: Vec<(usize, usize, EdgeType)>) -> XbhgGraph {
        XbhgGraph {
            graph_id: "g".into(),
            label: None,
            nodes,
            edges: edges
                .into_iter()
                .map(|(src, dst, etype)| Edge { src, dst, etype })
                .collect(),
        }
    }

    #[test]
    fn isolated_node_has_zero_features() {
        let mut g = graph(vec![node(0, NodeType::O, None)], vec![]);
        g.init_features(&HashingEmbedder::new(8));
        assert_eq!(g.nodes[0].features, vec![0.0; 10]);
    }

    #[test]
    fn degree_block_is_log_scaled() {
        let mut g = graph(
            vec![node(0, NodeType::U, None), node(1, NodeType::O, None)],
            vec![(0, 1, EdgeType::Transfer)],
        );
        g.init_features(&HashingEmbedder::new(4));
        assert_eq!(g.nodes[0].features, vec![2f64.ln(), 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.nodes[1].features[..2], [0.0, 2f64.ln()]);
    }

    #[test]
    fn log_node_text_block_matches_direct_embedding() {
        let sig = "Deposit(address,uint256)";
        let mut g = graph(
            vec![node(0, NodeType::R, None), node(1, NodeType::L, Some(sig))],
            vec![(0, 1, EdgeType::Emit)],
        );
        g.init_features(&HashingEmbedder::new(16));
        let f = &g.nodes[1].features;
        assert_eq!(f[..2], [0.0, 2f64.ln()]);
        assert_eq!(f[2..], embed_text(sig, 16)[..]);
    }

    #[test]
    fn validate_rejects_bad_structure() {
        let bad_emit = graph(
            vec![node(0, NodeType::R, None), node(1, NodeType::O, None)],
            vec![(0, 1, EdgeType::Emit)],
        );
        assert!(bad_emit.validate().is_err());

        let dangling = graph(vec![node(0, NodeType::R, None)], vec![(0, 3, EdgeType::Call)]);
        assert!(dangling.validate().is_err());

        let bad_relay = graph(
            vec![node(0, NodeType::U, None), node(1, NodeType::D, None)],
            vec![(0, 1, EdgeType::CrossChain)],
        );
        assert!(bad_relay.validate().is_err());

        let two_relays = graph(
            vec![node(0, NodeType::D, None), node(1, NodeType::D, None)],
            vec![],
        );
        assert!(two_relays.validate().is_err());
    }
}
