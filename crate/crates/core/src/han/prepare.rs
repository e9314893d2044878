use std::collections::BTreeSet;

use super::HanError;
use crate::linalg::Matrix;
use crate::metapath::{MetaPath, WalkIndex};
use crate::scalar::Scalar;
use crate::taxonomy::{Label, NodeType};
use crate::xbhg::XbhgGraph;

/// A node with at least one meta-path neighbor besides itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveNode {
    pub node: usize,
    /// Sorted neighbor ids, `node` included.
    pub neighbors: Vec<usize>,
}

/// Graph in the form consumed by the network: raw features plus meta-path
/// neighborhoods. Nodes whose neighbor set is just themselves are left implicit.
#[derive(Debug, Clone)]
pub struct PreparedGraph<T> {
    pub graph_id: String,
    pub label: Option<Label>,
    pub types: Vec<NodeType>,
    pub features: Matrix<T>,
    /// Per meta-path, the active nodes in increasing id order.
    pub active: Vec<Vec<ActiveNode>>,
    /// Nodes lying on an instance of any meta-path, or every node when there are none.
    pub instance_nodes: Vec<usize>,
}

impl<T: Scalar> PreparedGraph<T> {
    pub fn num_nodes(&self) -> usize {
        self.types.len()
    }

    pub fn num_paths(&self) -> usize {
        self.active.len()
    }

    /// Full neighbor set of `node` under path `k`, self included.
    pub fn neighbors(&self, k: usize, node: usize) -> Vec<usize> {
        self.active[k]
            .binary_search_by_key(&node, |a| a.node)
            .map(|i| self.active[k][i].neighbors.clone())
            .unwrap_or_else(|_| vec![node])
    }
}

pub fn prepare<T: Scalar>(graph: &XbhgGraph, paths: &[MetaPath]) -> Result<PreparedGraph<T>, HanError> {
    let n = graph.num_nodes();
    if n == 0 {
        return Err(HanError::EmptyGraph(graph.graph_id.clone()));
    }
    let width = graph.nodes[0].features.len();
    if width == 0 {
        return Err(HanError::MissingFeatures(graph.graph_id.clone()));
    }
    let mut data = Vec::with_capacity(n * width);
    for node in &graph.nodes {
        if node.features.len() != width {
            return Err(HanError::FeatureDim {
                ntype: node.ntype,
                got: node.features.len(),
                want: width,
            });
        }
        data.extend(node.features.iter().map(|&v| T::of(v)));
    }
    let features = Matrix::from_vec(n, width, data).expect("width checked per node");

    let idx = WalkIndex::new(graph);
    let types = graph.node_types();
    let mut active = Vec::with_capacity(paths.len());
    let mut on_instance = BTreeSet::new();
    for path in paths {
        let mut list = Vec::new();
        for v in (0..n).filter(|&v| types[v] == path.first()) {
            let terminals = idx.walk_terminals(path, v);
            if terminals.iter().any(|&t| t != v) {
                let mut neighbors = terminals;
                neighbors.push(v);
                neighbors.sort_unstable();
                neighbors.dedup();
                list.push(ActiveNode { node: v, neighbors });
            }
        }
        if !list.is_empty() || idx.contains_instance(path) {
            on_instance.extend(idx.instance_nodes(path));
        }
        active.push(list);
    }
    let instance_nodes = if on_instance.is_empty() {
        (0..n).collect()
    } else {
        on_instance.into_iter().collect()
    };
    Ok(PreparedGraph {
        graph_id: graph.graph_id.clone(),
        label: graph.label,
        types,
        features,
        active,
        instance_nodes,
    })
}
