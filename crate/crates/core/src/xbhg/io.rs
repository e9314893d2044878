use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Edge, GraphError, Node, XbhgGraph};
use crate::taxonomy::Label;

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GraphFile {
    version: u32,
    graph_id: String,
    label: Option<Label>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl XbhgGraph {
    pub fn to_json(&self) -> String {
        let file = GraphFile {
            version: GRAPH_FORMAT_VERSION,
            graph_id: self.graph_id.clone(),
            label: self.label,
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        };
        serde_json::to_string(&file).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Format {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        if file.version != GRAPH_FORMAT_VERSION {
            return Err(GraphError::Format {
                path: "<string>".into(),
                message: format!("unsupported graph version {}", file.version),
            });
        }
        let g = XbhgGraph {
            graph_id: file.graph_id,
            label: file.label,
            nodes: file.nodes,
            edges: file.edges,
        };
        g.validate()?;
        Ok(g)
    }
}

pub fn save_graph(graph: &XbhgGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    fs::write(path, graph.to_json() + "\n").map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<XbhgGraph, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    XbhgGraph::from_json(&text).map_err(|e| match e {
        GraphError::Format { message, .. } => GraphError::Format {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

/// Loads every `*.json` graph in `dir`, in file-name order.
pub fn load_graph_dir(dir: impl AsRef<Path>) -> Result<Vec<XbhgGraph>, GraphError> {
    let dir = dir.as_ref();
    let io_err = |source| GraphError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(load_graph).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{EdgeType, NodeType, Side};

    #[test]
    fn version_is_checked() {
        let g = XbhgGraph {
            graph_id: "x".into(),
            label: Some(Label::OffAttack),
            nodes: vec![Node {
                id: 0,
                ntype: NodeType::R,
                side: Side::Dest,
                addr: Some("0xr".into()),
                text: None,
                features: vec![0.5, 0.25],
            }],
            edges: vec![],
        };
        let json = g.to_json();
        assert_eq!(XbhgGraph::from_json(&json).unwrap(), g);
        let bumped = json.replace("\"version\":1", "\"version\":9");
        assert!(XbhgGraph::from_json(&bumped).is_err());
    }

    #[test]
    fn edge_types_use_short_names() {
        let e = Edge {
            src: 0,
            dst: 1,
            etype: EdgeType::CrossChain,
        };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"src":0,"dst":1,"etype":"E_d"}"#
        );
    }
}
