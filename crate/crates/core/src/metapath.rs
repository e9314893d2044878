//! Meta-path enumeration, instance matching and differential selection.
//!
//! A meta-path is a sequence of node types. A graph contains an instance of it when
//! some directed walk (any edge type, vertices may repeat) visits nodes with exactly
//! those types in order.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::taxonomy::{Label, NodeType};
use crate::xbhg::XbhgGraph;

pub const MIN_PATH_LEN: usize = 2;
pub const MAX_PATH_LEN: usize = 4;
pub const METAPATH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetaPathError {
    #[error("meta-path length {0} is below 2; a path needs at least one edge")]
    TooShort(usize),
    #[error("invalid meta-path `{0}`")]
    Parse(String),
    #[error("no {0} graphs in the corpus; frequencies are undefined")]
    EmptyClass(&'static str),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse meta-path file {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaPath(Vec<NodeType>);

impl MetaPath {
    pub fn new(types: Vec<NodeType>) -> Result<Self, MetaPathError> {
        if types.len() < MIN_PATH_LEN {
            return Err(MetaPathError::TooShort(types.len()));
        }
        Ok(Self(types))
    }

    pub fn types(&self) -> &[NodeType] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> NodeType {
        self.0[0]
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.0 {
            write!(f, "{}", t.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for MetaPath {
    type Err = MetaPathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let types = s
            .chars()
            .map(NodeType::from_symbol)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| MetaPathError::Parse(s.to_string()))?;
        MetaPath::new(types).map_err(|_| MetaPathError::Parse(s.to_string()))
    }
}

impl Serialize for MetaPath {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetaPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All `types.len()^len` sequences of exactly `len` symbols, in lexicographic order
/// of the given type ordering.
pub fn enumerate_metapaths(len: usize, types: &[NodeType]) -> Result<Vec<MetaPath>, MetaPathError> {
    if len < MIN_PATH_LEN {
        return Err(MetaPathError::TooShort(len));
    }
    let mut out = Vec::with_capacity(types.len().pow(len as u32));
    if types.is_empty() {
        return Ok(out);
    }
    let mut digits = vec![0usize; len];
    loop {
        out.push(MetaPath(digits.iter().map(|&d| types[d]).collect()));
        // Odometer increment, last position fastest.
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < types.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Concatenation of [`enumerate_metapaths`] for every length in `min_len..=max_len`.
pub fn enumerate_range(
    min_len: usize,
    max_len: usize,
    types: &[NodeType],
) -> Result<Vec<MetaPath>, MetaPathError> {
    let mut out = Vec::new();
    for len in min_len..=max_len {
        out.extend(enumerate_metapaths(len, types)?);
    }
    Ok(out)
}

/// Precomputed view of a graph for repeated walk queries.
#[derive(Debug, Clone)]
pub struct WalkIndex {
    types: Vec<NodeType>,
    succ: Vec<Vec<usize>>,
    /// Out-edges with multiplicity, for instance counting.
    succ_multi: Vec<Vec<usize>>,
}

impl WalkIndex {
    pub fn new(graph: &XbhgGraph) -> Self {
        let mut succ_multi = vec![Vec::new(); graph.num_nodes()];
        for e in &graph.edges {
            succ_multi[e.src].push(e.dst);
        }
        Self {
            types: graph.node_types(),
            succ: graph.successors(),
            succ_multi,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.types.len()
    }

    pub fn node_type(&self, v: usize) -> NodeType {
        self.types[v]
    }

    /// Frontier after following `path` from `starts` (which must already match `path[0]`).
    fn advance(&self, path: &MetaPath, mut frontier: Vec<bool>) -> Vec<bool> {
        for &want in &path.types()[1..] {
            let mut next = vec![false; frontier.len()];
            let mut any = false;
            for (v, _) in frontier.iter().enumerate().filter(|(_, on)| **on) {
                for &w in &self.succ[v] {
                    if self.types[w] == want {
                        next[w] = true;
                        any = true;
                    }
                }
            }
            if !any {
                return next;
            }
            frontier = next;
        }
        frontier
    }

    pub fn contains_instance(&self, path: &MetaPath) -> bool {
        let start: Vec<bool> = self.types.iter().map(|&t| t == path.first()).collect();
        if !start.iter().any(|&s| s) {
            return false;
        }
        self.advance(path, start).into_iter().any(|x| x)
    }

    /// Number of matching walks, counting parallel edges separately.
    pub fn count_instances(&self, path: &MetaPath) -> u64 {
        let mut counts: Vec<u64> = self
            .types
            .iter()
            .map(|&t| u64::from(t == path.first()))
            .collect();
        for &want in &path.types()[1..] {
            let mut next = vec![0u64; counts.len()];
            for (v, &c) in counts.iter().enumerate().filter(|(_, c)| **c > 0) {
                for &w in &self.succ_multi[v] {
                    if self.types[w] == want {
                        next[w] = next[w].saturating_add(c);
                    }
                }
            }
            counts = next;
        }
        counts.into_iter().fold(0u64, u64::saturating_add)
    }

    /// Terminal vertices of walks from `node` matching `path`, excluding `node` itself
    /// unless a walk returns to it. Empty when `node`'s type differs from `path[0]`.
    pub fn walk_terminals(&self, path: &MetaPath, node: usize) -> Vec<usize> {
        if self.types[node] != path.first() {
            return Vec::new();
        }
        let mut start = vec![false; self.types.len()];
        start[node] = true;
        self.advance(path, start)
            .into_iter()
            .enumerate()
            .filter_map(|(v, on)| on.then_some(v))
            .collect()
    }

    /// Meta-path neighbor set of `node`: walk terminals plus `node` itself.
    pub fn neighbors(&self, path: &MetaPath, node: usize) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = self.walk_terminals(path, node).into_iter().collect();
        out.insert(node);
        out
    }

    /// Every vertex that lies on at least one instance of `path`.
    pub fn instance_nodes(&self, path: &MetaPath) -> BTreeSet<usize> {
        let n = self.types.len();
        let len = path.len();
        // fwd[p][v]: some walk matching path[..=p] ends at v.
        let mut fwd = vec![vec![false; n]; len];
        for v in 0..n {
            fwd[0][v] = self.types[v] == path.first();
        }
        for p in 1..len {
            for v in 0..n {
                if fwd[p - 1][v] {
                    for &w in &self.succ[v] {
                        if self.types[w] == path.types()[p] {
                            fwd[p][w] = true;
                        }
                    }
                }
            }
        }
        // bwd[p][v]: a walk matching path[p..] starts at v.
        let mut bwd = vec![vec![false; n]; len];
        for v in 0..n {
            bwd[len - 1][v] = self.types[v] == path.types()[len - 1];
        }
        for p in (0..len - 1).rev() {
            for v in 0..n {
                bwd[p][v] = self.types[v] == path.types()[p]
                    && self.succ[v].iter().any(|&w| bwd[p + 1][w]);
            }
        }
        (0..n)
            .filter(|&v| (0..len).any(|p| fwd[p][v] && bwd[p][v]))
            .collect()
    }
}

pub fn contains_instance(graph: &XbhgGraph, path: &MetaPath) -> bool {
    WalkIndex::new(graph).contains_instance(path)
}

pub fn metapath_neighbors(graph: &XbhgGraph, path: &MetaPath, node: usize) -> BTreeSet<usize> {
    WalkIndex::new(graph).neighbors(path, node)
}

/// How per-graph occurrences are turned into a class frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqMode {
    /// Fraction of graphs containing at least one instance; bounded by 1.
    #[default]
    Indicator,
    /// Mean number of instances per graph, counted with multiplicity; unbounded.
    MeanCount,
}

impl FromStr for FreqMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "indicator" => Ok(FreqMode::Indicator),
            "mean_count" => Ok(FreqMode::MeanCount),
            _ => Err(format!("unknown frequency mode `{s}` (indicator|mean_count)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqEntry {
    #[serde(rename = "seq")]
    pub path: MetaPath,
    pub count_a: u64,
    pub count_n: u64,
    #[serde(rename = "fre_A")]
    pub fre_a: f64,
    #[serde(rename = "fre_N")]
    pub fre_n: f64,
    pub fre_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqTable {
    pub mode: FreqMode,
    pub n_attack: usize,
    pub n_normal: usize,
    pub entries: Vec<FreqEntry>,
}

/// Per-path occurrence counts over a labeled corpus, attack classes pooled.
pub fn label_frequencies<'a>(
    graphs: impl IntoIterator<Item = (&'a XbhgGraph, Label)>,
    paths: &[MetaPath],
    mode: FreqMode,
) -> Result<FreqTable, MetaPathError> {
    let mut count_a = vec![0u64; paths.len()];
    let mut count_n = vec![0u64; paths.len()];
    let (mut n_attack, mut n_normal) = (0usize, 0usize);
    for (g, label) in graphs {
        let idx = WalkIndex::new(g);
        let counts = if label.is_attack() {
            n_attack += 1;
            &mut count_a
        } else {
            n_normal += 1;
            &mut count_n
        };
        for (c, p) in counts.iter_mut().zip(paths) {
            *c += match mode {
                FreqMode::Indicator => u64::from(idx.contains_instance(p)),
                FreqMode::MeanCount => idx.count_instances(p),
            };
        }
    }
    if n_attack == 0 {
        return Err(MetaPathError::EmptyClass("attack"));
    }
    if n_normal == 0 {
        return Err(MetaPathError::EmptyClass("normal"));
    }
    let entries = paths
        .iter()
        .zip(count_a.iter().zip(&count_n))
        .map(|(p, (&ca, &cn))| {
            let fre_a = ca as f64 / n_attack as f64;
            let fre_n = cn as f64 / n_normal as f64;
            FreqEntry {
                path: p.clone(),
                count_a: ca,
                count_n: cn,
                fre_a,
                fre_n,
                fre_diff: (fre_a - fre_n).abs(),
            }
        })
        .collect();
    Ok(FreqTable {
        mode,
        n_attack,
        n_normal,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub theta: f64,
    pub entries: Vec<FreqEntry>,
    /// Set when nothing exceeded `theta` and every path was kept instead.
    pub fallback: bool,
}

impl Selection {
    pub fn paths(&self) -> Vec<MetaPath> {
        self.entries.iter().map(|e| e.path.clone()).collect()
    }
}

fn by_diff_desc(a: &FreqEntry, b: &FreqEntry) -> Ordering {
    b.fre_diff
        .total_cmp(&a.fre_diff)
        .then_with(|| a.path.cmp(&b.path))
}

/// Paths with `fre_diff > theta`, highest difference first, ties by path order.
/// An empty result falls back to the whole table.
pub fn select_differential(table: &FreqTable, theta: f64) -> Selection {
    let mut entries: Vec<FreqEntry> = table
        .entries
        .iter()
        .filter(|e| e.fre_diff > theta)
        .cloned()
        .collect();
    let fallback = entries.is_empty();
    if fallback {
        log::warn!("no meta-path exceeds theta = {theta}; falling back to all {} paths", table.entries.len());
        entries = table.entries.clone();
    }
    entries.sort_by(by_diff_desc);
    Selection {
        theta,
        entries,
        fallback,
    }
}

/// On-disk form of a selection (`metapaths.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaPathFile {
    pub version: u32,
    pub theta: f64,
    pub mode: FreqMode,
    #[serde(default = "default_min_len")]
    pub lmin: usize,
    #[serde(default = "default_max_len")]
    pub lmax: usize,
    #[serde(default)]
    pub fallback: bool,
    pub selected: Vec<FreqEntry>,
}

fn default_min_len() -> usize {
    MIN_PATH_LEN
}

fn default_max_len() -> usize {
    MAX_PATH_LEN
}

impl MetaPathFile {
    pub fn new(selection: &Selection, mode: FreqMode, lmin: usize, lmax: usize) -> Self {
        Self {
            version: METAPATH_FORMAT_VERSION,
            theta: selection.theta,
            mode,
            lmin,
            lmax,
            fallback: selection.fallback,
            selected: selection.entries.clone(),
        }
    }

    pub fn paths(&self) -> Vec<MetaPath> {
        self.selected.iter().map(|e| e.path.clone()).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MetaPathError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("selection serializes");
        fs::write(path, text + "\n").map_err(|source| MetaPathError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetaPathError> {
        let path = path.as_ref();
        let format = |message: String| MetaPathError::Format {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|source| MetaPathError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: Self = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
        if file.version != METAPATH_FORMAT_VERSION {
            return Err(format(format!("unsupported version {}", file.version)));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{EdgeType, Side};
    use crate::xbhg::{Edge, Node};

    fn p(s: &str) -> MetaPath {
        s.parse().unwrap()
    }

    pub(crate) fn graph(types: &[NodeType], edges: &[(usize, usize)]) -> XbhgGraph {
        XbhgGraph {
            graph_id: "t".into(),
            label: None,
            nodes: types
                .iter()
                .enumerate()
                .map(|(id, &ntype)| Node {
                    id,
                    ntype,
                    side: Side::Source,
                    addr: None,
                    text: None,
                    features: vec![],
                })
                .collect(),
            edges: edges
                .iter()
                .map(|&(src, dst)| Edge {
                    src,
                    dst,
                    etype: EdgeType::Call,
                })
                .collect(),
        }
    }

    #[test]
    fn enumeration_counts_and_order() {
        let all = NodeType::ALL;
        assert_eq!(enumerate_metapaths(2, &all).unwrap().len(), 36);
        let two = enumerate_metapaths(2, &all).unwrap();
        assert_eq!(two[0].to_string(), "UU");
        assert_eq!(two[1].to_string(), "UR");
        assert_eq!(two[35].to_string(), "DD");
        assert!(two.windows(2).all(|w| w[0] < w[1]));
        let single = enumerate_metapaths(2, &[NodeType::O]).unwrap();
        assert_eq!(single, vec![p("OO")]);
        assert!(matches!(enumerate_metapaths(1, &all), Err(MetaPathError::TooShort(1))));
        assert_eq!(enumerate_range(2, 4, &all).unwrap().len(), 36 + 216 + 1296);
    }

    #[test]
    fn enumeration_respects_custom_type_order() {
        let order = [NodeType::D, NodeType::U];
        let got: Vec<String> = enumerate_metapaths(2, &order)
            .unwrap()
            .iter()
            .map(|m| m.to_string())
            .collect();
        assert_eq!(got, ["DD", "DU", "UD", "UU"]);
    }

    #[test]
    fn parse_rejects_bad_paths() {
        assert!("U".parse::<MetaPath>().is_err());
        assert!("UX".parse::<MetaPath>().is_err());
        assert_eq!(p("ORO").to_string(), "ORO");
    }

    #[test]
    fn single_edge_instance() {
        let g = graph(&[NodeType::U, NodeType::R], &[(0, 1)]);
        assert!(contains_instance(&g, &p("UR")));
        assert!(!contains_instance(&g, &p("RU")));
        let empty = graph(&[NodeType::U, NodeType::R], &[]);
        assert!(!contains_instance(&empty, &p("UR")));
    }

    #[test]
    fn walks_may_revisit_vertices() {
        let g = graph(&[NodeType::T, NodeType::O], &[(0, 1), (1, 0)]);
        assert!(contains_instance(&g, &p("TOTO")));
        assert_eq!(WalkIndex::new(&g).count_instances(&p("TOTO")), 1);
    }

    #[test]
    fn neighbors_include_self() {
        let g = graph(&[NodeType::U, NodeType::R, NodeType::R], &[(0, 1), (0, 2)]);
        assert_eq!(metapath_neighbors(&g, &p("UR"), 0), BTreeSet::from([0, 1, 2]));
        assert_eq!(metapath_neighbors(&g, &p("UT"), 0), BTreeSet::from([0]));
        // Type mismatch at the start.
        assert_eq!(metapath_neighbors(&g, &p("UR"), 1), BTreeSet::from([1]));
    }

    #[test]
    fn parallel_edges_count_with_multiplicity() {
        let g = graph(&[NodeType::U, NodeType::R], &[(0, 1), (0, 1)]);
        let idx = WalkIndex::new(&g);
        assert_eq!(idx.count_instances(&p("UR")), 2);
        assert!(idx.contains_instance(&p("UR")));
    }

    #[test]
    fn instance_nodes_cover_exactly_the_walks() {
        // U0 -> R1 -> T2, plus a dangling R3 with no T after it.
        let g = graph(
            &[NodeType::U, NodeType::R, NodeType::T, NodeType::R],
            &[(0, 1), (1, 2), (0, 3)],
        );
        let idx = WalkIndex::new(&g);
        assert_eq!(idx.instance_nodes(&p("URT")), BTreeSet::from([0, 1, 2]));
        assert!(idx.instance_nodes(&p("TU")).is_empty());
    }

    fn fixture() -> Vec<(XbhgGraph, Label)> {
        let with = graph(&[NodeType::O, NodeType::R], &[(0, 1)]);
        let without = graph(&[NodeType::O, NodeType::R], &[]);
        vec![
            (with.clone(), Label::SrcAttack),
            (with.clone(), Label::DstAttack),
            (without.clone(), Label::OffAttack),
            (with, Label::Normal),
            (without.clone(), Label::Normal),
            (without.clone(), Label::Normal),
            (without, Label::Normal),
        ]
    }

    #[test]
    fn frequencies_on_hand_fixture() {
        let data = fixture();
        let table = label_frequencies(
            data.iter().map(|(g, l)| (g, *l)),
            &[p("OR"), p("RO")],
            FreqMode::Indicator,
        )
        .unwrap();
        assert_eq!((table.n_attack, table.n_normal), (3, 4));
        let or = &table.entries[0];
        assert_eq!((or.count_a, or.count_n), (2, 1));
        assert!((or.fre_diff - 5.0 / 12.0).abs() < 1e-15);
        assert_eq!(table.entries[1].fre_diff, 0.0);

        let sel = select_differential(&table, 0.3);
        assert_eq!(sel.paths(), vec![p("OR")]);
        assert!(!sel.fallback);
        let sel0 = select_differential(&table, 0.0);
        assert_eq!(sel0.paths(), vec![p("OR")]);
    }

    #[test]
    fn extremes_of_frequency_difference() {
        let with = graph(&[NodeType::O, NodeType::R], &[(0, 1)]);
        let without = graph(&[NodeType::O, NodeType::R], &[]);
        let data = [(&with, Label::SrcAttack), (&without, Label::Normal)];
        let t = label_frequencies(data, &[p("OR"), p("DD")], FreqMode::Indicator).unwrap();
        assert_eq!(t.entries[0].fre_diff, 1.0);
        assert_eq!(t.entries[1].fre_diff, 0.0);
    }

    #[test]
    fn missing_class_is_an_error() {
        let g = graph(&[NodeType::O], &[]);
        let err = label_frequencies([(&g, Label::Normal)], &[p("OO")], FreqMode::Indicator);
        assert!(matches!(err, Err(MetaPathError::EmptyClass("attack"))));
    }

    #[test]
    fn high_theta_falls_back_to_everything() {
        let data = fixture();
        let table = label_frequencies(
            data.iter().map(|(g, l)| (g, *l)),
            &[p("OR"), p("RO")],
            FreqMode::Indicator,
        )
        .unwrap();
        let sel = select_differential(&table, 1.0);
        assert!(sel.fallback);
        assert_eq!(sel.entries.len(), 2);
    }

    #[test]
    fn mean_count_can_exceed_one() {
        let busy = graph(&[NodeType::O, NodeType::R], &[(0, 1), (0, 1), (0, 1)]);
        let quiet = graph(&[NodeType::O, NodeType::R], &[]);
        let t = label_frequencies(
            [(&busy, Label::DstAttack), (&quiet, Label::Normal)],
            &[p("OR")],
            FreqMode::MeanCount,
        )
        .unwrap();
        assert_eq!(t.entries[0].fre_diff, 3.0);
    }

    #[test]
    fn ties_break_by_path_order() {
        let table = FreqTable {
            mode: FreqMode::Indicator,
            n_attack: 1,
            n_normal: 1,
            entries: ["RO", "OR", "UU"]
                .iter()
                .map(|s| FreqEntry {
                    path: p(s),
                    count_a: 1,
                    count_n: 0,
                    fre_a: 1.0,
                    fre_n: 0.0,
                    fre_diff: if *s == "UU" { 0.5 } else { 1.0 },
                })
                .collect(),
        };
        let got: Vec<String> = select_differential(&table, 0.0)
            .paths()
            .iter()
            .map(|m| m.to_string())
            .collect();
        // Type order is U < R < T < O < L < D.
        assert_eq!(got, ["RO", "OR", "UU"]);
    }
}
