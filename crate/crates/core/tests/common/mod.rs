//! Reference implementations shared by the integration tests. They favor the
//! most literal reading of each formula over speed, and share no code with the
//! library beyond its plain data types.
#![allow(dead_code)]

use std::collections::BTreeSet;

use bridgewatch::han::{HyperParams, ModelParams, Pooling};
use bridgewatch::metapath::MetaPath;
use bridgewatch::xbhg::{Edge, Node, XbhgGraph};
use bridgewatch::{EdgeType, NodeType, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random typed multigraph with `n` nodes, `m` edges (self-loops allowed) and
/// uniform random features of width `feat_dim`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, m: usize, feat_dim: usize) -> XbhgGraph {
    let nodes = (0..n)
        .map(|id| Node {
            id,
            ntype: NodeType::ALL[rng.gen_range(0..NodeType::COUNT)],
            side: Side::Source,
            addr: None,
            text: None,
            features: (0..feat_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let edges = (0..m)
        .map(|_| Edge {
            src: rng.gen_range(0..n),
            dst: rng.gen_range(0..n),
            etype: EdgeType::Call,
        })
        .collect();
    XbhgGraph {
        graph_id: "random".into(),
        label: None,
        nodes,
        edges,
    }
}

/// Same as [`random_graph`] but with every node type forced in order for the
/// first six nodes, so all alignment matrices receive gradient.
pub fn random_graph_all_types(rng: &mut ChaCha8Rng, n: usize, m: usize, feat_dim: usize) -> XbhgGraph {
    let mut g = random_graph(rng, n, m, feat_dim);
    for (i, t) in NodeType::ALL.iter().enumerate().take(n) {
        g.nodes[i].ntype = *t;
    }
    g
}

/// Every directed walk (vertex sequence) whose types spell `path`.
pub fn brute_walks(g: &XbhgGraph, path: &MetaPath) -> Vec<Vec<usize>> {
    fn extend(g: &XbhgGraph, types: &[NodeType], walk: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if walk.len() == types.len() {
            out.push(walk.clone());
            return;
        }
        let last = *walk.last().unwrap();
        let mut next: Vec<usize> = g
            .edges
            .iter()
            .filter(|e| e.src == last && g.nodes[e.dst].ntype == types[walk.len()])
            .map(|e| e.dst)
            .collect();
        next.sort_unstable();
        next.dedup();
        for v in next {
            walk.push(v);
            extend(g, types, walk, out);
            walk.pop();
        }
    }
    let types = path.types();
    let mut out = Vec::new();
    for v in 0..g.nodes.len() {
        if g.nodes[v].ntype == types[0] {
            extend(g, types, &mut vec![v], &mut out);
        }
    }
    out
}

pub fn brute_contains(g: &XbhgGraph, path: &MetaPath) -> bool {
    !brute_walks(g, path).is_empty()
}

pub fn brute_neighbors(g: &XbhgGraph, path: &MetaPath, node: usize) -> BTreeSet<usize> {
    let mut set: BTreeSet<usize> = brute_walks(g, path)
        .into_iter()
        .filter(|w| w[0] == node)
        .map(|w| *w.last().unwrap())
        .collect();
    set.insert(node);
    set
}

pub fn brute_instance_nodes(g: &XbhgGraph, paths: &[MetaPath]) -> Vec<usize> {
    let set: BTreeSet<usize> = paths
        .iter()
        .flat_map(|p| brute_walks(g, p))
        .flatten()
        .collect();
    if set.is_empty() {
        (0..g.nodes.len()).collect()
    } else {
        set.into_iter().collect()
    }
}

// ---- dense numeric reference ----

fn mat(m: &bridgewatch::linalg::Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn mv(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|row| {
            let mut s = 0.0;
            for k in 0..x.len() {
                s += row[k] * x[k];
            }
            s
        })
        .collect()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub struct OracleOut {
    pub aligned: Vec<Vec<f64>>,
    /// `[path][node]` embeddings.
    pub per_path: Vec<Vec<Vec<f64>>>,
    /// `[path][node][head]` attention rows over sorted neighbors.
    pub alpha: Vec<Vec<Vec<Vec<f64>>>>,
    pub beta: Vec<f64>,
    pub fused: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn oracle_align(params: &ModelParams<f64>, g: &XbhgGraph) -> Vec<Vec<f64>> {
    g.nodes
        .iter()
        .map(|n| {
            let t = n.ntype.index();
            let w = mat(&params.align_w[t]);
            mv(&w, &n.features)
                .iter()
                .zip(&params.align_b[t])
                .map(|(a, b)| a + b)
                .collect()
        })
        .collect()
}

pub fn oracle_pool(z: &[Vec<f64>], rows: &[usize], method: Pooling, w: &[f64]) -> Vec<f64> {
    let d = z[rows[0]].len();
    let mut g = vec![0.0; d];
    match method {
        Pooling::Mean => {
            for c in 0..d {
                for &i in rows {
                    g[c] += z[i][c];
                }
                g[c] /= rows.len() as f64;
            }
        }
        Pooling::Max => {
            for c in 0..d {
                g[c] = rows.iter().map(|&i| z[i][c]).fold(f64::NEG_INFINITY, f64::max);
            }
        }
        Pooling::Attention => {
            for &i in rows {
                let s: f64 = (0..d).map(|c| w[c] * z[i][c]).sum();
                let a = 1.0 / (1.0 + (-s).exp());
                for c in 0..d {
                    g[c] += a * z[i][c];
                }
            }
        }
    }
    g
}

/// Literal forward pass with neighbor sets from the brute-force walk oracle.
pub fn oracle_forward(
    params: &ModelParams<f64>,
    hyper: &HyperParams,
    g: &XbhgGraph,
    paths: &[MetaPath],
) -> OracleOut {
    let n = g.nodes.len();
    let aligned = oracle_align(params, g);
    let mut out = OracleOut {
        aligned: aligned.clone(),
        per_path: vec![],
        alpha: vec![],
        beta: vec![],
        fused: vec![],
        pooled: vec![],
        probs: vec![],
    };
    let fused = if hyper.hierarchical_attention {
        let heads = hyper.heads;
        let dh = hyper.head_dim();
        let proj: Vec<Vec<Vec<f64>>> = (0..heads)
            .map(|m| {
                let w = mat(&params.head_w[m]);
                aligned.iter().map(|h| mv(&w, h)).collect()
            })
            .collect();
        for (k, path) in paths.iter().enumerate() {
            let att = mat(&params.path_att[k]);
            let mut zk = Vec::with_capacity(n);
            let mut ak = Vec::with_capacity(n);
            for i in 0..n {
                let nb: Vec<usize> = brute_neighbors(g, path, i).into_iter().collect();
                let mut zi = Vec::with_capacity(hyper.hidden_dim);
                let mut ai = Vec::with_capacity(heads);
                for m in 0..heads {
                    let a = &att[m];
                    let e: Vec<f64> = nb
                        .iter()
                        .map(|&j| {
                            let mut concat = proj[m][i].clone();
                            concat.extend_from_slice(&proj[m][j]);
                            let s: f64 = (0..2 * dh).map(|c| a[c] * concat[c]).sum();
                            leaky(s, hyper.leaky_slope)
                        })
                        .collect();
                    let alpha = softmax(&e);
                    for c in 0..dh {
                        let s: f64 = nb.iter().zip(&alpha).map(|(&j, w)| w * proj[m][j][c]).sum();
                        zi.push(elu(s));
                    }
                    ai.push(alpha);
                }
                zk.push(zi);
                ak.push(ai);
            }
            out.per_path.push(zk);
            out.alpha.push(ak);
        }
        let w = mat(&params.inter_w);
        let scores: Vec<f64> = out
            .per_path
            .iter()
            .map(|zk| {
                let mut total = 0.0;
                for zi in zk {
                    let pre = mv(&w, zi);
                    for c in 0..pre.len() {
                        total += params.inter_q[c] * (pre[c] + params.inter_b[c]).tanh();
                    }
                }
                total / n as f64
            })
            .collect();
        out.beta = softmax(&scores);
        (0..n)
            .map(|i| {
                (0..hyper.hidden_dim)
                    .map(|c| (0..paths.len()).map(|k| out.beta[k] * out.per_path[k][i][c]).sum())
                    .collect()
            })
            .collect()
    } else {
        aligned
    };
    let rows: Vec<usize> = if hyper.hierarchical_attention {
        (0..n).collect()
    } else {
        brute_instance_nodes(g, paths)
    };
    out.pooled = oracle_pool(&fused, &rows, hyper.pooling, &params.pool_w);
    let logits: Vec<f64> = mv(&mat(&params.clf_w), &out.pooled)
        .iter()
        .zip(&params.clf_b)
        .map(|(a, b)| a + b)
        .collect();
    out.probs = softmax(&logits);
    out.fused = fused;
    out
}

/// Small configuration used by the numeric tests.
pub fn small_hyper(input_dim: usize, pooling: Pooling) -> HyperParams {
    HyperParams {
        input_dim,
        hidden_dim: 16,
        heads: 4,
        semantic_dim: 8,
        pooling,
        ..HyperParams::default()
    }
}

/// Up to `k` meta-paths of length 2..=3 that have at least one instance in `g`,
/// preferring longer ones, in enumeration order.
pub fn present_paths(g: &XbhgGraph, k: usize) -> Vec<MetaPath> {
    let mut out = Vec::new();
    for len in [3, 2] {
        for p in bridgewatch::metapath::enumerate_metapaths(len, &NodeType::ALL).unwrap() {
            if out.len() < k && brute_contains(g, &p) {
                out.push(p);
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest relative error `|a - n| / max(|a|, |n|, 1e-6)` between the analytic
/// gradient and a central difference with step `h`, over every parameter
/// entry. Returns the error and the name of the worst block.
pub fn finite_difference_error(
    model: &bridgewatch::han::Model<f64>,
    batch: &[(&bridgewatch::han::PreparedGraph<f64>, bridgewatch::Label)],
    weights: &[f64],
    h: f64,
) -> (f64, String) {
    use bridgewatch::han::{forward, gradients, loss};
    let analytic = gradients(model, batch, weights).unwrap().grads;
    let flat: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.data.to_vec()))
        .collect();
    let labels: Vec<bridgewatch::Label> = batch.iter().map(|(_, y)| *y).collect();
    let eval = |m: &bridgewatch::han::Model<f64>| {
        let probs: Vec<Vec<f64>> = batch.iter().map(|(g, _)| forward(m, g).unwrap().probs).collect();
        loss(&probs, &labels, weights)
    };
    let mut worst = (0.0, String::new());
    let mut probe = model.clone();
    for (block, (name, grad)) in flat.iter().enumerate() {
        for idx in 0..grad.len() {
            let orig = probe.params.slices_mut()[block][idx];
            probe.params.slices_mut()[block][idx] = orig + h;
            let up = eval(&probe);
            probe.params.slices_mut()[block][idx] = orig - h;
            let down = eval(&probe);
            probe.params.slices_mut()[block][idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if err > worst.0 {
                worst = (err, format!("{name}[{idx}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}
