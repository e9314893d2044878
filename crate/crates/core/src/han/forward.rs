use super::prepare::PreparedGraph;
use super::{HanError, HyperParams, Model, ModelParams, Pooling};
use crate::linalg::Matrix;
use crate::scalar::{dot, elu, leaky_relu, sigmoid, softmax, softmax_in_place, Scalar};
use crate::taxonomy::Label;

/// Clamp applied to probabilities before taking the log in the loss.
pub const LOG_EPS: f64 = 1e-12;

/// `H[i] = W_{type(i)} x_i + b_{type(i)}`.
pub fn align_features<T: Scalar>(
    params: &ModelParams<T>,
    graph: &PreparedGraph<T>,
) -> Result<Matrix<T>, HanError> {
    let d = params.align_b[0].len();
    let mut h = Matrix::zeros(graph.num_nodes(), d);
    for (i, &t) in graph.types.iter().enumerate() {
        let w = &params.align_w[t.index()];
        if w.cols() != graph.features.cols() {
            return Err(HanError::FeatureDim {
                ntype: t,
                got: graph.features.cols(),
                want: w.cols(),
            });
        }
        let row = h.row_mut(i);
        w.matvec_into(graph.features.row(i), row);
        for (r, b) in row.iter_mut().zip(&params.align_b[t.index()]) {
            *r += *b;
        }
    }
    Ok(h)
}

/// Per-head projections `W^(m) h_i`, concatenated over heads (N x d).
pub(crate) fn project_heads<T: Scalar>(params: &ModelParams<T>, h: &Matrix<T>) -> Matrix<T> {
    let dh = params.head_w[0].rows();
    let mut u = Matrix::zeros(h.rows(), dh * params.head_w.len());
    for i in 0..h.rows() {
        let row = u.row_mut(i);
        for (m, w) in params.head_w.iter().enumerate() {
            w.matvec_into(h.row(i), &mut row[m * dh..(m + 1) * dh]);
        }
    }
    u
}

/// Attention state of one node under one meta-path.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAttention<T> {
    pub node: usize,
    pub neighbors: Vec<usize>,
    /// Per head, softmax weights over `neighbors`.
    pub alpha: Vec<Vec<T>>,
    /// Per head, attention logits before LeakyReLU.
    pub(crate) raw_logits: Vec<Vec<T>>,
    /// Weighted neighbor sum before ELU, heads concatenated.
    pub(crate) agg: Vec<T>,
    /// Node embedding under this meta-path.
    pub z: Vec<T>,
    pub(crate) tanh: Vec<T>,
    pub(crate) score: T,
}

/// Attention of one meta-path; nodes absent from `nodes` attend only to themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAttention<T> {
    pub nodes: Vec<NodeAttention<T>>,
}

fn attend<T: Scalar>(
    att: &Matrix<T>,
    u: &Matrix<T>,
    node: usize,
    neighbors: &[usize],
    slope: T,
) -> (Vec<Vec<T>>, Vec<Vec<T>>, Vec<T>, Vec<T>) {
    let heads = att.rows();
    let dh = att.cols() / 2;
    let mut alphas = Vec::with_capacity(heads);
    let mut raws = Vec::with_capacity(heads);
    let mut agg = vec![T::zero(); heads * dh];
    for m in 0..heads {
        let a = att.row(m);
        let (a_self, a_nbr) = a.split_at(dh);
        let span = m * dh..(m + 1) * dh;
        let own = dot(a_self, &u.row(node)[span.clone()]);
        let raw: Vec<T> = neighbors
            .iter()
            .map(|&j| own + dot(a_nbr, &u.row(j)[span.clone()]))
            .collect();
        let mut alpha: Vec<T> = raw.iter().map(|&x| leaky_relu(x, slope)).collect();
        softmax_in_place(&mut alpha);
        let out = &mut agg[span.clone()];
        for (&j, &w) in neighbors.iter().zip(&alpha) {
            crate::scalar::axpy(w, &u.row(j)[span.clone()], out);
        }
        alphas.push(alpha);
        raws.push(raw);
    }
    let z = agg.iter().map(|&x| elu(x)).collect();
    (alphas, raws, agg, z)
}

/// Dense per-path embedding `Z^ψ` (N x d) and attention weights for every node.
///
/// Row `i` of the returned attention list holds `(neighbors, alpha per head)`.
pub fn intra_path_attention<T: Scalar>(
    model: &Model<T>,
    graph: &PreparedGraph<T>,
    path: usize,
    aligned: &Matrix<T>,
) -> (Matrix<T>, Vec<(Vec<usize>, Vec<Vec<T>>)>) {
    let u = project_heads(&model.params, aligned);
    let slope = T::of(model.hyper.leaky_slope);
    let mut z = Matrix::zeros(graph.num_nodes(), u.cols());
    let mut weights = Vec::with_capacity(graph.num_nodes());
    for i in 0..graph.num_nodes() {
        let nbrs = graph.neighbors(path, i);
        let (alpha, _, _, zi) = attend(&model.params.path_att[path], &u, i, &nbrs, slope);
        z.row_mut(i).copy_from_slice(&zi);
        weights.push((nbrs, alpha));
    }
    (z, weights)
}

fn score<T: Scalar>(params: &ModelParams<T>, z: &[T]) -> (Vec<T>, T) {
    let mut t = params.inter_w.matvec(z);
    for (x, b) in t.iter_mut().zip(&params.inter_b) {
        *x = (*x + *b).tanh();
    }
    let s = dot(&params.inter_q, &t);
    (t, s)
}

/// Fuses per-path embeddings: `β = softmax_ψ(mean_i qᵀ tanh(W z_i^ψ + b))`, `Z = Σ β_ψ Z^ψ`.
pub fn inter_path_attention<T: Scalar>(
    params: &ModelParams<T>,
    per_path: &[Matrix<T>],
) -> (Matrix<T>, Vec<T>) {
    let (n, d) = per_path[0].shape();
    let scores: Vec<T> = per_path
        .iter()
        .map(|z| {
            let total: T = (0..n).map(|i| score(params, z.row(i)).1).sum();
            total / T::of(n as f64)
        })
        .collect();
    let beta = softmax(&scores);
    let mut fused = Matrix::zeros(n, d);
    for (z, &b) in per_path.iter().zip(&beta) {
        crate::scalar::axpy(b, z.as_slice(), fused.as_mut_slice());
    }
    (fused, beta)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PoolCache<T> {
    Mean,
    /// Winning row per coordinate (lowest index on ties).
    Max(Vec<usize>),
    /// Sigmoid gate per pooled row.
    Attention(Vec<T>),
}

fn pool_rows<T: Scalar>(
    z: &Matrix<T>,
    rows: &[usize],
    method: Pooling,
    gate: &[T],
) -> Result<(Vec<T>, PoolCache<T>), HanError> {
    if rows.is_empty() {
        return Err(HanError::EmptyGraph("<pool>".into()));
    }
    let d = z.cols();
    match method {
        Pooling::Mean => {
            let mut g = vec![T::zero(); d];
            for &i in rows {
                crate::scalar::axpy(T::one(), z.row(i), &mut g);
            }
            let n = T::of(rows.len() as f64);
            g.iter_mut().for_each(|x| *x /= n);
            Ok((g, PoolCache::Mean))
        }
        Pooling::Max => {
            let mut g = z.row(rows[0]).to_vec();
            let mut arg = vec![rows[0]; d];
            for &i in &rows[1..] {
                for (c, &v) in z.row(i).iter().enumerate() {
                    if v > g[c] {
                        g[c] = v;
                        arg[c] = i;
                    }
                }
            }
            Ok((g, PoolCache::Max(arg)))
        }
        Pooling::Attention => {
            let mut g = vec![T::zero(); d];
            let mut gates = Vec::with_capacity(rows.len());
            for &i in rows {
                let a = sigmoid(dot(gate, z.row(i)));
                crate::scalar::axpy(a, z.row(i), &mut g);
                gates.push(a);
            }
            Ok((g, PoolCache::Attention(gates)))
        }
    }
}

/// Graph readout over all rows of `z`.
pub fn pool<T: Scalar>(z: &Matrix<T>, method: Pooling, gate: &[T]) -> Result<Vec<T>, HanError> {
    let rows: Vec<usize> = (0..z.rows()).collect();
    pool_rows(z, &rows, method, gate).map(|(g, _)| g)
}

/// `softmax(W_clf g + b_clf)`.
pub fn classify<T: Scalar>(params: &ModelParams<T>, pooled: &[T]) -> Vec<T> {
    softmax(&logits(params, pooled))
}

fn logits<T: Scalar>(params: &ModelParams<T>, pooled: &[T]) -> Vec<T> {
    let mut l = params.clf_w.matvec(pooled);
    for (x, b) in l.iter_mut().zip(&params.clf_b) {
        *x += *b;
    }
    l
}

/// Class-weighted cross-entropy averaged over the batch.
pub fn loss<T: Scalar>(probs: &[Vec<T>], labels: &[Label], weights: &[T]) -> T {
    let eps = T::of(LOG_EPS);
    let total: T = probs
        .iter()
        .zip(labels)
        .map(|(p, y)| -weights[y.index()] * p[y.index()].max(eps).ln())
        .sum();
    total / T::of(probs.len().max(1) as f64)
}

/// Argmax of the class distribution; ties go to the lowest class index.
pub fn predict<T: Scalar>(probs: &[T]) -> Label {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    Label::from_index(best).expect("classifier has one output per label")
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    /// Aligned features `H` (N x d).
    pub aligned: Matrix<T>,
    /// Head projections `W^(m) H`, heads concatenated.
    pub(crate) projected: Matrix<T>,
    /// Self-only embedding `ELU(W^(m) h_i)`: the per-path embedding of any node
    /// without meta-path neighbors.
    pub base: Matrix<T>,
    pub(crate) base_tanh: Matrix<T>,
    pub(crate) base_scores: Vec<T>,
    pub paths: Vec<PathAttention<T>>,
    pub path_scores: Vec<T>,
    pub beta: Vec<T>,
    /// Fused node embeddings (the aligned features when attention is disabled).
    pub fused: Matrix<T>,
    /// Rows of `fused` that enter pooling.
    pub pooled_rows: Vec<usize>,
    pub pooled: Vec<T>,
    pub(crate) pool_cache: PoolCache<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Dense `Z^ψ` for path `k`.
    pub fn path_embedding(&self, k: usize) -> Matrix<T> {
        let mut z = self.base.clone();
        for a in &self.paths[k].nodes {
            z.row_mut(a.node).copy_from_slice(&a.z);
        }
        z
    }

    pub fn predicted(&self) -> Label {
        predict(&self.probs)
    }
}

/// Full forward pass. Per-path work is limited to nodes that have meta-path
/// neighbors; every other node shares the self-only embedding.
pub fn forward<T: Scalar>(model: &Model<T>, graph: &PreparedGraph<T>) -> Result<ForwardTrace<T>, HanError> {
    let params = &model.params;
    let hyper: &HyperParams = &model.hyper;
    if graph.num_paths() != model.paths.len() {
        return Err(HanError::PathCount {
            got: graph.num_paths(),
            want: model.paths.len(),
        });
    }
    let n = graph.num_nodes();
    if n == 0 {
        return Err(HanError::EmptyGraph(graph.graph_id.clone()));
    }
    let aligned = align_features(params, graph)?;

    if !hyper.hierarchical_attention {
        let rows = graph.instance_nodes.clone();
        let (pooled, pool_cache) = pool_rows(&aligned, &rows, hyper.pooling, &params.pool_w)?;
        let logits = logits(params, &pooled);
        let probs = softmax(&logits);
        return Ok(ForwardTrace {
            fused: aligned.clone(),
            aligned,
            projected: Matrix::zeros(0, 0),
            base: Matrix::zeros(0, 0),
            base_tanh: Matrix::zeros(0, 0),
            base_scores: Vec::new(),
            paths: Vec::new(),
            path_scores: Vec::new(),
            beta: Vec::new(),
            pooled_rows: rows,
            pooled,
            pool_cache,
            logits,
            probs,
        });
    }

    let slope = T::of(hyper.leaky_slope);
    let projected = project_heads(params, &aligned);
    let d = projected.cols();
    let mut base = projected.clone();
    base.as_mut_slice().iter_mut().for_each(|x| *x = elu(*x));
    let mut base_tanh = Matrix::zeros(n, hyper.semantic_dim);
    let mut base_scores = Vec::with_capacity(n);
    for i in 0..n {
        let (t, s) = score(params, base.row(i));
        base_tanh.row_mut(i).copy_from_slice(&t);
        base_scores.push(s);
    }
    let base_total: T = base_scores.iter().copied().sum();
    let inv_n = T::one() / T::of(n as f64);

    let mut paths = Vec::with_capacity(graph.num_paths());
    let mut path_scores = Vec::with_capacity(graph.num_paths());
    for (k, active) in graph.active.iter().enumerate() {
        let mut total = base_total;
        let mut nodes = Vec::with_capacity(active.len());
        for a in active {
            let (alpha, raw_logits, agg, z) =
                attend(&params.path_att[k], &projected, a.node, &a.neighbors, slope);
            let (tanh, s) = score(params, &z);
            total += s - base_scores[a.node];
            nodes.push(NodeAttention {
                node: a.node,
                neighbors: a.neighbors.clone(),
                alpha,
                raw_logits,
                agg,
                z,
                tanh,
                score: s,
            });
        }
        path_scores.push(total * inv_n);
        paths.push(PathAttention { nodes });
    }
    let beta = softmax(&path_scores);

    // Z_i = base_i + Σ_{ψ active at i} β_ψ (z_i^ψ − base_i), using Σ β = 1.
    let mut fused = base.clone();
    for (p, &b) in paths.iter().zip(&beta) {
        for a in &p.nodes {
            let row = fused.row_mut(a.node);
            let base_row = base.row(a.node);
            for c in 0..d {
                row[c] += b * (a.z[c] - base_row[c]);
            }
        }
    }

    let rows: Vec<usize> = (0..n).collect();
    let (pooled, pool_cache) = pool_rows(&fused, &rows, hyper.pooling, &params.pool_w)?;
    let logits = logits(params, &pooled);
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        aligned,
        projected,
        base,
        base_tanh,
        base_scores,
        paths,
        path_scores,
        beta,
        fused,
        pooled_rows: rows,
        pooled,
        pool_cache,
        logits,
        probs,
    })
}
