use super::forward::{forward, ForwardTrace, PoolCache, LOG_EPS};
use super::prepare::PreparedGraph;
use super::{HanError, Model, ModelParams};
use crate::linalg::Matrix;
use crate::scalar::{axpy, dot, elu_grad, leaky_relu_grad, Scalar};
use crate::taxonomy::Label;

#[derive(Debug, Clone)]
pub struct BatchGradients<T> {
    pub loss: T,
    pub grads: ModelParams<T>,
    /// Per-sample class probabilities, in batch order.
    pub probs: Vec<Vec<T>>,
}

/// Loss and exact gradient of the class-weighted mean cross-entropy over `batch`.
pub fn gradients<T: Scalar>(
    model: &Model<T>,
    batch: &[(&PreparedGraph<T>, Label)],
    class_weights: &[T],
) -> Result<BatchGradients<T>, HanError> {
    if batch.is_empty() {
        return Err(HanError::EmptyBatch);
    }
    if let Some(j) = class_weights.iter().position(|w| !(*w > T::zero())) {
        return Err(HanError::ClassWeight(j));
    }
    let mut grads = model.params.zeros_like();
    let inv_b = T::one() / T::of(batch.len() as f64);
    let eps = T::of(LOG_EPS);
    let mut total = T::zero();
    let mut probs = Vec::with_capacity(batch.len());
    for (graph, label) in batch {
        let trace = forward(model, graph)?;
        let y = label.index();
        let w = class_weights[y];
        let p_y = trace.probs[y];
        total += -w * p_y.max(eps).ln();
        // d(-w log p_y)/d logit_c = w (p_c - [c = y]); zero once the clamp is active.
        let mut dlogits = vec![T::zero(); trace.probs.len()];
        if p_y > eps {
            for (c, (d, &p)) in dlogits.iter_mut().zip(&trace.probs).enumerate() {
                let target = if c == y { T::one() } else { T::zero() };
                *d = w * (p - target) * inv_b;
            }
        }
        backprop(model, graph, &trace, &dlogits, &mut grads);
        probs.push(trace.probs);
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(HanError::NonFiniteGradient(name));
    }
    Ok(BatchGradients {
        loss: total * inv_b,
        grads,
        probs,
    })
}

fn backprop<T: Scalar>(
    model: &Model<T>,
    graph: &PreparedGraph<T>,
    trace: &ForwardTrace<T>,
    dlogits: &[T],
    grads: &mut ModelParams<T>,
) {
    let params = &model.params;
    let n = graph.num_nodes();
    let d = trace.fused.cols();

    grads.clf_w.add_outer(dlogits, &trace.pooled);
    axpy(T::one(), dlogits, &mut grads.clf_b);
    let mut dpooled = vec![T::zero(); d];
    params.clf_w.matvec_t_acc(dlogits, &mut dpooled);

    let mut dfused = Matrix::zeros(n, d);
    match &trace.pool_cache {
        PoolCache::Mean => {
            let scale = T::one() / T::of(trace.pooled_rows.len() as f64);
            for &i in &trace.pooled_rows {
                axpy(scale, &dpooled, dfused.row_mut(i));
            }
        }
        PoolCache::Max(arg) => {
            for (c, &i) in arg.iter().enumerate() {
                let v = dfused.get(i, c) + dpooled[c];
                dfused.set(i, c, v);
            }
        }
        PoolCache::Attention(gates) => {
            for (&i, &a) in trace.pooled_rows.iter().zip(gates) {
                let zi = trace.fused.row(i);
                let coef = dot(&dpooled, zi) * a * (T::one() - a);
                axpy(a, &dpooled, dfused.row_mut(i));
                axpy(coef, &params.pool_w, dfused.row_mut(i));
                axpy(coef, zi, &mut grads.pool_w);
            }
        }
    }

    let daligned = if model.hyper.hierarchical_attention {
        attention_backward(model, graph, trace, &dfused, grads)
    } else {
        dfused
    };

    for (i, &t) in graph.types.iter().enumerate() {
        let dh = daligned.row(i);
        grads.align_w[t.index()].add_outer(dh, graph.features.row(i));
        axpy(T::one(), dh, &mut grads.align_b[t.index()]);
    }
}

/// `s = qᵀ tanh(W z + b)`; accumulates parameter gradients and `dz += ∂s/∂z · ds`.
fn score_backward<T: Scalar>(
    params: &ModelParams<T>,
    grads: &mut ModelParams<T>,
    z: &[T],
    tanh: &[T],
    ds: T,
    dz: &mut [T],
) {
    if ds == T::zero() {
        return;
    }
    axpy(ds, tanh, &mut grads.inter_q);
    let dpre: Vec<T> = tanh
        .iter()
        .zip(&params.inter_q)
        .map(|(&t, &q)| ds * q * (T::one() - t * t))
        .collect();
    grads.inter_w.add_outer(&dpre, z);
    axpy(T::one(), &dpre, &mut grads.inter_b);
    params.inter_w.matvec_t_acc(&dpre, dz);
}

fn attention_backward<T: Scalar>(
    model: &Model<T>,
    graph: &PreparedGraph<T>,
    trace: &ForwardTrace<T>,
    dfused: &Matrix<T>,
    grads: &mut ModelParams<T>,
) -> Matrix<T> {
    let params = &model.params;
    let n = graph.num_nodes();
    let d = trace.fused.cols();
    let heads = params.head_w.len();
    let dh = d / heads;
    let slope = T::of(model.hyper.leaky_slope);
    let inv_n = T::one() / T::of(n as f64);

    // Fusion: Z_i = base_i + Σ_ψ β_ψ (z_i^ψ − base_i).
    let common: T = (0..n).map(|i| dot(dfused.row(i), trace.base.row(i))).sum();
    let dbeta: Vec<T> = trace
        .paths
        .iter()
        .map(|p| {
            let mut g = common;
            for a in &p.nodes {
                let base = trace.base.row(a.node);
                let dz = dfused.row(a.node);
                for c in 0..d {
                    g += dz[c] * (a.z[c] - base[c]);
                }
            }
            g
        })
        .collect();
    let mean: T = trace.beta.iter().zip(&dbeta).map(|(&b, &g)| b * g).sum();
    let dscore: Vec<T> = trace
        .beta
        .iter()
        .zip(&dbeta)
        .map(|(&b, &g)| b * (g - mean))
        .collect();
    let dscore_total: T = dscore.iter().copied().sum();

    let mut dbase = dfused.clone();
    let mut dbase_score = vec![dscore_total * inv_n; n];
    let mut dproj = Matrix::zeros(n, d);

    for (k, p) in trace.paths.iter().enumerate() {
        let beta = trace.beta[k];
        let ds = dscore[k] * inv_n;
        let att = &params.path_att[k];
        for a in &p.nodes {
            axpy(-beta, dfused.row(a.node), dbase.row_mut(a.node));
            dbase_score[a.node] -= ds;

            let mut dz: Vec<T> = dfused.row(a.node).iter().map(|&g| beta * g).collect();
            score_backward(params, grads, &a.z, &a.tanh, ds, &mut dz);

            for m in 0..heads {
                let span = m * dh..(m + 1) * dh;
                let dagg: Vec<T> = dz[span.clone()]
                    .iter()
                    .zip(&a.agg[span.clone()])
                    .map(|(&g, &x)| g * elu_grad(x))
                    .collect();
                let alpha = &a.alpha[m];
                let dalpha: Vec<T> = a
                    .neighbors
                    .iter()
                    .map(|&j| dot(&dagg, &proj_slice(&trace.projected, j, &span)))
                    .collect();
                let avg: T = alpha.iter().zip(&dalpha).map(|(&x, &g)| x * g).sum();
                let (a_self, a_nbr) = att.row(m).split_at(dh);
                let mut d_self_total = T::zero();
                let mut da_self = vec![T::zero(); dh];
                let mut da_nbr = vec![T::zero(); dh];
                for (idx, &j) in a.neighbors.iter().enumerate() {
                    let u_j = proj_slice(&trace.projected, j, &span);
                    let de = alpha[idx] * (dalpha[idx] - avg);
                    let draw = de * leaky_relu_grad(a.raw_logits[m][idx], slope);
                    d_self_total += draw;
                    axpy(draw, &u_j, &mut da_nbr);
                    let row = &mut dproj.row_mut(j)[span.clone()];
                    axpy(alpha[idx], &dagg, row);
                    axpy(draw, a_nbr, row);
                }
                let u_i = proj_slice(&trace.projected, a.node, &span);
                axpy(d_self_total, &u_i, &mut da_self);
                axpy(d_self_total, a_self, &mut dproj.row_mut(a.node)[span.clone()]);
                let grow = grads.path_att[k].row_mut(m);
                axpy(T::one(), &da_self, &mut grow[..dh]);
                axpy(T::one(), &da_nbr, &mut grow[dh..]);
            }
        }
    }

    for i in 0..n {
        let mut db = dbase.row(i).to_vec();
        score_backward(
            params,
            grads,
            trace.base.row(i),
            trace.base_tanh.row(i),
            dbase_score[i],
            &mut db,
        );
        let u = trace.projected.row(i);
        let row = dproj.row_mut(i);
        for c in 0..d {
            row[c] += db[c] * elu_grad(u[c]);
        }
    }

    let mut daligned = Matrix::zeros(n, d);
    for i in 0..n {
        for (m, w) in params.head_w.iter().enumerate() {
            let du = &dproj.row(i)[m * dh..(m + 1) * dh];
            grads.head_w[m].add_outer(du, trace.aligned.row(i));
            w.matvec_t_acc(du, daligned.row_mut(i));
        }
    }
    daligned
}

fn proj_slice<T: Scalar>(u: &Matrix<T>, row: usize, span: &std::ops::Range<usize>) -> Vec<T> {
    u.row(row)[span.clone()].to_vec()
}
