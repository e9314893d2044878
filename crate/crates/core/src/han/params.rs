use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{HanError, HyperParams};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::taxonomy::NodeType;

/// Trainable weights. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// Per node type, `hidden_dim x input_dim`.
    pub align_w: Vec<Matrix<T>>,
    pub align_b: Vec<Vec<T>>,
    /// Per head, `head_dim x hidden_dim`; shared by all meta-paths.
    pub head_w: Vec<Matrix<T>>,
    /// Per meta-path, `heads x 2*head_dim`: row `m` is `[a_self ‖ a_neighbor]` for head `m`.
    pub path_att: Vec<Matrix<T>>,
    /// Meta-path scoring layer, `semantic_dim x hidden_dim`.
    pub inter_w: Matrix<T>,
    pub inter_b: Vec<T>,
    pub inter_q: Vec<T>,
    /// Attention-pooling gate vector, `hidden_dim`.
    pub pool_w: Vec<T>,
    /// Classifier, `classes x hidden_dim`.
    pub clf_w: Matrix<T>,
    pub clf_b: Vec<T>,
}

/// A named, shaped view of one parameter block.
pub struct ParamTensor<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-limit..limit)))
}

fn uniform_vec<T: Scalar>(rng: &mut ChaCha8Rng, len: usize, fan: usize) -> Vec<T> {
    let limit = (6.0 / (fan + 1) as f64).sqrt();
    (0..len).map(|_| T::of(rng.gen_range(-limit..limit))).collect()
}

impl<T: Scalar> ModelParams<T> {
    pub fn init(hyper: &HyperParams, num_paths: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d_in, d, ds, dh) = (
            hyper.input_dim,
            hyper.hidden_dim,
            hyper.semantic_dim,
            hyper.head_dim(),
        );
        let align_w = (0..NodeType::COUNT).map(|_| glorot(&mut rng, d, d_in)).collect();
        let head_w = (0..hyper.heads).map(|_| glorot(&mut rng, dh, d)).collect();
        let path_att = (0..num_paths)
            .map(|_| glorot(&mut rng, hyper.heads, 2 * dh))
            .collect();
        let inter_w = glorot(&mut rng, ds, d);
        let inter_q = uniform_vec(&mut rng, ds, ds);
        let pool_w = uniform_vec(&mut rng, d, d);
        let clf_w = glorot(&mut rng, hyper.classes, d);
        Self {
            align_w,
            align_b: vec![vec![T::zero(); d]; NodeType::COUNT],
            head_w,
            path_att,
            inter_w,
            inter_b: vec![T::zero(); ds],
            inter_q,
            pool_w,
            clf_w,
            clf_b: vec![T::zero(); hyper.classes],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let zm = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        let zv = |v: &Vec<T>| vec![T::zero(); v.len()];
        Self {
            align_w: self.align_w.iter().map(zm).collect(),
            align_b: self.align_b.iter().map(zv).collect(),
            head_w: self.head_w.iter().map(zm).collect(),
            path_att: self.path_att.iter().map(zm).collect(),
            inter_w: zm(&self.inter_w),
            inter_b: zv(&self.inter_b),
            inter_q: zv(&self.inter_q),
            pool_w: zv(&self.pool_w),
            clf_w: zm(&self.clf_w),
            clf_b: zv(&self.clf_b),
        }
    }

    /// Every parameter block with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<ParamTensor<'_, T>> {
        fn mat<T: Scalar>(name: String, m: &Matrix<T>) -> ParamTensor<'_, T> {
            ParamTensor {
                name,
                shape: vec![m.rows(), m.cols()],
                data: m.as_slice(),
            }
        }
        fn vec_<T>(name: String, v: &[T]) -> ParamTensor<'_, T> {
            ParamTensor {
                name,
                shape: vec![v.len()],
                data: v,
            }
        }
        let mut out = Vec::new();
        for (t, (w, b)) in NodeType::ALL.iter().zip(self.align_w.iter().zip(&self.align_b)) {
            out.push(mat(format!("align_w.{t}"), w));
            out.push(vec_(format!("align_b.{t}"), b));
        }
        for (m, w) in self.head_w.iter().enumerate() {
            out.push(mat(format!("head_w.{m}"), w));
        }
        for (k, a) in self.path_att.iter().enumerate() {
            out.push(mat(format!("path_att.{k}"), a));
        }
        out.push(mat("inter_w".into(), &self.inter_w));
        out.push(vec_("inter_b".into(), &self.inter_b));
        out.push(vec_("inter_q".into(), &self.inter_q));
        out.push(vec_("pool_w".into(), &self.pool_w));
        out.push(mat("clf_w".into(), &self.clf_w));
        out.push(vec_("clf_b".into(), &self.clf_b));
        out
    }

    /// Mutable slices in the same order as [`Self::tensors`].
    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for (w, b) in self.align_w.iter_mut().zip(self.align_b.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        for w in &mut self.head_w {
            out.push(w.as_mut_slice());
        }
        for a in &mut self.path_att {
            out.push(a.as_mut_slice());
        }
        out.push(self.inter_w.as_mut_slice());
        out.push(&mut self.inter_b);
        out.push(&mut self.inter_q);
        out.push(&mut self.pool_w);
        out.push(self.clf_w.as_mut_slice());
        out.push(&mut self.clf_b);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: T, other: &Self) {
        let src: Vec<Vec<T>> = other.tensors().iter().map(|t| t.data.to_vec()).collect();
        for (dst, s) in self.slices_mut().into_iter().zip(&src) {
            crate::scalar::axpy(alpha, s, dst);
        }
    }

    /// Name of the first block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name)
    }

    /// Checks every block against the shapes implied by `hyper` and `num_paths`.
    pub fn check_shapes(&self, hyper: &HyperParams, num_paths: usize) -> Result<(), HanError> {
        let expected = Self::init(hyper, num_paths, 0);
        let want = expected.tensors();
        let got = self.tensors();
        if want.len() != got.len() {
            return Err(HanError::Shape {
                name: "<model>".into(),
                reason: format!("{} parameter blocks, expected {}", got.len(), want.len()),
            });
        }
        for (w, g) in want.iter().zip(&got) {
            if w.name != g.name || w.shape != g.shape || g.data.len() != w.data.len() {
                return Err(HanError::Shape {
                    name: g.name.clone(),
                    reason: format!("shape {:?}, expected {} {:?}", g.shape, w.name, w.shape),
                });
            }
        }
        if let Some(name) = self.first_non_finite() {
            return Err(HanError::Shape {
                name,
                reason: "non-finite entry".into(),
            });
        }
        Ok(())
    }

    /// Rebuilds parameters from `(name, shape, data)` blocks in [`Self::tensors`] order.
    pub fn from_blocks(
        hyper: &HyperParams,
        num_paths: usize,
        mut lookup: impl FnMut(&str) -> Option<(Vec<usize>, Vec<f64>)>,
    ) -> Result<Self, HanError> {
        hyper.validate()?;
        let mut params = Self::init(hyper, num_paths, 0);
        let names: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|t| (t.name, t.shape))
            .collect();
        for ((name, shape), dst) in names.iter().zip(params.slices_mut()) {
            let (got_shape, data) = lookup(name).ok_or_else(|| HanError::Shape {
                name: name.clone(),
                reason: "missing".into(),
            })?;
            if &got_shape != shape || data.len() != dst.len() {
                return Err(HanError::Shape {
                    name: name.clone(),
                    reason: format!("shape {got_shape:?} with {} values, expected {shape:?}", data.len()),
                });
            }
            for (d, v) in dst.iter_mut().zip(data) {
                *d = T::of(v);
            }
        }
        params.check_shapes(hyper, num_paths)?;
        Ok(params)
    }
}
