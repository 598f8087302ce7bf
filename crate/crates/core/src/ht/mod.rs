//! Hierarchical Tucker tensors over a binary dimension tree.
//!
//! Every node `t` stores one matrix. At a leaf it is the frame `U_t`
//! (`n_μ × r_t`). At an inner node with sons `t1, t2` it is the transfer
//! tensor flattened to `(r_t1·r_t2) × r_t`: column `i` holds the `r_t1 × r_t2`
//! matrix `B_t[i]` in column-major order, so that
//! `U_t[:, i] = Σ B_t[i][i1, i2] · U_t1[:, i1] ⊗ U_t2[:, i2]`.
//! The root has rank 1.

mod dense;
mod tree;
mod truncate;

use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::cp::{CpOperator, CpVector, Factor, ModeLayout};
use crate::error::{Error, Result};

pub use dense::{best_rank_one, DenseTensor, DENSE_ENTRY_CAP};
pub use tree::{DimensionTree, TreeNode};
pub use truncate::{TruncationPolicy, TruncationReport};

#[derive(Clone, Debug)]
pub struct HtTensor {
    tree: Arc<DimensionTree>,
    dims: Vec<usize>,
    data: Vec<DMatrix<f64>>,
}

impl HtTensor {
    /// Canonical zero: unit leaf columns, unit inner transfers, zero root.
    pub fn zeros(tree: Arc<DimensionTree>, dims: &[usize]) -> Result<Self> {
        check_dims(&tree, dims)?;
        let data = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(t, node)| {
                let value = if t == tree.root() { 0.0 } else { 1.0 };
                if node.is_leaf() {
                    let mut u = DMatrix::zeros(dims[node.modes.start], 1);
                    u[(0, 0)] = value;
                    u
                } else {
                    DMatrix::from_element(1, 1, value)
                }
            })
            .collect();
        Ok(Self {
            tree,
            dims: dims.to_vec(),
            data,
        })
    }

    /// HT representation of a CP vector with every node rank equal to the CP rank.
    pub fn from_cp(x: &CpVector, tree: Arc<DimensionTree>) -> Result<Self> {
        let dims = x.layout().dims().to_vec();
        check_dims(&tree, &dims)?;
        let r = x.rank();
        if r == 0 {
            return Self::zeros(tree, &dims);
        }
        let root = tree.root();
        let data = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(t, node)| {
                if node.is_leaf() {
                    let mu = node.modes.start;
                    let mut u = DMatrix::zeros(dims[mu], r);
                    for (s, term) in x.terms().iter().enumerate() {
                        u.set_column(s, &term[mu]);
                    }
                    if t == root {
                        let sum = u.column_sum();
                        return DMatrix::from_column_slice(dims[mu], 1, sum.as_slice());
                    }
                    u
                } else {
                    let cols = if t == root { 1 } else { r };
                    let mut b = DMatrix::zeros(r * r, cols);
                    for s in 0..r {
                        b[(s + r * s, if t == root { 0 } else { s })] = 1.0;
                    }
                    b
                }
            })
            .collect();
        Ok(Self {
            tree,
            dims,
            data,
        })
    }

    pub(crate) fn from_parts(
        tree: Arc<DimensionTree>,
        dims: Vec<usize>,
        data: Vec<DMatrix<f64>>,
    ) -> Self {
        debug_assert_eq!(data.len(), tree.num_nodes());
        Self { tree, dims, data }
    }

    pub fn tree(&self) -> &Arc<DimensionTree> {
        &self.tree
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layout(&self) -> ModeLayout {
        ModeLayout::new(self.dims.clone()).expect("dims validated at construction")
    }

    /// Leaf frame or flattened transfer tensor of node `t`.
    pub fn node_matrix(&self, t: usize) -> &DMatrix<f64> {
        &self.data[t]
    }

    pub fn rank(&self, t: usize) -> usize {
        self.data[t].ncols()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.data.iter().map(|m| m.ncols()).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.data.iter().map(|m| m.ncols()).max().unwrap_or(1)
    }

    /// Number of stored reals: `Σ_leaves n·r + Σ_inner r_t·r_t1·r_t2`.
    pub fn storage(&self) -> usize {
        self.data.iter().map(|m| m.nrows() * m.ncols()).sum()
    }

    fn same_shape(&self, other: &HtTensor) -> Result<()> {
        if self.dims != other.dims || *self.tree != *other.tree {
            return Err(Error::TreeMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> HtTensor {
        let mut out = self.clone();
        let root = self.tree.root();
        out.data[root] *= alpha;
        out
    }

    pub fn evaluate(&self, index: &[usize]) -> Result<f64> {
        self.layout().linear_index(index)?;
        let mut vecs: Vec<Option<DVector<f64>>> = vec![None; self.data.len()];
        for t in self.tree.post_order() {
            let node = self.tree.node(t);
            let v = match node.children {
                None => self.data[t].row(index[node.modes.start]).transpose(),
                Some((c1, c2)) => {
                    let v1 = vecs[c1].take().unwrap();
                    let v2 = vecs[c2].take().unwrap();
                    self.data[t].tr_mul(&v2.kronecker(&v1))
                }
            };
            vecs[t] = Some(v);
        }
        Ok(vecs[self.tree.root()].take().unwrap()[0])
    }

    /// Fiber along `mode` with all other indices fixed by `index`
    /// (`index[mode]` is ignored).
    pub fn fiber(&self, mode: usize, index: &[usize]) -> Result<DVector<f64>> {
        if mode >= self.dims.len() {
            return Err(Error::IndexOutOfRange(format!("mode {mode}")));
        }
        let mut probe = index.to_vec();
        if probe.len() == self.dims.len() {
            probe[mode] = 0;
        }
        self.layout().linear_index(&probe)?;
        // Each node yields a matrix with one row, or n_mode rows if it
        // contains the free mode.
        let mut mats: Vec<Option<DMatrix<f64>>> = vec![None; self.data.len()];
        for t in self.tree.post_order() {
            let node = self.tree.node(t);
            let m = match node.children {
                None => {
                    let mu = node.modes.start;
                    if mu == mode {
                        self.data[t].clone()
                    } else {
                        self.data[t].rows(index[mu], 1).into_owned()
                    }
                }
                Some((c1, c2)) => {
                    let m1 = mats[c1].take().unwrap();
                    let m2 = mats[c2].take().unwrap();
                    let rows = m1.nrows().max(m2.nrows());
                    let (r1, r2) = (m1.ncols(), m2.ncols());
                    let mut w = DMatrix::zeros(r1 * r2, rows);
                    for row in 0..rows {
                        let v1 = m1.row(if m1.nrows() == 1 { 0 } else { row });
                        let v2 = m2.row(if m2.nrows() == 1 { 0 } else { row });
                        let k = v2.transpose().kronecker(&v1.transpose());
                        w.set_column(row, &k);
                    }
                    (self.data[t].tr_mul(&w)).transpose()
                }
            };
            mats[t] = Some(m);
        }
        Ok(mats[self.tree.root()].take().unwrap().column(0).into_owned())
    }

    /// `alpha·x + y` with block-diagonal transfers; ranks add.
    pub fn axpy(alpha: f64, x: &HtTensor, y: &HtTensor) -> Result<HtTensor> {
        x.same_shape(y)?;
        Ok(linear_combination(&[(alpha, x), (1.0, y)]))
    }

    pub fn inner(x: &HtTensor, y: &HtTensor) -> Result<f64> {
        x.same_shape(y)?;
        let tree = &x.tree;
        let mut grams: Vec<Option<DMatrix<f64>>> = vec![None; x.data.len()];
        for t in tree.post_order() {
            let g = match tree.node(t).children {
                None => x.data[t].tr_mul(&y.data[t]),
                Some((c1, c2)) => {
                    let m1 = grams[c1].take().unwrap();
                    let m2 = grams[c2].take().unwrap();
                    let ty = transform_transfer(&y.data[t], y.rank(c1), y.rank(c2), &m1, &m2);
                    x.data[t].tr_mul(&ty)
                }
            };
            grams[t] = Some(g);
        }
        Ok(grams[tree.root()].take().unwrap()[(0, 0)])
    }

    /// Norm via orthonormalization; unlike `sqrt(inner(x, x))` this keeps
    /// full relative accuracy for tensors arising from cancellation.
    pub fn norm(&self) -> f64 {
        let x = self.orthonormalize();
        x.data[x.tree.root()].norm()
    }

    /// `sqrt(inner(x, x))`, clamped at zero.
    pub fn norm_by_inner(&self) -> f64 {
        HtTensor::inner(self, self).expect("same shape").max(0.0).sqrt()
    }

    /// Applies a CP operator; node ranks multiply by the operator rank.
    pub fn apply(&self, a: &CpOperator) -> Result<HtTensor> {
        if a.domain().dims() != self.dims.as_slice() {
            return Err(Error::LayoutMismatch(
                "operator domain differs from tensor dims".into(),
            ));
        }
        if a.rank() == 0 {
            return HtTensor::zeros(self.tree.clone(), a.range().dims());
        }
        let parts: Vec<HtTensor> = a.terms().iter().map(|term| self.apply_term(term)).collect();
        let weighted: Vec<(f64, &HtTensor)> = parts.iter().map(|p| (1.0, p)).collect();
        Ok(linear_combination(&weighted))
    }

    /// `A·x` accumulated term by term with a truncation after every
    /// addition; ranks stay near those of the result instead of growing by
    /// the operator rank.
    pub fn apply_truncated(&self, a: &CpOperator, policy: &TruncationPolicy) -> Result<HtTensor> {
        if a.domain().dims() != self.dims.as_slice() {
            return Err(Error::LayoutMismatch(
                "operator domain differs from tensor dims".into(),
            ));
        }
        let mut terms = a.terms().iter();
        let Some(first) = terms.next() else {
            return HtTensor::zeros(self.tree.clone(), a.range().dims());
        };
        let mut acc = self.apply_term(first).truncated(policy);
        for term in terms {
            let next = self.apply_term(term);
            acc = linear_combination(&[(1.0, &acc), (1.0, &next)]).truncated(policy);
        }
        Ok(acc)
    }

    /// Applies one elementary operator term (leaf frames only change).
    pub fn apply_term(&self, term: &[Factor]) -> HtTensor {
        let mut out = self.clone();
        for (mu, f) in term.iter().enumerate() {
            let leaf = self.tree.leaf(mu);
            if !f.is_identity() {
                out.data[leaf] = f.apply_mat(&self.data[leaf]);
            }
            out.dims[mu] = f.nrows();
        }
        out
    }

    pub fn to_dense(&self, cap: u128) -> Result<DenseTensor> {
        let layout = self.layout();
        layout.checked_size(cap)?;
        let mut frames: Vec<Option<DMatrix<f64>>> = vec![None; self.data.len()];
        for t in self.tree.post_order() {
            let f = match self.tree.node(t).children {
                None => self.data[t].clone(),
                Some((c1, c2)) => {
                    let u1 = frames[c1].take().unwrap();
                    let u2 = frames[c2].take().unwrap();
                    // Row-major vec(U1·B_i·U2ᵀ) is the column-major vec of
                    // U2·B_iᵀ·U1ᵀ.
                    let swapped = swap_transfer(&self.data[t], self.rank(c1), self.rank(c2));
                    transform_transfer(&swapped, self.rank(c2), self.rank(c1), &u2, &u1)
                }
            };
            frames[t] = Some(f);
        }
        let root = frames[self.tree.root()].take().unwrap();
        DenseTensor::new(self.dims.clone(), DVector::from_column_slice(root.as_slice()))
    }
}

fn check_dims(tree: &DimensionTree, dims: &[usize]) -> Result<()> {
    if tree.num_modes() != dims.len() || dims.contains(&0) {
        return Err(Error::TreeMismatch);
    }
    Ok(())
}

/// `Σ_s c_s·x_s` for tensors on one tree, by block-diagonal concatenation.
/// The weights enter the root only.
pub(crate) fn linear_combination(parts: &[(f64, &HtTensor)]) -> HtTensor {
    let first = parts[0].1;
    let tree = first.tree.clone();
    let root = tree.root();
    let mut data = Vec::with_capacity(first.data.len());
    for (t, node) in tree.nodes().iter().enumerate() {
        let m = match node.children {
            None if t == root => {
                let mut u = DMatrix::zeros(first.data[t].nrows(), 1);
                for (c, x) in parts {
                    u += &x.data[t] * *c;
                }
                u
            }
            None => {
                let cols: usize = parts.iter().map(|(_, x)| x.rank(t)).sum();
                let mut u = DMatrix::zeros(first.data[t].nrows(), cols);
                let mut off = 0;
                for (_, x) in parts {
                    let r = x.rank(t);
                    u.columns_mut(off, r).copy_from(&x.data[t]);
                    off += r;
                }
                u
            }
            Some((c1, c2)) => {
                let r1: usize = parts.iter().map(|(_, x)| x.rank(c1)).sum();
                let r2: usize = parts.iter().map(|(_, x)| x.rank(c2)).sum();
                let cols = if t == root {
                    1
                } else {
                    parts.iter().map(|(_, x)| x.rank(t)).sum()
                };
                let mut b = DMatrix::zeros(r1 * r2, cols);
                let (mut o1, mut o2, mut ot) = (0, 0, 0);
                for (c, x) in parts {
                    let (xr1, xr2, xr) = (x.rank(c1), x.rank(c2), x.rank(t));
                    let scale = if t == root { *c } else { 1.0 };
                    let xb = &x.data[t];
                    for i in 0..xr {
                        let col = if t == root { 0 } else { ot + i };
                        for i2 in 0..xr2 {
                            for i1 in 0..xr1 {
                                let v = xb[(i1 + xr1 * i2, i)];
                                if v != 0.0 {
                                    b[((o1 + i1) + r1 * (o2 + i2), col)] += scale * v;
                                }
                            }
                        }
                    }
                    o1 += xr1;
                    o2 += xr2;
                    ot += xr;
                }
                b
            }
        };
        data.push(m);
    }
    HtTensor {
        tree,
        dims: first.dims.clone(),
        data,
    }
}

/// Column `j` of the result is the column-major vec of `m1·B_j·m2ᵀ`, where
/// `B_j` is the `r1 × r2` matrix stored in column `j` of `b`.
pub(crate) fn transform_transfer(
    b: &DMatrix<f64>,
    r1: usize,
    r2: usize,
    m1: &DMatrix<f64>,
    m2: &DMatrix<f64>,
) -> DMatrix<f64> {
    let r = b.ncols();
    debug_assert_eq!(b.nrows(), r1 * r2);
    let (a1, a2) = (m1.nrows(), m2.nrows());
    let reshaped = DMatrixView::from_slice(b.as_slice(), r1, r2 * r);
    let t = m1 * reshaped;
    let m2t = m2.transpose();
    let mut out = DMatrix::zeros(a1 * a2, r);
    for j in 0..r {
        let oj = t.columns(j * r2, r2) * &m2t;
        out.column_mut(j).copy_from_slice(oj.as_slice());
    }
    out
}

/// Transposes every slice `B_j` (`r1 × r2` becomes `r2 × r1`).
pub(crate) fn swap_transfer(b: &DMatrix<f64>, r1: usize, r2: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for j in 0..b.ncols() {
        for i2 in 0..r2 {
            for i1 in 0..r1 {
                out[(i2 + r2 * i1, j)] = b[(i1 + r1 * i2, j)];
            }
        }
    }
    out
}
