use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{swap_transfer, transform_transfer, DimensionTree, HtTensor};
use crate::cp::ModeLayout;
use crate::error::{Error, Result};

/// Default cap on dense tensor conversions.
pub const DENSE_ENTRY_CAP: u128 = 1 << 20;

/// Full tensor, row-major with mode 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: DVector<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: DVector<f64>) -> Result<Self> {
        let size = ModeLayout::new(dims.clone())?.total_size();
        if size != data.len() as u128 {
            return Err(Error::LayoutMismatch(format!(
                "{} entries for a tensor of size {size}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        let lin = index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &n)| acc * n + i);
        self.data[lin]
    }

    /// Matricization with rows indexed by `modes` (in the given order) and
    /// columns by the remaining modes in increasing order, both row-major.
    pub fn matricization(&self, modes: &[usize]) -> DMatrix<f64> {
        let m = self.dims.len();
        let rest: Vec<usize> = (0..m).filter(|mu| !modes.contains(mu)).collect();
        let rows: usize = modes.iter().map(|&mu| self.dims[mu]).product();
        let cols: usize = rest.iter().map(|&mu| self.dims[mu]).product();
        let mut out = DMatrix::zeros(rows, cols);
        let mut idx = vec![0usize; m];
        for lin in 0..self.data.len() {
            let mut rem = lin;
            for mu in (0..m).rev() {
                idx[mu] = rem % self.dims[mu];
                rem /= self.dims[mu];
            }
            let r = modes.iter().fold(0, |acc, &mu| acc * self.dims[mu] + idx[mu]);
            let c = rest.iter().fold(0, |acc, &mu| acc * self.dims[mu] + idx[mu]);
            out[(r, c)] = self.data[lin];
        }
        out
    }

    /// Exact HT representation via node-wise SVDs of the matricizations;
    /// singular values below `rel_cut·σ_max` are dropped.
    pub fn to_ht(&self, tree: Arc<DimensionTree>, rel_cut: f64) -> Result<HtTensor> {
        if tree.num_modes() != self.dims.len() {
            return Err(Error::TreeMismatch);
        }
        let root = tree.root();
        let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(tree.num_nodes());
        for (t, node) in tree.nodes().iter().enumerate() {
            if t == root {
                frames.push(DMatrix::from_column_slice(self.data.len(), 1, self.data.as_slice()));
                continue;
            }
            let modes: Vec<usize> = node.modes.clone().collect();
            let mat = self.matricization(&modes);
            let svd = mat.svd(true, false);
            let u = svd.u.unwrap();
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            let smax = svd.singular_values.max();
            let keep = order
                .iter()
                .filter(|&&i| svd.singular_values[i] > rel_cut * smax)
                .count()
                .max(1);
            let mut f = DMatrix::zeros(u.nrows(), keep);
            for (k, &i) in order.iter().take(keep).enumerate() {
                f.set_column(k, &u.column(i));
            }
            frames.push(f);
        }
        let mut data = Vec::with_capacity(tree.num_nodes());
        for (t, node) in tree.nodes().iter().enumerate() {
            match node.children {
                None => data.push(frames[t].clone()),
                Some((c1, c2)) => {
                    // B_i = U1ᵀ·X_i·U2 with X_i the row-major reshape of
                    // column i of the node frame (columns of U1⊗U2 order).
                    let (u1, u2) = (&frames[c1], &frames[c2]);
                    let (n1, n2) = (u1.nrows(), u2.nrows());
                    let ft = &frames[t];
                    // Column-major reshape n2×n1 is X_iᵀ; transform gives
                    // U2ᵀ·X_iᵀ·U1 = B_iᵀ, then swap back.
                    let bt = transform_transfer(ft, n2, n1, &u2.transpose(), &u1.transpose());
                    data.push(swap_transfer(&bt, u2.ncols(), u1.ncols()));
                }
            }
        }
        Ok(HtTensor::from_parts(tree, self.dims.clone(), data))
    }
}

impl HtTensor {
    /// Dense frame implied at node `t` (rows over the node's modes).
    pub fn implied_frame(&self, t: usize) -> DMatrix<f64> {
        match self.tree.node(t).children {
            None => self.data[t].clone(),
            Some((c1, c2)) => {
                let u1 = self.implied_frame(c1);
                let u2 = self.implied_frame(c2);
                let swapped = swap_transfer(&self.data[t], self.rank(c1), self.rank(c2));
                transform_transfer(&swapped, self.rank(c2), self.rank(c1), &u2, &u1)
            }
        }
    }
}

/// Best rank-1 approximation error of a dense tensor, estimated by
/// alternating least squares (higher-order power method) from an HOSVD start
/// plus `restarts` random starts. The returned value is an upper bound on the
/// optimum.
pub fn best_rank_one(x: &DenseTensor, restarts: usize, seed: u64) -> f64 {
    let m = x.dims().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm2 = x.norm().powi(2);
    let mut best = f64::INFINITY;
    for start in 0..=restarts {
        let mut vs: Vec<DVector<f64>> = (0..m)
            .map(|mu| {
                if start == 0 {
                    let svd = x.matricization(&[mu]).svd(true, false);
                    let i = svd.singular_values.imax();
                    svd.u.unwrap().column(i).into_owned()
                } else {
                    DVector::from_fn(x.dims()[mu], |_, _| rng.gen_range(-1.0..1.0)).normalize()
                }
            })
            .collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let prev = lambda;
            for mu in 0..m {
                let mut v = contract_except(x, &vs, mu);
                let nv = v.norm();
                if nv == 0.0 {
                    break;
                }
                v /= nv;
                lambda = nv;
                vs[mu] = v;
            }
            if (lambda - prev).abs() <= 1e-15 * lambda.max(1e-300) {
                break;
            }
        }
        let err = (norm2 - lambda * lambda).max(0.0).sqrt();
        best = best.min(err);
    }
    best
}

/// Contracts `x` with `vs[ν]` in every mode `ν ≠ mu`.
fn contract_except(x: &DenseTensor, vs: &[DVector<f64>], mu: usize) -> DVector<f64> {
    let dims = x.dims();
    let m = dims.len();
    let mut out = DVector::zeros(dims[mu]);
    let mut idx = vec![0usize; m];
    for lin in 0..x.data().len() {
        let mut rem = lin;
        for nu in (0..m).rev() {
            idx[nu] = rem % dims[nu];
            rem /= dims[nu];
        }
        let mut w = x.data()[lin];
        for nu in 0..m {
            if nu != mu {
                w *= vs[nu][idx[nu]];
            }
        }
        out[idx[mu]] += w;
    }
    out
}
