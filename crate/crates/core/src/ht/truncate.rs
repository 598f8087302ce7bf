use nalgebra::{DMatrix, DMatrixView};

use super::{transform_transfer, HtTensor};

/// Singular values below this fraction of the largest one are always dropped.
const NOISE_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub rel_tolerance: f64,
    pub max_rank: usize,
}

impl TruncationPolicy {
    pub fn new(rel_tolerance: f64, max_rank: usize) -> Self {
        assert!(rel_tolerance > 0.0, "truncation tolerance must be positive");
        assert!(max_rank >= 1, "rank cap must be at least 1");
        Self {
            rel_tolerance,
            max_rank,
        }
    }

    pub fn with_tolerance(&self, rel_tolerance: f64) -> Self {
        Self::new(rel_tolerance, self.max_rank)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationReport {
    /// Norm of the input tensor.
    pub norm: f64,
    /// Node singular values of the input (descending); empty at the root.
    /// The two sons of the root share one spectrum.
    pub singular_values: Vec<Vec<f64>>,
    /// Discarded part per node, `sqrt(Σ_{i>r_t} σ_{t,i}²)`; the second son of
    /// the root repeats the first and is reported as 0.
    pub node_discarded: Vec<f64>,
    /// HSVD error bound `sqrt(Σ_t node_discarded[t]²)`.
    pub error_bound: f64,
    /// False when the rank cap forced the bound above `rel_tolerance·norm`.
    pub within_tolerance: bool,
}

impl HtTensor {
    /// Same tensor with orthonormal frames at every non-root node.
    pub fn orthonormalize(&self) -> HtTensor {
        let tree = self.tree.clone();
        let mut data = self.data.clone();
        let mut rs: Vec<Option<DMatrix<f64>>> = vec![None; data.len()];
        let root = tree.root();
        for t in tree.post_order() {
            if let Some((c1, c2)) = tree.node(t).children {
                let r1 = rs[c1].take().unwrap();
                let r2 = rs[c2].take().unwrap();
                let (k1, k2) = (r1.ncols(), r2.ncols());
                data[t] = transform_transfer(&data[t], k1, k2, &r1, &r2);
            }
            if t != root {
                let qr = std::mem::replace(&mut data[t], DMatrix::zeros(0, 0)).qr();
                data[t] = qr.q();
                rs[t] = Some(qr.r());
            }
        }
        HtTensor::from_parts(tree, self.dims.clone(), data)
    }

    /// Square-root factors `S_t` of the reduced Gramians `G_t = S_t S_tᵀ` of
    /// an orthonormalized tensor, root to leaves. The singular values of
    /// `S_t` are those of the matricization at node `t`, to full precision.
    pub fn gramian_factors(&self) -> Vec<DMatrix<f64>> {
        let tree = &self.tree;
        let mut s: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); self.data.len()];
        s[tree.root()] = DMatrix::from_element(1, 1, 1.0);
        for t in 0..tree.num_nodes() {
            let Some((c1, c2)) = tree.node(t).children else {
                continue;
            };
            let (r1, r2) = (self.rank(c1), self.rank(c2));
            let w = &self.data[t] * &s[t];
            let r = w.ncols();
            let m1 = DMatrixView::from_slice(w.as_slice(), r1, r2 * r).into_owned();
            let mut m2 = DMatrix::zeros(r2, r1 * r);
            for j in 0..r {
                let wj = DMatrixView::from_slice(&w.as_slice()[j * r1 * r2..(j + 1) * r1 * r2], r1, r2);
                m2.columns_mut(j * r1, r1).copy_from(&wj.transpose());
            }
            s[c1] = left_factor(m1);
            s[c2] = left_factor(m2);
        }
        s
    }

    /// Reduced Gramians `G_t = S_t S_tᵀ`; the eigenvalues are the squared
    /// singular values of the matricization at node `t`.
    pub fn gramians(&self) -> Vec<DMatrix<f64>> {
        self.gramian_factors().into_iter().map(|f| &f * f.transpose()).collect()
    }

    /// HSVD truncation with node tolerance `tol·‖x‖/√(2m−3)` for `m` modes.
    pub fn truncate(&self, policy: &TruncationPolicy) -> (HtTensor, TruncationReport) {
        let tree = self.tree.clone();
        let n_nodes = tree.num_nodes();
        let m = tree.num_modes();
        let x = self.orthonormalize();
        let root = tree.root();
        let norm = x.data[root].norm();
        if m == 1 || norm == 0.0 {
            let out = if norm == 0.0 {
                HtTensor::zeros(tree, &self.dims).expect("dims valid")
            } else {
                x
            };
            return (
                out,
                TruncationReport {
                    norm,
                    singular_values: vec![Vec::new(); n_nodes],
                    node_discarded: vec![0.0; n_nodes],
                    error_bound: 0.0,
                    within_tolerance: true,
                },
            );
        }
        let factors = x.gramian_factors();
        let eps_node = policy.rel_tolerance * norm / ((2 * m - 3) as f64).sqrt();
        let (root_left, root_right) = tree.node(root).children.expect("m > 1");

        let mut bases: Vec<Option<DMatrix<f64>>> = vec![None; n_nodes];
        let mut singular_values = vec![Vec::new(); n_nodes];
        let mut node_discarded = vec![0.0; n_nodes];
        let mut eig: Vec<Option<(Vec<f64>, DMatrix<f64>)>> = vec![None; n_nodes];
        for t in 1..n_nodes {
            eig[t] = Some(sorted_svd(&factors[t]));
        }
        for t in 0..n_nodes {
            if t == root {
                continue;
            }
            let (sigma, vecs) = eig[t].as_ref().unwrap();
            let keep = if t == root_right {
                // Paired with the left son: same spectrum, one decision.
                let (ls, _) = eig[root_left].as_ref().unwrap();
                let (lk, _) = choose_rank(ls, eps_node, policy.max_rank);
                let (rk, _) = choose_rank(sigma, eps_node, policy.max_rank);
                lk.min(rk).max(1).min(sigma.len())
            } else if t == root_left {
                let (rs, _) = eig[root_right].as_ref().unwrap();
                let (lk, _) = choose_rank(sigma, eps_node, policy.max_rank);
                let (rk, _) = choose_rank(rs, eps_node, policy.max_rank);
                lk.min(rk).max(1).min(sigma.len())
            } else {
                choose_rank(sigma, eps_node, policy.max_rank).0
            };
            if t != root_right {
                node_discarded[t] = tail(sigma, keep);
            }
            singular_values[t] = sigma.clone();
            bases[t] = Some(vecs.columns(0, keep).into_owned());
        }

        // Pre-order: sons still hold their unprojected ranks when a parent is
        // projected.
        let mut data = x.data;
        for t in 0..n_nodes {
            let node = tree.node(t);
            let projected = match node.children {
                None => &data[t] * bases[t].as_ref().unwrap(),
                Some((c1, c2)) => {
                    let q1t = bases[c1].as_ref().unwrap().transpose();
                    let q2t = bases[c2].as_ref().unwrap().transpose();
                    let (r1, r2) = (data[c1].ncols(), data[c2].ncols());
                    let b = transform_transfer(&data[t], r1, r2, &q1t, &q2t);
                    match &bases[t] {
                        Some(q) => b * q,
                        None => b,
                    }
                }
            };
            data[t] = projected;
        }
        let error_bound = node_discarded.iter().map(|v| v * v).sum::<f64>().sqrt();
        let within_tolerance = error_bound <= policy.rel_tolerance * norm * (1.0 + 1e-12);
        (
            HtTensor::from_parts(tree, self.dims.clone(), data),
            TruncationReport {
                norm,
                singular_values,
                node_discarded,
                error_bound,
                within_tolerance,
            },
        )
    }

    /// Truncates and discards the report.
    pub fn truncated(&self, policy: &TruncationPolicy) -> HtTensor {
        self.truncate(policy).0
    }
}

/// `U·Σ` from a thin SVD; at least as many columns as rows are kept so the
/// factor spans the whole row space.
fn left_factor(m: DMatrix<f64>) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(rows, rows);
    }
    let svd = m.svd(true, false);
    let u = svd.u.expect("requested");
    let mut f = DMatrix::zeros(rows, rows);
    for (k, sv) in svd.singular_values.iter().enumerate() {
        f.set_column(k, &(u.column(k) * *sv));
    }
    f
}

/// Singular values (descending) and left singular vectors of a Gramian
/// factor, padded to a full basis.
fn sorted_svd(f: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = f.nrows();
    let svd = f.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut vecs = DMatrix::zeros(n, order.len());
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &u.column(i));
    }
    (sigma, vecs)
}

fn tail(sigma: &[f64], keep: usize) -> f64 {
    sigma[keep..].iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Smallest rank whose discarded tail is within `eps`, capped by the noise
/// floor and `max_rank`; at least 1.
fn choose_rank(sigma: &[f64], eps: f64, max_rank: usize) -> (usize, f64) {
    let smax = sigma.first().copied().unwrap_or(0.0);
    let significant = sigma.iter().filter(|&&s| s > NOISE_FLOOR * smax).count();
    // suffix[k] = Σ_{i≥k} σ_i²
    let mut suffix = vec![0.0; sigma.len() + 1];
    for i in (0..sigma.len()).rev() {
        suffix[i] = suffix[i + 1] + sigma[i] * sigma[i];
    }
    let mut keep = sigma.len();
    for k in 1..=sigma.len() {
        if suffix[k].sqrt() <= eps {
            keep = k;
            break;
        }
    }
    let keep = keep.min(significant).min(max_rank).max(1).min(sigma.len().max(1));
    (keep, suffix[keep.min(sigma.len())].sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::{CpVector, ModeLayout};
    use crate::ht::DimensionTree;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_ht(dims: &[usize], rank: usize, seed: u64) -> HtTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = (0..rank)
            .map(|_| {
                dims.iter()
                    .map(|&n| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let cp = CpVector::new(ModeLayout::new(dims.to_vec()).unwrap(), terms).unwrap();
        HtTensor::from_cp(&cp, Arc::new(DimensionTree::balanced(dims.len()))).unwrap()
    }

    #[test]
    fn orthonormal_frames_and_same_tensor() {
        let x = random_ht(&[4, 5, 6, 3], 3, 7).scaled(7.0);
        let y = x.orthonormalize();
        let dx = x.to_dense(1 << 20).unwrap();
        let dy = y.to_dense(1 << 20).unwrap();
        assert!((dx.data() - dy.data()).norm() <= 1e-12 * dx.data().norm());
        let root = y.tree().root();
        assert!((y.node_matrix(root).norm() - x.norm()).abs() <= 1e-12 * x.norm());
        for t in 1..y.tree().num_nodes() {
            let f = y.implied_frame(t);
            let g = f.tr_mul(&f);
            assert!((g - DMatrix::identity(f.ncols(), f.ncols())).amax() < 1e-12);
        }
    }

    #[test]
    fn exact_rank_is_preserved() {
        let x = random_ht(&[4, 5, 6], 2, 8);
        let (y, rep) = x.truncate(&TruncationPolicy::new(1e-7, 100));
        assert!(y.ranks().iter().all(|&r| r <= 2));
        let diff = HtTensor::axpy(-1.0, &x, &y).unwrap();
        assert!(diff.norm() <= 1e-12 * x.norm());
        assert!(rep.within_tolerance);
    }

    #[test]
    fn choose_rank_rules() {
        let s = [3.0, 2.0, 1e-3, 1e-20];
        assert_eq!(choose_rank(&s, 1e-2, 10).0, 2);
        assert_eq!(choose_rank(&s, 0.0, 10).0, 3);
        assert_eq!(choose_rank(&s, 0.0, 1).0, 1);
    }
}
