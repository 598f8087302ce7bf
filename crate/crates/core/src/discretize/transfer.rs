use nalgebra_sparse::{CooMatrix, CsrMatrix};

/// Full-weighting restriction `1/4·(1 2 1)` from `n` fine points to
/// `(n−1)/2` coarse points; coarse node `j` sits at fine node `2j+1`.
pub fn restriction_1d(n_fine: usize) -> CsrMatrix<f64> {
    assert!(n_fine >= 3 && n_fine % 2 == 1, "fine grid must have 2m+1 points");
    let nc = (n_fine - 1) / 2;
    let mut coo = CooMatrix::new(nc, n_fine);
    for j in 0..nc {
        coo.push(j, 2 * j, 0.25);
        coo.push(j, 2 * j + 1, 0.5);
        coo.push(j, 2 * j + 2, 0.25);
    }
    CsrMatrix::from(&coo)
}

/// Linear interpolation `P = 2Rᵀ`.
pub fn prolongation_1d(n_fine: usize) -> CsrMatrix<f64> {
    restriction_1d(n_fine).transpose() * 2.0
}

/// `(R, P)` for a grid with `n_fine` points per axis; in 2D `R = R₁⊗R₁` and
/// `P = P₁⊗P₁ = 4Rᵀ`.
pub fn transfer_matrices(n_fine: usize, spatial_dim: usize) -> (CsrMatrix<f64>, CsrMatrix<f64>) {
    let r = restriction_1d(n_fine);
    let p = prolongation_1d(n_fine);
    match spatial_dim {
        1 => (r, p),
        _ => (kron(&r, &r), kron(&p, &p)),
    }
}

fn kron(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    for (i, j, &v) in a.triplet_iter() {
        for (k, l, &w) in b.triplet_iter() {
            coo.push(i * b.nrows() + k, j * b.ncols() + l, v * w);
        }
    }
    CsrMatrix::from(&coo)
}

/// `R·A·P`, dropping entries that cancel to rounding level.
pub fn galerkin_product(
    r: &CsrMatrix<f64>,
    a: &CsrMatrix<f64>,
    p: &CsrMatrix<f64>,
) -> CsrMatrix<f64> {
    let rap = &(r * a) * p;
    let scale = rap.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut coo = CooMatrix::new(rap.nrows(), rap.ncols());
    for (i, j, &v) in rap.triplet_iter() {
        if v.abs() > 1e-14 * scale {
            coo.push(i, j, v);
        }
    }
    CsrMatrix::from(&coo)
}
