//! Dense per-parameter reference computations on small levels.
//!
//! Everything here assembles `A(p)` explicitly for each sampled parameter and
//! checks a property of the low-rank machinery or a smoothing/convergence
//! bound with dense linear algebra. Sweeps over parameter samples run through
//! [`crate::par::map`].

use nalgebra::{DMatrix, DVector};

use crate::cp::Factor;
use crate::discretize::{AffineOperatorFamily, DiagVariant, ParameterGrid};
use crate::error::{Error, Result};
use crate::expsum::{
    build_inverse_diag_exact, build_inverse_diag_modified, build_tilde_diag, weights_for_interval,
};
use crate::ht::HtTensor;
use crate::multigrid::{Smoother, SmootherKind};
use crate::par::{self, Execution};

/// Largest matrix side the oracle assembles.
pub const DENSE_SIDE_CAP: usize = 4096;
/// Below this side spectral norms come from an SVD, above from power
/// iteration on `MᵀM`.
const SVD_SIDE: usize = 2048;
/// Relative slack on the smoothing bound.
pub const SMOOTHING_SLACK: f64 = 1e-10;

fn to_dense(m: &nalgebra_sparse::CsrMatrix<f64>) -> DMatrix<f64> {
    Factor::Sparse(m.clone()).to_dense()
}

fn check_side(n: usize) -> Result<()> {
    if n > DENSE_SIDE_CAP {
        return Err(Error::SizeCap {
            size: n as u128,
            cap: DENSE_SIDE_CAP as u128,
        });
    }
    Ok(())
}

/// `A^(0) + Σ_ν p^(ν)·A^(ν)` on level `l` as a dense matrix.
pub fn dense_assemble(family: &AffineOperatorFamily, l: usize, p: &[f64]) -> Result<DMatrix<f64>> {
    let level = family.level(l);
    check_side(level.grid.size())?;
    if p.len() != family.num_params() {
        return Err(Error::LayoutMismatch(format!(
            "{} parameter values for {} parameters",
            p.len(),
            family.num_params()
        )));
    }
    Ok(to_dense(&level.assemble(p)))
}

/// Cholesky solve of `A(p)·u = f`.
pub fn dense_solve(
    family: &AffineOperatorFamily,
    l: usize,
    p: &[f64],
    f: &DVector<f64>,
) -> Result<DVector<f64>> {
    let a = dense_assemble(family, l, p)?;
    if f.len() != a.nrows() {
        return Err(Error::LayoutMismatch("right-hand side length".into()));
    }
    let chol = a.cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(f))
}

/// Spectral norm: SVD for small sides, otherwise 100 power steps on `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows().max(m.ncols()) < SVD_SIDE {
        return m.singular_values().iter().copied().fold(0.0, f64::max);
    }
    let mut x = DVector::from_element(m.ncols(), 1.0 / (m.ncols() as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..100 {
        let y = m.tr_mul(&(m * &x));
        let n = y.norm();
        if n == 0.0 {
            return 0.0;
        }
        sigma = n.sqrt();
        x = y / n;
    }
    sigma
}

/// `η₀(ν) = ν^ν / (ν+1)^(ν+1)`, the maximum of `x(1−x)^ν` on `[0, 1]`.
pub fn eta0(nu: usize) -> f64 {
    let n = nu as f64;
    if nu == 0 {
        return 1.0;
    }
    (n * (n / (n + 1.0)).ln() - (n + 1.0).ln()).exp()
}

/// Per-parameter smoother data: the preconditioner `W` (identity for
/// Richardson, the diagonal block of `E` otherwise) and the spectral
/// radius of `W·A(p)`.
struct DenseSmoother {
    a: DMatrix<f64>,
    w: DVector<f64>,
    rho: f64,
}

fn dense_smoother(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    inverse: Option<&crate::cp::CpOperator>,
    index: &[usize],
) -> Result<DenseSmoother> {
    let a = dense_assemble(family, l, &pgrid.point(index))?;
    let w = match inverse {
        Some(e) => crate::discretize::csr_diagonal(&e.block(index)?),
        None => DVector::from_element(a.nrows(), 1.0),
    };
    // W·A is similar to W^½·A·W^½, which is symmetric.
    let ws = w.map(f64::sqrt);
    let sym = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| ws[i] * a[(i, j)] * ws[j]);
    let rho = sym.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max);
    Ok(DenseSmoother { a, w, rho })
}

impl DenseSmoother {
    /// `Id − ω·W·A`.
    fn iteration_matrix(&self, omega: f64) -> DMatrix<f64> {
        let n = self.a.nrows();
        let mut s = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] -= omega * self.w[i] * self.a[(i, j)];
            }
        }
        s
    }
}

fn inverse_for(
    kind: SmootherKind,
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    expsum_k: usize,
) -> Result<Option<crate::cp::CpOperator>> {
    let a = crate::discretize::assemble_cp_operator(family, pgrid, l)?;
    Ok(Smoother::build(kind, Some(1.0), expsum_k, family, pgrid, l, &a)?.inverse)
}

/// Smoothing-property sweep settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingSetup {
    pub kind: SmootherKind,
    pub expsum_k: usize,
    /// `ω(p) = omega_factor·c` with `c = 1/ρ(A(p))` (Richardson, so
    /// `c₀ = omega_factor`) or `c = ω₀(p) = 1/ρ(E·A(p))` (Jacobi kinds).
    pub omega_factor: f64,
    pub nu_max: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingRow {
    pub nu: usize,
    /// Max over samples of `‖A·S^ν‖₂ / ‖A‖₂`.
    pub max_ratio: f64,
    /// Smallest admissible ratio over samples: `1/(2c₀(ν+1))` for
    /// Richardson, `1/(2ω(ν+1))` for the Jacobi kinds.
    pub bound: f64,
    pub eta0: f64,
    /// Samples whose ratio exceeds their own bound.
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingReport {
    pub rows: Vec<SmoothingRow>,
}

impl SmoothingReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }
}

/// Checks `‖A(p)·S(p)^ν‖₂ ≤ b_ν(p)·‖A(p)‖₂` for `ν = 1..=nu_max` at every
/// sample of `pgrid`, with `S = Id − ω·W·A`.
pub fn verify_smoothing(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    setup: &SmoothingSetup,
    exec: Execution,
) -> Result<SmoothingReport> {
    let inverse = inverse_for(setup.kind, family, pgrid, l, setup.expsum_k)?;
    let indices = pgrid.indices();
    // Per sample: (ratio, bound) for every ν.
    let per_sample = par::map(exec, &indices, |index| -> Result<Vec<(f64, f64)>> {
        let ds = dense_smoother(family, pgrid, l, inverse.as_ref(), index)?;
        let omega = setup.omega_factor / ds.rho;
        let s = ds.iteration_matrix(omega);
        let anorm = spectral_norm(&ds.a);
        let mut power = ds.a.clone();
        let mut out = Vec::with_capacity(setup.nu_max);
        for nu in 1..=setup.nu_max {
            power = &power * &s;
            let ratio = spectral_norm(&power) / anorm;
            let nu1 = (nu + 1) as f64;
            let bound = match setup.kind {
                SmootherKind::Richardson => 1.0 / (2.0 * setup.omega_factor * nu1),
                _ => 1.0 / (2.0 * omega * nu1),
            };
            out.push((ratio, bound));
        }
        Ok(out)
    });
    let per_sample: Vec<Vec<(f64, f64)>> = per_sample.into_iter().collect::<Result<_>>()?;
    let rows = (1..=setup.nu_max)
        .map(|nu| {
            let col = per_sample.iter().map(|s| s[nu - 1]);
            SmoothingRow {
                nu,
                max_ratio: col.clone().map(|(r, _)| r).fold(0.0, f64::max),
                bound: col.clone().map(|(_, b)| b).fold(f64::INFINITY, f64::min),
                eta0: eta0(nu),
                violations: col.filter(|(r, b)| *r > b * (1.0 + SMOOTHING_SLACK)).count(),
            }
        })
        .collect();
    Ok(SmoothingReport { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseDiagReport {
    /// `‖D⁻¹ − E_k‖₂` against the diagonal the builder approximates (`D` for
    /// the exact builder, `D̃` for the modified one).
    pub measured: f64,
    pub eps: f64,
    /// Modified builder only: `‖D⁻¹ − E_k(D̃)‖₂`, for which no bound holds.
    pub gap_to_exact: Option<f64>,
}

impl InverseDiagReport {
    pub fn holds(&self) -> bool {
        self.measured <= self.eps
    }
}

/// Dense `diag A(p)` over all samples, mode 0 slowest.
pub fn dense_exact_diagonal(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
) -> Result<DVector<f64>> {
    let layout = family.layout(pgrid, l)?;
    layout.checked_size(crate::ht::DENSE_ENTRY_CAP)?;
    let level = family.level(l);
    let mut out = Vec::new();
    for index in pgrid.indices() {
        let p = pgrid.point(&index);
        let mut d = level.diagonals[0].clone();
        for (nu, pv) in p.iter().enumerate() {
            d += &level.diagonals[nu + 1] * *pv;
        }
        out.extend(d.iter().copied());
    }
    Ok(DVector::from_vec(out))
}

fn max_inverse_error(d: &DVector<f64>, e: &DVector<f64>) -> f64 {
    d.iter()
        .zip(e.iter())
        .map(|(x, y)| (1.0 / x - y).abs())
        .fold(0.0, f64::max)
}

/// Measured error of an exponential-sum inverse diagonal against its
/// certified `eps` (diagonal matrices, so the 2-norm is the max entry).
pub fn verify_inverse_diag(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    k: usize,
    variant: DiagVariant,
) -> Result<InverseDiagReport> {
    let cap = crate::ht::DENSE_ENTRY_CAP;
    let exact = dense_exact_diagonal(family, pgrid, l)?;
    match variant {
        DiagVariant::Exact => {
            let (a, b) = crate::discretize::spectrum_bounds(family, pgrid, l, DiagVariant::Exact)?;
            let w = weights_for_interval(k, a, b)?;
            let e = build_inverse_diag_exact(family, pgrid, l, &w)?.dense_diagonal(cap)?;
            Ok(InverseDiagReport {
                measured: max_inverse_error(&exact, &e),
                eps: w.eps,
                gap_to_exact: None,
            })
        }
        DiagVariant::Tilde => {
            let td = build_tilde_diag(family, pgrid, l)?;
            let (a, b) = td.spectrum();
            let w = weights_for_interval(k, a, b)?;
            let e = build_inverse_diag_modified(&td, &w)?.dense_diagonal(cap)?;
            let tilde = td.to_cp().dense_diagonal(cap)?;
            Ok(InverseDiagReport {
                measured: max_inverse_error(&tilde, &e),
                eps: w.eps,
                gap_to_exact: Some(max_inverse_error(&exact, &e)),
            })
        }
    }
}

/// Max over level pairs and parameter samples of
/// `‖R·A_ℓ(p)·P − A_{ℓ−1}(p)‖∞ / ‖A_{ℓ−1}(p)‖∞` (dense triple products).
pub fn verify_galerkin(
    family: &AffineOperatorFamily,
    samples: &[Vec<f64>],
    exec: Execution,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for l in 1..=family.finest_level() {
        let r = to_dense(family.restriction(l)?);
        let p = to_dense(family.prolongation(l)?);
        let devs = par::map(exec, samples, |pv| -> Result<f64> {
            let fine = dense_assemble(family, l, pv)?;
            let coarse = dense_assemble(family, l - 1, pv)?;
            let rap = &r * fine * &p;
            Ok(inf_norm(&(rap - &coarse)) / inf_norm(&coarse))
        });
        for d in devs {
            worst = worst.max(d?);
        }
    }
    Ok(worst)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Two-grid setup: smoother kind and damping on the fine level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoGridSetup {
    pub kind: SmootherKind,
    pub omega: f64,
    pub expsum_k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoGridTable {
    pub nus: Vec<usize>,
    /// `norms[s][i]`: sample `s`, `ν = nus[i]`.
    pub norms: Vec<Vec<f64>>,
}

impl TwoGridTable {
    /// All norms below 1 for `ν ≥ 2` and nonincreasing in `ν` per sample
    /// (to 1e−12 relative).
    pub fn contracts(&self) -> bool {
        self.norms.iter().all(|row| {
            let below = self
                .nus
                .iter()
                .zip(row)
                .all(|(&nu, &v)| nu < 2 || v < 1.0);
            let monotone = row.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
            below && monotone
        })
    }

    pub fn max_norm(&self) -> f64 {
        self.norms.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Dense `‖(Id − P·A_c⁻¹·R·A)·S^ν‖₂` for level `l` over every sample of
/// `pgrid`; `nus` must be ascending.
pub fn two_grid_contraction(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    nus: &[usize],
    setup: &TwoGridSetup,
    exec: Execution,
) -> Result<TwoGridTable> {
    if l == 0 {
        return Err(Error::NoTransfer(0));
    }
    let inverse = inverse_for(setup.kind, family, pgrid, l, setup.expsum_k)?;
    let r = to_dense(family.restriction(l)?);
    let p = to_dense(family.prolongation(l)?);
    let indices = pgrid.indices();
    let rows = par::map(exec, &indices, |index| -> Result<Vec<f64>> {
        let ds = dense_smoother(family, pgrid, l, inverse.as_ref(), index)?;
        let coarse = dense_assemble(family, l - 1, &pgrid.point(index))?;
        let chol = coarse.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let n = ds.a.nrows();
        let correction = DMatrix::identity(n, n) - &p * chol.solve(&(&r * &ds.a));
        let s = ds.iteration_matrix(setup.omega);
        let mut power = DMatrix::identity(n, n);
        let mut done = 0;
        let mut out = Vec::with_capacity(nus.len());
        for &nu in nus {
            while done < nu {
                power = &power * &s;
                done += 1;
            }
            out.push(spectral_norm(&(&correction * &power)));
        }
        Ok(out)
    });
    Ok(TwoGridTable {
        nus: nus.to_vec(),
        norms: rows.into_iter().collect::<Result<_>>()?,
    })
}

/// Dense solutions of `A(p)·u = f` for every sample, stacked into an HT
/// tensor (mode 0 slowest) with node singular values below `1e−14·σ_max`
/// dropped.
pub fn lifted_solution(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    f: &DVector<f64>,
    tree: std::sync::Arc<crate::ht::DimensionTree>,
    exec: Execution,
) -> Result<HtTensor> {
    let layout = family.layout(pgrid, l)?;
    layout.checked_size(crate::ht::DENSE_ENTRY_CAP)?;
    let indices = pgrid.indices();
    let slices = par::map(exec, &indices, |index| dense_solve(family, l, &pgrid.point(index), f));
    let mut data = Vec::with_capacity(indices.len() * f.len());
    for s in slices {
        data.extend(s?.iter().copied());
    }
    crate::ht::DenseTensor::new(layout.dims().to_vec(), DVector::from_vec(data))?.to_ht(tree, 1e-14)
}

/// Max relative 2-norm error between spatial slices of `x` and dense solves
/// of `A(p)·u = 1` at the given mode-ordered parameter indices.
pub fn slice_error(
    x: &HtTensor,
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    indices: &[Vec<usize>],
    exec: Execution,
) -> Result<f64> {
    let d = family.num_params();
    let n = family.level(l).grid.size();
    let errs = par::map(exec, indices, |index| -> Result<f64> {
        let mut full = index.clone();
        full.push(0);
        let slice = x.fiber(d, &full)?;
        let u = dense_solve(family, l, &pgrid.point(index), &DVector::from_element(n, 1.0))?;
        Ok((slice - &u).norm() / u.norm())
    });
    errs.into_iter()
        .try_fold(0.0f64, |m, e| Ok(m.max(e?)))
}
