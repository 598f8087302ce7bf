//! Finite-difference discretization of the parametric cookie problem
//! `−∇·(σ(x,p)∇u) = f`, `σ = 1 + Σ_ν p^(ν)·χ_{Ω_ν}`, with homogeneous
//! Dirichlet boundary conditions.
//!
//! Spatial unknowns are interior grid nodes; in 2D node `(ix, iy)` has index
//! `iy·n + ix`. The operator on level `ℓ` is affine,
//! `A_ℓ(p) = A_ℓ^(0) + Σ_ν p^(ν)·A_ℓ^(ν)`, with the finest level assembled
//! from stencils and every coarser level obtained by Galerkin coarsening.

mod stencil;
mod transfer;

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::cp::{CpOperator, CpVector, Factor, ModeLayout};
use crate::error::{Error, Result};

pub use stencil::{stencil_1d, stencil_2d, FivePoint};
pub use transfer::{galerkin_product, prolongation_1d, restriction_1d, transfer_matrices};

/// Axis-aligned box `[lo_k, hi_k]` per spatial axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi }
    }

    /// Closed-box membership with a small tolerance for rounded coordinates.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    fn separated_from(&self, other: &AxisBox) -> bool {
        (0..self.lo.len()).any(|k| self.hi[k] < other.lo[k] || other.hi[k] < self.lo[k])
    }
}

/// Square (or interval) domain with disjoint axis-aligned cookies.
#[derive(Clone, Debug, PartialEq)]
pub struct CookieGeometry {
    spatial_dim: usize,
    lo: f64,
    hi: f64,
    cookies: Vec<AxisBox>,
}

impl CookieGeometry {
    /// Domain `[lo, hi]^spatial_dim`; cookies must lie inside it and be
    /// pairwise separated by a positive gap.
    pub fn new(spatial_dim: usize, lo: f64, hi: f64, cookies: Vec<AxisBox>) -> Result<Self> {
        if spatial_dim != 1 && spatial_dim != 2 {
            return Err(Error::Geometry(format!(
                "spatial dimension must be 1 or 2, got {spatial_dim}"
            )));
        }
        if !(hi > lo) {
            return Err(Error::Geometry(format!("empty domain [{lo}, {hi}]")));
        }
        for (nu, c) in cookies.iter().enumerate() {
            if c.lo.len() != spatial_dim || c.hi.len() != spatial_dim {
                return Err(Error::Geometry(format!(
                    "cookie {} has wrong number of coordinates",
                    nu + 1
                )));
            }
            for k in 0..spatial_dim {
                if !(c.lo[k] < c.hi[k]) || c.lo[k] <= lo || c.hi[k] >= hi {
                    return Err(Error::Geometry(format!(
                        "cookie {} must be a nonempty box strictly inside the domain",
                        nu + 1
                    )));
                }
            }
        }
        for a in 0..cookies.len() {
            for b in a + 1..cookies.len() {
                if !cookies[a].separated_from(&cookies[b]) {
                    return Err(Error::Geometry(format!(
                        "cookies {} and {} touch or overlap",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        Ok(Self {
            spatial_dim,
            lo,
            hi,
            cookies,
        })
    }

    /// Two cookies on the unit square, `[1/7,3/7]×[4/7,6/7]` and
    /// `[4/7,6/7]×[1/7,3/7]`.
    pub fn two_cookie() -> Self {
        let s = 1.0 / 7.0;
        Self::new(
            2,
            0.0,
            1.0,
            vec![
                AxisBox::new(vec![s, 4.0 * s], vec![3.0 * s, 6.0 * s]),
                AxisBox::new(vec![4.0 * s, s], vec![6.0 * s, 3.0 * s]),
            ],
        )
        .expect("two-cookie geometry is valid")
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn cookies(&self) -> &[AxisBox] {
        &self.cookies
    }

    pub fn num_params(&self) -> usize {
        self.cookies.len()
    }
}

/// Uniform grid of `n` interior points per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridLevel {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub spatial_dim: usize,
}

impl GridLevel {
    /// Level `ℓ` of a hierarchy whose coarsest grid has `n0` points per axis:
    /// `n_ℓ = (n0+1)·2^ℓ − 1`.
    pub fn new(level: usize, n0: usize, length: f64, spatial_dim: usize) -> Self {
        let n = (n0 + 1) * (1 << level) - 1;
        Self {
            level,
            n,
            h: length / (n + 1) as f64,
            spatial_dim,
        }
    }

    /// Number of spatial unknowns.
    pub fn size(&self) -> usize {
        self.n.pow(self.spatial_dim as u32)
    }
}

/// Nonnegative, strictly increasing samples for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGrid {
    samples: Vec<Vec<f64>>,
}

impl ParameterGrid {
    /// `samples[ν−1]` holds the values of `p^(ν)`.
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        for (k, s) in samples.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidArgument(format!("parameter {} has no samples", k + 1)));
            }
            if s.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "parameter {} has a negative or non-finite sample",
                    k + 1
                )));
            }
            if s.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "samples of parameter {} are not strictly increasing",
                    k + 1
                )));
            }
        }
        Ok(Self { samples })
    }

    /// `count` samples `start + i·step` for each of `num_params` parameters.
    pub fn uniform(num_params: usize, start: f64, step: f64, count: usize) -> Result<Self> {
        let axis: Vec<f64> = (0..count).map(|i| start + i as f64 * step).collect();
        Self::new(vec![axis; num_params])
    }

    pub fn num_params(&self) -> usize {
        self.samples.len()
    }

    /// Samples of parameter `ν` (1-based).
    pub fn samples(&self, nu: usize) -> &[f64] {
        &self.samples[nu - 1]
    }

    /// Parameter value vector `(p^(1), …, p^(d))` at a mode-ordered index
    /// (`index[μ]` indexes `p^(d−μ)`).
    pub fn point(&self, index: &[usize]) -> Vec<f64> {
        let d = self.samples.len();
        (1..=d).map(|nu| self.samples[nu - 1][index[d - nu]]).collect()
    }

    /// Mode sizes of the parameter modes `0..d`.
    pub fn param_dims(&self) -> Vec<usize> {
        let d = self.samples.len();
        (0..d).map(|mu| self.samples[d - 1 - mu].len()).collect()
    }

    /// Every mode-ordered parameter index, mode 0 slowest.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        let dims = self.param_dims();
        let total: usize = dims.iter().product();
        (0..total)
            .map(|mut lin| {
                let mut idx = vec![0; dims.len()];
                for mu in (0..dims.len()).rev() {
                    idx[mu] = lin % dims[mu];
                    lin /= dims[mu];
                }
                idx
            })
            .collect()
    }
}

/// Spatial matrices of one level.
#[derive(Clone, Debug)]
pub struct LevelOperators {
    pub grid: GridLevel,
    /// `A^(0), A^(1), …, A^(d)`.
    pub matrices: Vec<CsrMatrix<f64>>,
    /// Cached diagonals of `matrices`.
    pub diagonals: Vec<DVector<f64>>,
}

impl LevelOperators {
    fn new(grid: GridLevel, matrices: Vec<CsrMatrix<f64>>) -> Self {
        let diagonals = matrices.iter().map(csr_diagonal).collect();
        Self {
            grid,
            matrices,
            diagonals,
        }
    }

    /// Fails if two parameters share a nonzero diagonal entry.
    pub fn check_disjoint(&self) -> Result<()> {
        let d = self.matrices.len() - 1;
        for a in 1..=d {
            for b in a + 1..=d {
                let overlap = self.diagonals[a]
                    .iter()
                    .zip(self.diagonals[b].iter())
                    .any(|(&x, &y)| x * y != 0.0);
                if overlap {
                    return Err(Error::OverlappingSupports {
                        level: self.grid.level,
                        first: a,
                        second: b,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn supports_disjoint(&self) -> bool {
        self.check_disjoint().is_ok()
    }

    /// `A^(0) + Σ_ν p[ν−1]·A^(ν)`.
    pub fn assemble(&self, p: &[f64]) -> CsrMatrix<f64> {
        let mut a = self.matrices[0].clone();
        for (nu, &pv) in p.iter().enumerate() {
            if pv != 0.0 {
                a = &a + &(&self.matrices[nu + 1] * pv);
            }
        }
        a
    }
}

/// Affine operator family on a hierarchy of levels `0..=finest`.
#[derive(Clone, Debug)]
pub struct AffineOperatorFamily {
    geometry: Option<CookieGeometry>,
    levels: Vec<LevelOperators>,
    /// `restrictions[ℓ]` maps level `ℓ` to `ℓ−1` (`None` at level 0).
    restrictions: Vec<Option<CsrMatrix<f64>>>,
    prolongations: Vec<Option<CsrMatrix<f64>>>,
}

impl AffineOperatorFamily {
    /// Single-level family from explicit matrices (no transfers).
    pub fn from_matrices(grid: GridLevel, matrices: Vec<CsrMatrix<f64>>) -> Result<Self> {
        let n = grid.size();
        if matrices.is_empty() || matrices.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::LayoutMismatch(format!(
                "every matrix must be {n}x{n}"
            )));
        }
        let level = LevelOperators::new(grid, matrices);
        check_level(&level, false)?;
        Ok(Self {
            geometry: None,
            levels: vec![level],
            restrictions: vec![None],
            prolongations: vec![None],
        })
    }

    pub fn geometry(&self) -> Option<&CookieGeometry> {
        self.geometry.as_ref()
    }

    pub fn num_params(&self) -> usize {
        self.levels[0].matrices.len() - 1
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> &LevelOperators {
        &self.levels[l]
    }

    pub fn restriction(&self, l: usize) -> Result<&CsrMatrix<f64>> {
        self.restrictions
            .get(l)
            .and_then(Option::as_ref)
            .ok_or(Error::NoTransfer(l))
    }

    pub fn prolongation(&self, l: usize) -> Result<&CsrMatrix<f64>> {
        self.prolongations
            .get(l)
            .and_then(Option::as_ref)
            .ok_or(Error::NoTransfer(l))
    }

    /// Mode layout on level `l`: parameter modes then the spatial mode.
    pub fn layout(&self, pgrid: &ParameterGrid, l: usize) -> Result<ModeLayout> {
        if pgrid.num_params() != self.num_params() {
            return Err(Error::LayoutMismatch(format!(
                "parameter grid has {} parameters, family has {}",
                pgrid.num_params(),
                self.num_params()
            )));
        }
        let mut dims = pgrid.param_dims();
        dims.push(self.levels[l].grid.size());
        ModeLayout::new(dims)
    }
}

/// Assembles the finest level `max_level` from stencils and every coarser
/// level by Galerkin coarsening; the coarsest grid has `n0` points per axis.
pub fn assemble_affine_family(
    geom: &CookieGeometry,
    n0: usize,
    max_level: usize,
) -> Result<AffineOperatorFamily> {
    let (lo, hi) = geom.domain();
    let finest = GridLevel::new(max_level, n0, hi - lo, geom.spatial_dim());
    let matrices = assemble_finest(geom, &finest);
    let mut levels = vec![LevelOperators::new(finest, matrices)];
    let mut restrictions = vec![];
    let mut prolongations = vec![];
    for l in (1..=max_level).rev() {
        let fine = levels.last().unwrap();
        let (r, p) = transfer_matrices(fine.grid.n, geom.spatial_dim());
        let coarse_grid = GridLevel::new(l - 1, n0, hi - lo, geom.spatial_dim());
        let coarse = fine
            .matrices
            .iter()
            .map(|a| galerkin_product(&r, a, &p))
            .collect();
        levels.push(LevelOperators::new(coarse_grid, coarse));
        restrictions.push(Some(r));
        prolongations.push(Some(p));
    }
    levels.reverse();
    restrictions.push(None);
    restrictions.reverse();
    prolongations.push(None);
    prolongations.reverse();
    // Galerkin coarsening widens the diagonal supports by about one coarse
    // cell per level, so only the stencil level is required to keep the
    // cookies' supports apart; coarse levels report it via
    // `LevelOperators::supports_disjoint`.
    for level in &levels {
        check_level(level, level.grid.level == max_level)?;
    }
    Ok(AffineOperatorFamily {
        geometry: Some(geom.clone()),
        levels,
        restrictions,
        prolongations,
    })
}

fn assemble_finest(geom: &CookieGeometry, grid: &GridLevel) -> Vec<CsrMatrix<f64>> {
    let (lo, hi) = geom.domain();
    let tol = 1e-12 * (hi - lo);
    let n = grid.n;
    let coord = |i: isize| lo + (i + 1) as f64 * grid.h;
    let ones = |_: &[f64]| 1.0;
    let mut coefficients: Vec<Box<dyn Fn(&[f64]) -> f64 + '_>> = vec![Box::new(ones)];
    for c in geom.cookies() {
        coefficients.push(Box::new(move |x: &[f64]| if c.contains(x, tol) { 1.0 } else { 0.0 }));
    }
    coefficients
        .iter()
        .map(|sigma| {
            let mut coo = CooMatrix::new(grid.size(), grid.size());
            match grid.spatial_dim {
                1 => {
                    for i in 0..n as isize {
                        let s = |k: isize| sigma(&[coord(k)]);
                        let st = stencil_1d(s(i - 1), s(i), s(i + 1), grid.h);
                        let row = i as usize;
                        push_nonzero(&mut coo, row, row, st[1]);
                        if i > 0 {
                            push_nonzero(&mut coo, row, row - 1, st[0]);
                        }
                        if i + 1 < n as isize {
                            push_nonzero(&mut coo, row, row + 1, st[2]);
                        }
                    }
                }
                _ => {
                    for iy in 0..n as isize {
                        for ix in 0..n as isize {
                            let s = |kx: isize, ky: isize| sigma(&[coord(kx), coord(ky)]);
                            let st = stencil_2d(
                                FivePoint {
                                    center: s(ix, iy),
                                    west: s(ix - 1, iy),
                                    east: s(ix + 1, iy),
                                    south: s(ix, iy - 1),
                                    north: s(ix, iy + 1),
                                },
                                grid.h,
                            );
                            let idx = |kx: isize, ky: isize| (ky as usize) * n + kx as usize;
                            let row = idx(ix, iy);
                            push_nonzero(&mut coo, row, row, st.center);
                            if ix > 0 {
                                push_nonzero(&mut coo, row, idx(ix - 1, iy), st.west);
                            }
                            if ix + 1 < n as isize {
                                push_nonzero(&mut coo, row, idx(ix + 1, iy), st.east);
                            }
                            if iy > 0 {
                                push_nonzero(&mut coo, row, idx(ix, iy - 1), st.south);
                            }
                            if iy + 1 < n as isize {
                                push_nonzero(&mut coo, row, idx(ix, iy + 1), st.north);
                            }
                        }
                    }
                }
            }
            CsrMatrix::from(&coo)
        })
        .collect()
}

fn push_nonzero(coo: &mut CooMatrix<f64>, r: usize, c: usize, v: f64) {
    if v != 0.0 {
        coo.push(r, c, v);
    }
}

fn check_level(level: &LevelOperators, require_disjoint: bool) -> Result<()> {
    let d = level.matrices.len() - 1;
    if level.diagonals[0].iter().any(|&v| v <= 0.0) {
        return Err(Error::Geometry(format!(
            "background operator on level {} has a nonpositive diagonal entry",
            level.grid.level
        )));
    }
    for nu in 1..=d {
        if level.diagonals[nu].iter().any(|&v| v < 0.0) {
            return Err(Error::Geometry(format!(
                "operator {nu} on level {} has a negative diagonal entry",
                level.grid.level
            )));
        }
    }
    if require_disjoint {
        level.check_disjoint()?;
    }
    Ok(())
}

/// Single-level 1D family on `(0, 1)` with `n` points: `A^(0)` the σ ≡ 1
/// Laplacian and `A^(ν) = c_ν·diag(1_{S_ν})` for index ranges `S_ν`. Each
/// parameter diagonal takes a single value, which makes it a test bed for
/// the exact exponential-sum inverse.
pub fn diagonal_cookie_family(
    n: usize,
    cookies: &[(std::ops::Range<usize>, f64)],
) -> Result<AffineOperatorFamily> {
    let grid = GridLevel::new(0, n, 1.0, 1);
    let h2 = grid.h * grid.h;
    let mut lap = CooMatrix::new(n, n);
    for i in 0..n {
        lap.push(i, i, 2.0 / h2);
        if i > 0 {
            lap.push(i, i - 1, -1.0 / h2);
        }
        if i + 1 < n {
            lap.push(i, i + 1, -1.0 / h2);
        }
    }
    let mut matrices = vec![CsrMatrix::from(&lap)];
    for (support, c) in cookies {
        if support.end > n || !(*c > 0.0) {
            return Err(Error::Geometry(format!(
                "cookie {support:?} with value {c} does not fit {n} points"
            )));
        }
        let mut coo = CooMatrix::new(n, n);
        for i in support.clone() {
            coo.push(i, i, *c);
        }
        matrices.push(CsrMatrix::from(&coo));
    }
    AffineOperatorFamily::from_matrices(grid, matrices)
}

/// Diagonal of a square CSR matrix (explicit zeros for missing entries).
pub fn csr_diagonal(m: &CsrMatrix<f64>) -> DVector<f64> {
    let mut d = DVector::zeros(m.nrows());
    for (i, row) in m.row_iter().enumerate() {
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            if j == i {
                d[i] += v;
            }
        }
    }
    d
}

/// Rank-(d+1) operator `Σ_ν ⊗_μ A^(ν)(μ)` on level `l`: term `ν ≥ 1` carries
/// `diag(p^(ν))` at mode `d−ν` and `A^(ν)` at the spatial mode.
pub fn assemble_cp_operator(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
) -> Result<CpOperator> {
    let layout = family.layout(pgrid, l)?;
    let d = family.num_params();
    let dims = layout.dims().to_vec();
    let level = family.level(l);
    let terms = (0..=d)
        .map(|nu| {
            let mut term: Vec<Factor> = dims[..d].iter().map(|&n| Factor::Identity(n)).collect();
            if nu > 0 {
                term[d - nu] = Factor::Diagonal(DVector::from_column_slice(pgrid.samples(nu)));
            }
            term.push(Factor::Sparse(level.matrices[nu].clone()));
            term
        })
        .collect();
    CpOperator::new(layout, terms)
}

/// Right-hand side `f ≡ 1` on level `l` (rank 1).
pub fn assemble_rhs(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
) -> Result<CpVector> {
    Ok(CpVector::ones(&family.layout(pgrid, l)?))
}

/// Rank-1 restriction (level `l` → `l−1`) and prolongation (`l−1` → `l`),
/// identity in the parameter modes.
pub fn transfer_ops(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
) -> Result<(CpOperator, CpOperator)> {
    if l == 0 {
        return Err(Error::NoTransfer(0));
    }
    let fine = family.layout(pgrid, l)?;
    let coarse = family.layout(pgrid, l - 1)?;
    let d = family.num_params();
    let ids = || -> Vec<Factor> { fine.dims()[..d].iter().map(|&n| Factor::Identity(n)).collect() };
    let mut r_term = ids();
    r_term.push(Factor::Sparse(family.restriction(l)?.clone()));
    let mut p_term = ids();
    p_term.push(Factor::Sparse(family.prolongation(l)?.clone()));
    let r = CpOperator::rectangular(fine.clone(), coarse.clone(), vec![r_term])?;
    let p = CpOperator::rectangular(coarse, fine, vec![p_term])?;
    Ok((r, p))
}

/// Splits a nonnegative diagonal into `Σ_γ c_γ·Ĩ_γ` with distinct positive
/// values `c_γ` (ascending) and 0/1 indicators. Entries whose values agree to
/// a relative 1e−12 are grouped and represented by their first value.
pub fn diag_decompose(diag: &DVector<f64>) -> Vec<(f64, DVector<f64>)> {
    let mut values: Vec<f64> = diag.iter().copied().filter(|&v| v != 0.0).collect();
    values.sort_by(f64::total_cmp);
    let mut groups: Vec<f64> = Vec::new();
    for v in values {
        match groups.last() {
            Some(&g) if (v - g).abs() <= 1e-12 * g.abs().max(v.abs()) => {}
            _ => groups.push(v),
        }
    }
    groups
        .into_iter()
        .map(|c| {
            let ind = diag.map(|v| {
                if v != 0.0 && (v - c).abs() <= 1e-12 * c.abs().max(v.abs()) {
                    1.0
                } else {
                    0.0
                }
            });
            (c, ind)
        })
        .collect()
}

/// Which diagonal majorant the spectrum bounds refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagVariant {
    /// `D(p) = diag A(p)` over all sampled `p`.
    Exact,
    /// `D̃ = diag A^(0) ⊕ c_1·diag(p^(1)) ⊕ …` with `c_ν = max diag A^(ν)`.
    Tilde,
}

/// Interval `[a, b]` containing the spectrum of the requested diagonal
/// over all sampled parameters.
pub fn spectrum_bounds(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    variant: DiagVariant,
) -> Result<(f64, f64)> {
    family.layout(pgrid, l)?;
    let level = family.level(l);
    let d = family.num_params();
    let pmin = |nu: usize| pgrid.samples(nu)[0];
    let pmax = |nu: usize| *pgrid.samples(nu).last().unwrap();
    let (a, b) = match variant {
        DiagVariant::Exact => {
            // All diagonals are nonnegative, so every entry is monotone in
            // each parameter and the extremes sit at the sample endpoints.
            let mut a = f64::INFINITY;
            let mut b = f64::NEG_INFINITY;
            for i in 0..level.grid.size() {
                let base = level.diagonals[0][i];
                let lo: f64 = (1..=d).map(|nu| pmin(nu) * level.diagonals[nu][i]).sum();
                let hi: f64 = (1..=d).map(|nu| pmax(nu) * level.diagonals[nu][i]).sum();
                a = a.min(base + lo);
                b = b.max(base + hi);
            }
            (a, b)
        }
        DiagVariant::Tilde => {
            let c: Vec<f64> = (1..=d).map(|nu| level.diagonals[nu].max()).collect();
            let lo: f64 = (1..=d).map(|nu| c[nu - 1] * pmin(nu)).sum();
            let hi: f64 = (1..=d).map(|nu| c[nu - 1] * pmax(nu)).sum();
            (level.diagonals[0].min() + lo, level.diagonals[0].max() + hi)
        }
    };
    if !(a > 0.0) {
        return Err(Error::NonPositiveSpectrum(a));
    }
    Ok((a, b))
}
