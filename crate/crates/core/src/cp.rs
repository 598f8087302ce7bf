//! Canonical-polyadic (Kronecker) representation of operators and vectors.
//!
//! Mode `μ < d` carries parameter `p^(d−μ)`, mode `d` is the spatial mode.
//! Dense conversions use row-major multi-indexing with mode 0 slowest, which
//! is the ordering of the standard Kronecker product `F_0 ⊗ F_1 ⊗ … ⊗ F_d`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Default cap on the side length of dense operator conversions.
pub const DENSE_SIDE_CAP: usize = 4096;

/// Per-mode sizes of a tensor product index set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModeLayout {
    dims: Vec<usize>,
}

impl ModeLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one mode".into()));
        }
        if let Some(mu) = dims.iter().position(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!("mode {mu} has size 0")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_modes(&self) -> usize {
        self.dims.len()
    }

    /// Product of all mode sizes, computed without overflow.
    pub fn total_size(&self) -> u128 {
        self.dims.iter().map(|&n| n as u128).product()
    }

    /// Total size as `usize`, refusing anything above `cap` entries.
    pub fn checked_size(&self, cap: u128) -> Result<usize> {
        let size = self.total_size();
        if size > cap {
            return Err(Error::SizeCap { size, cap });
        }
        Ok(size as usize)
    }

    /// Row-major linear index of a multi-index (mode 0 slowest).
    pub fn linear_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() {
            return Err(Error::IndexOutOfRange(format!(
                "index has {} entries, layout has {} modes",
                index.len(),
                self.dims.len()
            )));
        }
        let mut lin = 0usize;
        for (mu, (&i, &n)) in index.iter().zip(&self.dims).enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfRange(format!("mode {mu}: {i} >= {n}")));
            }
            lin = lin * n + i;
        }
        Ok(lin)
    }
}

/// One Kronecker factor of a CP term.
#[derive(Clone, Debug)]
pub enum Factor {
    Identity(usize),
    Diagonal(DVector<f64>),
    Sparse(CsrMatrix<f64>),
}

impl Factor {
    pub fn nrows(&self) -> usize {
        match self {
            Factor::Identity(n) => *n,
            Factor::Diagonal(d) => d.len(),
            Factor::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Factor::Identity(n) => *n,
            Factor::Diagonal(d) => d.len(),
            Factor::Sparse(m) => m.ncols(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Factor::Identity(_))
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Factor::Identity(_) | Factor::Diagonal(_))
    }

    /// Diagonal entries, if the factor is tagged identity or diagonal.
    pub fn diagonal(&self) -> Option<DVector<f64>> {
        match self {
            Factor::Identity(n) => Some(DVector::from_element(*n, 1.0)),
            Factor::Diagonal(d) => Some(d.clone()),
            Factor::Sparse(_) => None,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Factor {
        match self {
            Factor::Identity(n) => Factor::Diagonal(DVector::from_element(*n, alpha)),
            Factor::Diagonal(d) => Factor::Diagonal(d * alpha),
            Factor::Sparse(m) => Factor::Sparse(m * alpha),
        }
    }

    pub fn transpose(&self) -> Factor {
        match self {
            Factor::Sparse(m) => Factor::Sparse(m.transpose()),
            other => other.clone(),
        }
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Identity(_) => x.clone(),
            Factor::Diagonal(d) => d.component_mul(x),
            Factor::Sparse(m) => {
                let mut y = DVector::zeros(m.nrows());
                for (i, row) in m.row_iter().enumerate() {
                    let mut s = 0.0;
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        s += v * x[j];
                    }
                    y[i] = s;
                }
                y
            }
        }
    }

    /// Applies the factor to every column of `x`.
    pub fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Identity(_) => x.clone(),
            Factor::Diagonal(d) => {
                let mut y = x.clone();
                for mut col in y.column_iter_mut() {
                    col.component_mul_assign(d);
                }
                y
            }
            Factor::Sparse(m) => {
                let mut y = DMatrix::zeros(m.nrows(), x.ncols());
                for c in 0..x.ncols() {
                    let xc = x.column(c);
                    let mut yc = y.column_mut(c);
                    for (i, row) in m.row_iter().enumerate() {
                        let mut s = 0.0;
                        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                            s += v * xc[j];
                        }
                        yc[i] = s;
                    }
                }
                y
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Factor::Identity(n) => DMatrix::identity(*n, *n),
            Factor::Diagonal(d) => DMatrix::from_diagonal(d),
            Factor::Sparse(m) => {
                let mut out = DMatrix::zeros(m.nrows(), m.ncols());
                for (i, j, &v) in m.triplet_iter() {
                    out[(i, j)] += v;
                }
                out
            }
        }
    }

    /// Sparse (CSR) view of the factor, converting tagged forms.
    pub fn to_csr(&self) -> CsrMatrix<f64> {
        match self {
            Factor::Sparse(m) => m.clone(),
            _ => {
                let d = self.diagonal().expect("tagged factor is diagonal");
                let mut coo = CooMatrix::new(d.len(), d.len());
                for (i, &v) in d.iter().enumerate() {
                    coo.push(i, i, v);
                }
                CsrMatrix::from(&coo)
            }
        }
    }
}

/// Sum of Kronecker products of per-mode factors.
///
/// Factors map the domain layout to the range layout mode by mode. For the
/// operators of the solver both layouts coincide; grid transfers change the
/// spatial mode only.
#[derive(Clone, Debug)]
pub struct CpOperator {
    domain: ModeLayout,
    range: ModeLayout,
    terms: Vec<Vec<Factor>>,
}

impl CpOperator {
    /// Square operator on `layout` from a list of terms.
    pub fn new(layout: ModeLayout, terms: Vec<Vec<Factor>>) -> Result<Self> {
        Self::rectangular(layout.clone(), layout, terms)
    }

    pub fn rectangular(
        domain: ModeLayout,
        range: ModeLayout,
        terms: Vec<Vec<Factor>>,
    ) -> Result<Self> {
        if domain.num_modes() != range.num_modes() {
            return Err(Error::LayoutMismatch(
                "domain and range have different numbers of modes".into(),
            ));
        }
        for (t, term) in terms.iter().enumerate() {
            if term.len() != domain.num_modes() {
                return Err(Error::LayoutMismatch(format!(
                    "term {t} has {} factors, expected {}",
                    term.len(),
                    domain.num_modes()
                )));
            }
            for (mu, f) in term.iter().enumerate() {
                if f.ncols() != domain.dims()[mu] || f.nrows() != range.dims()[mu] {
                    return Err(Error::LayoutMismatch(format!(
                        "term {t}, mode {mu}: factor is {}x{}, expected {}x{}",
                        f.nrows(),
                        f.ncols(),
                        range.dims()[mu],
                        domain.dims()[mu]
                    )));
                }
            }
        }
        Ok(Self {
            domain,
            range,
            terms,
        })
    }

    pub fn zero(layout: ModeLayout) -> Self {
        Self {
            domain: layout.clone(),
            range: layout,
            terms: Vec::new(),
        }
    }

    pub fn domain(&self) -> &ModeLayout {
        &self.domain
    }

    pub fn range(&self) -> &ModeLayout {
        &self.range
    }

    /// Layout of a square operator (the domain layout).
    pub fn layout(&self) -> &ModeLayout {
        &self.domain
    }

    pub fn is_square(&self) -> bool {
        self.domain == self.range
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Vec<Factor>] {
        &self.terms
    }

    /// True when every factor of every term is diagonal.
    pub fn is_diagonal(&self) -> bool {
        self.terms.iter().all(|t| t.iter().all(Factor::is_diagonal))
    }

    pub fn scaled(&self, alpha: f64) -> CpOperator {
        let spatial = self.domain.num_modes() - 1;
        let terms = self
            .terms
            .iter()
            .map(|term| {
                let mut term = term.clone();
                term[spatial] = term[spatial].scaled(alpha);
                term
            })
            .collect();
        CpOperator {
            domain: self.domain.clone(),
            range: self.range.clone(),
            terms,
        }
    }

    pub fn transpose(&self) -> CpOperator {
        CpOperator {
            domain: self.range.clone(),
            range: self.domain.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| t.iter().map(Factor::transpose).collect())
                .collect(),
        }
    }

    /// Diagonal of the dense expansion of a square operator whose factors
    /// are all diagonal.
    pub fn dense_diagonal(&self, cap: u128) -> Result<DVector<f64>> {
        let size = self.domain.checked_size(cap)?;
        let mut out = DVector::zeros(size);
        for term in &self.terms {
            let mut acc = DVector::from_element(1, 1.0);
            for f in term {
                let d = f.diagonal().ok_or_else(|| {
                    Error::InvalidArgument("operator has a non-diagonal factor".into())
                })?;
                acc = acc.kronecker(&d);
            }
            out += acc;
        }
        Ok(out)
    }

    /// Restricts a block-diagonal operator (non-spatial factors diagonal) to
    /// one parameter multi-index, returning the spatial matrix.
    pub fn block(&self, param_index: &[usize]) -> Result<CsrMatrix<f64>> {
        let d = self.domain.num_modes() - 1;
        if param_index.len() != d {
            return Err(Error::IndexOutOfRange(format!(
                "parameter index has {} entries, expected {d}",
                param_index.len()
            )));
        }
        let (m, n) = (self.range.dims()[d], self.domain.dims()[d]);
        let mut coo = CooMatrix::new(m, n);
        for term in &self.terms {
            let mut scale = 1.0;
            for (mu, &i) in param_index.iter().enumerate() {
                let diag = term[mu].diagonal().ok_or_else(|| {
                    Error::InvalidArgument(format!("mode {mu} factor is not diagonal"))
                })?;
                if i >= diag.len() {
                    return Err(Error::IndexOutOfRange(format!("mode {mu}: {i}")));
                }
                scale *= diag[i];
            }
            if scale == 0.0 {
                continue;
            }
            for (r, c, &v) in term[d].to_csr().triplet_iter() {
                coo.push(r, c, scale * v);
            }
        }
        Ok(CsrMatrix::from(&coo))
    }
}

/// Rank-1 operator with identity factors in every mode.
pub fn cp_identity(layout: &ModeLayout) -> CpOperator {
    let term = layout.dims().iter().map(|&n| Factor::Identity(n)).collect();
    CpOperator {
        domain: layout.clone(),
        range: layout.clone(),
        terms: vec![term],
    }
}

/// `alpha·a + beta·b` by term concatenation; scalars land in the spatial factor.
pub fn cp_combine(alpha: f64, a: &CpOperator, beta: f64, b: &CpOperator) -> Result<CpOperator> {
    if a.domain != b.domain || a.range != b.range {
        return Err(Error::LayoutMismatch("cp_combine operands differ in layout".into()));
    }
    let mut terms = a.scaled(alpha).terms;
    terms.extend(b.scaled(beta).terms);
    Ok(CpOperator {
        domain: a.domain.clone(),
        range: a.range.clone(),
        terms,
    })
}

/// Sum of elementary tensors.
#[derive(Clone, Debug)]
pub struct CpVector {
    layout: ModeLayout,
    terms: Vec<Vec<DVector<f64>>>,
}

impl CpVector {
    pub fn new(layout: ModeLayout, terms: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        for (t, term) in terms.iter().enumerate() {
            if term.len() != layout.num_modes() {
                return Err(Error::LayoutMismatch(format!(
                    "term {t} has {} vectors, expected {}",
                    term.len(),
                    layout.num_modes()
                )));
            }
            for (mu, v) in term.iter().enumerate() {
                if v.len() != layout.dims()[mu] {
                    return Err(Error::LayoutMismatch(format!(
                        "term {t}, mode {mu}: length {} expected {}",
                        v.len(),
                        layout.dims()[mu]
                    )));
                }
            }
        }
        Ok(Self { layout, terms })
    }

    /// Rank-1 tensor of all ones.
    pub fn ones(layout: &ModeLayout) -> Self {
        let term = layout
            .dims()
            .iter()
            .map(|&n| DVector::from_element(n, 1.0))
            .collect();
        Self {
            layout: layout.clone(),
            terms: vec![term],
        }
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Vec<DVector<f64>>] {
        &self.terms
    }

    /// Full tensor in row-major order, refusing more than `cap` entries.
    pub fn to_dense(&self, cap: u128) -> Result<DVector<f64>> {
        let size = self.layout.checked_size(cap)?;
        let mut out = DVector::zeros(size);
        for term in &self.terms {
            let mut acc = DVector::from_element(1, 1.0);
            for v in term {
                acc = acc.kronecker(v);
            }
            out += acc;
        }
        Ok(out)
    }
}

/// Applies `a` term by term to every term of `x`.
pub fn cp_apply(a: &CpOperator, x: &CpVector) -> Result<CpVector> {
    if a.domain != x.layout {
        return Err(Error::LayoutMismatch("operator domain differs from vector layout".into()));
    }
    let mut terms = Vec::with_capacity(a.rank() * x.rank());
    for op in &a.terms {
        for v in &x.terms {
            terms.push(op.iter().zip(v).map(|(f, v)| f.apply_vec(v)).collect());
        }
    }
    Ok(CpVector {
        layout: a.range.clone(),
        terms,
    })
}

/// Dense Kronecker expansion, summing terms in ascending order.
pub fn cp_to_dense(a: &CpOperator) -> Result<DMatrix<f64>> {
    cp_to_dense_capped(a, DENSE_SIDE_CAP)
}

pub fn cp_to_dense_capped(a: &CpOperator, side_cap: usize) -> Result<DMatrix<f64>> {
    let rows = a.range.checked_size(side_cap as u128)?;
    let cols = a.domain.checked_size(side_cap as u128)?;
    let mut out = DMatrix::zeros(rows, cols);
    for term in &a.terms {
        let mut acc = DMatrix::from_element(1, 1, 1.0);
        for f in term {
            acc = acc.kronecker(&f.to_dense());
        }
        out += acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(n, n);
        for i in 0..n {
            coo.push(i, i, 2.0);
            if i > 0 {
                coo.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                coo.push(i, i + 1, -1.0);
            }
        }
        CsrMatrix::from(&coo)
    }

    #[test]
    fn identity_is_dense_identity() {
        let l = ModeLayout::new(vec![2, 3]).unwrap();
        let id = cp_identity(&l);
        assert_eq!(id.rank(), 1);
        assert_eq!(cp_to_dense(&id).unwrap(), DMatrix::identity(6, 6));
    }

    #[test]
    fn two_cookie_layout_identity() {
        let l = ModeLayout::new(vec![101, 101, 3969]).unwrap();
        let id = cp_identity(&l);
        assert_eq!(id.rank(), 1);
        assert!(id.terms()[0].iter().all(Factor::is_identity));
        assert_eq!(l.total_size(), 101 * 101 * 3969);
    }

    #[test]
    fn combine_cancels() {
        let l = ModeLayout::new(vec![2, 2]).unwrap();
        let id = cp_identity(&l);
        let z = cp_combine(1.0, &id, -1.0, &id).unwrap();
        assert_eq!(z.rank(), 2);
        assert_eq!(cp_to_dense(&z).unwrap().amax(), 0.0);
    }

    #[test]
    fn zero_rank_is_zero_matrix() {
        let l = ModeLayout::new(vec![3, 2]).unwrap();
        let z = CpOperator::zero(l);
        assert_eq!(cp_to_dense(&z).unwrap(), DMatrix::zeros(6, 6));
    }

    #[test]
    fn laplace_times_param_diag_on_ones() {
        // dims (5,7): diag(p) ⊗ L applied to ones is p ⊗ (L·1).
        let p = DVector::from_vec(vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let l = ModeLayout::new(vec![5, 7]).unwrap();
        let a = CpOperator::new(
            l.clone(),
            vec![vec![Factor::Diagonal(p.clone()), Factor::Sparse(laplace_1d(7))]],
        )
        .unwrap();
        let x = CpVector::ones(&l);
        let y = cp_apply(&a, &x).unwrap();
        let dense = cp_to_dense(&a).unwrap() * x.to_dense(1 << 20).unwrap();
        let got = y.to_dense(1 << 20).unwrap();
        assert!((dense - &got).amax() < 1e-14);
        // L·1 = (1,0,…,0,1); scaled by p.
        assert_eq!(got[4 * 7], 1.0);
        assert_eq!(got[4 * 7 + 3], 0.0);
    }

    #[test]
    fn size_cap_enforced() {
        let l = ModeLayout::new(vec![100, 100]).unwrap();
        assert!(matches!(
            cp_to_dense(&cp_identity(&l)),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn block_extraction() {
        let p = DVector::from_vec(vec![0.5, 2.0]);
        let l = ModeLayout::new(vec![2, 3]).unwrap();
        let a = CpOperator::new(
            l.clone(),
            vec![
                vec![Factor::Identity(2), Factor::Sparse(laplace_1d(3))],
                vec![Factor::Diagonal(p), Factor::Identity(3)],
            ],
        )
        .unwrap();
        let dense = cp_to_dense(&a).unwrap();
        for i in 0..2 {
            let b = Factor::Sparse(a.block(&[i]).unwrap()).to_dense();
            let ref_block = dense.view((3 * i, 3 * i), (3, 3)).into_owned();
            assert!((b - ref_block).amax() < 1e-15);
        }
    }
}
