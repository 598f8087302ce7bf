//! Parameter-dependent V-cycle multigrid in hierarchical Tucker arithmetic.
//!
//! Every level holds the CP operator `A_ℓ`, a smoother and the rank-1 grid
//! transfers. All iterates are HT tensors over (parameters × space) and are
//! truncated after each operation that increases ranks.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cp::{CpOperator, CpVector};
use crate::discretize::{
    assemble_cp_operator, assemble_rhs, spectrum_bounds, transfer_ops, AffineOperatorFamily,
    DiagVariant, ParameterGrid,
};
use crate::error::{Error, Result};
use crate::expsum::{
    build_inverse_diag_exact, build_inverse_diag_modified, build_tilde_diag, weights_for_interval,
};
use crate::ht::{DimensionTree, HtTensor, TruncationPolicy};

pub const POWER_SEED: u64 = 0x5EED;
pub const POWER_ITERATIONS: usize = 50;
const POWER_TOLERANCE: f64 = 1e-6;
const OMEGA_SAFETY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmootherKind {
    /// `u + ω(f − Au)`.
    Richardson,
    /// `u + ω·E_k(D)(f − Au)` with the exact-diagonal exponential sum.
    ApproxJacobi,
    /// `u + ω·E_k(D̃)(f − Au)` with the majorizing Kronecker-sum diagonal.
    ModifiedJacobi,
}

impl SmootherKind {
    pub fn is_jacobi(self) -> bool {
        !matches!(self, SmootherKind::Richardson)
    }
}

/// Damped smoother on one level; Jacobi kinds carry their approximate
/// inverse diagonal.
#[derive(Clone, Debug)]
pub struct Smoother {
    pub kind: SmootherKind,
    pub omega: f64,
    pub inverse: Option<CpOperator>,
}

impl Smoother {
    /// Builds the smoother of level `l`. `omega = None` estimates
    /// `ω = 0.9/ρ` by power iteration.
    pub fn build(
        kind: SmootherKind,
        omega: Option<f64>,
        expsum_k: usize,
        family: &AffineOperatorFamily,
        pgrid: &ParameterGrid,
        l: usize,
        a: &CpOperator,
    ) -> Result<Self> {
        let inverse = match kind {
            SmootherKind::Richardson => None,
            SmootherKind::ApproxJacobi => {
                let (lo, hi) = spectrum_bounds(family, pgrid, l, DiagVariant::Exact)?;
                let w = weights_for_interval(expsum_k, lo, hi)?;
                Some(build_inverse_diag_exact(family, pgrid, l, &w)?)
            }
            SmootherKind::ModifiedJacobi => {
                let td = build_tilde_diag(family, pgrid, l)?;
                let (lo, hi) = td.spectrum();
                let w = weights_for_interval(expsum_k, lo, hi)?;
                Some(build_inverse_diag_modified(&td, &w)?)
            }
        };
        let mut s = Smoother {
            kind,
            omega: 1.0,
            inverse,
        };
        s.omega = match omega {
            Some(w) if w > 0.0 => w,
            Some(w) => return Err(Error::InvalidArgument(format!("damping {w} must be positive"))),
            None => {
                let tree = Arc::new(DimensionTree::balanced(a.domain().num_modes()));
                estimate_omega(a, s.inverse.as_ref(), tree)?.1
            }
        };
        Ok(s)
    }

    /// One damped step `u + ω·E(f − Au)`.
    pub fn step(
        &self,
        a: &CpOperator,
        u: &HtTensor,
        f: &HtTensor,
        policy: &TruncationPolicy,
    ) -> Result<HtTensor> {
        let r = residual(a, u, f, policy)?;
        self.update(u, &r, policy)
    }

    /// `u + ω·E·r` for a precomputed residual `r`.
    fn update(&self, u: &HtTensor, r: &HtTensor, policy: &TruncationPolicy) -> Result<HtTensor> {
        self.update_split(u, r, policy, policy)
    }

    /// As [`Smoother::update`], truncating `E·r` with `correction` and the
    /// sum with `policy`.
    fn update_split(
        &self,
        u: &HtTensor,
        r: &HtTensor,
        correction: &TruncationPolicy,
        policy: &TruncationPolicy,
    ) -> Result<HtTensor> {
        let c = match &self.inverse {
            Some(e) => r.apply_truncated(e, correction)?,
            None => r.clone(),
        };
        Ok(HtTensor::axpy(self.omega, &c, u)?.truncated(policy))
    }
}

/// `f − A·u`, truncated after the application and after the sum.
pub fn residual(
    a: &CpOperator,
    u: &HtTensor,
    f: &HtTensor,
    policy: &TruncationPolicy,
) -> Result<HtTensor> {
    let au = u.apply_truncated(a, policy)?;
    Ok(HtTensor::axpy(-1.0, &au, f)?.truncated(policy))
}

/// `‖f − A·u‖ / ‖f‖` (plain `‖f − A·u‖` when `f = 0`) in the Frobenius norm
/// over the full tensor; the difference is truncated at `policy / 100`.
pub fn relative_residual(
    a: &CpOperator,
    u: &HtTensor,
    f: &HtTensor,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let fine = policy.with_tolerance(policy.rel_tolerance * 1e-2);
    let r = residual(a, u, f, &fine)?.norm();
    let fnorm = f.norm();
    Ok(if fnorm > 0.0 { r / fnorm } else { r })
}

/// Spectral radius of `B = A` (no `inverse`) or `B = E·A` by power iteration
/// from a seeded random rank-1 start, using the Rayleigh quotient
/// `⟨A·Bx, x⟩ / ⟨A·x, x⟩` (`B` is self-adjoint in the `A` inner product).
/// Returns `(ρ, 0.9/ρ)`.
pub fn estimate_omega(
    a: &CpOperator,
    inverse: Option<&CpOperator>,
    tree: Arc<DimensionTree>,
) -> Result<(f64, f64)> {
    let layout = a.domain().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let start: Vec<_> = layout
        .dims()
        .iter()
        .map(|&n| nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let mut x = HtTensor::from_cp(&CpVector::new(layout, vec![start])?, tree)?;
    let policy = TruncationPolicy::new(POWER_TOLERANCE, usize::MAX);
    let apply_b = |x: &HtTensor| -> Result<(HtTensor, HtTensor)> {
        let ax = x.apply_truncated(a, &policy)?;
        let bx = match inverse {
            Some(e) => ax.apply_truncated(e, &policy)?,
            None => ax.clone(),
        };
        Ok((ax, bx))
    };
    let mut rho = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let (ax, bx) = apply_b(&x)?;
        let denom = HtTensor::inner(&ax, &x)?;
        let bnorm = bx.norm();
        if bnorm == 0.0 || denom <= 0.0 {
            return Err(Error::ZeroOperator);
        }
        let abx = bx.apply_truncated(a, &policy)?;
        rho = HtTensor::inner(&abx, &x)? / denom;
        x = bx.scaled(1.0 / bnorm);
    }
    if !(rho > 0.0) {
        return Err(Error::ZeroOperator);
    }
    Ok((rho, OMEGA_SAFETY / rho))
}

/// V-cycle parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleConfig {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub policy: TruncationPolicy,
    pub coarse_tolerance: f64,
    pub coarse_max_sweeps: usize,
    /// Relative truncation tolerance inside the coarse solve.
    pub coarse_truncation: f64,
    /// Outer tolerance on the relative residual.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            pre_smooth: 5,
            post_smooth: 5,
            policy: TruncationPolicy::new(1e-7, usize::MAX),
            coarse_tolerance: 1e-9,
            coarse_max_sweeps: 500,
            coarse_truncation: 1e-7,
            tolerance: 1e-4,
            max_iterations: 100,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pre_smooth == 0 && self.post_smooth == 0 {
            return Err(Error::InvalidArgument("need pre- or post-smoothing".into()));
        }
        if !(self.tolerance > 0.0 && self.coarse_tolerance > 0.0 && self.coarse_truncation > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn coarse_policy(&self) -> TruncationPolicy {
        self.policy.with_tolerance(self.coarse_truncation)
    }
}

/// Solver selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// V-cycles with the given smoother on every level above the coarsest.
    Multigrid(SmootherKind),
    /// Modified Jacobi sweeps on the finest level only.
    PlainJacobi,
}

#[derive(Clone, Debug)]
pub struct Level {
    pub a: CpOperator,
    pub smoother: Smoother,
    /// `(R, P)` between this level and the next coarser one.
    pub transfer: Option<(CpOperator, CpOperator)>,
}

/// Assembled multilevel problem with right-hand side `f ≡ 1` on the finest
/// level.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub family: AffineOperatorFamily,
    pub pgrid: ParameterGrid,
    pub tree: Arc<DimensionTree>,
    pub levels: Vec<Level>,
    /// Modified Jacobi with `ω = 1/2` on level 0, used by the coarse solve.
    pub coarse: Smoother,
    pub rhs: HtTensor,
}

impl Hierarchy {
    pub fn build(
        family: AffineOperatorFamily,
        pgrid: ParameterGrid,
        kind: SmootherKind,
        omega: Option<f64>,
        expsum_k: usize,
    ) -> Result<Self> {
        let tree = Arc::new(DimensionTree::balanced(family.num_params() + 1));
        let mut levels = Vec::new();
        for l in 0..=family.finest_level() {
            let a = assemble_cp_operator(&family, &pgrid, l)?;
            let smoother = Smoother::build(kind, omega, expsum_k, &family, &pgrid, l, &a)?;
            let transfer = if l > 0 {
                Some(transfer_ops(&family, &pgrid, l)?)
            } else {
                None
            };
            levels.push(Level {
                a,
                smoother,
                transfer,
            });
        }
        let coarse = Smoother::build(
            SmootherKind::ModifiedJacobi,
            Some(0.5),
            expsum_k,
            &family,
            &pgrid,
            0,
            &levels[0].a,
        )?;
        let finest = family.finest_level();
        let rhs = HtTensor::from_cp(&assemble_rhs(&family, &pgrid, finest)?, tree.clone())?;
        Ok(Self {
            family,
            pgrid,
            tree,
            levels,
            coarse,
            rhs,
        })
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn zeros(&self, l: usize) -> Result<HtTensor> {
        HtTensor::zeros(self.tree.clone(), self.levels[l].a.domain().dims())
    }

    /// One V-cycle on level `l`.
    pub fn vcycle(&self, l: usize, u: &HtTensor, f: &HtTensor, cfg: &CycleConfig) -> Result<HtTensor> {
        if l == 0 {
            return Ok(self.coarse_solve(u, f, cfg)?.0);
        }
        let level = &self.levels[l];
        let policy = &cfg.policy;
        let mut u = u.clone();
        for _ in 0..cfg.pre_smooth {
            u = level.smoother.step(&level.a, &u, f, policy)?;
        }
        let (r_op, p_op) = level.transfer.as_ref().ok_or(Error::NoTransfer(l))?;
        let r = residual(&level.a, &u, f, policy)?;
        let d = r.apply(r_op)?.truncated(policy);
        let e = self.vcycle(l - 1, &self.zeros(l - 1)?, &d, cfg)?;
        let pe = e.apply(p_op)?.truncated(policy);
        u = HtTensor::axpy(1.0, &pe, &u)?.truncated(policy);
        for _ in 0..cfg.post_smooth {
            u = level.smoother.step(&level.a, &u, f, policy)?;
        }
        Ok(u)
    }

    /// Modified Jacobi sweeps on level 0 until the relative residual drops
    /// below the coarse tolerance, the sweep cap is hit, or the residual
    /// stops decreasing.
    pub fn coarse_solve(
        &self,
        u0: &HtTensor,
        f0: &HtTensor,
        cfg: &CycleConfig,
    ) -> Result<(HtTensor, CoarseReport)> {
        let fnorm = f0.norm();
        if fnorm == 0.0 {
            let report = CoarseReport {
                sweeps: 0,
                residuals: vec![0.0],
                converged: true,
            };
            return Ok((self.zeros(0)?, report));
        }
        let a = &self.levels[0].a;
        let policy = cfg.coarse_policy();
        let mut u = u0.clone();
        let mut residuals = Vec::new();
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        let mut sweeps = 0;
        // The residual and its correction shrink with the sweeps; truncating
        // them relative to ‖f‖ rather than to their own norm keeps their
        // ranks bounded. The previous residual norm stands in for the
        // current one.
        let mut rnorm = fnorm;
        loop {
            let shrinking = policy.with_tolerance((policy.rel_tolerance * fnorm / rnorm).min(0.1));
            let au = u.apply_truncated(a, &policy)?;
            let r = HtTensor::axpy(-1.0, &au, f0)?.truncated(&shrinking);
            rnorm = r.norm();
            let rel = rnorm / fnorm;
            residuals.push(rel);
            if rel <= cfg.coarse_tolerance || sweeps == cfg.coarse_max_sweeps {
                break;
            }
            if rel < best {
                best = rel;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled == 5 {
                    break;
                }
            }
            u = self.coarse.update_split(&u, &r, &shrinking, &policy)?;
            sweeps += 1;
        }
        let converged = *residuals.last().unwrap() <= cfg.coarse_tolerance;
        Ok((
            u,
            CoarseReport {
                sweeps,
                residuals,
                converged,
            },
        ))
    }

    /// Iterates from `u = 0` until the relative residual reaches
    /// `cfg.tolerance` or `cfg.max_iterations` is hit.
    pub fn solve(&self, method: Method, cfg: &CycleConfig) -> Result<(HtTensor, ConvergenceTrace)> {
        self.solve_rhs(method, &self.rhs, cfg)
    }

    /// [`Hierarchy::solve`] for a right-hand side `f` on the finest level.
    pub fn solve_rhs(
        &self,
        method: Method,
        f: &HtTensor,
        cfg: &CycleConfig,
    ) -> Result<(HtTensor, ConvergenceTrace)> {
        cfg.validate()?;
        let start = Instant::now();
        let l = self.finest();
        let level = &self.levels[l];
        let mut u = self.zeros(l)?;
        let mut trace = ConvergenceTrace::default();
        let record = |trace: &mut ConvergenceTrace, it: usize, res: f64, u: &HtTensor| {
            trace.entries.push(TraceEntry {
                iteration: it,
                relative_residual: res,
                max_rank: u.max_rank(),
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        };
        match method {
            Method::Multigrid(_) => {
                let mut res = relative_residual(&level.a, &u, f, &cfg.policy)?;
                record(&mut trace, 0, res, &u);
                let mut it = 0;
                while res > cfg.tolerance && it < cfg.max_iterations {
                    u = if l == 0 {
                        self.coarse_solve(&u, f, cfg)?.0
                    } else {
                        self.vcycle(l, &u, f, cfg)?
                    };
                    it += 1;
                    res = relative_residual(&level.a, &u, f, &cfg.policy)?;
                    record(&mut trace, it, res, &u);
                }
                trace.converged = res <= cfg.tolerance;
            }
            Method::PlainJacobi => {
                // The residual of the current iterate drives the next sweep.
                let fine = cfg.policy.with_tolerance(cfg.policy.rel_tolerance * 1e-2);
                let fnorm = f.norm();
                let scale = if fnorm > 0.0 { 1.0 / fnorm } else { 1.0 };
                let mut it = 0;
                loop {
                    let r = residual(&level.a, &u, f, &fine)?;
                    let res = r.norm() * scale;
                    record(&mut trace, it, res, &u);
                    if res <= cfg.tolerance {
                        trace.converged = true;
                        break;
                    }
                    if it == cfg.max_iterations {
                        break;
                    }
                    u = self.coarse_or_fine_smoother(l).update(&u, &r, &cfg.policy)?;
                    it += 1;
                }
            }
        }
        Ok((u, trace))
    }

    fn coarse_or_fine_smoother(&self, l: usize) -> &Smoother {
        if l == 0 {
            &self.coarse
        } else {
            &self.levels[l].smoother
        }
    }
}

/// Outcome of one coarse solve; `residuals[s]` is the relative residual
/// before sweep `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseReport {
    pub sweeps: usize,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub relative_residual: f64,
    pub max_rank: usize,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
}

impl ConvergenceTrace {
    /// Number of outer iterations performed.
    pub fn iterations(&self) -> usize {
        self.entries.last().map_or(0, |e| e.iteration)
    }

    pub fn final_residual(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.relative_residual)
    }

    pub fn peak_rank(&self) -> usize {
        self.entries.iter().map(|e| e.max_rank).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_affine_family, AxisBox, CookieGeometry};
    use crate::oracle::{dense_assemble, lifted_solution};
    use crate::par::Execution;
    use nalgebra::DVector;

    fn one_d(max_level: usize, samples: usize) -> (AffineOperatorFamily, ParameterGrid) {
        let geom = CookieGeometry::new(1, 0.0, 1.0, vec![AxisBox::new(vec![0.3], vec![0.7])]).unwrap();
        let fam = assemble_affine_family(&geom, 7, max_level).unwrap();
        let step = 1.0 / (samples - 1) as f64;
        (fam, ParameterGrid::uniform(1, 0.0, step, samples).unwrap())
    }

    fn two_d(max_level: usize, samples: usize) -> (AffineOperatorFamily, ParameterGrid) {
        let fam = assemble_affine_family(&CookieGeometry::two_cookie(), 7, max_level).unwrap();
        let step = 1.0 / (samples - 1) as f64;
        (fam, ParameterGrid::uniform(2, 0.0, step, samples).unwrap())
    }

    fn tight() -> TruncationPolicy {
        TruncationPolicy::new(1e-13, usize::MAX)
    }

    /// Dense tensor entries, mode 0 slowest.
    fn dense(x: &HtTensor) -> DVector<f64> {
        x.to_dense(1 << 22).unwrap().data().clone()
    }

    fn exact(h: &Hierarchy) -> HtTensor {
        let l = h.finest();
        let n = h.family.level(l).grid.size();
        let ones = DVector::from_element(n, 1.0);
        lifted_solution(&h.family, &h.pgrid, l, &ones, h.tree.clone(), Execution::Sequential).unwrap()
    }

    #[test]
    fn smoothers_fix_the_exact_solution() {
        let (fam, pgrid) = one_d(1, 5);
        for kind in [SmootherKind::Richardson, SmootherKind::ModifiedJacobi] {
            let h = Hierarchy::build(fam.clone(), pgrid.clone(), kind, None, 10).unwrap();
            let cfg = CycleConfig::default();
            let u = exact(&h);
            let level = &h.levels[1];
            let stepped = level.smoother.step(&level.a, &u, &h.rhs, &cfg.policy).unwrap();
            let res = relative_residual(&level.a, &stepped, &h.rhs, &cfg.policy).unwrap();
            assert!(res <= 1e-6, "{kind:?}: {res}");
            let cycled = h.vcycle(1, &u, &h.rhs, &cfg).unwrap();
            let diff = HtTensor::axpy(-1.0, &cycled, &u).unwrap().norm() / u.norm();
            assert!(diff <= 10.0 * cfg.policy.rel_tolerance, "{kind:?}: {diff}");
        }
    }

    #[test]
    fn richardson_step_is_its_iteration_matrix() {
        let (fam, pgrid) = one_d(0, 4);
        let h = Hierarchy::build(fam.clone(), pgrid.clone(), SmootherKind::Richardson, Some(3e-3), 4).unwrap();
        let level = &h.levels[0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut random = || {
            let terms = (0..2)
                .map(|_| {
                    vec![
                        DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0)),
                        DVector::from_fn(7, |_, _| rng.gen_range(-1.0..1.0)),
                    ]
                })
                .collect();
            HtTensor::from_cp(&CpVector::new(level.a.domain().clone(), terms).unwrap(), h.tree.clone()).unwrap()
        };
        let (u, v) = (random(), random());
        let su = level.smoother.step(&level.a, &u, &h.rhs, &tight()).unwrap();
        let sv = level.smoother.step(&level.a, &v, &h.rhs, &tight()).unwrap();
        let lhs = dense(&su) - dense(&sv);
        let diff = dense(&u) - dense(&v);
        for (s, index) in pgrid.indices().iter().enumerate() {
            let a = dense_assemble(&fam, 0, &pgrid.point(index)).unwrap();
            let smat = nalgebra::DMatrix::identity(7, 7) - a * 3e-3;
            let want = smat * diff.rows(s * 7, 7);
            let got = lhs.rows(s * 7, 7);
            assert!((got - &want).amax() <= 1e-10 * want.amax().max(1.0));
        }
    }

    #[test]
    fn jacobi_step_matches_dense_blockwise_update() {
        let (fam, pgrid) = two_d(1, 5);
        let h = Hierarchy::build(fam.clone(), pgrid.clone(), SmootherKind::ModifiedJacobi, Some(0.5), 10).unwrap();
        let level = &h.levels[1];
        let policy = TruncationPolicy::new(1e-10, usize::MAX);
        let u0 = level.smoother.step(&level.a, &h.zeros(1).unwrap(), &h.rhs, &policy).unwrap();
        let u1 = level.smoother.step(&level.a, &u0, &h.rhs, &policy).unwrap();
        let e = level.smoother.inverse.as_ref().unwrap();
        let (d0, d1) = (dense(&u0), dense(&u1));
        let n = 225;
        for (s, index) in pgrid.indices().iter().enumerate() {
            let a = dense_assemble(&fam, 1, &pgrid.point(index)).unwrap();
            let w = crate::discretize::csr_diagonal(&e.block(index).unwrap());
            let u = d0.rows(s * n, n).into_owned();
            let r = DVector::from_element(n, 1.0) - &a * &u;
            let want = &u + r.component_mul(&w) * 0.5;
            let got = d1.rows(s * n, n);
            assert!((got - &want).amax() <= 1e-6 * want.amax(), "sample {s}");
        }
    }

    #[test]
    fn power_iteration_estimates() {
        let (fam, pgrid) = two_d(1, 3);
        let a = assemble_cp_operator(&fam, &pgrid, 1).unwrap();
        let tree = Arc::new(DimensionTree::balanced(3));
        let (rho, omega) = estimate_omega(&a, None, tree.clone()).unwrap();
        let mut dense_rho: f64 = 0.0;
        for index in pgrid.indices() {
            let m = dense_assemble(&fam, 1, &pgrid.point(&index)).unwrap();
            dense_rho = dense_rho.max(m.symmetric_eigenvalues().max());
        }
        assert!((rho - dense_rho).abs() <= 0.05 * dense_rho, "{rho} vs {dense_rho}");
        assert!(rho <= dense_rho * (1.0 + 1e-9));
        assert_eq!(omega, 0.9 / rho);

        let id = crate::cp::cp_identity(a.domain());
        let (rho, _) = estimate_omega(&id, None, tree.clone()).unwrap();
        assert!((rho - 1.0).abs() <= 1e-12);
        let zero = CpOperator::zero(a.domain().clone());
        assert!(matches!(estimate_omega(&zero, None, tree), Err(Error::ZeroOperator)));

        let s = Smoother::build(SmootherKind::ModifiedJacobi, Some(0.5), 10, &fam, &pgrid, 1, &a).unwrap();
        assert_eq!(s.omega, 0.5);
    }

    #[test]
    fn coarse_solve_matches_dense_solves() {
        let (fam, pgrid) = two_d(0, 5);
        let h = Hierarchy::build(fam.clone(), pgrid.clone(), SmootherKind::ModifiedJacobi, Some(0.5), 10).unwrap();
        let cfg = CycleConfig {
            coarse_max_sweeps: 3000,
            coarse_truncation: 1e-12,
            ..CycleConfig::default()
        };
        let (u, rep) = h.coarse_solve(&h.zeros(0).unwrap(), &h.rhs, &cfg).unwrap();
        assert!(rep.converged, "{:?}", rep.residuals.last());
        assert!(rep.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
        let err = crate::oracle::slice_error(&u, &fam, &pgrid, 0, &pgrid.indices(), Execution::Sequential).unwrap();
        assert!(err <= 1e-7, "{err}");

        let (z, rep) = h.coarse_solve(&h.zeros(0).unwrap(), &h.zeros(0).unwrap(), &cfg).unwrap();
        assert_eq!((rep.sweeps, z.norm()), (0, 0.0));
    }

    #[test]
    fn relative_residual_matches_dense() {
        let (fam, pgrid) = two_d(1, 3);
        let h = Hierarchy::build(fam.clone(), pgrid.clone(), SmootherKind::ModifiedJacobi, Some(0.5), 10).unwrap();
        let level = &h.levels[1];
        let policy = TruncationPolicy::new(1e-7, usize::MAX);
        let r0 = relative_residual(&level.a, &h.zeros(1).unwrap(), &h.rhs, &policy).unwrap();
        assert!((r0 - 1.0).abs() <= 1e-12);
        let mut u = h.zeros(1).unwrap();
        for _ in 0..3 {
            u = level.smoother.step(&level.a, &u, &h.rhs, &policy).unwrap();
        }
        let got = relative_residual(&level.a, &u, &h.rhs, &policy).unwrap();
        let du = dense(&u);
        let n = 225;
        let (mut rr, mut ff) = (0.0, 0.0);
        for (s, index) in pgrid.indices().iter().enumerate() {
            let a = dense_assemble(&fam, 1, &pgrid.point(index)).unwrap();
            let r = DVector::from_element(n, 1.0) - a * du.rows(s * n, n);
            rr += r.norm_squared();
            ff += n as f64;
        }
        let want = (rr / ff).sqrt();
        assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
        let ex = exact(&h);
        assert!(relative_residual(&level.a, &ex, &h.rhs, &policy).unwrap() <= 1e-6);
    }

    #[test]
    fn one_vcycle_reduces_residual() {
        let (fam, pgrid) = two_d(2, 5);
        let h = Hierarchy::build(fam, pgrid, SmootherKind::ModifiedJacobi, Some(0.5), 10).unwrap();
        let cfg = CycleConfig {
            max_iterations: 1,
            ..CycleConfig::default()
        };
        let (_, trace) = h.solve(Method::Multigrid(SmootherKind::ModifiedJacobi), &cfg).unwrap();
        assert_eq!(trace.iterations(), 1);
        assert!(trace.final_residual() <= 0.25, "{}", trace.final_residual());
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let (fam, pgrid) = one_d(1, 3);
        let h = Hierarchy::build(fam, pgrid, SmootherKind::ModifiedJacobi, Some(0.5), 6).unwrap();
        let cfg = CycleConfig::default();
        for method in [Method::Multigrid(SmootherKind::ModifiedJacobi), Method::PlainJacobi] {
            let (u, trace) = h.solve_rhs(method, &h.zeros(1).unwrap(), &cfg).unwrap();
            assert_eq!(trace.iterations(), 0);
            assert!(trace.converged);
            assert_eq!(u.norm(), 0.0);
        }
        let cfg = CycleConfig {
            max_iterations: 0,
            ..cfg
        };
        let (_, trace) = h.solve(Method::PlainJacobi, &cfg).unwrap();
        assert_eq!((trace.entries.len(), trace.converged), (1, false));
    }

    #[test]
    fn rank_cap_and_determinism() {
        let (fam, pgrid) = two_d(1, 5);
        let h = Hierarchy::build(fam, pgrid, SmootherKind::ModifiedJacobi, Some(0.5), 10).unwrap();
        let cfg = CycleConfig {
            policy: TruncationPolicy::new(1e-7, 4),
            max_iterations: 3,
            ..CycleConfig::default()
        };
        let method = Method::Multigrid(SmootherKind::ModifiedJacobi);
        let (u, a) = h.solve(method, &cfg).unwrap();
        assert!(u.max_rank() <= 4);
        assert!(a.entries.iter().all(|e| e.max_rank <= 4));
        let (_, b) = h.solve(method, &cfg).unwrap();
        let strip = |t: &ConvergenceTrace| -> Vec<(usize, u64, usize)> {
            t.entries
                .iter()
                .map(|e| (e.iteration, e.relative_residual.to_bits(), e.max_rank))
                .collect()
        };
        assert_eq!(strip(&a), strip(&b));
    }
}
