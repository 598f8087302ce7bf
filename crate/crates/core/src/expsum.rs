//! Exponential sums `E_k(x) = Σ α_m·exp(−β_m x) ≈ 1/x` and the low-rank
//! approximate inverse diagonals built from them.
//!
//! Weights come from the trapezoidal rule applied to
//! `1/x = ∫ exp(−x·e^t)·e^t dt` with nodes `t_j = t0 + j·h`, so that
//! `α_j = h·e^{t_j}` and `β_j = e^{t_j}`; step and offset are tuned to the
//! sampled sup-error on `[1, R]`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::cp::{CpOperator, Factor, ModeLayout};
use crate::discretize::{
    diag_decompose, spectrum_bounds, AffineOperatorFamily, DiagVariant, ParameterGrid,
};
use crate::error::{Error, Result};

/// Points of the certification grid.
const CERT_POINTS: usize = 10_000;
/// Points of the grid used while tuning.
const TUNE_POINTS: usize = 400;
/// Largest ratio `b/a` that is sampled; beyond it the tail is bounded.
const MAX_SAMPLED_RATIO: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpSumWeights {
    pub a: f64,
    /// Upper end of the interval; may be infinite.
    pub b: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Certified sup-error on `[a, b]`.
    pub eps: f64,
}

impl ExpSumWeights {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a * (-b * x).exp())
            .sum()
    }

    /// Error `|1/x − E(x)|`.
    pub fn error_at(&self, x: f64) -> f64 {
        (1.0 / x - self.eval(x)).abs()
    }

    /// Whether `[lo, hi]` lies inside the weight interval.
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.a <= lo * (1.0 + 1e-12) && self.b >= hi * (1.0 - 1e-12)
    }

    /// Sup-error on `[a, b]`: maximum over a log-spaced grid, with every
    /// sampled local maximum refined by golden-section search, plus an
    /// analytic tail bound when `b/a` exceeds the sampled range.
    pub fn certify(&self) -> f64 {
        let hi = if self.b / self.a > MAX_SAMPLED_RATIO {
            self.a * MAX_SAMPLED_RATIO
        } else {
            self.b
        };
        let xs = log_grid(self.a, hi, CERT_POINTS);
        let errs: Vec<f64> = xs.iter().map(|&x| self.error_at(x)).collect();
        let mut sup = errs.iter().copied().fold(0.0, f64::max);
        for i in 1..xs.len() - 1 {
            if errs[i] >= errs[i - 1] && errs[i] >= errs[i + 1] {
                let (lo, hi) = (xs[i - 1].ln(), xs[i + 1].ln());
                let peak = golden_max(|t| self.error_at(t.exp()), lo, hi, 60);
                sup = sup.max(peak);
            }
        }
        if hi < self.b {
            // For x ≥ hi both 1/x and E(x) are positive and decreasing.
            sup = sup.max((1.0 / hi).max(self.eval(hi)));
        }
        sup * (1.0 + 1e-9)
    }
}

/// Sinc/trapezoid weights on `[1, R]` (`R` may be infinite) with the step and
/// offset tuned for the smallest sampled sup-error.
pub fn sinc_weights(k: usize, r: f64) -> ExpSumWeights {
    assert!(k >= 1, "need at least one term");
    assert!(r > 1.0, "interval [1, R] needs R > 1");
    let hi = r.min(MAX_SAMPLED_RATIO);
    let xs = log_grid(1.0, hi, TUNE_POINTS);
    let tail = r > hi;
    let objective = |h: f64, t0: f64| -> f64 {
        let (alpha, beta) = nodes(k, h, t0);
        let mut worst: f64 = 0.0;
        for &x in &xs {
            let e: f64 = alpha
                .iter()
                .zip(&beta)
                .map(|(a, b)| a * (-b * x).exp())
                .sum();
            worst = worst.max((1.0 / x - e).abs());
        }
        if tail {
            let e: f64 = alpha.iter().zip(&beta).map(|(a, b)| a * (-b * hi).exp()).sum();
            worst = worst.max(e);
        }
        worst
    };
    // Inner problem: best offset for a given step, by a scan followed by a
    // golden-section refinement around the best scanned offset.
    let best_offset = |h: f64| -> (f64, f64) {
        let t_lo = -hi.ln() - 8.0 - (k as f64 - 1.0) * h;
        let t_hi = 4.0;
        let scan = 80;
        let dt = (t_hi - t_lo) / scan as f64;
        let mut best = (f64::INFINITY, t_lo);
        for i in 0..=scan {
            let t0 = t_lo + i as f64 * dt;
            let e = objective(h, t0);
            if e < best.0 {
                best = (e, t0);
            }
        }
        let t0 = golden_min(|t| objective(h, t), best.1 - dt, best.1 + dt, 40);
        let e = objective(h, t0);
        if e < best.0 {
            (e, t0)
        } else {
            best
        }
    };
    let h0 = std::f64::consts::PI / (k as f64).sqrt();
    let scan: Vec<f64> = (0..=24).map(|i| h0 * (0.15 + 0.1 * i as f64)).collect();
    let mut best = (f64::INFINITY, h0, 0.0);
    for &h in &scan {
        let (e, t0) = best_offset(h);
        if e < best.0 {
            best = (e, h, t0);
        }
    }
    let h = golden_min(|h| best_offset(h).0, best.1 - 0.1 * h0, best.1 + 0.1 * h0, 30);
    let (e, t0) = best_offset(h);
    let (h, t0) = if e < best.0 { (h, t0) } else { (best.1, best.2) };
    let (alpha, beta) = nodes(k, h, t0);
    let mut w = ExpSumWeights {
        a: 1.0,
        b: r,
        alpha,
        beta,
        eps: 0.0,
    };
    w.eps = w.certify();
    w
}

fn nodes(k: usize, h: f64, t0: f64) -> (Vec<f64>, Vec<f64>) {
    let beta: Vec<f64> = (0..k).map(|j| (t0 + j as f64 * h).exp()).collect();
    let alpha = beta.iter().map(|b| h * b).collect();
    (alpha, beta)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    let t = golden_min(|x| -f(x), lo, hi, iters);
    f(t)
}

/// Weights for `[a, aR]` from weights on `[1, R]`: `α/a`, `β/a`, `eps/a`.
pub fn scale_weights(w: &ExpSumWeights, a: f64) -> ExpSumWeights {
    assert!(a > 0.0, "scale must be positive");
    ExpSumWeights {
        a: w.a * a,
        b: w.b * a,
        alpha: w.alpha.iter().map(|v| v / a).collect(),
        beta: w.beta.iter().map(|v| v / a).collect(),
        eps: w.eps / a,
    }
}

/// Weights covering `[a, b]` widened by 1% on both ends.
pub fn weights_for_interval(k: usize, a: f64, b: f64) -> Result<ExpSumWeights> {
    if !(a > 0.0) {
        return Err(Error::NonPositiveSpectrum(a));
    }
    let lo = 0.99 * a;
    let hi = 1.01 * b;
    Ok(scale_weights(&sinc_weights(k, hi / lo), lo))
}

/// Parses the text weight format: first line `k R [eps]`, then `k` lines
/// `alpha beta`; `#` starts a comment. The error is re-certified by
/// sampling and the larger of claimed and measured error is kept.
pub fn parse_weights(text: &str) -> Result<ExpSumWeights> {
    let mut header: Option<(usize, f64, f64)> = None;
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| Error::Parse {
            line: line_no,
            msg,
        };
        match header {
            None => {
                if toks.len() < 2 || toks.len() > 3 {
                    return Err(err(format!("expected `k R [eps]`, got `{line}`")));
                }
                let k: usize = toks[0]
                    .parse()
                    .map_err(|_| err(format!("invalid term count `{}`", toks[0])))?;
                let r = parse_real(toks[1]).ok_or_else(|| err(format!("invalid R `{}`", toks[1])))?;
                let claimed = match toks.get(2) {
                    Some(t) => parse_real(t).ok_or_else(|| err(format!("invalid eps `{t}`")))?,
                    None => 0.0,
                };
                if k == 0 || !(r > 1.0) {
                    return Err(err("need k ≥ 1 and R > 1".into()));
                }
                header = Some((k, r, claimed));
            }
            Some((k, _, _)) => {
                if toks.len() != 2 {
                    return Err(err(format!("expected `alpha beta`, got `{line}`")));
                }
                if alpha.len() == k {
                    return Err(err(format!("more than {k} weight lines")));
                }
                let a = parse_real(toks[0]).ok_or_else(|| err(format!("invalid alpha `{}`", toks[0])))?;
                let b = parse_real(toks[1]).ok_or_else(|| err(format!("invalid beta `{}`", toks[1])))?;
                if !(a > 0.0 && b > 0.0) {
                    return Err(err("weights must be positive".into()));
                }
                alpha.push(a);
                beta.push(b);
            }
        }
    }
    let (k, r, claimed) = header.ok_or(Error::Parse {
        line: 1,
        msg: "missing header line".into(),
    })?;
    if alpha.len() != k {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("expected {k} weight lines, found {}", alpha.len()),
        });
    }
    let mut w = ExpSumWeights {
        a: 1.0,
        b: r,
        alpha,
        beta,
        eps: 0.0,
    };
    w.eps = w.certify().max(claimed);
    Ok(w)
}

fn parse_real(tok: &str) -> Option<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Some(f64::INFINITY),
        _ => tok.parse().ok(),
    }
}

pub fn load_weights(path: &Path) -> Result<ExpSumWeights> {
    parse_weights(&std::fs::read_to_string(path)?)
}

/// Text form of weights on `[1, R]`, readable by [`parse_weights`].
pub fn format_weights(w: &ExpSumWeights) -> String {
    let mut out = String::new();
    let r = if w.b.is_infinite() {
        "inf".to_string()
    } else {
        format!("{:e}", w.b / w.a)
    };
    let _ = writeln!(out, "# exponential sum for 1/x on [1, {r}], certified eps {:.6e}", w.eps * w.a);
    let _ = writeln!(out, "{} {}", w.k(), r);
    for (a, b) in w.alpha.iter().zip(&w.beta) {
        let _ = writeln!(out, "{:.17e} {:.17e}", a * w.a, b * w.a);
    }
    out
}

/// `D̃ = Σ_μ Id ⊗ … ⊗ c_{d−μ}·D^(d−μ) ⊗ … ⊗ Id`, a Kronecker sum of
/// diagonals: parameter mode `μ` holds `c_{d−μ}·diag(p^(d−μ))`, the spatial
/// mode `diag(A^(0))` (`c_0 = 1`).
#[derive(Clone, Debug)]
pub struct TildeDiagonal {
    /// `c_{d−μ}` per mode `μ`.
    pub c: Vec<f64>,
    /// `D^(d−μ)` per mode `μ`.
    pub diags: Vec<DVector<f64>>,
}

impl TildeDiagonal {
    /// Scaled diagonal `c_{d−μ}·D^(d−μ)` of mode `μ`.
    pub fn scaled_diag(&self, mu: usize) -> DVector<f64> {
        &self.diags[mu] * self.c[mu]
    }

    pub fn layout(&self) -> ModeLayout {
        ModeLayout::new(self.diags.iter().map(|d| d.len()).collect()).expect("nonempty modes")
    }

    /// Interval containing the spectrum of `D̃`.
    pub fn spectrum(&self) -> (f64, f64) {
        (0..self.diags.len()).fold((0.0, 0.0), |(a, b), mu| {
            let s = self.scaled_diag(mu);
            (a + s.min(), b + s.max())
        })
    }

    /// `D̃` as a CP operator of rank `d+1`.
    pub fn to_cp(&self) -> CpOperator {
        let m = self.diags.len();
        let terms = (0..m)
            .map(|mu| {
                (0..m)
                    .map(|nu| {
                        if nu == mu {
                            Factor::Diagonal(self.scaled_diag(mu))
                        } else {
                            Factor::Identity(self.diags[nu].len())
                        }
                    })
                    .collect()
            })
            .collect();
        CpOperator::new(self.layout(), terms).expect("consistent factors")
    }
}

pub fn build_tilde_diag(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
) -> Result<TildeDiagonal> {
    family.layout(pgrid, l)?;
    let d = family.num_params();
    let level = family.level(l);
    let mut c = Vec::with_capacity(d + 1);
    let mut diags = Vec::with_capacity(d + 1);
    for mu in 0..d {
        let nu = d - mu;
        c.push(level.diagonals[nu].max().max(0.0));
        diags.push(DVector::from_column_slice(pgrid.samples(nu)));
    }
    c.push(1.0);
    diags.push(level.diagonals[0].clone());
    Ok(TildeDiagonal { c, diags })
}

/// `E_k(D̃) = Σ_m α_m ⊗_μ exp(−β_m·c_{d−μ}·D^(d−μ))`, rank `k`.
pub fn build_inverse_diag_modified(td: &TildeDiagonal, w: &ExpSumWeights) -> Result<CpOperator> {
    let (a, b) = td.spectrum();
    if !w.covers(a, b) {
        return Err(Error::IntervalNotCovered {
            have_lo: w.a,
            have_hi: w.b,
            need_lo: a,
            need_hi: b,
        });
    }
    let m = td.diags.len();
    let scaled: Vec<DVector<f64>> = (0..m).map(|mu| td.scaled_diag(mu)).collect();
    let terms = w
        .alpha
        .iter()
        .zip(&w.beta)
        .map(|(&alpha, &beta)| {
            (0..m)
                .map(|mu| {
                    let mut f = scaled[mu].map(|v| (-beta * v).exp());
                    if mu == m - 1 {
                        f *= alpha;
                    }
                    Factor::Diagonal(f)
                })
                .collect()
        })
        .collect();
    CpOperator::new(td.layout(), terms)
}

/// `E_k(D)` for `D(p) = diag A(p)` when every cookie diagonal takes a single
/// value `c_ν` on its support `Ĩ_ν` and the supports are disjoint.
///
/// Term `(m, ν)` has spatial factor `α_m·exp(−β_m·diag A^(0))·Ĩ_ν` and
/// `exp(−β_m·c_ν·p^(ν))` at mode `d−ν`, the mode carrying `p^(ν)`. Spatial
/// indices outside every cookie support get one more term per `m` with
/// identity parameter factors, so the rank is `k·d`, or `k·(d+1)` when the
/// supports do not cover the spatial index set.
pub fn build_inverse_diag_exact(
    family: &AffineOperatorFamily,
    pgrid: &ParameterGrid,
    l: usize,
    w: &ExpSumWeights,
) -> Result<CpOperator> {
    let layout = family.layout(pgrid, l)?;
    let level = family.level(l);
    let d = family.num_params();
    let mut owned = Vec::with_capacity(d);
    for nu in 1..=d {
        let parts = diag_decompose(&level.diagonals[nu]);
        if parts.len() > 1 {
            return Err(Error::MultipleDiagonalValues {
                nu,
                count: parts.len(),
            });
        }
        owned.push(parts.into_iter().next());
    }
    level.check_disjoint()?;
    let (a, b) = spectrum_bounds(family, pgrid, l, DiagVariant::Exact)?;
    if !w.covers(a, b) {
        return Err(Error::IntervalNotCovered {
            have_lo: w.a,
            have_hi: w.b,
            need_lo: a,
            need_hi: b,
        });
    }
    let n = level.grid.size();
    let mut background = DVector::from_element(n, 1.0);
    for (_, ind) in owned.iter().flatten() {
        background -= ind;
    }
    let uncovered = background.iter().any(|&v| v != 0.0);
    let diag0 = &level.diagonals[0];
    let param_ids = || -> Vec<Factor> { layout.dims()[..d].iter().map(|&n| Factor::Identity(n)).collect() };
    let mut terms = Vec::new();
    for (&alpha, &beta) in w.alpha.iter().zip(&w.beta) {
        let spatial = diag0.map(|v| alpha * (-beta * v).exp());
        for nu in 1..=d {
            let Some((c, ind)) = &owned[nu - 1] else { continue };
            let mut term = param_ids();
            let p = DVector::from_column_slice(pgrid.samples(nu));
            term[d - nu] = Factor::Diagonal(p.map(|v| (-beta * c * v).exp()));
            term.push(Factor::Diagonal(spatial.component_mul(ind)));
            terms.push(term);
        }
        if uncovered {
            let mut term = param_ids();
            term.push(Factor::Diagonal(spatial.component_mul(&background)));
            terms.push(term);
        }
    }
    CpOperator::new(layout, terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term_on_short_interval() {
        let w = sinc_weights(1, 10.0);
        assert_eq!(w.k(), 1);
        assert!(w.eps < 1.0);
        assert!(w.alpha[0] > 0.0 && w.beta[0] > 0.0);
    }

    #[test]
    fn eps_decreases_with_k() {
        let e: Vec<f64> = [4, 8, 16].iter().map(|&k| sinc_weights(k, 100.0).eps).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    }

    #[test]
    fn certified_eps_bounds_dense_samples() {
        let w = sinc_weights(6, 50.0);
        for i in 0..=200_000 {
            let x = 1.0 + 49.0 * i as f64 / 200_000.0;
            assert!(w.error_at(x) <= w.eps);
        }
    }

    #[test]
    fn scaling_law() {
        let w = ExpSumWeights {
            a: 1.0,
            b: 5.0,
            alpha: vec![1.0],
            beta: vec![1.0],
            eps: 0.0,
        };
        let s = scale_weights(&w, 2.0);
        assert_eq!((s.alpha[0], s.beta[0]), (0.5, 0.5));
        assert_eq!((s.a, s.b), (2.0, 10.0));
        assert_eq!(scale_weights(&w, 1.0), w);

        let w = sinc_weights(8, 30.0);
        let s = scale_weights(&w, 7.5);
        assert!((s.eps - w.eps / 7.5).abs() <= 1e-12 * s.eps);
        assert!(s.certify() <= s.eps * (1.0 + 1e-8));
    }

    #[test]
    fn infinite_interval_has_tail_bound() {
        let w = sinc_weights(10, f64::INFINITY);
        assert!(w.eps >= 1.0 / MAX_SAMPLED_RATIO);
        assert!(w.eps < 0.1);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let w = parse_weights("# one term\n1 10\n1.0 1.0\n").unwrap();
        assert_eq!(w.eval(2.0), (-2.0f64).exp());
        let bad = parse_weights("2 10\n1.0 1.0\n1.0 oops\n");
        assert!(matches!(bad, Err(Error::Parse { line: 3, .. })));
        assert!(parse_weights("1 10\n-1.0 1.0\n").is_err());

        let w = sinc_weights(5, 20.0);
        let back = parse_weights(&format_weights(&w)).unwrap();
        assert_eq!(back.alpha, w.alpha);
        assert_eq!(back.beta, w.beta);
        assert!((back.eps - w.eps).abs() <= 1e-6 * w.eps);
    }

    #[test]
    fn separable_sum() {
        let w = sinc_weights(10, 20.0);
        for i in 0..40 {
            for j in 0..40 {
                let x = 0.5 + 9.5 * i as f64 / 39.0;
                let y = 0.5 + 9.5 * j as f64 / 39.0;
                let s = x + y;
                let sep: f64 = w
                    .alpha
                    .iter()
                    .zip(&w.beta)
                    .map(|(a, b)| a * (-b * x).exp() * (-b * y).exp())
                    .sum();
                assert!((1.0 / s - sep).abs() <= w.eps);
            }
        }
    }
    fn synthetic() -> (AffineOperatorFamily, ParameterGrid) {
        let fam = crate::discretize::diagonal_cookie_family(9, &[(1..3, 40.0), (5..8, 25.0)]).unwrap();
        let pgrid = ParameterGrid::uniform(2, 0.0, 0.25, 5).unwrap();
        (fam, pgrid)
    }

    /// Dense `diag A(p)` over all parameter indices, mode 0 slowest.
    fn dense_exact_diag(fam: &AffineOperatorFamily, pgrid: &ParameterGrid) -> DVector<f64> {
        let level = fam.level(0);
        let mut out = Vec::new();
        for idx in pgrid.indices() {
            let p = pgrid.point(&idx);
            let mut d = level.diagonals[0].clone();
            for (nu, pv) in p.iter().enumerate() {
                d += &level.diagonals[nu + 1] * *pv;
            }
            out.extend(d.iter().copied());
        }
        DVector::from_vec(out)
    }

    fn max_inverse_error(d: &DVector<f64>, e: &DVector<f64>) -> f64 {
        d.iter().zip(e.iter()).map(|(x, y)| (1.0 / x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn exact_builder_on_single_value_instance() {
        let (fam, pgrid) = synthetic();
        let (a, b) = spectrum_bounds(&fam, &pgrid, 0, DiagVariant::Exact).unwrap();
        let d = dense_exact_diag(&fam, &pgrid);
        assert_eq!(d.len(), 5 * 5 * 9);
        let mut prev = f64::INFINITY;
        for k in [5, 10, 20] {
            let w = weights_for_interval(k, a, b).unwrap();
            let e = build_inverse_diag_exact(&fam, &pgrid, 0, &w).unwrap();
            // Index 0, 3, 4 and 8 are owned by no cookie.
            assert_eq!(e.rank(), 3 * k);
            assert!(e.is_diagonal());
            let err = max_inverse_error(&d, &e.dense_diagonal(1 << 20).unwrap());
            assert!(err <= w.eps, "k={k}: {err} > {}", w.eps);
            assert!(w.eps < prev);
            prev = w.eps;
        }
    }

    #[test]
    fn exact_builder_full_cover_rank() {
        let fam = crate::discretize::diagonal_cookie_family(6, &[(0..3, 10.0), (3..6, 20.0)]).unwrap();
        let pgrid = ParameterGrid::uniform(2, 0.0, 0.5, 3).unwrap();
        let (a, b) = spectrum_bounds(&fam, &pgrid, 0, DiagVariant::Exact).unwrap();
        let w = weights_for_interval(7, a, b).unwrap();
        let e = build_inverse_diag_exact(&fam, &pgrid, 0, &w).unwrap();
        assert_eq!(e.rank(), 7 * 2);
        let err = max_inverse_error(&dense_exact_diag(&fam, &pgrid), &e.dense_diagonal(1 << 20).unwrap());
        assert!(err <= w.eps);
    }

    #[test]
    fn exact_builder_refuses_multiple_values() {
        let geom = crate::discretize::CookieGeometry::new(
            1,
            0.0,
            1.0,
            vec![crate::discretize::AxisBox::new(vec![0.3], vec![0.7])],
        )
        .unwrap();
        let fam = crate::discretize::assemble_affine_family(&geom, 7, 0).unwrap();
        let pgrid = ParameterGrid::uniform(1, 0.0, 0.5, 3).unwrap();
        let w = sinc_weights(4, 1e3);
        let r = build_inverse_diag_exact(&fam, &pgrid, 0, &w);
        assert!(matches!(r, Err(Error::MultipleDiagonalValues { nu: 1, count: 3 })));
    }

    #[test]
    fn modified_builder_bounds_tilde_inverse() {
        let geom = crate::discretize::CookieGeometry::two_cookie();
        let fam = crate::discretize::assemble_affine_family(&geom, 7, 1).unwrap();
        let pgrid = ParameterGrid::uniform(2, 0.0, 0.25, 5).unwrap();
        let td = build_tilde_diag(&fam, &pgrid, 1).unwrap();
        let h = fam.level(1).grid.h;
        assert!((td.c[0] - 4.0 / (h * h)).abs() <= 1e-9 * td.c[0]);
        let (a, b) = td.spectrum();
        assert_eq!((a, b), spectrum_bounds(&fam, &pgrid, 1, DiagVariant::Tilde).unwrap());
        let w = weights_for_interval(10, a, b).unwrap();
        let e = build_inverse_diag_modified(&td, &w).unwrap();
        assert_eq!(e.rank(), 10);
        let dt = td.to_cp().dense_diagonal(1 << 20).unwrap();
        let err = max_inverse_error(&dt, &e.dense_diagonal(1 << 20).unwrap());
        assert!(err <= w.eps, "{err} > {}", w.eps);

        // D̃ majorizes diag A(p) at every sample.
        let d = dense_exact_diag(&fam_level(&fam, 1), &pgrid);
        assert!(dt.iter().zip(d.iter()).all(|(t, x)| t >= x));

        let narrow = weights_for_interval(10, a, b / 2.0).unwrap();
        assert!(matches!(
            build_inverse_diag_modified(&td, &narrow),
            Err(Error::IntervalNotCovered { .. })
        ));
    }

    fn fam_level(fam: &AffineOperatorFamily, l: usize) -> AffineOperatorFamily {
        let level = fam.level(l);
        AffineOperatorFamily::from_matrices(level.grid, level.matrices.clone()).unwrap()
    }

    #[test]
    fn modified_builder_scalar_case() {
        let td = TildeDiagonal {
            c: vec![1.0],
            diags: vec![DVector::from_element(4, 3.0)],
        };
        let w = weights_for_interval(6, 3.0, 3.0).unwrap();
        let e = build_inverse_diag_modified(&td, &w).unwrap();
        let dd = e.dense_diagonal(1 << 10).unwrap();
        for v in dd.iter() {
            assert!((v - w.eval(3.0)).abs() <= 1e-15);
        }
    }
}
