use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use proptest::prelude::*;
use tensormg::cp::{cp_apply, cp_combine, cp_to_dense, CpOperator, CpVector, Factor, ModeLayout};
use tensormg::discretize::diag_decompose;
use tensormg::expsum::{scale_weights, sinc_weights};
use tensormg::ht::{DimensionTree, HtTensor, TruncationPolicy};

const CAP: u128 = 1 << 20;

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 2..5)
}

fn cp_vector(dims: Vec<usize>, rank: usize) -> impl Strategy<Value = CpVector> {
    let term = dims
        .iter()
        .map(|&n| prop::collection::vec(-1.0f64..1.0, n).prop_map(DVector::from_vec))
        .collect::<Vec<_>>();
    prop::collection::vec(term, rank).prop_map(move |terms| CpVector::new(ModeLayout::new(dims.clone()).unwrap(), terms).unwrap())
}

fn cp_operator(dims: Vec<usize>, rank: usize) -> impl Strategy<Value = CpOperator> {
    let term = dims
        .iter()
        .map(|&n| {
            prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
                Factor::Sparse(CsrMatrix::from(&DMatrix::from_vec(n, n, v)))
            })
        })
        .collect::<Vec<_>>();
    prop::collection::vec(term, rank)
        .prop_map(move |terms| CpOperator::new(ModeLayout::new(dims.clone()).unwrap(), terms).unwrap())
}

fn vector_and_dims() -> impl Strategy<Value = CpVector> {
    (dims_strategy(), 1usize..4).prop_flat_map(|(dims, r)| cp_vector(dims, r))
}

fn ht(x: &CpVector) -> HtTensor {
    HtTensor::from_cp(x, Arc::new(DimensionTree::balanced(x.layout().num_modes()))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn combine_is_linear(
        (a, b) in dims_strategy().prop_flat_map(|d| (cp_operator(d.clone(), 2), cp_operator(d, 1))),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let c = cp_combine(alpha, &a, beta, &b).unwrap();
        let want = cp_to_dense(&a).unwrap() * alpha + cp_to_dense(&b).unwrap() * beta;
        let got = cp_to_dense(&c).unwrap();
        prop_assert!((got - &want).amax() <= 1e-12 * want.amax().max(1.0));
        prop_assert_eq!(c.rank(), 3);
    }

    #[test]
    fn apply_matches_dense(
        (a, x) in dims_strategy().prop_flat_map(|d| (cp_operator(d.clone(), 2), cp_vector(d, 2))),
    ) {
        let y = cp_apply(&a, &x).unwrap().to_dense(CAP).unwrap();
        let want = cp_to_dense(&a).unwrap() * x.to_dense(CAP).unwrap();
        prop_assert!((y - &want).amax() <= 1e-12 * want.amax().max(1.0));
        let hy = ht(&x).apply(&a).unwrap().to_dense(CAP).unwrap();
        prop_assert!((hy.data() - &want).amax() <= 1e-12 * want.amax().max(1.0));
    }

    #[test]
    fn ht_conversion_inner_and_norm(x in vector_and_dims(), seed in 0u64..1000) {
        let dense = x.to_dense(CAP).unwrap();
        let hx = ht(&x);
        prop_assert!((hx.to_dense(CAP).unwrap().data() - &dense).amax() <= 1e-12 * dense.amax().max(1.0));
        prop_assert!((hx.norm() - dense.norm()).abs() <= 1e-12 * dense.norm().max(1.0));
        let y = hx.scaled((seed as f64 / 500.0) - 1.0);
        let ip = HtTensor::inner(&hx, &y).unwrap();
        let want = dense.dot(y.to_dense(CAP).unwrap().data());
        prop_assert!((ip - want).abs() <= 1e-11 * dense.norm_squared().max(1.0));
    }

    #[test]
    fn truncation_respects_tolerance(x in vector_and_dims(), tol in 1e-8f64..0.5) {
        let hx = ht(&x);
        let (y, rep) = hx.truncate(&TruncationPolicy::new(tol, usize::MAX));
        let err = (y.to_dense(CAP).unwrap().data() - x.to_dense(CAP).unwrap()).norm();
        prop_assert!(err <= rep.error_bound * (1.0 + 1e-9) + 1e-13 * hx.norm());
        prop_assert!(err <= tol * hx.norm() * (1.0 + 1e-9) + 1e-13);
        prop_assert!(rep.within_tolerance);
        for (r, r0) in y.ranks().iter().zip(hx.ranks()) {
            prop_assert!(*r <= r0);
        }
    }

    #[test]
    fn rank_cap_is_respected(x in vector_and_dims(), cap in 1usize..3) {
        let y = ht(&x).truncated(&TruncationPolicy::new(1e-14, cap));
        prop_assert!(y.max_rank() <= cap);
    }

    #[test]
    fn axpy_is_linear(x in vector_and_dims(), alpha in -3.0f64..3.0) {
        let hx = ht(&x);
        let y = HtTensor::axpy(alpha, &hx, &hx).unwrap();
        let want = x.to_dense(CAP).unwrap() * (1.0 + alpha);
        prop_assert!((y.to_dense(CAP).unwrap().data() - &want).amax() <= 1e-12 * want.amax().max(1.0));
    }

    #[test]
    fn expsum_scaling(k in 1usize..12, r in 2.0f64..1e4, a in 1e-3f64..1e3, t in 0.0f64..1.0) {
        let w = sinc_weights(k, r);
        let s = scale_weights(&w, a);
        let x = r.powf(t);
        prop_assert!((s.eval(a * x) - w.eval(x) / a).abs() <= 1e-12 * w.eval(x).abs() / a);
        prop_assert!((s.eps - w.eps / a).abs() <= 1e-15 * s.eps);
        prop_assert!(s.error_at(a * x) <= s.eps * (1.0 + 1e-9));
    }

    #[test]
    fn diag_decompose_recomposes(levels in prop::collection::vec(0usize..4, 1..40), scale in 0.1f64..100.0) {
        let diag = DVector::from_iterator(levels.len(), levels.iter().map(|&v| v as f64 * scale));
        let parts = diag_decompose(&diag);
        let mut sum = DVector::zeros(diag.len());
        let mut seen = DVector::<f64>::zeros(diag.len());
        for (c, ind) in &parts {
            prop_assert!(*c > 0.0);
            prop_assert!(ind.iter().all(|&v| v == 0.0 || v == 1.0));
            sum += ind * *c;
            seen += ind;
        }
        prop_assert!(seen.iter().all(|&v| v <= 1.0));
        prop_assert!((sum - &diag).amax() <= 1e-12 * scale);
        prop_assert!(parts.windows(2).all(|w| w[0].0 < w[1].0));
    }
}
