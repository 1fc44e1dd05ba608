use proptest::prelude::*;
use wavhelm::adaptive::{coarsen_mask, AdaptiveSolver};
use wavhelm::basis::{BasisSpec1D, FunctionIndex, Shapes};
use wavhelm::problems::ManufacturedProblem;
use wavhelm::refinement::{dual_matrices, primal_matrices};
use wavhelm::spline::integrate_product;
use wavhelm::tensor::HelmholtzOperator;

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decompose_inverts_reconstruct(j in 2u32..8, seed in any::<u64>()) {
        let n = 1usize << j;
        let c: Vec<f64> = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 97) as f64 - 48.0) / 48.0).collect();
        let d: Vec<f64> = c.iter().rev().map(|x| 0.5 * x).collect();
        let fine = primal_matrices::<f64>(j).unwrap().reconstruct(&c, &d).unwrap();
        let (c2, d2) = dual_matrices::<f64>(j).unwrap().decompose(&fine).unwrap();
        for (a, b) in c.iter().chain(&d).zip(c2.iter().chain(&d2)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn synthesis_adjoint(x in vector(64), y in vector(64)) {
        let op = HelmholtzOperator::<f64>::new(2, BasisSpec1D::new(2, 1).unwrap(), 1.0, 0.0).unwrap();
        let syn = op.synthesis();
        let sx = syn.synthesize(&x).unwrap();
        let ty = syn.synthesize_transpose(&y).unwrap();
        prop_assert!((dot(&sx, &y) - dot(&x, &ty)).abs() < 1e-11);
    }

    #[test]
    fn preconditioned_operator_is_symmetric_positive(
        x in vector(64), y in vector(64), eps in 1e-3f64..10.0, a in 0.0f64..10.0,
    ) {
        let op = HelmholtzOperator::<f64>::new(2, BasisSpec1D::new(2, 1).unwrap(), eps, a).unwrap();
        let ax = op.apply_preconditioned(&x).unwrap();
        let ay = op.apply_preconditioned(&y).unwrap();
        let scale = 1.0 + dot(&ax, &y).abs();
        prop_assert!((dot(&ax, &y) - dot(&x, &ay)).abs() < 1e-11 * scale);
        prop_assert!(dot(&ax, &x) > 0.0);
    }

    #[test]
    fn one_dimensional_products_are_symmetric(
        l1 in 2u32..7, l2 in 2u32..7, p1 in 0u32..256, p2 in 0u32..256, w1: bool, w2: bool,
    ) {
        let shapes = Shapes::<f64>::new();
        let make = |l: u32, p: u32, w: bool| {
            let n = 1u32 << l;
            if w { FunctionIndex::wavelet(l, 1 + p % n) } else { FunctionIndex::scaling(l, 1 + p % n) }
        };
        let f = shapes.function(make(l1, p1, w1)).unwrap();
        let g = shapes.function(make(l2, p2, w2)).unwrap();
        prop_assert!((integrate_product(&f, &g) - integrate_product(&g, &f)).abs() < 1e-13);
    }

    #[test]
    fn coarsening_respects_budget(u in prop::collection::vec(-1.0f64..1.0, 1..200), budget in 0.0f64..1.0) {
        let keep = coarsen_mask(&u, 0.5, budget);
        prop_assert_eq!(keep.len(), u.len());
        let mean = u.iter().map(|x| x.abs()).sum::<f64>() / u.len() as f64;
        let dropped: f64 = u.iter().zip(&keep).filter(|(_, &k)| !k).map(|(x, _)| x * x).sum();
        prop_assert!(dropped.sqrt() <= budget + 1e-15);
        for (x, &k) in u.iter().zip(&keep) {
            if !k {
                prop_assert!(x.abs() < 0.5 * mean);
            }
        }
    }
}

#[test]
fn adaptive_entries_are_symmetric() {
    let p = ManufacturedProblem::new(2, 1.0, 0.3).unwrap();
    let solver = AdaptiveSolver::new(2, 1.0, 0.3, 5, p.rhs()).unwrap();
    let op = HelmholtzOperator::<f64>::new(2, BasisSpec1D::new(2, 2).unwrap(), 1.0, 0.3).unwrap();
    let layout = op.layout();
    let idx: Vec<_> = (0..layout.len()).step_by(11).map(|i| layout.index(i)).collect();
    for l in &idx {
        for m in &idx {
            assert_eq!(solver.entry(l, m), solver.entry(m, l));
        }
    }
}
