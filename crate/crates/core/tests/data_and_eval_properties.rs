use proptest::prelude::*;

use tda_lab::data::{sample_subsets, split_pool, Dataset, DatasetKind, Example, Label};
use tda_lab::eval::{classify_by_top1, select_topk, spearman};
use tda_lab::matrix::Matrix;
use tda_lab::rng::RngSeed;

fn pool(n: usize) -> Dataset {
    let ex = (0..n).map(|i| Example::new(i, vec![i as f64], Label::Real(0.0))).collect();
    Dataset::new(ex, 1, DatasetKind::Regression).unwrap()
}

fn distinct(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, len)
}

proptest! {
    #[test]
    fn sampling_is_a_pure_function_of_the_seed(n in 1usize..40, m in 1usize..6, k in 1usize..20, seed in any::<u64>()) {
        let p = pool(n);
        let a = sample_subsets(&p, "p", m, k, RngSeed(seed)).unwrap();
        let b = sample_subsets(&p, "p", m, k, RngSeed(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), m);
        for s in &a {
            prop_assert_eq!(s.n(), k);
            prop_assert!(s.member_ids.iter().all(|&id| id < n));
            prop_assert!(p.members(s).is_ok());
        }
    }

    #[test]
    fn split_is_disjoint_with_requested_sizes(n in 2usize..50, fa in 0.0f64..=1.0, fb in 0.0f64..=1.0, seed in any::<u64>()) {
        let a = (fa * n as f64) as usize;
        let b = (fb * (n - a) as f64) as usize;
        prop_assume!(a + b > 0);
        let full = pool(n);
        let (v, t) = split_pool(&full, a, b, RngSeed(seed)).unwrap();
        prop_assert_eq!(v.len(), a);
        prop_assert_eq!(t.len(), b);
        let mut seen: Vec<f64> = v.examples().iter().chain(t.examples()).map(|e| e.features[0]).collect();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        prop_assert_eq!(seen.len(), a + b);
    }

    #[test]
    fn spearman_ignores_increasing_transforms(a in distinct(3..20), b in distinct(3..20), s in 0.1f64..5.0, c in -10.0f64..10.0) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let base = spearman(a, b).unwrap();
        let affine: Vec<f64> = a.iter().map(|v| s * v + c).collect();
        let exp: Vec<f64> = b.iter().map(|v| (v / 1e3).exp()).collect();
        prop_assert!((spearman(&affine, b).unwrap() - base).abs() < 1e-12);
        prop_assert!((spearman(a, &exp).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn selection_and_classification_depend_only_on_row_ranks(
        vals in prop::collection::vec(-5.0f64..5.0, 24),
        scales in prop::collection::vec(0.1f64..3.0, 4),
        k in 1usize..=6,
        tags in prop::collection::vec(0usize..2, 10),
    ) {
        let m = Matrix::from_vec(4, 6, vals).unwrap();
        let t = Matrix::from_rows((0..4).map(|r| m.row(r).iter().map(|v| (scales[r] * v).exp() - r as f64).collect()).collect()).unwrap();
        prop_assert_eq!(select_topk(&m, k).unwrap(), select_topk(&t, k).unwrap());
        let train: Vec<Option<String>> = tags[..6].iter().map(|t| Some(format!("t{t}"))).collect();
        let test: Vec<Option<String>> = tags[6..].iter().map(|t| Some(format!("t{t}"))).collect();
        prop_assert_eq!(classify_by_top1(&m, &train, &test).unwrap(), classify_by_top1(&t, &train, &test).unwrap());
    }
}
