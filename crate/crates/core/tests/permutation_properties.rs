use mlr_core::permutation::has_fixed_point;
use mlr_core::{apply_permutation, norm_n, sample_permutations};
use ndarray::Array1;
use proptest::prelude::*;

proptest! {
    #[test]
    fn derangement_sets_have_no_fixed_points(n in 2usize..40, t in 1usize..20, seed in any::<u64>()) {
        let set = sample_permutations(n, t, true, seed).unwrap();
        prop_assert_eq!(set.len(), t);
        prop_assert!(set.is_derangement_set());
        for p in set.iter() {
            prop_assert!(!has_fixed_point(p));
            let mut sorted = p.to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn plain_permutations_are_bijections(n in 2usize..40, t in 1usize..10, seed in any::<u64>()) {
        let set = sample_permutations(n, t, false, seed).unwrap();
        for p in set.iter() {
            let mut sorted = p.to_vec();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn permuting_keeps_the_norm(values in prop::collection::vec(-100.0f64..100.0, 2..50), seed in any::<u64>()) {
        let y = Array1::from(values);
        let set = sample_permutations(y.len(), 3, true, seed).unwrap();
        for p in set.iter() {
            let yp = apply_permutation(y.view(), p).unwrap();
            prop_assert!((norm_n(yp.view()) - norm_n(y.view())).abs() <= 1e-12 * norm_n(y.view()).max(1.0));
            let mut a = y.to_vec();
            let mut b = yp.to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic(n in 2usize..30, seed in any::<u64>()) {
        prop_assert_eq!(sample_permutations(n, 5, true, seed).unwrap(), sample_permutations(n, 5, true, seed).unwrap());
    }
}
